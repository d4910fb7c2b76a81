"""Mixture likelihood models for multi-pitch decomposition.

Three variants, all of the form y = sum_m activation_m * component_m + noise:

* ``sigmoid``     -- each activation is an independent sigmoid-warped GP,
* ``softmax``     -- activations are jointly softmax-warped GPs that sum to
                     one, with an extra silence slot whose component is 0,
* ``sigmoid_loo`` -- a two-source sigmoid model where source 2 carries the
                     merged spectrum of all non-target pitches.

Each model supplies the per-point expected log-likelihood (and its
derivatives w.r.t. the marginal moments) consumed by the ELBO.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax as _softmax_fn

from .errors import InvalidParameterError
from .kernels import LorentzianComponent, MsmKernel
from .quadrature import (
    GaussHermiteRule,
    LOG_2PI,
    expect_loglik_1d_decomp,
    sigmoid_moment_derivatives,
)

SIGMOID = "sigmoid"
SOFTMAX = "softmax"
SIGMOID_LOO = "sigmoid_loo"


def default_activation_kernel(
    lengthscale_s: float = 0.5, variance: float = 10.0
) -> MsmKernel:
    """Slow non-oscillatory prior for activation envelopes (center freq 0)."""
    return MsmKernel(
        [LorentzianComponent(variance=variance, decay=1.0 / lengthscale_s, center_freq=0.0)]
    )


@dataclass(frozen=True)
class ModelSpec:
    """Which mixture model to run, and the kernels of its processes.

    ``activation_kernels`` has one entry per component for the sigmoid
    variants; the softmax variant carries one extra leading entry for the
    silence activation (whose component is identically zero).
    """

    kind: str
    component_kernels: tuple[MsmKernel, ...]
    activation_kernels: tuple[MsmKernel, ...]
    pitch_labels: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in (SIGMOID, SOFTMAX, SIGMOID_LOO):
            raise InvalidParameterError(f"unknown model kind {self.kind!r}")
        m = len(self.component_kernels)
        if m < 1:
            raise InvalidParameterError("need at least one component kernel")
        if len(self.pitch_labels) != m:
            raise InvalidParameterError("one pitch label per component required")
        expected = m + 1 if self.kind == SOFTMAX else m
        if len(self.activation_kernels) != expected:
            raise InvalidParameterError(
                f"{self.kind} model needs {expected} activation kernels, "
                f"got {len(self.activation_kernels)}"
            )

    @property
    def n_components(self) -> int:
        return len(self.component_kernels)

    @property
    def n_activations(self) -> int:
        return len(self.activation_kernels)


def make_model(
    kind: str,
    component_kernels: list[MsmKernel],
    pitch_labels: list[str],
    activation_kernel: MsmKernel | None = None,
) -> ModelSpec:
    """Build a ModelSpec with a shared activation prior (silence slot added
    automatically for the softmax variant)."""
    if activation_kernel is None:
        activation_kernel = default_activation_kernel()
    m = len(component_kernels)
    n_act = m + 1 if kind == SOFTMAX else m
    return ModelSpec(
        kind=kind,
        component_kernels=tuple(component_kernels),
        activation_kernels=(activation_kernel,) * n_act,
        pitch_labels=tuple(pitch_labels),
    )


def build_loo_spec(
    target_pitch_kernel: MsmKernel,
    other_pitch_kernels: list[MsmKernel],
    target_label: str = "target",
    activation_kernel: MsmKernel | None = None,
) -> ModelSpec:
    """Leave-one-out model: source 1 is the target pitch, source 2 merges the
    Lorentzian components of every other pitch (spectral densities add)."""
    if len(other_pitch_kernels) < 1:
        raise InvalidParameterError("need at least one other pitch kernel")
    merged = MsmKernel(
        [c for k in other_pitch_kernels for c in k.components]
    )
    if activation_kernel is None:
        activation_kernel = default_activation_kernel()
    return ModelSpec(
        kind=SIGMOID_LOO,
        component_kernels=(target_pitch_kernel, merged),
        activation_kernels=(activation_kernel, activation_kernel),
        pitch_labels=(target_label, "rest"),
    )


@dataclass(frozen=True)
class McConfig:
    """Seeded Monte-Carlo settings for the softmax expectation."""

    n_samples: int = 2000
    seed: int = 0


# ---------------------------------------------------------------------------
# sigmoid-family expected log-likelihood
# ---------------------------------------------------------------------------

def sigmoid_point_loglik(
    y: float,
    mf: float,
    vf: float,
    mg: float,
    vg: float,
    noise_var: float,
    rule: GaussHermiteRule,
) -> float:
    """Single-source expected log-likelihood of one observation."""
    return expect_loglik_1d_decomp(y, mf, vf, mg, vg, noise_var, rule)


def _sigmoid_multi_terms(y, mf, vf, mg, vg, noise_var, rule, grads=False):
    """Vectorized multi-source sigmoid expected log-likelihood.

    Shapes: y (N,); mf, vf, mg, vg (N, M).  Uses the independence expansion
    E[(y - sum_d s_d f_d)^2] =
        y^2 - 2 y sum_d mf_d E[s_d] + sum_d (vf_d + mf_d^2) E[s_d^2]
        + sum_{d != e} mf_d mf_e E[s_d] E[s_e],
    where s_d = sigmoid(g_d).  Returns the total log-likelihood, plus the
    derivative arrays w.r.t. each moment when ``grads`` is set.
    """
    e1, e2, d1m, d1v, d2m, d2v = sigmoid_moment_derivatives(mg, vg, rule)
    s1 = (mf * e1).sum(axis=1)                       # (N,)
    quad = (
        y**2
        - 2.0 * y * s1
        + s1**2
        + ((vf + mf**2) * e2 - (mf * e1) ** 2).sum(axis=1)
    )
    const = -0.5 * LOG_2PI - 0.5 * math.log(noise_var)
    ll = float((-quad / (2.0 * noise_var) + const).sum())
    if not grads:
        return ll
    c = -1.0 / (2.0 * noise_var)
    resid2 = (s1 - y)[:, None]                       # d quad / d (mf_d e1_d) terms
    d_mf = c * (2.0 * resid2 * e1 + 2.0 * mf * e2 - 2.0 * mf * e1**2)
    d_vf = c * e2
    d_e1 = c * (2.0 * resid2 * mf - 2.0 * mf**2 * e1)
    d_e2 = c * (vf + mf**2)
    d_mg = d_e1 * d1m + d_e2 * d2m
    d_vg = d_e1 * d1v + d_e2 * d2v
    return ll, d_mf, d_vf, d_mg, d_vg


def sigmoid_multi_point_loglik(
    y: float,
    mf: np.ndarray,
    vf: np.ndarray,
    mg: np.ndarray,
    vg: np.ndarray,
    noise_var: float,
    rule: GaussHermiteRule,
) -> float:
    """Expected log-likelihood of one observation under M independent
    sigmoid-modulated sources (closed-form expansion, 1-D quadratures only)."""
    mf, vf, mg, vg = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (mf, vf, mg, vg))
    return _sigmoid_multi_terms(
        np.array([y]), mf[None, :], vf[None, :], mg[None, :], vg[None, :],
        noise_var, rule,
    )


# ---------------------------------------------------------------------------
# softmax expected log-likelihood (seeded Monte Carlo over the joint g's)
# ---------------------------------------------------------------------------

def _softmax_terms(y, mf, vf, mg, vg, noise_var, eps, grads=False):
    """Monte-Carlo softmax expected log-likelihood with fixed normal draws.

    Shapes: y (N,); mf, vf (N, M); mg, vg (N, M+1) with the silence process
    first; eps (S, N, M+1).  The f-expectation is analytic given the
    activations, so sampling is only over the coupled g's.
    """
    n, m = mf.shape
    s_g = np.sqrt(np.maximum(vg, 1e-12))             # (N, M+1)
    g = mg[None] + s_g[None] * eps                   # (S, N, M+1)
    phi = _softmax_fn(g, axis=2)
    phi_c = phi[..., 1:]                             # activations of real sources
    r = y[None, :] - (phi_c * mf[None]).sum(axis=2)  # (S, N)
    term = r**2 + (phi_c**2 * vf[None]).sum(axis=2)
    const = -0.5 * LOG_2PI - 0.5 * math.log(noise_var)
    c = -1.0 / (2.0 * noise_var)
    ll = float((c * term).mean(axis=0).sum() + n * const)
    if not grads:
        return ll
    s = eps.shape[0]
    d_mf = c * (-2.0 * r[..., None] * phi_c).mean(axis=0)
    d_vf = c * (phi_c**2).mean(axis=0)
    d_phi = np.zeros_like(phi)
    d_phi[..., 1:] = -2.0 * r[..., None] * mf[None] + 2.0 * phi_c * vf[None]
    inner = (d_phi * phi).sum(axis=2, keepdims=True)
    d_g = phi * (d_phi - inner)                      # softmax Jacobian
    d_mg = c * d_g.mean(axis=0)
    d_vg = c * (d_g * eps / (2.0 * s_g[None])).mean(axis=0)
    return ll, d_mf, d_vf, d_mg, d_vg


def softmax_point_loglik(
    y: float,
    mf: np.ndarray,
    vf: np.ndarray,
    mg: np.ndarray,
    vg: np.ndarray,
    noise_var: float,
    mc: McConfig = McConfig(),
) -> float:
    """Expected log-likelihood of one observation under the softmax model.

    ``mg`` / ``vg`` include the silence process at index 0, so they have one
    more entry than ``mf`` / ``vf``.
    """
    mf, vf, mg, vg = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (mf, vf, mg, vg))
    if mg.size != mf.size + 1:
        raise InvalidParameterError("softmax needs M+1 activation moments")
    rng = np.random.default_rng(mc.seed)
    eps = rng.standard_normal((mc.n_samples, 1, mg.size))
    return _softmax_terms(
        np.array([y]), mf[None, :], vf[None, :], mg[None, :], vg[None, :],
        noise_var, eps,
    )


# ---------------------------------------------------------------------------
# decomposition into per-source activation / component curves
# ---------------------------------------------------------------------------

@dataclass
class SourceDecomposition:
    """Activation point-estimates and per-process marginal moments on a
    query time grid.  For the softmax model the silence activation is kept
    as an extra trailing row of ``activations`` (label ``"<silence>"``)."""

    times: np.ndarray
    labels: list[str]                    # component labels, no silence
    activations: np.ndarray              # (n_rows, N) in [0, 1]
    activation_labels: list[str]         # row labels incl. silence slot
    component_moments: list              # MarginalMoments per component
    activation_moments: list             # MarginalMoments per activation


def decompose(model: ModelSpec, state, times: np.ndarray) -> SourceDecomposition:
    """Point-estimate activations from a fitted variational state.

    Sigmoid variants: phi_m = sigmoid(E[g_m]).  Softmax: softmax over the
    posterior means of all M+1 activation processes.
    """
    from .vgp import predict_marginals  # deferred: vgp depends on this module

    times = np.asarray(times, dtype=float).ravel()
    comp_moms = [
        predict_marginals(k, state.f_inducing, q, times, state.jitter)
        for k, q in zip(model.component_kernels, state.q_f)
    ]
    act_moms = [
        predict_marginals(k, state.g_inducing, q, times, state.jitter)
        for k, q in zip(model.activation_kernels, state.q_g)
    ]
    g_means = np.stack([m.means for m in act_moms])  # (n_act, N)
    if model.kind == SOFTMAX:
        phi = _softmax_fn(g_means, axis=0)
        # silence is row 0 internally; expose components first, silence last
        activations = np.vstack([phi[1:], phi[:1]])
        act_labels = list(model.pitch_labels) + ["<silence>"]
    else:
        activations = expit(g_means)
        act_labels = list(model.pitch_labels)
    return SourceDecomposition(
        times=times,
        labels=list(model.pitch_labels),
        activations=activations,
        activation_labels=act_labels,
        component_moments=comp_moms,
        activation_moments=act_moms,
    )
