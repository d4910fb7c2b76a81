"""Sparse variational GP core.

Inducing-point machinery, marginal predictive moments, Gaussian KL terms,
ELBO assembly, and a full-batch optimizer over the variational parameters
(kernel hyperparameters stay fixed; they come from the spectral learning
stage).  The default optimizer is coordinate ascent: exact conditional
updates for the component processes, gradient steps for the activations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InvalidParameterError, NumericalError
from .kernels import MsmKernel, build_gram
from .models import (
    McConfig,
    ModelSpec,
    SIGMOID,
    SIGMOID_LOO,
    SOFTMAX,
    _sigmoid_multi_terms,
    _softmax_terms,
)
from .quadrature import GaussHermiteRule, gh_rule

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class InducingSet:
    """Strictly increasing pseudo-input locations (seconds)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 1:
            raise InvalidParameterError("need at least one inducing point")
        if pts.size > 1 and not np.all(np.diff(pts) > 0.0):
            raise InvalidParameterError("inducing points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.size


@dataclass
class VariationalGaussian:
    """q(u) = N(mean, cov_chol @ cov_chol.T)."""

    mean: np.ndarray       # (M,)
    cov_chol: np.ndarray   # (M, M) lower triangular, positive diagonal

    def validate(self):
        m = self.mean.size
        if self.cov_chol.shape != (m, m):
            raise InvalidParameterError("cov_chol shape must match mean length")
        if np.any(np.diag(self.cov_chol) <= 0.0):
            raise InvalidParameterError("cov_chol diagonal must be positive")


@dataclass
class MarginalMoments:
    means: np.ndarray
    vars: np.ndarray
    n_clipped: int = 0


@dataclass
class ElboBreakdown:
    expected_loglik: float
    kl_f_total: float
    kl_g_total: float
    elbo: float


@dataclass
class VariationalState:
    """Inducing inputs plus one variational Gaussian per process."""

    f_inducing: InducingSet
    g_inducing: InducingSet
    q_f: list[VariationalGaussian]
    q_g: list[VariationalGaussian]
    jitter: float


@dataclass
class FitConfig:
    max_iters: int = 200
    learning_rate: float = 0.05
    quad_order: int = 20
    n_inducing: int | None = None        # component processes; None -> min(200, N//16)
    n_inducing_g: int | None = None      # activation processes; None -> min(16, N)
    seed: int = 0
    noise_var: float | None = None       # None -> 1e-3 * mean signal power
    optimizer: str = "adam"              # "adam" or "sgd" (fixed step)
    jitter_rel: float = 1e-6
    grad_clip: float = 100.0
    mc: McConfig = field(default_factory=McConfig)
    inducing_f: np.ndarray | None = None  # explicit overrides
    inducing_g: np.ndarray | None = None
    # coordinate ascent: the ELBO is an exact quadratic in each component
    # process, so q(u_f) can jump straight to its conditional optimum while
    # the activation processes take gradient steps.  Disable for the pure
    # gradient-ascent path.
    closed_form_f: bool = True
    g_steps: int = 5


def _chol_with_escalation(K: np.ndarray, base_jitter: float, scale: float):
    """Cholesky with jitter escalation up to 1e-3 relative to the diagonal
    scale; raises NumericalError with a condition estimate on failure."""
    jit = base_jitter
    for _ in range(6):
        try:
            return np.linalg.cholesky(K + (jit - base_jitter) * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jit = max(jit * 10.0, 1e-10 * scale)
            if jit > 1e-3 * scale:
                break
    eigvals = np.linalg.eigvalsh(K)
    cond = abs(eigvals[-1]) / max(abs(eigvals[0]), 1e-300)
    raise NumericalError(
        f"Cholesky failed after jitter escalation (condition ~ {cond:.3e})"
    )


def predict_marginals(
    kernel: MsmKernel,
    Z: InducingSet,
    q: VariationalGaussian,
    times: np.ndarray,
    jitter: float,
) -> MarginalMoments:
    """Sparse-GP marginals: mean A m, var diag(Ktt - A Kzz A' + A S A')
    with A = Ktz Kzz^{-1}; variances floored at 1e-12."""
    times = np.asarray(times, dtype=float).ravel()
    Kzz = build_gram(kernel, Z.points, Z.points, jitter).values
    Lk = _chol_with_escalation(Kzz, jitter, kernel.total_variance)
    Ktz = build_gram(kernel, times, Z.points, 0.0).values
    A = cho_solve((Lk, True), Ktz.T).T
    means = A @ q.mean
    B = A @ q.cov_chol
    vars = kernel.total_variance - (A * Ktz).sum(axis=1) + (B**2).sum(axis=1)
    n_clipped = int((vars < VAR_FLOOR).sum())
    return MarginalMoments(means=means, vars=np.maximum(vars, VAR_FLOOR), n_clipped=n_clipped)


def kl_gaussian(q: VariationalGaussian, prior_chol: np.ndarray) -> float:
    """KL( N(m, S) || N(0, K) ) from the Cholesky factors of S and K."""
    m = q.mean.size
    if prior_chol.shape != (m, m):
        raise InvalidParameterError("prior Cholesky dimension mismatch")
    alpha = solve_triangular(prior_chol, q.mean, lower=True)
    B = solve_triangular(prior_chol, q.cov_chol, lower=True)
    logdet_k = 2.0 * np.log(np.diag(prior_chol)).sum()
    logdet_s = 2.0 * np.log(np.diag(q.cov_chol)).sum()
    return float(
        0.5 * ((B**2).sum() + alpha @ alpha - m + logdet_k - logdet_s)
    )


# ---------------------------------------------------------------------------
# per-process precomputation (kernels and inducing points are fixed per fit)
# ---------------------------------------------------------------------------

@dataclass
class _ProcCache:
    Lk: np.ndarray          # chol of Kzz + jitter I
    A: np.ndarray | None    # Ktz Kzz^{-1}; None means identity (Z == times)
    prior_var: np.ndarray   # diag(Ktt - A Kzz A')
    Kinv: np.ndarray        # (Kzz + jitter I)^{-1}, for KL gradients


def _build_cache(kernel: MsmKernel, Z: InducingSet, times: np.ndarray, jitter: float) -> _ProcCache:
    Kzz = build_gram(kernel, Z.points, Z.points, jitter).values
    Lk = _chol_with_escalation(Kzz, jitter, kernel.total_variance)
    Kinv = cho_solve((Lk, True), np.eye(Z.count))
    if times.size == Z.count and np.array_equal(times, Z.points):
        # Z == data times: A deviates from identity only by O(jitter)
        prior_var = np.full(times.size, jitter)
        return _ProcCache(Lk=Lk, A=None, prior_var=prior_var, Kinv=Kinv)
    Ktz = build_gram(kernel, times, Z.points, 0.0).values
    A = cho_solve((Lk, True), Ktz.T).T
    prior_var = kernel.total_variance - (A * Ktz).sum(axis=1)
    return _ProcCache(Lk=Lk, A=A, prior_var=prior_var, Kinv=Kinv)


def _forward(cache: _ProcCache, q: VariationalGaussian):
    if cache.A is None:
        mean = q.mean
        var = cache.prior_var + (q.cov_chol**2).sum(axis=1)
    else:
        mean = cache.A @ q.mean
        B = cache.A @ q.cov_chol
        var = cache.prior_var + (B**2).sum(axis=1)
    return mean, np.maximum(var, VAR_FLOOR)


def _backward(cache: _ProcCache, q: VariationalGaussian, d_mean, d_var):
    """Chain per-point moment derivatives back to (mean, cov_chol)."""
    if cache.A is None:
        dm = d_mean.copy()
        dL = 2.0 * np.tril(d_var[:, None] * q.cov_chol)
    else:
        dm = cache.A.T @ d_mean
        B = cache.A @ q.cov_chol
        dL = 2.0 * np.tril(cache.A.T @ (d_var[:, None] * B))
    return dm, dL


def _kl_and_grads(cache: _ProcCache, q: VariationalGaussian):
    KinvL = cache.Kinv @ q.cov_chol
    Kinvm = cache.Kinv @ q.mean
    m = q.mean.size
    logdet_k = 2.0 * np.log(np.diag(cache.Lk)).sum()
    logdet_s = 2.0 * np.log(np.diag(q.cov_chol)).sum()
    kl = 0.5 * (
        (KinvL * q.cov_chol).sum() + q.mean @ Kinvm - m + logdet_k - logdet_s
    )
    d_m = Kinvm
    d_L = np.tril(KinvL) - np.diag(1.0 / np.diag(q.cov_chol))
    return float(kl), d_m, d_L


def _draw_eps(mc: McConfig, n: int, n_act: int) -> np.ndarray:
    rng = np.random.default_rng(mc.seed)
    return rng.standard_normal((mc.n_samples, n, n_act))


def _stack_moments(caches, qs):
    means, vars = [], []
    for cache, q in zip(caches, qs):
        mean, var = _forward(cache, q)
        means.append(mean)
        vars.append(var)
    return np.stack(means, axis=1), np.stack(vars, axis=1)  # (N, P)


def _expected_ll(model, y, mf, vf, mg, vg, noise_var, rule, eps, grads):
    if model.kind in (SIGMOID, SIGMOID_LOO):
        return _sigmoid_multi_terms(y, mf, vf, mg, vg, noise_var, rule, grads=grads)
    return _softmax_terms(y, mf, vf, mg, vg, noise_var, eps, grads=grads)


def _elbo_impl(model, state, times, y, rule, noise_var, mc, grads=False):
    f_caches = [
        _build_cache(k, state.f_inducing, times, state.jitter)
        for k in model.component_kernels
    ]
    g_caches = [
        _build_cache(k, state.g_inducing, times, state.jitter)
        for k in model.activation_kernels
    ]
    return _elbo_cached(
        model, state, f_caches, g_caches, y, rule, noise_var, mc, grads=grads,
        n=times.size,
    )


def _elbo_cached(model, state, f_caches, g_caches, y, rule, noise_var, mc,
                 grads=False, n=None):
    mf, vf = _stack_moments(f_caches, state.q_f)
    mg, vg = _stack_moments(g_caches, state.q_g)
    eps = None
    if model.kind == SOFTMAX:
        eps = _draw_eps(mc, y.size, model.n_activations)
    out = _expected_ll(model, y, mf, vf, mg, vg, noise_var, rule, eps, grads)
    if grads:
        ell, d_mf, d_vf, d_mg, d_vg = out
    else:
        ell = out

    kl_f = 0.0
    kl_g = 0.0
    grad_f, grad_g = [], []
    for i, (cache, q) in enumerate(zip(f_caches, state.q_f)):
        kl, dk_m, dk_L = _kl_and_grads(cache, q)
        kl_f += kl
        if grads:
            dm, dL = _backward(cache, q, d_mf[:, i], d_vf[:, i])
            grad_f.append((dm - dk_m, dL - dk_L))
    for i, (cache, q) in enumerate(zip(g_caches, state.q_g)):
        kl, dk_m, dk_L = _kl_and_grads(cache, q)
        kl_g += kl
        if grads:
            dm, dL = _backward(cache, q, d_mg[:, i], d_vg[:, i])
            grad_g.append((dm - dk_m, dL - dk_L))

    breakdown = ElboBreakdown(
        expected_loglik=ell,
        kl_f_total=kl_f,
        kl_g_total=kl_g,
        elbo=ell - kl_f - kl_g,
    )
    if grads:
        return breakdown, grad_f, grad_g
    return breakdown


def elbo(
    model: ModelSpec,
    state: VariationalState,
    data: tuple[np.ndarray, np.ndarray],
    rule: GaussHermiteRule,
    noise_var: float,
    mc: McConfig = McConfig(),
) -> ElboBreakdown:
    """Evidence lower bound of the model at the given variational state."""
    times = np.asarray(data[0], dtype=float).ravel()
    y = np.asarray(data[1], dtype=float).ravel()
    return _elbo_impl(model, state, times, y, rule, noise_var, mc, grads=False)


def elbo_and_grads(
    model: ModelSpec,
    state: VariationalState,
    data: tuple[np.ndarray, np.ndarray],
    rule: GaussHermiteRule,
    noise_var: float,
    mc: McConfig = McConfig(),
):
    """ELBO plus its gradient w.r.t. every (mean, cov_chol) pair.

    Returns ``(breakdown, grad_f, grad_g)`` where the grads are lists of
    (d_mean, d_chol) arrays, one per process, in ascent direction.
    """
    times = np.asarray(data[0], dtype=float).ravel()
    y = np.asarray(data[1], dtype=float).ravel()
    return _elbo_impl(model, state, times, y, rule, noise_var, mc, grads=True)


# ---------------------------------------------------------------------------
# initialization and optimizer loop
# ---------------------------------------------------------------------------

def _uniform_inducing(times: np.ndarray, m: int) -> InducingSet:
    t0, t1 = float(times.min()), float(times.max())
    if m == 1:
        return InducingSet(np.array([(t0 + t1) / 2.0]))
    return InducingSet(np.linspace(t0, t1, m))


def init_state(
    model: ModelSpec,
    times: np.ndarray,
    config: FitConfig,
) -> VariationalState:
    """Prior-matched initialization: m = 0, L = chol(Kzz) for components
    and 0.1 * chol(Kzz) for activations (activations start near 0.5)."""
    n = times.size
    if config.inducing_f is not None:
        z_f = InducingSet(np.asarray(config.inducing_f, dtype=float))
    else:
        m_f = config.n_inducing or max(min(200, n // 16), 1)
        z_f = _uniform_inducing(times, m_f)
    if config.inducing_g is not None:
        z_g = InducingSet(np.asarray(config.inducing_g, dtype=float))
    else:
        m_g = config.n_inducing_g or min(16, n)
        z_g = _uniform_inducing(times, m_g)

    jitter_f = max(
        config.jitter_rel * k.total_variance for k in model.component_kernels
    )
    jitter = jitter_f
    q_f = []
    for k in model.component_kernels:
        Kzz = build_gram(k, z_f.points, z_f.points, config.jitter_rel * k.total_variance).values
        Lk = _chol_with_escalation(Kzz, jitter, k.total_variance)
        q_f.append(VariationalGaussian(mean=np.zeros(z_f.count), cov_chol=Lk))
    q_g = []
    for k in model.activation_kernels:
        Kzz = build_gram(k, z_g.points, z_g.points, config.jitter_rel * k.total_variance).values
        Lk = _chol_with_escalation(Kzz, jitter, k.total_variance)
        q_g.append(VariationalGaussian(mean=np.zeros(z_g.count), cov_chol=0.1 * Lk))
    return VariationalState(
        f_inducing=z_f, g_inducing=z_g, q_f=q_f, q_g=q_g, jitter=jitter
    )


class _Adam:
    def __init__(self, shapes, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, grads):
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g**2
            mhat = self.m[i] / (1 - self.b1**self.t)
            vhat = self.v[i] / (1 - self.b2**self.t)
            out.append(self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


def _clip_grads(grads, max_norm):
    total = math.sqrt(sum(float((g**2).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        return [g * scale for g in grads], total
    return grads, total


# ---------------------------------------------------------------------------
# coordinate ascent: exact conditional updates for the component processes
# ---------------------------------------------------------------------------

def _activation_coeffs(model, mg, vg, rule, eps):
    """Per-point activation moments needed by the component updates.

    Returns (a, b, cross) with a = E[phi_d], b = E[phi_d^2], both (N, M),
    and cross = E[phi_d phi_e] of shape (N, M, M) for the softmax model
    (None for the sigmoid variants, whose activations are independent).
    """
    from .quadrature import expect_sigmoid, expect_sigmoid_sq

    if model.kind in (SIGMOID, SIGMOID_LOO):
        a = expect_sigmoid(mg, vg, rule)
        b = expect_sigmoid_sq(mg, vg, rule)
        return a, b, None
    s_g = np.sqrt(np.maximum(vg, 1e-12))
    g = mg[None] + s_g[None] * eps
    phi_c = _mc_softmax(g)[..., 1:]
    a = phi_c.mean(axis=0)
    b = (phi_c**2).mean(axis=0)
    cross = np.einsum("snd,sne->nde", phi_c, phi_c) / eps.shape[0]
    return a, b, cross


def _mc_softmax(g):
    from scipy.special import softmax as _softmax_fn

    return _softmax_fn(g, axis=2)


def _closed_form_component(cache, b, c, noise_var):
    """Conditional optimum of q(u) for one component process.

    Holding the activations fixed, the expected log-likelihood is quadratic
    in the process values with per-point curvature b/noise_var and linear
    coefficient c/noise_var, so the optimal q(u) is Gaussian with
    precision Kzz^{-1} + A' diag(b) A / noise_var.
    """
    if cache.A is None:
        prec = cache.Kinv + np.diag(b / noise_var)
        rhs = c / noise_var
    else:
        prec = cache.Kinv + (cache.A.T * (b / noise_var)) @ cache.A
        rhs = cache.A.T @ (c / noise_var)
    m = prec.shape[0]
    Lp = _chol_with_escalation(prec, 0.0, float(np.mean(np.diag(prec))))
    S = cho_solve((Lp, True), np.eye(m))
    mean = S @ rhs
    S = 0.5 * (S + S.T)
    Ls = _chol_with_escalation(S, 0.0, float(np.mean(np.diag(S))))
    return VariationalGaussian(mean=mean, cov_chol=Ls)


def _fit_coordinate(model, state, f_caches, g_caches, y, rule, noise_var,
                    mc, config):
    """Alternate exact component updates with gradient steps on the
    activation processes."""
    g_params = [q.mean for q in state.q_g] + [q.cov_chol for q in state.q_g]
    adam = _Adam([p.shape for p in g_params], config.learning_rate)
    ng = len(state.q_g)

    eps = None
    if model.kind == SOFTMAX:
        eps = _draw_eps(mc, y.size, model.n_activations)

    mf, vf = _stack_moments(f_caches, state.q_f)
    mg, vg = _stack_moments(g_caches, state.q_g)

    trace = [
        _elbo_cached(model, state, f_caches, g_caches, y, rule, noise_var, mc)
    ]
    for it in range(config.max_iters):
        a, b, cross = _activation_coeffs(model, mg, vg, rule, eps)
        for d in range(model.n_components):
            if cross is None:
                resid = y - (a * mf).sum(axis=1) + a[:, d] * mf[:, d]
                c = a[:, d] * resid
            else:
                c = y * a[:, d] - (cross[:, d, :] * mf).sum(axis=1) \
                    + cross[:, d, d] * mf[:, d]
            state.q_f[d] = _closed_form_component(
                f_caches[d], b[:, d], c, noise_var
            )
            mf[:, d], vf[:, d] = _forward(f_caches[d], state.q_f[d])

        for _ in range(config.g_steps):
            _, _, _, d_mg, d_vg = _expected_ll(
                model, y, mf, vf, mg, vg, noise_var, rule, eps, grads=True
            )
            grads = []
            for i, (cache, q) in enumerate(zip(g_caches, state.q_g)):
                _, dk_m, dk_L = _kl_and_grads(cache, q)
                dm, dL = _backward(cache, q, d_mg[:, i], d_vg[:, i])
                grads.append((dm - dk_m, dL - dk_L))
            flat = [g[0] for g in grads] + [g[1] for g in grads]
            for g in flat:
                if not np.all(np.isfinite(g)):
                    raise NumericalError(
                        f"non-finite gradient in g-process at iteration {it}"
                    )
            flat, _ = _clip_grads(flat, config.grad_clip)
            if config.optimizer == "adam":
                steps = adam.step(flat)
            else:
                steps = [config.learning_rate * g for g in flat]
            for p, s in zip(g_params, steps):
                p += s
            for i in range(ng):
                L = state.q_g[i].cov_chol
                L[:] = np.tril(L)
                np.fill_diagonal(L, np.maximum(np.diag(L).copy(), 1e-8))
            mg, vg = _stack_moments(g_caches, state.q_g)

        ell = _expected_ll(
            model, y, mf, vf, mg, vg, noise_var, rule, eps, grads=False
        )
        kl_f = sum(_kl_and_grads(c, q)[0] for c, q in zip(f_caches, state.q_f))
        kl_g = sum(_kl_and_grads(c, q)[0] for c, q in zip(g_caches, state.q_g))
        trace.append(
            ElboBreakdown(
                expected_loglik=ell,
                kl_f_total=kl_f,
                kl_g_total=kl_g,
                elbo=ell - kl_f - kl_g,
            )
        )
    return state, trace


def fit(
    model: ModelSpec,
    data: tuple[np.ndarray, np.ndarray],
    config: FitConfig = FitConfig(),
) -> tuple[VariationalState, list[ElboBreakdown]]:
    """Maximize the ELBO over all variational parameters.

    Kernel hyperparameters are held fixed.  The default path alternates
    closed-form component updates with gradient steps on the activations;
    ``closed_form_f=False`` selects plain gradient ascent over everything.
    Returns the final state and the ELBO trace (length max_iters + 1).
    """
    times = np.asarray(data[0], dtype=float).ravel()
    y = np.asarray(data[1], dtype=float).ravel()
    if times.size == 0:
        raise InvalidParameterError("data must be non-empty")
    noise_var = config.noise_var
    if noise_var is None:
        noise_var = max(1e-3 * float(np.mean(y**2)), 1e-10)
    rule = gh_rule(config.quad_order)
    mc = replace(config.mc, seed=config.seed)

    state = init_state(model, times, config)
    f_caches = [
        _build_cache(k, state.f_inducing, times, state.jitter)
        for k in model.component_kernels
    ]
    g_caches = [
        _build_cache(k, state.g_inducing, times, state.jitter)
        for k in model.activation_kernels
    ]

    if config.closed_form_f:
        return _fit_coordinate(
            model, state, f_caches, g_caches, y, rule, noise_var, mc, config
        )

    params = [q.mean for q in state.q_f] + [q.cov_chol for q in state.q_f] \
        + [q.mean for q in state.q_g] + [q.cov_chol for q in state.q_g]
    adam = _Adam([p.shape for p in params], config.learning_rate)

    nf = len(state.q_f)
    ng = len(state.q_g)
    trace: list[ElboBreakdown] = []
    breakdown, grad_f, grad_g = _elbo_cached(
        model, state, f_caches, g_caches, y, rule, noise_var, mc,
        grads=True,
    )
    trace.append(breakdown)
    for it in range(config.max_iters):
        grads = (
            [g[0] for g in grad_f] + [g[1] for g in grad_f]
            + [g[0] for g in grad_g] + [g[1] for g in grad_g]
        )
        for gi, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                kind = "f" if gi < 2 * nf else "g"
                raise NumericalError(
                    f"non-finite gradient in {kind}-process at iteration {it}"
                )
        grads, _ = _clip_grads(grads, config.grad_clip)
        if config.optimizer == "adam":
            steps = adam.step(grads)
        else:
            steps = [config.learning_rate * g for g in grads]
        for p, s in zip(params, steps):
            p += s
        # keep Cholesky factors lower triangular with positive diagonal
        for q in state.q_f + state.q_g:
            L = q.cov_chol
            L[:] = np.tril(L)
            diag = np.diag(L).copy()
            np.fill_diagonal(L, np.maximum(diag, 1e-8))
        breakdown, grad_f, grad_g = _elbo_cached(
            model, state, f_caches, g_caches, y, rule, noise_var, mc,
            grads=True,
        )
        trace.append(breakdown)
    return state, trace
