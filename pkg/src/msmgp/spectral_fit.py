"""Learning MSM kernel hyperparameters from isolated-note audio.

Three learning modes:

* frequency-domain learning (greedy peak-wise Lorentzian fitting of the
  magnitude Fourier transform) -- the fast path,
* manual harmonic initialization (equal variances at integer multiples of
  a given fundamental),
* marginal-likelihood refinement of an initial kernel on a short time-domain
  snippet (the costly exact-GP baseline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import least_squares, minimize

from .errors import InvalidInputError, InvalidParameterError
from .kernels import TWO_PI, LorentzianComponent, MsmKernel, lorentzian

#: Peaks below this fraction of the global maximum are treated as noise floor.
PEAK_FLOOR_REL = 1e-6


@dataclass(frozen=True)
class MagnitudeSpectrum:
    """One-sided magnitude Fourier transform on a uniform Hz grid."""

    freqs: np.ndarray         # Hz, ascending from 0, uniform spacing
    mags: np.ndarray          # >= 0, same length
    source_duration: float    # seconds of audio behind the transform
    sample_rate: float        # Hz

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


@dataclass
class FitReport:
    """Result of the greedy frequency-domain fit."""

    kernel: MsmKernel | None
    residual_l2: list[float]          # total residual after each peak
    peak_freqs_hz: list[float]
    n_requested: int
    failed_peaks: list[int] = field(default_factory=list)

    @property
    def n_fitted(self) -> int:
        return len(self.peak_freqs_hz)


def magnitude_ft(
    samples: np.ndarray, sample_rate: float, window: bool = False
) -> MagnitudeSpectrum:
    """One-sided magnitude spectrum, zero-padded to the next power of two.

    Normalization: magnitudes are ``(2 / n_samples) * |rfft|``, so a
    unit-amplitude sinusoid at a bin center has peak magnitude 1.  The
    constant is arbitrary for kernel fitting (variances absorb scale).
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InvalidInputError("need at least 2 samples")
    if not sample_rate > 0.0:
        raise InvalidInputError("sample_rate must be > 0")
    n = x.size
    if window:
        x = x * np.hanning(n)
    nfft = 1 << (n - 1).bit_length()
    mags = 2.0 / n * np.abs(np.fft.rfft(x, nfft))
    freqs = np.fft.rfftfreq(nfft, d=1.0 / sample_rate)
    return MagnitudeSpectrum(
        freqs=freqs,
        mags=mags,
        source_duration=n / sample_rate,
        sample_rate=float(sample_rate),
    )


def _fit_one_lorentzian(omega, target, s2_0, lam_0, w0_0, w0_lo, w0_hi):
    """Least-squares fit of a single Lorentzian on the windowed grid.

    sigma^2 and lambda are log-parameterized to stay positive; the center
    stays inside the window. Returns (params, success).
    """

    def resid(p):
        s2, lam, w0 = math.exp(p[0]), math.exp(p[1]), p[2]
        return lorentzian(omega, s2, lam, w0) - target

    p0 = np.array([math.log(s2_0), math.log(lam_0), w0_0])
    try:
        res = least_squares(
            resid,
            p0,
            bounds=([-np.inf, -np.inf, w0_lo], [np.inf, np.inf, w0_hi]),
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
            max_nfev=400,
        )
    except Exception:
        return (s2_0, lam_0, w0_0), False
    if not np.all(np.isfinite(res.x)):
        return (s2_0, lam_0, w0_0), False
    s2, lam, w0 = math.exp(res.x[0]), math.exp(res.x[1]), res.x[2]
    return (s2, lam, w0), bool(res.success)


def fit_msm_frequency_domain(
    spec: MagnitudeSpectrum,
    n_harmonics: int,
    peak_window_hz: float = 40.0,
    positive_residual: bool = False,
) -> FitReport:
    """Greedy peak-wise Lorentzian fit of the magnitude spectrum.

    Per peak: take the argmax of the current residual spectrum, fit one
    Lorentzian by least squares on the +/- ``peak_window_hz`` neighbourhood,
    then replace the spectrum with the pointwise absolute difference
    ``|L - residual|`` (or ``max(residual - L, 0)`` when
    ``positive_residual``).  Stops early when no resolvable peak remains and
    reports the actual component count.
    """
    if n_harmonics < 1:
        raise InvalidParameterError("n_harmonics must be >= 1")
    freqs = spec.freqs
    omega = TWO_PI * freqs
    resid = spec.mags.astype(float).copy()
    floor = PEAK_FLOOR_REL * float(resid.max(initial=0.0))

    comps: list[LorentzianComponent] = []
    report = FitReport(
        kernel=None, residual_l2=[], peak_freqs_hz=[], n_requested=n_harmonics
    )
    for i in range(n_harmonics):
        idx = int(np.argmax(resid))
        height = resid[idx]
        if height <= floor or height <= 0.0:
            break
        f_star = freqs[idx]
        mask = np.abs(freqs - f_star) <= peak_window_hz
        lam_0 = TWO_PI * 2.0 * spec.bin_width
        s2_0 = height * lam_0 / TWO_PI
        w0_lo = TWO_PI * max(f_star - peak_window_hz, 0.0)
        w0_hi = TWO_PI * (f_star + peak_window_hz)
        (s2, lam, w0), ok = _fit_one_lorentzian(
            omega[mask], resid[mask], s2_0, lam_0, TWO_PI * f_star, w0_lo, w0_hi
        )
        if not ok:
            report.failed_peaks.append(i)
        comps.append(LorentzianComponent(variance=s2, decay=lam, center_freq=w0))
        report.peak_freqs_hz.append(w0 / TWO_PI)
        full = lorentzian(omega, s2, lam, w0)
        if positive_residual:
            resid = np.maximum(resid - full, 0.0)
        else:
            resid = np.abs(full - resid)
        report.residual_l2.append(float(np.linalg.norm(resid)))
    if comps:
        report.kernel = MsmKernel(comps)
    return report


def init_manual(
    f0_hz: float,
    n_harmonics: int,
    variance: float | None = None,
    lengthscale_s: float = 0.5,
) -> MsmKernel:
    """Manually tuned kernel: components at exactly j * f0 with equal
    variances (default 1 / n_harmonics each) and one shared lengthscale."""
    if not f0_hz > 0.0:
        raise InvalidParameterError("f0_hz must be > 0")
    if n_harmonics < 1:
        raise InvalidParameterError("n_harmonics must be >= 1")
    if variance is None:
        variance = 1.0 / n_harmonics
    decay = 1.0 / lengthscale_s
    return MsmKernel(
        [
            LorentzianComponent(
                variance=variance, decay=decay, center_freq=TWO_PI * j * f0_hz
            )
            for j in range(1, n_harmonics + 1)
        ]
    )


@dataclass
class RefineResult:
    kernel: MsmKernel
    lml_initial: float
    lml_final: float
    failed: bool = False


def _gp_lml_and_grad(params, times, y, noise_var, n_comp, jitter):
    """Exact GP log marginal likelihood and its gradient.

    params = [log s2_j, log lam_j, w0_j] * n_comp.  Returns (-lml, -grad)
    for use with a minimizer; raises np.linalg.LinAlgError on Cholesky
    failure.
    """
    n = times.size
    s2 = np.exp(params[0::3])
    lam = np.exp(params[1::3])
    w0 = params[2::3]
    r = times[:, None] - times[None, :]
    ar = np.abs(r)
    terms = [
        s2[j] * np.exp(-lam[j] * ar) * np.cos(w0[j] * r) for j in range(n_comp)
    ]
    K = sum(terms) + (noise_var + jitter) * np.eye(n)
    L = np.linalg.cholesky(K)
    alpha = cho_solve((L, True), y)
    lml = (
        -0.5 * y @ alpha
        - np.log(np.diag(L)).sum()
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(params)
    for j in range(n_comp):
        dK_ds2 = terms[j] / s2[j]
        dK_dlam = -ar * terms[j]
        dK_dw0 = -s2[j] * np.exp(-lam[j] * ar) * r * np.sin(w0[j] * r)
        # chain through the log-parameterization of s2 and lam
        grad[3 * j + 0] = 0.5 * np.sum(W * dK_ds2) * s2[j]
        grad[3 * j + 1] = 0.5 * np.sum(W * dK_dlam) * lam[j]
        grad[3 * j + 2] = 0.5 * np.sum(W * dK_dw0)
    return -lml, -grad


def refine_marginal_likelihood(
    k0: MsmKernel,
    samples: np.ndarray,
    times: np.ndarray,
    max_iters: int,
    noise_var: float | None = None,
) -> RefineResult:
    """Gradient ascent on the exact GP log marginal likelihood.

    Cubic in the number of samples, so inputs are capped at 4096 points.
    Never returns a kernel with lower marginal likelihood than ``k0``; on
    Cholesky failure (after jitter escalation up to 1e-3 relative) the
    initial kernel is returned with ``failed=True``.
    """
    y = np.asarray(samples, dtype=float).ravel()
    t = np.asarray(times, dtype=float).ravel()
    if y.size != t.size:
        raise InvalidParameterError("samples and times must have equal length")
    if y.size > 4096:
        raise InvalidParameterError("refine_marginal_likelihood is capped at 4096 samples")
    if noise_var is None:
        noise_var = max(1e-3 * float(np.var(y)), 1e-8)

    n_comp = k0.n_components
    p0 = np.empty(3 * n_comp)
    for j, c in enumerate(k0.components):
        p0[3 * j] = math.log(max(c.variance, 1e-12))
        p0[3 * j + 1] = math.log(c.decay)
        p0[3 * j + 2] = c.center_freq

    scale = k0.total_variance
    jitters = [1e-9 * scale, 1e-6 * scale, 1e-3 * scale]
    lml0 = None
    for jit in jitters:
        try:
            nll0, _ = _gp_lml_and_grad(p0, t, y, noise_var, n_comp, jit)
            lml0 = -nll0
            jitter = jit
            break
        except np.linalg.LinAlgError:
            continue
    if lml0 is None:
        return RefineResult(kernel=k0, lml_initial=np.nan, lml_final=np.nan, failed=True)
    if max_iters == 0:
        return RefineResult(kernel=k0, lml_initial=lml0, lml_final=lml0)

    def objective(p):
        try:
            return _gp_lml_and_grad(p, t, y, noise_var, n_comp, jitter)
        except np.linalg.LinAlgError:
            return 1e12, np.zeros_like(p)

    bounds = [(None, None), (math.log(1e-4), None), (0.0, None)] * n_comp
    res = minimize(
        objective,
        p0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iters},
    )
    lml1 = -float(res.fun)
    if not np.all(np.isfinite(res.x)) or lml1 < lml0:
        return RefineResult(kernel=k0, lml_initial=lml0, lml_final=lml0)
    comps = [
        LorentzianComponent(
            variance=math.exp(res.x[3 * j]),
            decay=math.exp(res.x[3 * j + 1]),
            center_freq=res.x[3 * j + 2],
        )
        for j in range(n_comp)
    ]
    return RefineResult(kernel=MsmKernel(comps), lml_initial=lml0, lml_final=lml1)
