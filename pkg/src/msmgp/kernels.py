"""Matern spectral mixture (MSM) kernels.

A kernel is a sum of damped-cosine terms

    k(r) = sum_j  variance_j * exp(-decay_j * |r|) * cos(center_freq_j * r),

whose spectral density is the matching sum of Lorentzian pairs.  Each term
describes one partial of a musical note: ``center_freq`` places the partial,
``decay`` (inverse length-scale) sets its bandwidth and ``variance`` its
energy.  Frequencies are stored in radians per second; file formats use Hz
and convert at the boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError

TWO_PI = 2.0 * math.pi

#: Default diagonal jitter, relative to the mean diagonal of the Gram matrix.
DEFAULT_JITTER_REL = 1e-6


@dataclass(frozen=True)
class LorentzianComponent:
    """One damped-cosine kernel term / one Lorentzian pair in frequency."""

    variance: float     # sigma^2, amplitude weight, >= 0
    decay: float        # lambda = 1 / lengthscale, rad/s, > 0
    center_freq: float  # omega_0, rad/s, >= 0

    def __post_init__(self):
        if not self.decay > 0.0:
            raise InvalidParameterError(f"decay must be > 0, got {self.decay}")
        if self.variance < 0.0:
            raise InvalidParameterError(f"variance must be >= 0, got {self.variance}")
        if self.center_freq < 0.0:
            raise InvalidParameterError(
                f"center_freq must be >= 0, got {self.center_freq}"
            )

    @property
    def lengthscale(self) -> float:
        return 1.0 / self.decay

    @property
    def freq_hz(self) -> float:
        return self.center_freq / TWO_PI


@dataclass(frozen=True)
class MsmKernel:
    """Ordered set of Lorentzian components; canonical order is by
    descending variance (ties keep insertion order)."""

    components: tuple[LorentzianComponent, ...]

    def __init__(self, components: Sequence[LorentzianComponent]):
        comps = tuple(
            sorted(components, key=lambda c: -c.variance)
        )
        if len(comps) < 1:
            raise InvalidParameterError("MsmKernel needs at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def total_variance(self) -> float:
        return float(sum(c.variance for c in self.components))

    def scaled(self, factor: float) -> "MsmKernel":
        """Return a copy with every variance multiplied by ``factor``."""
        if factor < 0.0:
            raise InvalidParameterError("scale factor must be >= 0")
        return MsmKernel(
            [
                LorentzianComponent(c.variance * factor, c.decay, c.center_freq)
                for c in self.components
            ]
        )


@dataclass(frozen=True)
class GramMatrix:
    """Dense covariance matrix with the jitter actually added recorded."""

    values: np.ndarray
    jitter: float


def matern12(r, variance: float, decay: float):
    """Matern-1/2 kernel sigma^2 * exp(-lambda * |r|).

    ``r`` may be a scalar or array of absolute lags.
    """
    if not decay > 0.0:
        raise InvalidParameterError(f"decay must be > 0, got {decay}")
    return variance * np.exp(-decay * np.abs(r))


def cosine_kernel(r, f0_hz: float):
    """Cosine kernel cos(2*pi*f0*r), unit variance, f0 in Hz."""
    return np.cos(TWO_PI * f0_hz * r)


def msm_eval(kernel: MsmKernel, r):
    """Evaluate the MSM kernel at lag(s) ``r`` (sign of r is irrelevant)."""
    r = np.asarray(r, dtype=float)
    ar = np.abs(r)
    out = np.zeros_like(r)
    for c in kernel.components:
        out = out + c.variance * np.exp(-c.decay * ar) * np.cos(c.center_freq * r)
    return out if out.ndim else float(out)


def lorentzian(omega, variance: float, decay: float, center_freq: float):
    """Shifted Lorentzian 2*pi*sigma^2*lambda / (lambda^2 + (omega - omega0)^2)."""
    omega = np.asarray(omega, dtype=float)
    return TWO_PI * variance * decay / (decay**2 + (omega - center_freq) ** 2)


def msm_spectral_density(kernel: MsmKernel, omega):
    """Spectral density: sum over components of L(omega) + L(-omega).

    Even in ``omega`` and non-negative everywhere.
    """
    omega = np.asarray(omega, dtype=float)
    out = np.zeros_like(omega)
    for c in kernel.components:
        out = out + lorentzian(omega, c.variance, c.decay, c.center_freq)
        out = out + lorentzian(-omega, c.variance, c.decay, c.center_freq)
    return out if out.ndim else float(out)


def build_gram(
    kernel: MsmKernel,
    times_a: np.ndarray,
    times_b: np.ndarray,
    jitter: float = 0.0,
) -> GramMatrix:
    """Covariance matrix K[i, j] = k(times_a[i] - times_b[j]).

    ``jitter`` is added to the diagonal only when the two time vectors are
    identical (the square, self-covariance case).
    """
    ta = np.asarray(times_a, dtype=float).ravel()
    tb = np.asarray(times_b, dtype=float).ravel()
    if ta.size == 0 or tb.size == 0:
        raise InvalidParameterError("time vectors must be non-empty")
    if jitter < 0.0:
        raise InvalidParameterError("jitter must be >= 0")
    diff = ta[:, None] - tb[None, :]
    values = msm_eval(kernel, diff)
    applied = 0.0
    if ta.shape == tb.shape and np.array_equal(ta, tb) and jitter > 0.0:
        values = values + jitter * np.eye(ta.size)
        applied = jitter
    return GramMatrix(values=values, jitter=applied)


def default_jitter(kernel: MsmKernel, rel: float = DEFAULT_JITTER_REL) -> float:
    """Jitter scaled to the kernel's diagonal value k(0)."""
    return rel * kernel.total_variance


# ---------------------------------------------------------------------------
# serialization (Hz / seconds at the file boundary)
# ---------------------------------------------------------------------------

def kernel_to_dict(kernel: MsmKernel, pitch_label: str) -> dict:
    return {
        "pitch_label": pitch_label,
        "components": [
            {
                "variance": c.variance,
                "lengthscale_s": 1.0 / c.decay,
                "freq_hz": c.center_freq / TWO_PI,
            }
            for c in kernel.components
        ],
    }


def kernel_from_dict(d: dict) -> tuple[str, MsmKernel]:
    comps = [
        LorentzianComponent(
            variance=float(c["variance"]),
            decay=1.0 / float(c["lengthscale_s"]),
            center_freq=TWO_PI * float(c["freq_hz"]),
        )
        for c in d["components"]
    ]
    return str(d["pitch_label"]), MsmKernel(comps)


def save_kernel(path, kernel: MsmKernel, pitch_label: str) -> None:
    with open(path, "w") as fh:
        json.dump(kernel_to_dict(kernel, pitch_label), fh, indent=2)
        fh.write("\n")


def load_kernel(path) -> tuple[str, MsmKernel]:
    with open(path) as fh:
        return kernel_from_dict(json.load(fh))
