"""Gauss-Hermite machinery for variational expectations.

Physicists' convention throughout: nodes and weights integrate against
exp(-x^2), so Gaussian expectations carry a 1/sqrt(pi) prefactor after the
change of variable x = (g - m) / (sqrt(2) * s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidParameterError

SQRT_PI = math.sqrt(math.pi)
LOG_2PI = math.log(2.0 * math.pi)

#: Default orders: training keeps cost low, verification guards oracles.
DEFAULT_ORDER_TRAIN = 20
DEFAULT_ORDER_VERIFY = 40


@dataclass(frozen=True)
class GaussHermiteRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size


def gh_rule(order: int) -> GaussHermiteRule:
    """Gauss-Hermite rule exact for polynomials of degree <= 2*order - 1."""
    if not 1 <= order <= 100:
        raise InvalidParameterError(f"order must be in [1, 100], got {order}")
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return GaussHermiteRule(nodes=nodes, weights=weights)


def _check_var(var) -> np.ndarray:
    var = np.asarray(var, dtype=float)
    if np.any(var < 0.0):
        raise InvalidParameterError("variance must be >= 0")
    return var


def expect_sigmoid(mean, var, rule: GaussHermiteRule):
    """E[sigmoid(g)] for g ~ N(mean, var); broadcasts over array inputs."""
    mean = np.asarray(mean, dtype=float)
    var = _check_var(var)
    s = np.sqrt(var)
    a = math.sqrt(2.0) * s[..., None] * rule.nodes + mean[..., None]
    out = expit(a) @ rule.weights / SQRT_PI
    return out if out.ndim else float(out)


def expect_sigmoid_sq(mean, var, rule: GaussHermiteRule):
    """E[sigmoid(g)^2] for g ~ N(mean, var)."""
    mean = np.asarray(mean, dtype=float)
    var = _check_var(var)
    s = np.sqrt(var)
    a = math.sqrt(2.0) * s[..., None] * rule.nodes + mean[..., None]
    out = expit(a) ** 2 @ rule.weights / SQRT_PI
    return out if out.ndim else float(out)


def expect_loglik_2d(
    y: float,
    mf: float,
    vf: float,
    mg: float,
    vg: float,
    noise_var: float,
    rule: GaussHermiteRule,
) -> float:
    """Tensor-product quadrature of E[log N(y | sigmoid(g) * f, noise_var)]
    under independent Gaussians f ~ N(mf, vf), g ~ N(mg, vg)."""
    _check_var([vf, vg])
    if not noise_var > 0.0:
        raise InvalidParameterError("noise_var must be > 0")
    sf = math.sqrt(vf)
    sg = math.sqrt(vg)
    f = math.sqrt(2.0) * sf * rule.nodes + mf          # (Q,)
    g = math.sqrt(2.0) * sg * rule.nodes + mg          # (Q,)
    mu = expit(g)[None, :] * f[:, None]                # (Qf, Qg)
    ll = -0.5 * LOG_2PI - 0.5 * math.log(noise_var) - (y - mu) ** 2 / (
        2.0 * noise_var
    )
    return float(rule.weights @ ll @ rule.weights / math.pi)


def expect_loglik_1d_decomp(
    y: float,
    mf: float,
    vf: float,
    mg: float,
    vg: float,
    noise_var: float,
    rule: GaussHermiteRule,
) -> float:
    """Same expectation as :func:`expect_loglik_2d`, but expanded so only two
    one-dimensional sigmoid expectations are needed."""
    _check_var([vf, vg])
    if not noise_var > 0.0:
        raise InvalidParameterError("noise_var must be > 0")
    e1 = expect_sigmoid(mg, vg, rule)
    e2 = expect_sigmoid_sq(mg, vg, rule)
    quad = y**2 - 2.0 * y * mf * e1 + (vf + mf**2) * e2
    return float(
        -quad / (2.0 * noise_var) - 0.5 * LOG_2PI - 0.5 * math.log(noise_var)
    )


def sigmoid_moment_derivatives(mean, var, rule: GaussHermiteRule):
    """E[sigmoid], E[sigmoid^2] and their derivatives w.r.t. mean and var.

    Returns ``(e1, e2, de1_dm, de1_dv, de2_dm, de2_dv)``, broadcasting over
    array ``mean`` / ``var``.  Used by the ELBO gradient; variances are
    floored at 1e-12 to keep the 1/s factor finite.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.maximum(_check_var(var), 1e-12)
    s = np.sqrt(var)
    x = rule.nodes
    a = math.sqrt(2.0) * s[..., None] * x + mean[..., None]
    sig = expit(a)
    dsig = sig * (1.0 - sig)
    w = rule.weights
    e1 = sig @ w / SQRT_PI
    e2 = sig**2 @ w / SQRT_PI
    de1_dm = dsig @ w / SQRT_PI
    de2_dm = 2.0 * (sig * dsig) @ w / SQRT_PI
    # d/dvar = d/ds * 1/(2 s); the node factor x comes from d a / d s.
    de1_dv = (dsig * x) @ w / SQRT_PI / (math.sqrt(2.0) * s)
    de2_dv = 2.0 * (sig * dsig * x) @ w / SQRT_PI / (math.sqrt(2.0) * s)
    return e1, e2, de1_dm, de1_dv, de2_dm, de2_dv
