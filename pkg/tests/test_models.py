"""Unit tests for the mixture likelihood models."""

import math

import numpy as np
import pytest
from scipy.special import expit

from msmgp.errors import InvalidParameterError
from msmgp.kernels import LorentzianComponent, MsmKernel
from msmgp.models import (
    McConfig,
    _sigmoid_multi_terms,
    _softmax_terms,
    build_loo_spec,
    default_activation_kernel,
    make_model,
    sigmoid_multi_point_loglik,
    sigmoid_point_loglik,
    softmax_point_loglik,
)
from msmgp.quadrature import expect_loglik_1d_decomp, gh_rule


def _toy_kernel(freq=100.0):
    return MsmKernel([LorentzianComponent(variance=1.0, decay=5.0, center_freq=freq)])


def test_make_model_counts():
    ks = [_toy_kernel(100.0), _toy_kernel(200.0)]
    sig = make_model("sigmoid", ks, ["a", "b"])
    assert sig.n_components == 2
    assert sig.n_activations == 2
    sof = make_model("softmax", ks, ["a", "b"])
    assert sof.n_activations == 3  # extra silence slot
    with pytest.raises(InvalidParameterError):
        make_model("probit", ks, ["a", "b"])
    with pytest.raises(InvalidParameterError):
        make_model("sigmoid", ks, ["a"])


def test_build_loo_spec_merges_components():
    target = _toy_kernel(100.0)
    others = [_toy_kernel(200.0), _toy_kernel(300.0)]
    spec = build_loo_spec(target, others, target_label="C4")
    assert spec.kind == "sigmoid_loo"
    assert spec.n_components == 2
    assert spec.component_kernels[1].n_components == 2
    assert spec.pitch_labels == ("C4", "rest")
    with pytest.raises(InvalidParameterError):
        build_loo_spec(target, [])


def test_default_activation_kernel_is_non_oscillatory():
    k = default_activation_kernel(lengthscale_s=0.25, variance=4.0)
    c = k.components[0]
    assert c.center_freq == 0.0
    assert c.decay == pytest.approx(4.0)
    assert c.variance == pytest.approx(4.0)


def test_sigmoid_point_loglik_matches_decomposition():
    rule = gh_rule(40)
    val = sigmoid_point_loglik(0.3, 0.5, 0.2, 1.0, 0.4, 0.01, rule)
    ref = expect_loglik_1d_decomp(0.3, 0.5, 0.2, 1.0, 0.4, 0.01, rule)
    assert val == pytest.approx(ref, rel=1e-12)


def test_multi_source_reduces_to_single_source():
    rule = gh_rule(40)
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.normal()
        mf, mg = rng.normal(0.0, 1.5, 2)
        vf, vg = rng.uniform(0.05, 2.0, 2)
        nv = rng.uniform(0.05, 1.0)
        multi = sigmoid_multi_point_loglik(
            y, np.array([mf]), np.array([vf]), np.array([mg]), np.array([vg]), nv, rule
        )
        single = sigmoid_point_loglik(y, mf, vf, mg, vg, nv, rule)
        assert multi == pytest.approx(single, rel=1e-10)


def test_two_source_loglik_against_monte_carlo():
    rule = gh_rule(40)
    rng = np.random.default_rng(1)
    y, nv = 0.4, 0.05
    mf = np.array([0.6, -0.3])
    vf = np.array([0.2, 0.5])
    mg = np.array([0.8, -1.0])
    vg = np.array([0.3, 0.7])
    n = 2_000_000
    f = mf + np.sqrt(vf) * rng.standard_normal((n, 2))
    g = mg + np.sqrt(vg) * rng.standard_normal((n, 2))
    mu = (expit(g) * f).sum(axis=1)
    ll_mc = (
        -0.5 * math.log(2 * math.pi * nv) - ((y - mu) ** 2) / (2 * nv)
    ).mean()
    ll = sigmoid_multi_point_loglik(y, mf, vf, mg, vg, nv, rule)
    assert ll == pytest.approx(ll_mc, abs=0.02)


def test_sigmoid_multi_terms_gradients():
    rule = gh_rule(30)
    rng = np.random.default_rng(2)
    n, m = 5, 2
    y = rng.normal(0.0, 1.0, n)
    mf = rng.normal(0.0, 1.0, (n, m))
    vf = rng.uniform(0.05, 1.0, (n, m))
    mg = rng.normal(0.0, 1.0, (n, m))
    vg = rng.uniform(0.05, 1.0, (n, m))
    nv = 0.1
    _, d_mf, d_vf, d_mg, d_vg = _sigmoid_multi_terms(
        y, mf, vf, mg, vg, nv, rule, grads=True
    )
    h = 1e-6
    for arr, grad in ((mf, d_mf), (vf, d_vf), (mg, d_mg), (vg, d_vg)):
        i, j = rng.integers(n), rng.integers(m)
        arr[i, j] += h
        up = _sigmoid_multi_terms(y, mf, vf, mg, vg, nv, rule)
        arr[i, j] -= 2 * h
        dn = _sigmoid_multi_terms(y, mf, vf, mg, vg, nv, rule)
        arr[i, j] += h
        assert grad[i, j] == pytest.approx((up - dn) / (2 * h), rel=2e-4, abs=1e-7)


def test_softmax_terms_gradients_fixed_draws():
    rng = np.random.default_rng(3)
    n, m = 4, 2
    y = rng.normal(0.0, 1.0, n)
    mf = rng.normal(0.0, 1.0, (n, m))
    vf = rng.uniform(0.05, 1.0, (n, m))
    mg = rng.normal(0.0, 1.0, (n, m + 1))
    vg = rng.uniform(0.05, 1.0, (n, m + 1))
    nv = 0.1
    eps = rng.standard_normal((200, n, m + 1))
    _, d_mf, d_vf, d_mg, d_vg = _softmax_terms(
        y, mf, vf, mg, vg, nv, eps, grads=True
    )
    h = 1e-6
    for arr, grad, cols in (
        (mf, d_mf, m), (vf, d_vf, m), (mg, d_mg, m + 1), (vg, d_vg, m + 1)
    ):
        i, j = rng.integers(n), rng.integers(cols)
        arr[i, j] += h
        up = _softmax_terms(y, mf, vf, mg, vg, nv, eps)
        arr[i, j] -= 2 * h
        dn = _softmax_terms(y, mf, vf, mg, vg, nv, eps)
        arr[i, j] += h
        assert grad[i, j] == pytest.approx((up - dn) / (2 * h), rel=2e-4, abs=1e-7)


def test_softmax_point_loglik_validation_and_seed():
    mf = np.array([0.3, -0.2])
    vf = np.array([0.1, 0.1])
    mg = np.array([0.0, 1.0, -1.0])
    vg = np.array([0.2, 0.2, 0.2])
    a = softmax_point_loglik(0.1, mf, vf, mg, vg, 0.05, McConfig(seed=7))
    b = softmax_point_loglik(0.1, mf, vf, mg, vg, 0.05, McConfig(seed=7))
    assert a == b
    with pytest.raises(InvalidParameterError):
        softmax_point_loglik(0.1, mf, vf, mg[:2], vg[:2], 0.05)
