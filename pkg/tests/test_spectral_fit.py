"""Unit tests for frequency-domain kernel learning."""

import numpy as np
import pytest

from msmgp.errors import InvalidInputError, InvalidParameterError
from msmgp.kernels import TWO_PI, LorentzianComponent, MsmKernel, lorentzian
from msmgp.spectral_fit import (
    MagnitudeSpectrum,
    fit_msm_frequency_domain,
    init_manual,
    magnitude_ft,
    refine_marginal_likelihood,
)


def test_magnitude_ft_unit_sinusoid_peak():
    # a unit sinusoid exactly on a bin center has peak magnitude 1
    sr = 1024.0
    n = 1024
    t = np.arange(n) / sr
    f0 = 64.0
    spec = magnitude_ft(np.sin(TWO_PI * f0 * t), sr)
    idx = int(np.argmax(spec.mags))
    assert spec.freqs[idx] == pytest.approx(f0)
    assert spec.mags[idx] == pytest.approx(1.0, rel=1e-6)
    assert spec.bin_width == pytest.approx(sr / 1024)


def test_magnitude_ft_zero_pads_to_power_of_two():
    spec = magnitude_ft(np.ones(1000), 1000.0)
    assert spec.freqs.size == 1024 // 2 + 1
    assert spec.source_duration == pytest.approx(1.0)


def test_magnitude_ft_validation():
    with pytest.raises(InvalidInputError):
        magnitude_ft(np.array([1.0]), 100.0)
    with pytest.raises(InvalidInputError):
        magnitude_ft(np.ones(16), 0.0)


def _spectrum_from_components(comps, f_max=2000.0, bin_hz=0.5):
    freqs = np.arange(0.0, f_max, bin_hz)
    omega = TWO_PI * freqs
    mags = np.zeros_like(freqs)
    for c in comps:
        mags += lorentzian(omega, c.variance, c.decay, c.center_freq)
    return MagnitudeSpectrum(
        freqs=freqs, mags=mags, source_duration=1.0 / bin_hz, sample_rate=2 * f_max
    )


def test_greedy_fit_recovers_well_separated_lorentzians():
    comps = [
        LorentzianComponent(variance=1.0, decay=12.0, center_freq=TWO_PI * 220.0),
        LorentzianComponent(variance=0.5, decay=18.0, center_freq=TWO_PI * 440.0),
        LorentzianComponent(variance=0.25, decay=25.0, center_freq=TWO_PI * 660.0),
    ]
    spec = _spectrum_from_components(comps)
    report = fit_msm_frequency_domain(spec, 3)
    assert report.n_fitted == 3
    assert report.kernel is not None
    got = sorted(report.kernel.components, key=lambda c: c.center_freq)
    for truth, est in zip(comps, got):
        assert abs(est.freq_hz - truth.freq_hz) <= 0.5 * spec.bin_width
        assert est.variance == pytest.approx(truth.variance, rel=0.05)
        assert est.decay == pytest.approx(truth.decay, rel=0.10)


def test_greedy_fit_residual_is_monotone():
    comps = [
        LorentzianComponent(variance=1.0, decay=10.0, center_freq=TWO_PI * 150.0),
        LorentzianComponent(variance=0.8, decay=15.0, center_freq=TWO_PI * 450.0),
    ]
    report = fit_msm_frequency_domain(_spectrum_from_components(comps), 2)
    assert len(report.residual_l2) == 2
    assert report.residual_l2[1] <= report.residual_l2[0] + 1e-12


def test_greedy_fit_stops_on_empty_spectrum():
    freqs = np.arange(0.0, 500.0, 0.5)
    spec = MagnitudeSpectrum(
        freqs=freqs, mags=np.zeros_like(freqs), source_duration=2.0, sample_rate=1000.0
    )
    report = fit_msm_frequency_domain(spec, 5)
    assert report.kernel is None
    assert report.n_fitted == 0
    with pytest.raises(InvalidParameterError):
        fit_msm_frequency_domain(spec, 0)


def test_greedy_fit_positive_residual_mode():
    comps = [LorentzianComponent(variance=1.0, decay=10.0, center_freq=TWO_PI * 100.0)]
    spec = _spectrum_from_components(comps, f_max=500.0)
    report = fit_msm_frequency_domain(spec, 1, positive_residual=True)
    assert report.residual_l2[0] == pytest.approx(0.0, abs=1e-6)


def test_init_manual_places_harmonics():
    k = init_manual(110.0, 4)
    freqs = sorted(c.freq_hz for c in k.components)
    assert freqs == pytest.approx([110.0, 220.0, 330.0, 440.0])
    assert all(c.variance == pytest.approx(0.25) for c in k.components)
    assert all(c.lengthscale == pytest.approx(0.5) for c in k.components)
    with pytest.raises(InvalidParameterError):
        init_manual(0.0, 3)
    with pytest.raises(InvalidParameterError):
        init_manual(100.0, 0)


def _gp_sample(kernel, times, noise_sd, rng):
    from msmgp.kernels import build_gram

    K = build_gram(kernel, times, times, 1e-10).values
    L = np.linalg.cholesky(K)
    return L @ rng.standard_normal(times.size) + noise_sd * rng.standard_normal(
        times.size
    )


def test_refine_improves_perturbed_kernel():
    rng = np.random.default_rng(0)
    true_k = MsmKernel(
        [LorentzianComponent(variance=1.0, decay=4.0, center_freq=TWO_PI * 20.0)]
    )
    times = np.arange(256) / 256.0
    y = _gp_sample(true_k, times, 0.05, rng)
    k0 = MsmKernel(
        [LorentzianComponent(variance=0.5, decay=8.0, center_freq=TWO_PI * 22.0)]
    )
    res = refine_marginal_likelihood(k0, y, times, max_iters=40, noise_var=0.0025)
    assert not res.failed
    assert res.lml_final >= res.lml_initial
    refined = res.kernel.components[0]
    assert abs(refined.freq_hz - 20.0) < abs(22.0 - 20.0)


def test_refine_zero_iters_returns_initial():
    rng = np.random.default_rng(1)
    k0 = MsmKernel(
        [LorentzianComponent(variance=1.0, decay=4.0, center_freq=TWO_PI * 10.0)]
    )
    times = np.arange(64) / 64.0
    y = _gp_sample(k0, times, 0.05, rng)
    res = refine_marginal_likelihood(k0, y, times, max_iters=0)
    assert res.kernel is k0
    assert res.lml_final == res.lml_initial


def test_refine_input_caps():
    k0 = MsmKernel([LorentzianComponent(variance=1.0, decay=1.0, center_freq=0.0)])
    with pytest.raises(InvalidParameterError):
        refine_marginal_likelihood(k0, np.zeros(5000), np.arange(5000.0), 10)
    with pytest.raises(InvalidParameterError):
        refine_marginal_likelihood(k0, np.zeros(8), np.arange(9.0), 10)
