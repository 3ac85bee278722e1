"""Tests for spectrogram metrics and the oracle operator fit."""

import numpy as np
import pytest

from dryverb.audio import AudioClip, ComplexSpectrogram, drop_dc, stft
from dryverb.metrics import (
    MetricError,
    estimate_oracle_operator,
    l1_spec_loss,
    log_spectral_distance,
    oracle_degradations,
    oracle_fit_residual,
    oracle_toeplitz,
)
from dryverb.synth import ReverbSpec, synth_reverb, synthetic_voice


def spec_of(arr):
    return ComplexSpectrogram(np.asarray(arr, dtype=complex),
                              window_size=2 * (arr.shape[1] - 1), hop_size=1)


def test_l1_loss_identity_and_symmetry():
    rng = np.random.default_rng(0)
    a = spec_of(rng.standard_normal((10, 5)))
    b = spec_of(rng.standard_normal((10, 5)))
    assert l1_spec_loss(a, a) == 0.0
    assert np.isclose(l1_spec_loss(a, b), l1_spec_loss(b, a))


def test_l1_loss_oracle_value():
    a = spec_of(np.full((2, 3), 3.0 + 4.0j))
    b = spec_of(np.zeros((2, 3)))
    assert np.isclose(l1_spec_loss(a, b), 5.0)


def test_l1_phase_invariance():
    rng = np.random.default_rng(1)
    mag = np.abs(rng.standard_normal((8, 4)))
    a = spec_of(mag * np.exp(1j * rng.uniform(0, 2 * np.pi, (8, 4))))
    b = spec_of(mag * np.exp(1j * rng.uniform(0, 2 * np.pi, (8, 4))))
    assert l1_spec_loss(a, b) < 1e-12


def test_lsd_oracle_value():
    a = spec_of(np.full((4, 4), 10.0))
    b = spec_of(np.full((4, 4), 1.0))
    assert np.isclose(log_spectral_distance(a, b), 20.0)


def test_lsd_floor_guards_zeros():
    a = spec_of(np.zeros((3, 3)))
    b = spec_of(np.ones((3, 3)))
    val = log_spectral_distance(a, b)
    assert np.isfinite(val)
    assert np.isclose(val, 160.0)  # floor 1e-8 -> -160 dB vs 0 dB


def test_metric_shape_mismatch():
    with pytest.raises(MetricError):
        l1_spec_loss(spec_of(np.zeros((3, 4))), spec_of(np.zeros((5, 4))))


def test_oracle_operator_recovers_known_filter():
    # build wet = H dry per band with a known 3-tap filter and refit it
    rng = np.random.default_rng(2)
    n, bands, taps = 400, 4, 3
    h_true = 0.5 * (rng.standard_normal((bands, taps))
                    + 1j * rng.standard_normal((bands, taps)))
    x = rng.standard_normal((bands, n)) + 1j * rng.standard_normal((bands, n))
    y = np.zeros_like(x)
    for j in range(taps):
        y[:, j:] += h_true[:, j:j + 1] * x[:, :n - j]
    wet = spec_of(y.T)
    dry = spec_of(x.T)
    h_est = estimate_oracle_operator(wet, dry, taps=taps, loading=1e-12)
    assert np.allclose(h_est, h_true, atol=1e-6)
    assert oracle_fit_residual(wet, dry, h_est) < 1e-8


def test_oracle_residual_identity_filter():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 2)) + 0j
    spec = spec_of(x)
    h = np.zeros((2, 1), dtype=complex)
    h[:, 0] = 1.0
    assert oracle_fit_residual(spec, spec, h) < 1e-12


def test_oracle_operator_on_real_reverb():
    # the fitted operator should explain most of the wet signal's energy
    dry = synthetic_voice(1.0, sample_rate=8000, seed=4)
    wet = synth_reverb(dry, ReverbSpec(rt60=0.3, wet_dry_mix=0.5, seed=5))
    wet_s = drop_dc(stft(wet, 256, 64))
    dry_s = drop_dc(stft(dry, 256, 64))
    h = estimate_oracle_operator(wet_s, dry_s, taps=24)
    assert oracle_fit_residual(wet_s, dry_s, h) < 0.25


def test_oracle_toeplitz_structure():
    h = np.array([1.0, 0.5 + 0.5j, 0.25])
    mat = oracle_toeplitz(h, m=3)
    assert mat.shape == (3, 5)
    expected = np.array([
        [1.0, 0.5 + 0.5j, 0.25, 0.0, 0.0],
        [0.0, 1.0, 0.5 + 0.5j, 0.25, 0.0],
        [0.0, 0.0, 1.0, 0.5 + 0.5j, 0.25],
    ])
    assert np.allclose(mat, expected)


def test_oracle_degradations_shapes():
    rng = np.random.default_rng(6)
    h = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    degs = list(oracle_degradations(h, m=5))
    assert len(degs) == 3
    for deg in degs:
        assert deg.m == 5
        assert deg.q == 8
        assert deg.obs_width == 5
        assert np.sum(deg.sv > 0) == 5  # rank of the 5 x 8 Toeplitz block
