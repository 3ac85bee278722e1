"""Tests for the weighted prediction error filter estimator."""

import numpy as np
import pytest

from dryverb.audio import ComplexSpectrogram
from dryverb.linop import apply_operator, build_band_operator
from dryverb.wpe import (
    WpeConfig,
    WpeError,
    WpeFilterBank,
    apply_dereverb_filter,
    delayed_frames,
    estimate_wpe_filter,
    prediction_error_cost,
)


def make_spec(bands_by_frames: np.ndarray) -> ComplexSpectrogram:
    """Wrap a (bands, frames) array; ComplexSpectrogram stores frames x bins."""
    return ComplexSpectrogram(
        np.ascontiguousarray(bands_by_frames.T),
        window_size=2 * bands_by_frames.shape[0],
        hop_size=bands_by_frames.shape[0] // 2,
        dc_dropped=True,
    )


def naive_delayed(y, taps, delay):
    n = y.shape[-1]
    out = np.zeros(y.shape[:-1] + (n, taps), dtype=y.dtype)
    for frame in range(n):
        for lag in range(taps):
            src = frame - delay - lag
            if src >= 0:
                out[..., frame, lag] = y[..., src]
    return out


def test_delayed_frames_matches_naive():
    rng = np.random.default_rng(0)
    y = rng.standard_normal((3, 20)) + 1j * rng.standard_normal((3, 20))
    for taps, delay in [(1, 1), (4, 2), (7, 5)]:
        assert np.allclose(delayed_frames(y, taps, delay), naive_delayed(y, taps, delay))


def test_config_validation():
    with pytest.raises(WpeError):
        WpeConfig(taps=0)
    with pytest.raises(WpeError):
        WpeConfig(delay=0)
    with pytest.raises(WpeError):
        WpeConfig(iterations=0)
    with pytest.raises(WpeError):
        WpeConfig(power_floor=0.0)


def test_bank_validation():
    with pytest.raises(WpeError):
        WpeFilterBank(filters=np.zeros(5), delay=1)
    with pytest.raises(WpeError):
        WpeFilterBank(filters=np.full((2, 3), np.nan), delay=1)
    with pytest.raises(WpeError):
        WpeFilterBank(filters=np.zeros((2, 3)), delay=0)


def test_too_few_frames_raises():
    rng = np.random.default_rng(1)
    spec = make_spec(rng.standard_normal((2, 10)) + 0j)
    with pytest.raises(WpeError):
        estimate_wpe_filter(spec, WpeConfig(taps=8, delay=2))


def test_filter_scale_invariance():
    rng = np.random.default_rng(2)
    y = rng.standard_normal((4, 200)) + 1j * rng.standard_normal((4, 200))
    cfg = WpeConfig(taps=5, delay=2)
    b1 = estimate_wpe_filter(make_spec(y), cfg)
    b2 = estimate_wpe_filter(make_spec(7.5 * y), cfg)
    assert np.allclose(b1.filters, b2.filters, atol=1e-8)


def test_white_noise_gives_small_filters():
    rng = np.random.default_rng(3)
    y = (rng.standard_normal((8, 2000)) + 1j * rng.standard_normal((8, 2000))) / np.sqrt(2)
    bank = estimate_wpe_filter(make_spec(y), WpeConfig(taps=4, delay=2))
    # white frames are unpredictable: coefficients ~ O(1/sqrt(N))
    assert np.max(np.abs(bank.filters)) < 0.12


def test_recovers_echo_direction():
    # y_n = x_n + a x_{n-D}: the estimator should find a filter pointing at
    # lag D with positive real part (magnitude biased low by the |y|^2 weights)
    rng = np.random.default_rng(4)
    n, a, delay = 4000, 0.5, 3
    x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    y = x.copy()
    y[delay:] += a * x[:-delay]
    bank = estimate_wpe_filter(make_spec(y[None, :]), WpeConfig(taps=6, delay=delay))
    g = bank.filters[0]
    assert np.argmax(np.abs(g)) == 0  # tap 0 is lag D
    assert g[0].real > 0.05
    assert np.all(np.abs(g[1:]) < np.abs(g[0]))


def test_dereverb_reduces_prediction_error():
    rng = np.random.default_rng(5)
    n, delay = 3000, 2
    x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    y = x.copy()
    y[delay:] += 0.6 * x[:-delay]
    spec = make_spec(y[None, :])
    cfg = WpeConfig(taps=4, delay=delay)
    bank = estimate_wpe_filter(spec, cfg)
    dry = apply_dereverb_filter(spec, bank).coefficients.T[0]
    # the estimate should be closer to x than the wet input is
    assert np.linalg.norm(dry - x) < np.linalg.norm(y - x)


def test_apply_matches_operator_form():
    rng = np.random.default_rng(6)
    y = rng.standard_normal((2, 64)) + 1j * rng.standard_normal((2, 64))
    spec = make_spec(y)
    bank = estimate_wpe_filter(spec, WpeConfig(taps=3, delay=2))
    dry = apply_dereverb_filter(spec, bank).coefficients.T
    k = 1
    m = 10
    op = build_band_operator(bank.filters[k], bank.delay, m)
    # a window of the newest m frames plus history, newest first
    end = 40
    window = y[k, end - op.width:end][::-1]
    out = apply_operator(op, window)
    assert np.allclose(out, dry[k, end - m:end][::-1], atol=1e-10)


def test_iterations_do_not_increase_cost():
    rng = np.random.default_rng(7)
    n = 1500
    x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    x *= 0.2 + np.abs(np.sin(np.arange(n) / 40.0))  # non-stationary envelope
    y = x.copy()
    y[2:] += 0.5 * x[:-2]
    spec = make_spec(y[None, :])
    costs = []
    for iters in (1, 2, 3):
        cfg = WpeConfig(taps=4, delay=2, iterations=iters)
        bank = estimate_wpe_filter(spec, cfg)
        costs.append(prediction_error_cost(spec, bank, cfg))
    assert costs[1] <= costs[0] + 1e-6
    assert costs[2] <= costs[1] + 1e-6


def test_zero_input_yields_zero_filters():
    spec = make_spec(np.zeros((3, 100), dtype=complex))
    bank = estimate_wpe_filter(spec, WpeConfig(taps=4, delay=2))
    assert np.allclose(bank.filters, 0.0)


def test_band_chunking_is_transparent():
    rng = np.random.default_rng(8)
    y = rng.standard_normal((9, 300) ) + 1j * rng.standard_normal((9, 300))
    spec = make_spec(y)
    cfg = WpeConfig(taps=5, delay=2)
    b1 = estimate_wpe_filter(spec, cfg, band_chunk=2)
    b2 = estimate_wpe_filter(spec, cfg, band_chunk=64)
    assert np.allclose(b1.filters, b2.filters, atol=1e-12)


def test_apply_band_mismatch_raises():
    rng = np.random.default_rng(9)
    spec = make_spec(rng.standard_normal((4, 50)) + 0j)
    bank = WpeFilterBank(filters=np.zeros((3, 2), dtype=complex), delay=1)
    with pytest.raises(WpeError):
        apply_dereverb_filter(spec, bank)
