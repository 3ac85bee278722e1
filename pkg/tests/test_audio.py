"""Tests for STFT/iSTFT, DC handling, and WAV I/O."""

import numpy as np
import pytest

from dryverb.audio import (
    AudioClip,
    AudioError,
    ComplexSpectrogram,
    dc_component,
    drop_dc,
    hann_window,
    istft,
    read_wav,
    restore_dc,
    stft,
    write_wav,
)


def test_hann_window_is_periodic():
    win = hann_window(8)
    assert win[0] == 0.0
    # periodic Hann: w[k] = w[N-k], no endpoint duplication
    assert np.allclose(win[1:], win[:0:-1])


def test_hann_cola_at_quarter_hop():
    w = hann_window(1024) ** 2
    acc = np.zeros(4096)
    for i in range(0, 4096 - 1024 + 1, 256):
        acc[i:i + 1024] += w
    interior = acc[1024:-1024]
    assert np.max(np.abs(interior - interior[0])) < 1e-12


def test_stft_zero_clip_gives_zero_spectrogram():
    clip = AudioClip(np.zeros(4096))
    spec = stft(clip, 1024, 256)
    assert np.all(spec.coefficients == 0)


def test_stft_shapes():
    clip = AudioClip(np.ones(4096))
    spec = stft(clip, 1024, 256)
    assert spec.n_bins == 513
    assert spec.n_samples == 4096
    assert spec.window_size == 1024
    assert spec.hop_size == 256


def test_round_trip_white_noise():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(8192)
    clip = AudioClip(x)
    back = istft(stft(clip, 1024, 256))
    assert len(back) == len(clip)
    rel = np.linalg.norm(back.samples - x) / np.linalg.norm(x)
    assert rel < 1e-6


@pytest.mark.parametrize("window,hop,n", [(256, 64, 2048), (512, 128, 5000), (1024, 256, 9001)])
def test_round_trip_random_sizes(window, hop, n):
    rng = np.random.default_rng(window + n)
    x = rng.standard_normal(n)
    back = istft(stft(AudioClip(x), window, hop))
    assert np.linalg.norm(back.samples - x) / np.linalg.norm(x) < 1e-6


def test_linearity_of_stft():
    rng = np.random.default_rng(3)
    a = rng.standard_normal(4096)
    b = rng.standard_normal(4096)
    sa = stft(AudioClip(a), 512, 128).coefficients
    sb = stft(AudioClip(b), 512, 128).coefficients
    sab = stft(AudioClip(2.0 * a - 3.0 * b), 512, 128).coefficients
    assert np.allclose(sab, 2.0 * sa - 3.0 * sb, atol=1e-10)


def test_clip_too_short_raises():
    with pytest.raises(AudioError):
        stft(AudioClip(np.zeros(100)), 1024, 256)


def test_bad_window_hop_raises():
    with pytest.raises(AudioError):
        stft(AudioClip(np.zeros(4096)), 0, 256)
    with pytest.raises(AudioError):
        stft(AudioClip(np.zeros(4096)), 1024, -1)


def test_non_finite_samples_rejected():
    x = np.zeros(2048)
    x[5] = np.nan
    with pytest.raises(AudioError):
        AudioClip(x)


def test_stereo_like_shape_rejected():
    with pytest.raises(AudioError):
        AudioClip(np.zeros((100, 2)))


def test_dc_drop_restore_identity():
    rng = np.random.default_rng(11)
    clip = AudioClip(rng.standard_normal(4096))
    spec = stft(clip, 1024, 256)
    dc = dc_component(spec)
    rebuilt = restore_dc(drop_dc(spec), dc)
    assert np.array_equal(rebuilt.coefficients, spec.coefficients)
    assert not rebuilt.dc_dropped


def test_dropped_spectrogram_has_correct_bins():
    spec = stft(AudioClip(np.zeros(4096)), 1024, 256)
    nodc = drop_dc(spec)
    assert nodc.n_bins == 512
    assert nodc.dc_dropped
    with pytest.raises(AudioError):
        drop_dc(nodc)
    with pytest.raises(AudioError):
        istft(nodc)


def test_restore_dc_shape_check():
    spec = drop_dc(stft(AudioClip(np.zeros(4096)), 1024, 256))
    with pytest.raises(AudioError):
        restore_dc(spec, np.zeros(3))


def test_spectrogram_bin_invariant():
    with pytest.raises(AudioError):
        ComplexSpectrogram(np.zeros((4, 100), dtype=complex), window_size=1024, hop_size=256)


def test_wav_round_trip_float32(tmp_path):
    rng = np.random.default_rng(5)
    clip = AudioClip(rng.uniform(-0.5, 0.5, 2000), sample_rate=22050)
    path = tmp_path / "x.wav"
    write_wav(path, clip, fmt="float32")
    back = read_wav(path)
    assert back.sample_rate == 22050
    assert np.allclose(back.samples, clip.samples, atol=1e-6)


def test_wav_round_trip_pcm16(tmp_path):
    rng = np.random.default_rng(6)
    clip = AudioClip(rng.uniform(-0.9, 0.9, 1500))
    path = tmp_path / "y.wav"
    write_wav(path, clip, fmt="pcm16")
    back = read_wav(path)
    assert np.max(np.abs(back.samples - clip.samples)) < 1.0 / 32000


def test_write_wav_bad_format(tmp_path):
    with pytest.raises(AudioError):
        write_wav(tmp_path / "z.wav", AudioClip(np.zeros(10)), fmt="mp3")
