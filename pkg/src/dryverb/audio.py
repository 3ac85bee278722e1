"""Time-domain <-> STFT conversion, DC handling, and mono WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.io import wavfile


class AudioError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    """A finite mono signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int = 44100

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioError(f"expected mono 1-D samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise AudioError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Complex STFT coefficients, frame-major: coefficients[frame, bin].

    ``n_samples`` is the original clip length so the inverse transform can
    trim the analysis padding exactly.
    """

    coefficients: np.ndarray
    window_size: int
    hop_size: int
    sample_rate: int = 44100
    n_samples: int = 0
    dc_dropped: bool = False

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.complex128)
        if coeffs.ndim != 2 or coeffs.shape[0] < 1:
            raise AudioError(f"expected (frames, bins) with frames >= 1, got {coeffs.shape}")
        expect = self.window_size // 2 + (0 if self.dc_dropped else 1)
        if coeffs.shape[1] != expect:
            raise AudioError(
                f"bin count {coeffs.shape[1]} inconsistent with window {self.window_size} "
                f"(dc_dropped={self.dc_dropped}, expected {expect})"
            )
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def n_frames(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_bins(self) -> int:
        return self.coefficients.shape[1]


def hann_window(size: int) -> np.ndarray:
    # periodic Hann; satisfies COLA for hop = size/4 used throughout
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


def stft(clip: AudioClip, window_size: int = 1024, hop_size: int = 256) -> ComplexSpectrogram:
    """Hann-windowed STFT. The clip is zero-padded by one window on both ends
    so every sample is fully covered; :func:`istft` trims the padding."""
    if window_size <= 0 or hop_size <= 0:
        raise AudioError("window_size and hop_size must be positive")
    x = clip.samples
    if len(x) < window_size:
        raise AudioError(f"clip too short: {len(x)} samples < window {window_size}")

    pad = window_size
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    n_frames = (len(xp) - window_size) // hop_size + 1
    win = hann_window(window_size)

    idx = np.arange(window_size)[None, :] + hop_size * np.arange(n_frames)[:, None]
    frames = xp[idx] * win[None, :]
    coeffs = np.fft.rfft(frames, axis=1)
    return ComplexSpectrogram(
        coefficients=coeffs,
        window_size=window_size,
        hop_size=hop_size,
        sample_rate=clip.sample_rate,
        n_samples=len(x),
    )


def istft(spec: ComplexSpectrogram) -> AudioClip:
    """Overlap-add inverse with squared-window normalization."""
    if spec.dc_dropped:
        raise AudioError("cannot invert a spectrogram with the DC bin dropped")
    w, h = spec.window_size, spec.hop_size
    win = hann_window(w)
    frames = np.fft.irfft(spec.coefficients, n=w, axis=1)

    n_out = (spec.n_frames - 1) * h + w
    acc = np.zeros(n_out)
    norm = np.zeros(n_out)
    wsq = win * win
    for i in range(spec.n_frames):
        acc[i * h:i * h + w] += frames[i] * win
        norm[i * h:i * h + w] += wsq

    pad = w
    n = spec.n_samples if spec.n_samples > 0 else n_out - 2 * pad
    interior = norm[pad:pad + n]
    if interior.min() < 1e-8:
        raise AudioError(
            f"window/hop pair ({w}, {h}) does not satisfy COLA over the signal region"
        )
    out = acc[pad:pad + n] / interior
    return AudioClip(samples=out, sample_rate=spec.sample_rate)


def dc_component(spec: ComplexSpectrogram) -> np.ndarray:
    """The k=0 column, one value per frame."""
    if spec.dc_dropped:
        raise AudioError("DC bin already dropped")
    return spec.coefficients[:, 0].copy()


def drop_dc(spec: ComplexSpectrogram) -> ComplexSpectrogram:
    if spec.dc_dropped:
        raise AudioError("DC bin already dropped")
    return replace(spec, coefficients=spec.coefficients[:, 1:], dc_dropped=True)


def restore_dc(spec: ComplexSpectrogram, dc_row: np.ndarray) -> ComplexSpectrogram:
    if not spec.dc_dropped:
        raise AudioError("spectrogram does not have its DC bin dropped")
    dc_row = np.asarray(dc_row, dtype=np.complex128)
    if dc_row.shape != (spec.n_frames,):
        raise AudioError(
            f"dc_row has {dc_row.shape} entries, expected ({spec.n_frames},)"
        )
    coeffs = np.concatenate([dc_row[:, None], spec.coefficients], axis=1)
    return replace(spec, coefficients=coeffs, dc_dropped=False)


def read_wav(path) -> AudioClip:
    """Read a mono PCM16 or float32 WAV. Stereo input is rejected."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise AudioError(
            f"{path}: expected mono audio, got {data.shape[1]} channels"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"{path}: unsupported sample format {data.dtype}")
    return AudioClip(samples=samples, sample_rate=int(rate))


def write_wav(path, clip: AudioClip, fmt: str = "float32") -> None:
    if fmt == "float32":
        wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))
    elif fmt == "pcm16":
        scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767)
        wavfile.write(path, clip.sample_rate, scaled.astype(np.int16))
    else:
        raise AudioError(f"unsupported WAV format {fmt!r}")
