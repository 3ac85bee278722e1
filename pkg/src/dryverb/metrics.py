"""Spectrogram distance metrics and the oracle operator estimate."""

from __future__ import annotations

import warnings

import numpy as np

from .audio import ComplexSpectrogram
from .ddrm import degradation_from_matrix


class MetricError(ValueError):
    pass


def _mags(a: ComplexSpectrogram, b: ComplexSpectrogram):
    if a.coefficients.shape != b.coefficients.shape:
        raise MetricError(
            f"shape mismatch: {a.coefficients.shape} vs {b.coefficients.shape}"
        )
    return np.abs(a.coefficients), np.abs(b.coefficients)


def l1_spec_loss(a: ComplexSpectrogram, b: ComplexSpectrogram) -> float:
    """Mean absolute difference of STFT magnitudes."""
    ma, mb = _mags(a, b)
    return float(np.mean(np.abs(ma - mb)))


def log_spectral_distance(a: ComplexSpectrogram, b: ComplexSpectrogram,
                          floor: float = 1e-8) -> float:
    """RMS difference of dB magnitudes (substitute for embedding-based
    audio distances)."""
    ma, mb = _mags(a, b)
    da = 20.0 * np.log10(np.maximum(ma, floor))
    db = 20.0 * np.log10(np.maximum(mb, floor))
    return float(np.sqrt(np.mean((da - db) ** 2)))


def estimate_oracle_operator(wet: ComplexSpectrogram, dry: ComplexSpectrogram,
                             taps: int = 64, loading: float = 1e-8) -> np.ndarray:
    """Per-band least-squares fit of a causal frame-domain filter h mapping
    dry to wet: wet_n ~ sum_j h_j dry_{n-j}.  Returns (bands, taps)."""
    if wet.coefficients.shape != dry.coefficients.shape:
        raise MetricError("wet and dry spectrograms must be aligned")
    y = np.ascontiguousarray(wet.coefficients.T)   # (K, N)
    x = np.ascontiguousarray(dry.coefficients.T)
    k_bands, n = x.shape
    tap_mat = np.zeros((k_bands, n, taps), dtype=np.complex128)
    for j in range(min(taps, n)):
        tap_mat[:, j:, j] = x[:, :n - j]
    gram = np.matmul(tap_mat.conj().transpose(0, 2, 1), tap_mat)
    rhs = np.einsum("knj,kn->kj", tap_mat.conj(), y)
    trace = np.einsum("kjj->k", gram).real
    load = np.maximum(loading * trace / taps, 1e-300)
    gram = gram + load[:, None, None] * np.eye(taps)
    try:
        h = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        warnings.warn("oracle normal equations singular; using least-squares fallback",
                      RuntimeWarning, stacklevel=2)
        h = np.stack([np.linalg.lstsq(gram[k], rhs[k], rcond=None)[0]
                      for k in range(k_bands)])
    return h


def oracle_fit_residual(wet: ComplexSpectrogram, dry: ComplexSpectrogram,
                        h: np.ndarray) -> float:
    """Relative residual ||y - H x|| / ||y|| of an oracle fit."""
    y = wet.coefficients.T
    x = dry.coefficients.T
    taps = h.shape[1]
    pred = np.zeros_like(y)
    n = x.shape[1]
    for j in range(min(taps, n)):
        pred[:, j:] += h[:, j:j + 1] * x[:, :n - j]
    return float(np.linalg.norm(y - pred) / (np.linalg.norm(y) + 1e-300))


def wpe_fit_residual(wet: ComplexSpectrogram, dry_est: ComplexSpectrogram) -> float:
    """Residual of the degradation implied by a dereverbed estimate: how far
    the wet signal is from any linear reconstruction y = H x with the same
    tap budget (uses a 1-tap refit for comparability)."""
    return oracle_fit_residual(wet, dry_est, estimate_oracle_operator(wet, dry_est, taps=1))


def oracle_toeplitz(h_band: np.ndarray, m: int) -> np.ndarray:
    """Dense forward matrix for one band's oracle filter: maps a dry window
    of m + taps - 1 frames (newest first) to m wet frames."""
    taps = len(h_band)
    q = m + taps - 1
    mat = np.zeros((m, q), dtype=np.complex128)
    for j in range(taps):
        mat[np.arange(m), np.arange(m) + j] = h_band[j]
    return mat


def oracle_degradations(h: np.ndarray, m: int):
    """Generator of DegradationSvd per band for the dry-to-wet oracle filter."""
    for k in range(h.shape[0]):
        yield degradation_from_matrix(oracle_toeplitz(h[k], m), m)
