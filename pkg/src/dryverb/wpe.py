"""Weighted prediction error: per-band dereverberation filter estimation.

Each band k is handled independently.  One iteration sets the power weights
from the current dry estimate, solves the weighted normal equations for the
prediction filter, and updates the dry estimate by subtracting the predicted
late reverb.  History before frame 0 is zero-padded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import ComplexSpectrogram


class WpeError(ValueError):
    pass


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 150
    delay: int = 8
    iterations: int = 1
    power_floor: float = 1e-10   # relative to mean band power
    diagonal_loading: float = 1e-8  # relative to trace/dim of the normal matrix

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1:
            raise WpeError("taps and delay must be >= 1")
        if self.iterations < 1:
            raise WpeError("iterations must be >= 1")
        if self.power_floor <= 0:
            raise WpeError("power_floor must be positive")


@dataclass(frozen=True)
class WpeFilterBank:
    """Per-band complex filters, shape (bands, taps), plus the frame delay."""

    filters: np.ndarray
    delay: int

    def __post_init__(self):
        filters = np.asarray(self.filters, dtype=np.complex128)
        if filters.ndim != 2 or filters.shape[1] < 1:
            raise WpeError(f"filters must be (bands, taps), got {filters.shape}")
        if not np.all(np.isfinite(filters)):
            raise WpeError("filter bank has non-finite entries")
        if self.delay < 1:
            raise WpeError("delay must be >= 1")
        object.__setattr__(self, "filters", filters)

    @property
    def bands(self) -> int:
        return self.filters.shape[0]

    @property
    def taps(self) -> int:
        return self.filters.shape[1]


def delayed_frames(y: np.ndarray, taps: int, delay: int) -> np.ndarray:
    """Stack of delayed frames: out[..., n, l] = y[..., n - delay - l] with
    zero history, for l = 0..taps-1 (tap l predicts from lag delay + l)."""
    n = y.shape[-1]
    padded = np.concatenate(
        [np.zeros(y.shape[:-1] + (delay + taps - 1,), dtype=y.dtype), y], axis=-1
    )
    # lag delay+l  <->  padded index n - 1 - l  relative to the window end
    windows = np.lib.stride_tricks.sliding_window_view(padded, taps, axis=-1)
    return windows[..., :n, ::-1]


def estimate_wpe_filter(wet: ComplexSpectrogram, cfg: WpeConfig,
                        band_chunk: int = 32) -> WpeFilterBank:
    y_all = wet.coefficients.T  # (bands, frames)
    n_bands, n_frames = y_all.shape
    if n_frames <= cfg.taps + cfg.delay:
        raise WpeError(
            f"need more than taps+delay={cfg.taps + cfg.delay} frames, got {n_frames}"
        )

    filters = np.empty((n_bands, cfg.taps), dtype=np.complex128)
    eye = np.eye(cfg.taps)
    for start in range(0, n_bands, band_chunk):
        y = y_all[start:start + band_chunk]           # (B, N)
        tap_mat = delayed_frames(y, cfg.taps, cfg.delay)  # (B, N, L)
        floor = np.maximum(
            cfg.power_floor * np.mean(np.abs(y) ** 2, axis=-1, keepdims=True),
            1e-300,
        )
        dry = y
        for _ in range(cfg.iterations):
            lam = np.maximum(np.abs(dry) ** 2, floor)  # (B, N)
            weighted = tap_mat / lam[..., None]
            a = np.matmul(tap_mat.transpose(0, 2, 1), weighted.conj())
            b = np.einsum("bnl,bn->bl", weighted, y.conj())
            trace = np.einsum("bll->b", a).real
            load = np.maximum(cfg.diagonal_loading * trace / cfg.taps, 1e-30)
            a = a + load[:, None, None] * eye
            try:
                g = np.linalg.solve(a, b[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise WpeError(
                    f"singular normal equations in bands "
                    f"[{start}, {start + len(y)}) despite diagonal loading"
                ) from exc
            dry = y - np.einsum("bnl,bl->bn", tap_mat, g.conj())
        filters[start:start + len(y)] = g
    return WpeFilterBank(filters=filters, delay=cfg.delay)


def apply_dereverb_filter(wet: ComplexSpectrogram, bank: WpeFilterBank) -> ComplexSpectrogram:
    """Subtract the filter-predicted reverb from every frame (zero history
    before frame 0)."""
    y = wet.coefficients.T
    if y.shape[0] != bank.bands:
        raise WpeError(f"band mismatch: spectrogram {y.shape[0]}, bank {bank.bands}")
    tap_mat = delayed_frames(y, bank.taps, bank.delay)
    dry = y - np.einsum("bnl,bl->bn", tap_mat, bank.filters.conj())
    from dataclasses import replace
    return replace(wet, coefficients=dry.T)


def prediction_error_cost(wet: ComplexSpectrogram, bank: WpeFilterBank,
                          cfg: WpeConfig) -> float:
    """The weighted prediction-error objective at the bank's filters, with
    weights from the resulting dry estimate (used by monotonicity checks)."""
    y = wet.coefficients.T
    tap_mat = delayed_frames(y, bank.taps, bank.delay)
    dry = y - np.einsum("bnl,bl->bn", tap_mat, bank.filters.conj())
    floor = np.maximum(
        cfg.power_floor * np.mean(np.abs(y) ** 2, axis=-1, keepdims=True),
        1e-300,
    )
    lam = np.maximum(np.abs(dry) ** 2, floor)
    return float(np.sum(np.abs(dry) ** 2 / lam + np.log(lam)))
