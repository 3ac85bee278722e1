"""Per-band linear dereverberation operators and their SVD factorizations.

The operator for one frequency band maps a window of wet frames to the
dereverbed frames.  Vectors are laid out newest-frame-first: index 0 of an
input window is the most recent wet frame, so row i of the dense matrix has
a 1 at column i and -conj(g[l-1]) at column i + D + l - 1 for l = 1..L.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LinopError(ValueError):
    pass


@dataclass(frozen=True)
class BandOperator:
    """The m x (m + D + L - 1) banded matrix for one band's filter g."""

    g: np.ndarray
    delay: int
    frames: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.complex128)
        if g.ndim != 1 or len(g) < 1:
            raise LinopError("filter g must be a non-empty vector")
        if not np.all(np.isfinite(g)):
            raise LinopError("filter g has non-finite entries")
        if self.delay < 1 or self.frames < 1:
            raise LinopError("delay and frames must be >= 1")
        object.__setattr__(self, "g", g)

    @property
    def taps(self) -> int:
        return len(self.g)

    @property
    def width(self) -> int:
        return self.frames + self.delay + self.taps - 1

    def to_dense(self) -> np.ndarray:
        m, d, L = self.frames, self.delay, self.taps
        dense = np.zeros((m, self.width), dtype=np.complex128)
        dense[np.arange(m), np.arange(m)] = 1.0
        gc = -np.conj(self.g)
        for l in range(L):
            cols = np.arange(m) + d + l
            dense[np.arange(m), cols] = gc[l]
        return dense


def build_band_operator(g, delay: int, frames: int) -> BandOperator:
    return BandOperator(g=np.asarray(g), delay=delay, frames=frames)


def apply_operator(op: BandOperator, y: np.ndarray) -> np.ndarray:
    """Banded matrix-vector (or matrix-matrix) product without materializing
    the dense operator.  ``y`` is a window of length op.width, newest first;
    a 2-D input is treated as a stack of such windows in its columns."""
    y = np.asarray(y, dtype=np.complex128)
    single = y.ndim == 1
    if single:
        y = y[:, None]
    if y.shape[0] != op.width:
        raise LinopError(f"window length {y.shape[0]} != operator width {op.width}")
    m, d, L = op.frames, op.delay, op.taps
    windows = np.lib.stride_tricks.sliding_window_view(y[d:d + m + L - 1], L, axis=0)
    out = y[:m] - np.einsum("ilb,l->ib", windows.transpose(0, 2, 1), np.conj(op.g))
    return out[:, 0] if single else out


@dataclass(frozen=True)
class BandSvd:
    """Thin SVD of a band operator: U (m x m), singular values descending,
    Vh (m x width) with orthonormal rows.  ``vh_null`` optionally carries the
    remaining rows completing Vh to a unitary basis of the input space."""

    U: np.ndarray
    singular_values: np.ndarray
    Vh: np.ndarray
    vh_null: np.ndarray | None = field(default=None, compare=False)

    @property
    def shape(self):
        return (self.U.shape[0], self.Vh.shape[1])

    def to_dense(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.Vh


def svd_band(op: BandOperator, band_index: int | None = None,
             with_null: bool = False) -> BandSvd:
    dense = op.to_dense()
    return svd_matrix(dense, band_index=band_index, with_null=with_null)


def svd_matrix(dense: np.ndarray, band_index: int | None = None,
               with_null: bool = False) -> BandSvd:
    try:
        u, s, vh = np.linalg.svd(dense, full_matrices=with_null)
    except np.linalg.LinAlgError as exc:
        where = "" if band_index is None else f" (band {band_index})"
        raise LinopError(f"SVD failed to converge{where}: {exc}") from exc
    m = dense.shape[0]
    if with_null:
        return BandSvd(U=u, singular_values=s, Vh=vh[:m], vh_null=vh[m:])
    return BandSvd(U=u, singular_values=s, Vh=vh)


def pseudo_inverse_svd(svd: BandSvd, rel_threshold: float = 1e-10) -> BandSvd:
    """SVD of the Moore-Penrose pseudo-inverse by swapping factors and
    reciprocating singular values above ``rel_threshold * s_max``."""
    s = svd.singular_values
    tau = rel_threshold * (s.max() if len(s) else 0.0)
    keep = s > tau
    s_inv = 1.0 / s[keep]
    # reciprocation reverses the ordering; re-sort descending
    order = np.argsort(s_inv)[::-1]
    u_new = svd.Vh.conj().T[:, keep][:, order]
    vh_new = svd.U.conj().T[keep][order]
    return BandSvd(U=u_new, singular_values=s_inv[order], Vh=vh_new)


def pinv_matrix(svd: BandSvd, rel_threshold: float = 1e-10) -> np.ndarray:
    p = pseudo_inverse_svd(svd, rel_threshold)
    return (p.U * p.singular_values) @ p.Vh


_DUMP_VERSION = 1


def save_band_svds(path, svds: list[BandSvd]) -> None:
    """Binary cache of per-band factorizations (versioned)."""
    payload = {"version": np.array(_DUMP_VERSION), "count": np.array(len(svds))}
    for i, f in enumerate(svds):
        payload[f"u{i}"] = f.U
        payload[f"s{i}"] = f.singular_values
        payload[f"vh{i}"] = f.Vh
    np.savez(path, **payload)


def load_band_svds(path) -> list[BandSvd]:
    with np.load(path) as data:
        version = int(data["version"])
        if version != _DUMP_VERSION:
            raise LinopError(f"unsupported factorization dump version {version}")
        count = int(data["count"])
        return [
            BandSvd(U=data[f"u{i}"], singular_values=data[f"s{i}"], Vh=data[f"vh{i}"])
            for i in range(count)
        ]
