"""Noise schedule and pluggable spectrogram denoisers.

A denoiser maps a noisy complex spectrogram at noise level sigma to a dry
estimate.  Reference implementations: an oracle that returns a stored dry
spectrogram (ceiling experiments) and an analytic Gaussian shrinkage prior
fitted from a dry-signal corpus.  A trained network denoiser can be plugged
in through the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise levels sigma[t] for t = 0..steps, strictly increasing with t
    (the sampler walks t = steps -> 0)."""

    sigmas: np.ndarray
    steps: int

    def __post_init__(self):
        sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if sigmas.shape != (self.steps + 1,):
            raise PriorError(f"expected {self.steps + 1} sigmas, got {sigmas.shape}")
        if sigmas[0] < 0 or np.any(np.diff(sigmas) <= 0):
            raise PriorError("sigmas must satisfy 0 <= sigma_0 < sigma_1 < ... < sigma_T")
        object.__setattr__(self, "sigmas", sigmas)


def cosine_schedule(steps: int = 20, sigma_max: float = 100.0,
                    offset: float = 0.008) -> NoiseSchedule:
    """Variance-exploding noise levels derived from the cosine alpha-bar
    profile: sigma_t = sqrt((1 - abar_t) / abar_t), capped at sigma_max."""
    if steps < 1:
        raise PriorError("steps must be >= 1")
    t = np.arange(steps + 1, dtype=np.float64)
    f = np.cos(((t / steps + offset) / (1.0 + offset)) * np.pi / 2.0) ** 2
    abar = np.clip(f / f[0], 1e-30, 1.0)
    sigmas = np.sqrt((1.0 - abar) / abar)
    sigmas = np.minimum(sigmas, sigma_max)
    # the cap can flatten the top of the profile; restore strict monotonicity
    for i in range(steps - 1, -1, -1):
        if sigmas[i] >= sigmas[i + 1]:
            sigmas[i] = sigmas[i + 1] * 0.99
    return NoiseSchedule(sigmas=sigmas, steps=steps)


class DenoiserPrior:
    """Interface: denoise(x, sigma) -> dry estimate of the same shape.
    Implementations must be deterministic given (x, sigma)."""

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        raise NotImplementedError


class OraclePrior(DenoiserPrior):
    """Returns a stored dry spectrogram regardless of input; the ceiling
    reference for sampler experiments."""

    def __init__(self, dry: np.ndarray):
        self.dry = np.asarray(dry, dtype=np.complex128)

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        if x.shape != self.dry.shape:
            raise PriorError(f"shape mismatch: input {x.shape}, oracle {self.dry.shape}")
        return self.dry.copy()


class GaussianShrinkagePrior(DenoiserPrior):
    """Exact posterior-mean denoiser for a circular complex Gaussian prior
    with mean ``mu`` and variance ``var`` per bin (or per band, broadcast
    over frames), under circular complex Gaussian noise of variance sigma^2:

        denoise(x, sigma) = x * v/(v + sigma^2) + mu * sigma^2/(v + sigma^2)
    """

    def __init__(self, mu: np.ndarray, var: np.ndarray):
        self.mu = np.asarray(mu, dtype=np.complex128)
        self.var = np.asarray(var, dtype=np.float64)
        if self.mu.shape != self.var.shape:
            raise PriorError("mu and var must have matching shapes")
        if np.any(self.var < 0):
            raise PriorError("variances must be nonnegative")

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        try:
            v = np.broadcast_to(self.var, x.shape)
            mu = np.broadcast_to(self.mu, x.shape)
        except ValueError as exc:
            raise PriorError(
                f"prior stats {self.var.shape} do not broadcast to input {x.shape}"
            ) from exc
        s2 = float(sigma) ** 2
        denom = v + s2
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(denom > 0, v / np.where(denom > 0, denom, 1.0), 1.0)
        return x * w + mu * (1.0 - w)

    @classmethod
    def fit(cls, specs, mode: str = "per_band") -> "GaussianShrinkagePrior":
        """Fit mean/variance from dry spectrogram coefficient arrays.

        per_band pools statistics over frames (and clips); per_bin keeps a
        full (frames, bands) map and requires equal shapes.
        """
        arrays = [np.asarray(getattr(s, "coefficients", s), dtype=np.complex128)
                  for s in specs]
        if not arrays:
            raise PriorError("need at least one dry spectrogram to fit")
        if mode == "per_band":
            stacked = np.concatenate(arrays, axis=0)  # (total frames, bands)
            mu = stacked.mean(axis=0)
            var = np.mean(np.abs(stacked - mu) ** 2, axis=0)
        elif mode == "per_bin":
            shapes = {a.shape for a in arrays}
            if len(shapes) != 1:
                raise PriorError("per_bin fitting requires equally shaped spectrograms")
            stacked = np.stack(arrays, axis=0)
            mu = stacked.mean(axis=0)
            var = np.mean(np.abs(stacked - mu) ** 2, axis=0)
        else:
            raise PriorError(f"unknown fitting mode {mode!r}")
        return cls(mu=mu, var=np.maximum(var, 0.0))

    _STATS_VERSION = 1

    def save_stats(self, path, **metadata) -> None:
        np.savez(
            path,
            version=np.array(self._STATS_VERSION),
            mu=self.mu,
            var=self.var,
            metadata=np.array(repr(metadata)),
        )

    @classmethod
    def load_stats(cls, path) -> "GaussianShrinkagePrior":
        with np.load(path) as data:
            version = int(data["version"])
            if version != cls._STATS_VERSION:
                raise PriorError(f"unsupported prior stats version {version}")
            return cls(mu=data["mu"], var=data["var"])
