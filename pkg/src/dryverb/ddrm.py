"""Spectral-space diffusion posterior sampling for banded linear operators.

The degradation acting on each band's dry block is the pseudo-inverse of the
dereverberation operator (wet = pinv(I~ - G) @ dry + noise), so the sampler
consumes the dereverberation operator's SVD directly: if I~ - G = U S Vh,
the degradation has singular values 1/s_i, observation transform
ybar_i = s_i * (v_i^H y_window), and prior basis U.  Coordinates with zero
degradation singular value never read the observation.

All state vectors are newest-frame-first, matching the linop module.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .audio import ComplexSpectrogram
from .linop import BandSvd
from .prior import DenoiserPrior, NoiseSchedule


class DdrmError(ValueError):
    pass


@dataclass(frozen=True)
class DdrmParams:
    eta: float = 0.7
    eta_b: float = 0.2
    sigma_y: float = 1e-6
    steps: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise DdrmError(f"eta must be in (0, 1], got {self.eta}")
        if not (0.0 <= self.eta_b <= 1.0):
            raise DdrmError(f"eta_b must be in [0, 1], got {self.eta_b}")
        if self.sigma_y < 0:
            raise DdrmError(f"sigma_y must be >= 0, got {self.sigma_y}")
        if self.steps < 1:
            raise DdrmError("steps must be >= 1")


@dataclass(frozen=True)
class DegradationSvd:
    """One band's degradation in diagonalized form.

    sv: (q,) degradation singular values (zeros mark nullspace coordinates);
    obs_map: (q, p) maps an observation window to ybar (rows with sv == 0
    are zero); basis: (q, q) unitary, signal-space block = basis @ xbar.
    ``m`` of the q prior coordinates are the block's own frames; the rest is
    left context.
    """

    m: int
    sv: np.ndarray
    obs_map: np.ndarray
    basis: np.ndarray
    obs_width: int

    @property
    def q(self) -> int:
        return self.basis.shape[0]

    @property
    def ctx_obs(self) -> int:
        return self.obs_width - self.m

    @property
    def ctx_prior(self) -> int:
        return self.q - self.m


def degradation_from_band_svd(svd: BandSvd, rel_threshold: float = 1e-10) -> DegradationSvd:
    """Degradation pinv(A) from the SVD of the dereverberation operator A."""
    s = svd.singular_values
    m = svd.U.shape[0]
    width = svd.Vh.shape[1]
    tau = rel_threshold * (s.max() if len(s) else 0.0)
    keep = s > tau
    sv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    obs_map = np.where(keep, s, 0.0)[:, None] * svd.Vh
    return DegradationSvd(m=m, sv=sv, obs_map=obs_map, basis=svd.U, obs_width=width)


def degradation_from_matrix(h: np.ndarray, m: int,
                            rel_threshold: float = 1e-10) -> DegradationSvd:
    """Degradation from a dense forward matrix h (obs_width x q) mapping a
    dry window of q frames to an observed block of obs_width frames."""
    h = np.asarray(h, dtype=np.complex128)
    p, q = h.shape
    u, s, vh = np.linalg.svd(h, full_matrices=True)
    tau = rel_threshold * (s.max() if len(s) else 0.0)
    r = len(s)
    sv = np.zeros(q)
    obs_map = np.zeros((q, p), dtype=np.complex128)
    for i in range(r):
        if s[i] > tau:
            sv[i] = s[i]
            obs_map[i] = u[:, i].conj() / s[i]
    return DegradationSvd(m=m, sv=sv, obs_map=obs_map, basis=vh.conj().T, obs_width=p)


@dataclass
class SpectralState:
    """Sampler state: per-band prior-space coefficients and transformed
    observations, all shaped (bands, q, blocks)."""

    xbar: np.ndarray
    ybar: np.ndarray
    sv: np.ndarray  # (bands, q)
    t: int


def to_spectral(y_block: np.ndarray, deg: DegradationSvd) -> np.ndarray:
    y_block = np.asarray(y_block, dtype=np.complex128)
    if y_block.shape[0] != deg.obs_width:
        raise DdrmError(
            f"observation length {y_block.shape[0]} != degradation width {deg.obs_width}"
        )
    return deg.obs_map @ y_block


def from_spectral(xbar: np.ndarray, deg: DegradationSvd) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=np.complex128)
    if xbar.shape[0] != deg.q:
        raise DdrmError(f"state length {xbar.shape[0]} != prior dimension {deg.q}")
    return deg.basis @ xbar


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex standard normal (unit total variance)."""
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def _checked_sqrt(val, what: str):
    if np.any(val < -1e-12):
        raise DdrmError(f"negative variance under square root in {what}; "
                        "schedule and sigma_y are inconsistent")
    return np.sqrt(np.maximum(val, 0.0))


def init_state(ybar: np.ndarray, sv: np.ndarray, schedule: NoiseSchedule,
               params: DdrmParams, eps: np.ndarray) -> np.ndarray:
    """x_T initialization: observation plus complementary noise where the
    coordinate is observed, pure noise elsewhere."""
    sigma_t = schedule.sigmas[schedule.steps]
    svb = sv[..., None]
    pos = svb > 0
    noise_obs = np.where(pos, params.sigma_y / np.where(pos, svb, 1.0), 0.0)
    amp = _checked_sqrt(sigma_t ** 2 - noise_obs ** 2, "initialization")
    return np.where(pos, ybar + amp * eps, sigma_t * eps)


def spectral_update_step(state: SpectralState, xbar_theta: np.ndarray,
                         params: DdrmParams, schedule: NoiseSchedule,
                         eps: np.ndarray) -> SpectralState:
    """One reverse step t+1 -> t, with x̄_theta the prior estimate already
    projected into the spectral basis and eps pre-drawn unit complex noise."""
    t = state.t - 1
    if t < 0:
        raise DdrmError("sampler already at t = 0")
    sigma_t = schedule.sigmas[t]
    sigma_t1 = schedule.sigmas[t + 1]
    svb = state.sv[..., None]
    pos = svb > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        noise_obs = np.where(pos, params.sigma_y / np.where(pos, svb, 1.0), np.inf)

    eta, eta_b = params.eta, params.eta_b
    root = np.sqrt(1.0 - eta ** 2)

    # sv == 0: ancestral step around the prior estimate
    upd_null = (xbar_theta
                + root * sigma_t * (state.xbar - xbar_theta) / sigma_t1
                + eta * sigma_t * eps)
    # sv > 0, sigma_t < sigma_y/sv: pull toward the (noisier) observation
    safe_noise = np.where(pos & np.isfinite(noise_obs) & (noise_obs > 0), noise_obs, 1.0)
    upd_under = (xbar_theta
                 + root * sigma_t * (state.ybar - xbar_theta) / safe_noise
                 + eta * sigma_t * eps)
    # sv > 0, sigma_t >= sigma_y/sv: mix the observation in directly
    amp = _checked_sqrt(
        np.where(pos & (sigma_t >= noise_obs),
                 sigma_t ** 2 - np.where(pos, noise_obs, 0.0) ** 2 * eta_b ** 2,
                 0.0),
        "data-consistent branch",
    )
    upd_over = (1.0 - eta_b) * xbar_theta + eta_b * state.ybar + amp * eps

    xbar = np.where(pos, np.where(sigma_t < noise_obs, upd_under, upd_over), upd_null)
    return replace(state, xbar=xbar, t=t)


def _windows(bands: np.ndarray, m: int, ctx: int) -> np.ndarray:
    """Cut (bands, frames) into per-block windows (bands, ctx + m, blocks),
    newest frame first, zero-padding the first block's left context."""
    k, n = bands.shape
    if n % m != 0:
        raise DdrmError(f"frame count {n} not a multiple of block size {m}")
    padded = np.concatenate([np.zeros((k, ctx), dtype=bands.dtype), bands], axis=1)
    blocks = n // m
    out = np.empty((k, ctx + m, blocks), dtype=bands.dtype)
    for b in range(blocks):
        out[:, :, b] = padded[:, b * m:b * m + ctx + m][:, ::-1]
    return out


def assemble_own(x_blocks: np.ndarray, m: int) -> np.ndarray:
    """Own-frame reassembly: (bands, q, blocks) -> (frames, bands)."""
    own = x_blocks[:, m - 1::-1, :]          # (bands, m, blocks), ascending time
    return own.transpose(2, 1, 0).reshape(-1, own.shape[0])


def ddrm_sample_bands(coeffs: np.ndarray, degradations, prior: DenoiserPrior,
                      schedule: NoiseSchedule, params: DdrmParams) -> np.ndarray:
    """Core sampler on a (frames, bands) coefficient array.  ``degradations``
    yields one DegradationSvd per band (consumed once; a generator keeps peak
    memory down).  Returns the dry estimate, same shape."""
    n_frames, n_bands = coeffs.shape
    y_bands = np.ascontiguousarray(coeffs.T)

    sv_list, basis_list, ybar_list = [], [], []
    m = q = obs_width = None
    for band, deg in enumerate(degradations):
        if m is None:
            m, q, obs_width = deg.m, deg.q, deg.obs_width
        elif (deg.m, deg.q, deg.obs_width) != (m, q, obs_width):
            raise DdrmError(f"band {band}: degradation shapes differ across bands")
        sv_list.append(deg.sv)
        basis_list.append(deg.basis)
        pad = (-n_frames) % m
        y_pad = np.concatenate([y_bands[band], np.zeros(pad, dtype=np.complex128)])
        obs = _windows(y_pad[None, :], m, obs_width - m)[0]
        ybar_list.append(deg.obs_map @ obs)
    if len(sv_list) != n_bands:
        raise DdrmError(f"got {len(sv_list)} degradations for {n_bands} bands")

    sv = np.stack(sv_list)                   # (K, q)
    basis = np.stack(basis_list)             # (K, q, q)
    ybar = np.stack(ybar_list)               # (K, q, B)
    basis_h = basis.conj().transpose(0, 2, 1)
    blocks = ybar.shape[2]
    n_pad_frames = blocks * m
    ctx_prior = q - m

    rng = np.random.default_rng(params.seed)
    shape = (n_bands, q, blocks)
    state = SpectralState(
        xbar=init_state(ybar, sv, schedule, params, complex_normal(rng, shape)),
        ybar=ybar, sv=sv, t=schedule.steps,
    )

    for t in range(schedule.steps - 1, -1, -1):
        x_sig = assemble_own(np.matmul(basis, state.xbar), m)  # (Npad, K)
        x0 = np.asarray(prior.denoise(x_sig[:n_frames], schedule.sigmas[t + 1]),
                        dtype=np.complex128)
        if x0.shape != (n_frames, n_bands):
            raise DdrmError(f"prior returned shape {x0.shape}, "
                            f"expected {(n_frames, n_bands)}")
        x0_pad = np.zeros((n_pad_frames, n_bands), dtype=np.complex128)
        x0_pad[:n_frames] = x0
        x0_blocks = _windows(np.ascontiguousarray(x0_pad.T), m, ctx_prior)
        xbar_theta = np.matmul(basis_h, x0_blocks)
        eps = complex_normal(rng, shape)
        state = spectral_update_step(state, xbar_theta, params, schedule, eps)

    out = assemble_own(np.matmul(basis, state.xbar), m)
    return out[:n_frames]


def ddrm_sample(wet: ComplexSpectrogram, svds, prior: DenoiserPrior,
                schedule: NoiseSchedule, params: DdrmParams) -> ComplexSpectrogram:
    """Dry-signal posterior sample given per-band dereverberation-operator
    SVDs (BandSvd) or ready DegradationSvd objects."""
    def as_degradations():
        for item in svds:
            if isinstance(item, BandSvd):
                yield degradation_from_band_svd(item)
            else:
                yield item

    out = ddrm_sample_bands(wet.coefficients, as_degradations(), prior,
                            schedule, params)
    return replace(wet, coefficients=out)
