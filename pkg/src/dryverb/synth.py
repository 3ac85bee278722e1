"""Parametric synthetic reverb and a deterministic dry-voice generator."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .audio import AudioClip


IR_KINDS = ("exponential-decay", "velvet-noise", "comb-resonant", "dirac")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class ReverbSpec:
    rt60: float = 0.8
    pre_delay: float = 0.02
    wet_dry_mix: float = 0.5
    ir_kind: str = "exponential-decay"
    seed: int = 0
    snr_db: float | None = None

    def __post_init__(self):
        if self.rt60 <= 0:
            raise SynthError("rt60 must be positive")
        if not (0.0 <= self.wet_dry_mix <= 1.0):
            raise SynthError("wet_dry_mix must be in [0, 1]")
        if self.pre_delay < 0:
            raise SynthError("pre_delay must be >= 0")
        if self.ir_kind not in IR_KINDS:
            raise SynthError(f"ir_kind must be one of {IR_KINDS}, got {self.ir_kind!r}")


def impulse_response(spec: ReverbSpec, sample_rate: int) -> np.ndarray:
    """Impulse response for the spec, starting after pre_delay samples of
    silence.  The tail length is 1.2 * rt60."""
    rng = np.random.default_rng(spec.seed)
    n_pre = int(round(spec.pre_delay * sample_rate))
    n_tail = max(int(round(1.2 * spec.rt60 * sample_rate)), 8)
    t = np.arange(n_tail) / sample_rate
    decay = np.exp(-6.9077552789821 * t / spec.rt60)  # ln(1e3): -60 dB at rt60

    if spec.ir_kind == "dirac":
        tail = np.zeros(n_tail)
        tail[0] = 1.0
    elif spec.ir_kind == "exponential-decay":
        tail = rng.standard_normal(n_tail) * decay
    elif spec.ir_kind == "velvet-noise":
        density = 2000.0  # impulses per second
        grid = max(int(sample_rate / density), 1)
        tail = np.zeros(n_tail)
        for start in range(0, n_tail, grid):
            pos = start + int(rng.integers(0, grid))
            if pos < n_tail:
                tail[pos] = rng.choice((-1.0, 1.0)) * decay[pos]
    else:  # comb-resonant
        period = max(int(0.011 * sample_rate), 1)
        tail = np.zeros(n_tail)
        taps = np.arange(0, n_tail, period)
        tail[taps] = decay[taps]
        tail += 0.15 * rng.standard_normal(n_tail) * decay

    return np.concatenate([np.zeros(n_pre), tail])


def synth_reverb(dry: AudioClip, spec: ReverbSpec) -> AudioClip:
    """wet = (1 - mix) * dry + mix * reverbed, with the reverbed branch
    matched to the dry RMS so the mix ratio is meaningful."""
    ir = impulse_response(spec, dry.sample_rate)
    if len(ir) > len(dry):
        warnings.warn(
            f"impulse response ({len(ir)} samples) longer than the clip; truncating",
            RuntimeWarning, stacklevel=2,
        )
        ir = ir[:len(dry)]
    reverbed = fftconvolve(dry.samples, ir)[:len(dry)]
    if spec.ir_kind != "dirac":
        dry_rms = np.sqrt(np.mean(dry.samples ** 2))
        rev_rms = np.sqrt(np.mean(reverbed ** 2))
        if rev_rms > 0 and dry_rms > 0:
            reverbed *= dry_rms / rev_rms
    wet = (1.0 - spec.wet_dry_mix) * dry.samples + spec.wet_dry_mix * reverbed
    if spec.snr_db is not None:
        rng = np.random.default_rng(spec.seed + 1)
        sig_rms = np.sqrt(np.mean(wet ** 2))
        noise = rng.standard_normal(len(wet))
        noise *= sig_rms * 10.0 ** (-spec.snr_db / 20.0)
        wet = wet + noise
    return AudioClip(samples=wet, sample_rate=dry.sample_rate)


def synthetic_voice(duration: float, sample_rate: int = 44100, seed: int = 0,
                    f0: float | None = None,
                    score_seed: int | None = None) -> AudioClip:
    """Deterministic vocal-like test signal: a sequence of sung notes.

    Each note is a harmonic stack with vibrato and random pitch jitter,
    separated by short gaps with breathy noise bursts.  The jitter and the
    note transitions keep the signal from being linearly predictable over
    tens of milliseconds, as real singing is not.

    The melody (note timing, pitches, base frequency) is drawn from
    ``score_seed`` and the rendition (timbre, phases, jitter, dynamics)
    from ``seed``, so clips can share a song while sounding like different
    performances, mirroring multi-singer song corpora.
    """
    score_rng = np.random.default_rng(seed if score_seed is None else score_seed)
    voice_rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    sig = np.zeros(n)
    base = float(score_rng.uniform(150.0, 300.0)) if f0 is None else f0
    scale_steps = np.array([1.0, 9 / 8, 5 / 4, 4 / 3, 3 / 2, 5 / 3])

    pos = 0
    while pos < n:
        note_len = int(score_rng.uniform(0.06, 0.16) * sample_rate)
        gap_len = int(score_rng.uniform(0.03, 0.08) * sample_rate)
        note_len = min(note_len, n - pos)
        if note_len < int(0.03 * sample_rate):
            break
        t = np.arange(note_len) / sample_rate
        note_f0 = base * float(score_rng.choice(scale_steps)) \
            * 2.0 ** float(score_rng.integers(-1, 1))

        # pitch contour: vibrato plus a slow random-walk jitter (~3 percent)
        vib = 0.006 * np.sin(2 * np.pi * voice_rng.uniform(4.5, 6.5) * t
                             + voice_rng.uniform(0, 2 * np.pi))
        jitter = np.cumsum(voice_rng.standard_normal(note_len)) \
            * (0.03 / np.sqrt(sample_rate * 0.05))
        inst_f0 = note_f0 * (1.0 + vib + jitter)
        phase = 2 * np.pi * np.cumsum(inst_f0) / sample_rate

        note = np.zeros(note_len)
        n_harm = max(1, min(12, int((0.4 * sample_rate / 2) / note_f0)))
        for h in range(1, n_harm + 1):
            amp = h ** -1.2 * voice_rng.uniform(0.5, 1.0)
            note += amp * np.sin(h * phase + voice_rng.uniform(0, 2 * np.pi))
        note += 0.03 * voice_rng.standard_normal(note_len)

        attack = max(int(0.01 * sample_rate), 1)
        release = max(int(0.03 * sample_rate), 1)
        env = np.ones(note_len)
        env[:min(attack, note_len)] = np.linspace(0.0, 1.0, min(attack, note_len))
        env[-min(release, note_len):] *= np.linspace(1.0, 0.05, min(release, note_len))
        env *= voice_rng.uniform(0.5, 1.0)
        sig[pos:pos + note_len] += note * env
        pos += note_len

        # consonant-like noise burst in the gap
        burst = min(gap_len, n - pos)
        if burst > 8:
            noise = voice_rng.standard_normal(burst) * np.hanning(burst)
            sig[pos:pos + burst] += 0.15 * voice_rng.uniform(0.2, 1.0) * noise
        pos += gap_len

    sig /= np.max(np.abs(sig)) + 1e-12
    return AudioClip(samples=0.5 * sig, sample_rate=sample_rate)


def default_grid() -> list[tuple[float, float]]:
    """(rt60, mix) benchmark grid."""
    return [(rt60, mix) for rt60 in (0.3, 0.8, 1.5) for mix in (0.3, 0.5, 0.7)]


def make_corpus(n_clips: int = 30, duration: float = 4.0, sample_rate: int = 44100,
                seed: int = 0, grid=None) -> list[tuple[AudioClip, ReverbSpec]]:
    """Dry clips paired with reverb specs cycling through the grid.

    All clips share one melody (score) and differ in rendition, like a song
    corpus recorded by many singers; reverb conditions cycle the grid."""
    if grid is None:
        grid = default_grid()
    corpus = []
    for i in range(n_clips):
        rt60, mix = grid[i % len(grid)]
        dry = synthetic_voice(duration, sample_rate, seed=seed * 1000 + i,
                              score_seed=seed)
        spec = ReverbSpec(rt60=rt60, wet_dry_mix=mix, pre_delay=0.08,
                          ir_kind="exponential-decay", seed=seed * 1000 + 500 + i)
        corpus.append((dry, spec))
    return corpus
