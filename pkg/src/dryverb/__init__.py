"""Unsupervised dereverberation: WPE initialization, diffusion posterior
sampling with a blockwise band operator, and gradient operator refinement."""

__version__ = "0.1.0"

from .audio import (
    AudioClip,
    AudioError,
    ComplexSpectrogram,
    istft,
    read_wav,
    stft,
    write_wav,
)
from .ddrm import DdrmError, DdrmParams, ddrm_sample, ddrm_sample_bands
from .linop import BandOperator, BandSvd, LinopError, apply_operator, svd_band
from .prior import (
    DenoiserPrior,
    GaussianShrinkagePrior,
    NoiseSchedule,
    OraclePrior,
    PriorError,
    cosine_schedule,
)
from .refine import (
    DereverbConfig,
    RefineError,
    RefineParams,
    dereverberate,
    refine_filter,
    refine_filter_bank,
)
from .synth import ReverbSpec, SynthError, make_corpus, synth_reverb, synthetic_voice
from .metrics import l1_spec_loss, log_spectral_distance
from .bench import BenchmarkReport, run_benchmark
from .wpe import (
    WpeConfig,
    WpeError,
    WpeFilterBank,
    apply_dereverb_filter,
    estimate_wpe_filter,
)

__all__ = [
    "AudioClip",
    "AudioError",
    "BandOperator",
    "BandSvd",
    "BenchmarkReport",
    "ComplexSpectrogram",
    "DdrmError",
    "DdrmParams",
    "DenoiserPrior",
    "DereverbConfig",
    "GaussianShrinkagePrior",
    "LinopError",
    "NoiseSchedule",
    "OraclePrior",
    "PriorError",
    "RefineError",
    "RefineParams",
    "ReverbSpec",
    "SynthError",
    "WpeConfig",
    "WpeError",
    "WpeFilterBank",
    "apply_dereverb_filter",
    "apply_operator",
    "cosine_schedule",
    "ddrm_sample",
    "ddrm_sample_bands",
    "dereverberate",
    "estimate_wpe_filter",
    "istft",
    "l1_spec_loss",
    "log_spectral_distance",
    "make_corpus",
    "read_wav",
    "refine_filter",
    "refine_filter_bank",
    "run_benchmark",
    "stft",
    "svd_band",
    "synth_reverb",
    "synthetic_voice",
    "write_wav",
]
