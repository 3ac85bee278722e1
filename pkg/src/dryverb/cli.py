"""Command-line interface: dereverb, bench, and synth subcommands.

Exit codes:
    0  success
    2  configuration error (bad config file, flags, or prior selection)
    3  I/O error (unreadable input, unwritable output)
    4  numerical failure inside the pipeline (manifest records the stage)
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, replace

import numpy as np
import yaml

from . import __version__
from .audio import AudioError, dc_component, drop_dc, read_wav, stft, istft, write_wav
from .bench import ALL_METHODS, config_from_dict, config_to_dict, run_benchmark
from .prior import DenoiserPrior, GaussianShrinkagePrior, OraclePrior, PriorError
from .refine import DereverbConfig, dereverberate, spectrogram_scale
from .synth import IR_KINDS, ReverbSpec, SynthError, make_corpus, synth_reverb
from .wpe import apply_dereverb_filter, estimate_wpe_filter

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

_EPILOG = """exit codes:
  0  success
  2  configuration error
  3  I/O error
  4  numerical failure (stage recorded in the manifest)
"""


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def write_manifest(path: str, payload: dict) -> None:
    """Atomic JSON write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".manifest-", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path: str | None, overrides, seed: int | None) -> DereverbConfig:
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}", EXIT_IO)
        except yaml.YAMLError as exc:
            raise CliError(f"malformed config file: {exc}", EXIT_CONFIG)
        if not isinstance(data, dict):
            raise CliError("config file must contain a mapping", EXIT_CONFIG)
    for item in overrides or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}", EXIT_CONFIG)
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise CliError(f"cannot parse override value {raw!r}", EXIT_CONFIG)
        if isinstance(value, str):
            # YAML 1.1 misses scientific notation without a dot (e.g. 1e-5)
            try:
                value = float(value)
            except ValueError:
                pass
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise CliError(f"override path {key!r} conflicts with a scalar",
                               EXIT_CONFIG)
        node[parts[-1]] = value
    try:
        config = config_from_dict(data)
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid config: {exc}", EXIT_CONFIG)
    if seed is not None:
        config = replace(config, ddrm=replace(config.ddrm, seed=seed))
    return config


def resolve_prior(selection: str | None, config: DereverbConfig,
                  wet=None) -> DenoiserPrior | None:
    """Parse a prior selection string.

    ``gaussian:<stats.npz>`` loads saved shrinkage statistics,
    ``oracle:<dry.wav>`` uses the known dry signal (ceiling mode),
    ``external:<weights>`` is reserved and rejected for now.
    With no selection: fit a per-band Gaussian from the wet input when one
    is given, otherwise return None (the caller fits from its corpus).
    """
    if selection is None:
        if wet is None:
            return None
        spec = drop_dc(stft(wet, config.window_size, config.hop_size))
        coeffs = spec.coefficients / spectrogram_scale(spec)
        return GaussianShrinkagePrior.fit([coeffs], mode="per_band")
    kind, _, arg = selection.partition(":")
    if kind == "gaussian":
        if not arg:
            raise CliError("gaussian prior needs a stats file: gaussian:<path>",
                           EXIT_CONFIG)
        try:
            return GaussianShrinkagePrior.load_stats(arg)
        except OSError as exc:
            raise CliError(f"cannot read prior stats: {exc}", EXIT_IO)
        except PriorError as exc:
            raise CliError(f"bad prior stats: {exc}", EXIT_CONFIG)
    if kind == "oracle":
        if not arg:
            raise CliError("oracle prior needs a dry WAV: oracle:<path>", EXIT_CONFIG)
        try:
            dry = read_wav(arg)
        except (OSError, AudioError) as exc:
            raise CliError(f"cannot read oracle dry WAV: {exc}", EXIT_IO)
        dry_spec = drop_dc(stft(dry, config.window_size, config.hop_size))
        if wet is None:
            scale = spectrogram_scale(dry_spec)
        else:
            wet_spec = drop_dc(stft(wet, config.window_size, config.hop_size))
            scale = spectrogram_scale(wet_spec)
        return OraclePrior(dry_spec.coefficients / scale)
    if kind == "external":
        raise CliError("external priors are reserved and not yet supported",
                       EXIT_CONFIG)
    raise CliError(f"unknown prior kind {kind!r} "
                   "(expected gaussian:, oracle:, or external:)", EXIT_CONFIG)


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


class StageTimer:
    """Collects per-stage wall time; usable as the pipeline progress hook."""

    def __init__(self):
        self.timings: dict[str, float] = {}
        self._current = None
        self._start = None

    def __call__(self, stage: str, **info) -> None:
        self.mark(stage)

    def mark(self, stage: str) -> None:
        now = time.monotonic()
        if self._current is not None:
            self.timings[self._current] = round(now - self._start, 3)
        self._current = stage
        self._start = now

    def finish(self) -> dict[str, float]:
        self.mark("__end__")
        self._current = None
        self.timings.pop("__end__", None)
        return self.timings


def cmd_dereverb(args) -> int:
    timer = StageTimer()
    config = load_config(args.config, args.set, args.seed)
    if args.print_config:
        sys.stdout.write(yaml.safe_dump(config_to_dict(config), sort_keys=False))
        return EXIT_OK
    try:
        wet = read_wav(args.input)
    except (OSError, AudioError) as exc:
        raise CliError(f"cannot read input WAV: {exc}", EXIT_IO)

    stage = "setup"
    try:
        wet_spec = stft(wet, config.window_size, config.hop_size)
        if args.mode == "wpe-only":
            stage = "wpe"
            timer.mark("wpe")
            nodc = drop_dc(wet_spec)
            dc_row = dc_component(wet_spec)
            scale = spectrogram_scale(nodc)
            norm = replace(nodc, coefficients=nodc.coefficients / scale)
            bank = estimate_wpe_filter(norm, config.wpe)
            dry = apply_dereverb_filter(norm, bank)
            from .audio import restore_dc
            dry = restore_dc(replace(dry, coefficients=dry.coefficients * scale),
                             dc_row)
        else:
            prior = resolve_prior(args.prior, config, wet=wet)

            def hook(name, **info):
                nonlocal stage
                stage = name
                timer.mark(name)

            dry = dereverberate(wet_spec, prior, config, progress=hook)
        stage = "istft"
        timer.mark("istft")
        out_clip = istft(dry)
    except CliError:
        raise
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise CliError(f"numerical failure in stage {stage!r}: {exc}",
                       EXIT_NUMERICAL)

    try:
        write_wav(args.output, out_clip, fmt=args.wav_format)
    except (OSError, AudioError) as exc:
        raise CliError(f"cannot write output WAV: {exc}", EXIT_IO)

    write_manifest(args.output + ".manifest.json", {
        "command": "dereverb",
        "version": __version__,
        "input": os.path.abspath(args.input),
        "output": os.path.abspath(args.output),
        "mode": args.mode,
        "prior": args.prior,
        "seed": config.ddrm.seed,
        "config": config_to_dict(config),
        "timings": timer.finish(),
    })
    return EXIT_OK


def cmd_bench(args) -> int:
    from .report import write_report

    timer = StageTimer()
    config = load_config(args.config, args.set, args.seed)
    if args.quick:
        config = replace(
            config,
            block_frames=min(config.block_frames, 64),
            refine=replace(config.refine, n_refine=min(config.refine.n_refine, 200)),
            wpe=replace(config.wpe, taps=min(config.wpe.taps, 24)),
        )
    methods = ALL_METHODS
    if args.methods:
        requested = [m.strip() for m in args.methods.split(",") if m.strip()]
        bad = set(requested) - set(ALL_METHODS)
        if bad:
            raise CliError(f"unknown methods: {sorted(bad)} "
                           f"(choose from {', '.join(ALL_METHODS)})", EXIT_CONFIG)
        methods = tuple(requested)

    timer.mark("corpus")
    if args.synthetic:
        corpus = make_corpus(n_clips=args.clips, duration=args.duration,
                             seed=config.ddrm.seed)
    else:
        if args.corpus is None:
            raise CliError("either --synthetic or --corpus is required", EXIT_CONFIG)
        try:
            names = sorted(n for n in os.listdir(args.corpus) if n.endswith(".wav"))
        except OSError as exc:
            raise CliError(f"cannot list corpus dir: {exc}", EXIT_IO)
        if not names:
            raise CliError(f"no WAV files in {args.corpus}", EXIT_CONFIG)
        from .synth import default_grid
        grid = default_grid()
        corpus = []
        for i, name in enumerate(names):
            try:
                dry = read_wav(os.path.join(args.corpus, name))
            except (OSError, AudioError) as exc:
                raise CliError(f"cannot read corpus clip {name}: {exc}", EXIT_IO)
            rt60, mix = grid[i % len(grid)]
            corpus.append((dry, ReverbSpec(rt60=rt60, wet_dry_mix=mix,
                                           seed=config.ddrm.seed * 1000 + 500 + i)))

    prior = resolve_prior(args.prior, config)

    def hook(event, **info):
        if event == "clip" and args.verbose:
            sys.stderr.write(f"clip {info['clip'] + 1}/{info['total']}\n")
        elif event == "clip-failed":
            sys.stderr.write(f"clip {info['clip']} failed:\n{info['error']}\n")

    timer.mark("benchmark")
    try:
        report = run_benchmark(corpus, config, prior=prior, methods=methods,
                               progress=hook)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise CliError(f"numerical failure in stage 'benchmark': {exc}",
                       EXIT_NUMERICAL)
    timer.mark("report")
    try:
        paths = write_report(report, args.out)
    except OSError as exc:
        raise CliError(f"cannot write report: {exc}", EXIT_IO)

    write_manifest(os.path.join(args.out, "manifest.json"), {
        "command": "bench",
        "version": __version__,
        "synthetic": bool(args.synthetic),
        "corpus": None if args.synthetic else os.path.abspath(args.corpus),
        "clips": len(corpus),
        "methods": list(report.methods),
        "seed": config.ddrm.seed,
        "quick": bool(args.quick),
        "prior": args.prior,
        "config": config_to_dict(config),
        "config_fingerprint": report.config_fingerprint,
        "partial": report.partial,
        "artifacts": {k: os.path.abspath(v) for k, v in paths.items()},
        "timings": timer.finish(),
    })
    with open(paths["summary"]) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = ReverbSpec(rt60=args.rt60, pre_delay=args.pre_delay,
                          wet_dry_mix=args.mix, ir_kind=args.kind,
                          seed=args.seed, snr_db=args.snr_db)
    except SynthError as exc:
        raise CliError(f"invalid reverb spec: {exc}", EXIT_CONFIG)
    try:
        dry = read_wav(args.input)
    except (OSError, AudioError) as exc:
        raise CliError(f"cannot read input WAV: {exc}", EXIT_IO)
    wet = synth_reverb(dry, spec)
    try:
        write_wav(args.output, wet, fmt=args.wav_format)
    except (OSError, AudioError) as exc:
        raise CliError(f"cannot write output WAV: {exc}", EXIT_IO)
    write_manifest(args.output + ".manifest.json", {
        "command": "synth",
        "version": __version__,
        "input": os.path.abspath(args.input),
        "output": os.path.abspath(args.output),
        "spec": asdict(spec),
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dryverb",
        description="Unsupervised dereverberation: WPE + diffusion posterior "
                    "sampling + operator refinement.",
        epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set ddrm.steps=10")
        p.add_argument("--seed", type=int, help="sampler seed (overrides config)")
        p.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")

    p = sub.add_parser("dereverb", help="dereverberate a mono WAV",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input")
    p.add_argument("output")
    common(p)
    p.add_argument("--prior", metavar="KIND[:ARG]",
                   help="gaussian:<stats.npz>, oracle:<dry.wav>, or "
                        "external:<weights> (reserved); default fits a "
                        "per-band Gaussian from the input")
    p.add_argument("--mode", choices=("full", "wpe-only"), default="full")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config as YAML and exit")
    p.add_argument("--wav-format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_dereverb)

    p = sub.add_parser("bench", help="run the benchmark and write a report",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--synthetic", action="store_true",
                   help="use the built-in synthetic-voice corpus")
    p.add_argument("--corpus", help="directory of dry WAV clips")
    p.add_argument("--clips", type=int, default=30)
    p.add_argument("--duration", type=float, default=2.0,
                   help="synthetic clip length in seconds")
    p.add_argument("--quick", action="store_true",
                   help="shrink block size, WPE taps, and refinement steps")
    p.add_argument("--methods", help="comma list from: " + ",".join(ALL_METHODS))
    p.add_argument("--prior", metavar="KIND[:ARG]",
                   help="as in dereverb; default fits from the corpus dry clips")
    p.add_argument("--out", default="bench-report", help="output directory")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="apply synthetic reverb to a dry WAV",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--rt60", type=float, default=0.8)
    p.add_argument("--mix", type=float, default=0.5)
    p.add_argument("--pre-delay", type=float, default=0.02)
    p.add_argument("--kind", choices=IR_KINDS, default="exponential-decay")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--wav-format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
