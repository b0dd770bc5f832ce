"""Command-line interface.

Exit codes: 0 success, 2 usage, 3 parse failure, 4 invalid configuration,
5 I/O failure, 6 data problem (missing channel, no epochs, misalignment).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import run_bench
from .classifier import classify_binary_arousal, classify_slope, evaluate, per_epoch_csv
from .dpss import DEFAULT_SPARSE_EPSILON, cache_filename, cached_tapers, save_taper_cache, sparsify_tapers
from .edf import Recording, read_recording, write_csv_recording, write_edf
from .errors import (
    AlignmentError,
    ChannelNotFoundError,
    DegenerateSpectrumError,
    DegradationError,
    InsufficientBandError,
    InvalidInputError,
    InvalidSpecError,
    NoDataError,
    ParseError,
)
from .hypnogram import align_labels, hypnogram_to_csv, parse_hypnogram_csv
from .multitaper import ANALYSIS_BAND_HZ, multitaper_psd, psd_to_csv
from .pipeline import Pipeline, resolve_config
from .slope import features_to_csv
from .synth import SynthSpec, labeled_recording, slope_corpus, synthesize_powerlaw

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_IO = 5
EXIT_DATA = 6

_CONFIG_FLAGS = {
    # flag dest -> PipelineConfig key
    "channel": "channel_label",
    "epoch_s": "epoch_s",
    "target_rate": "target_rate_hz",
    "smoothing": "nw_smoothing_hz",
    "n_tapers": "n_tapers",
    "fit_band": "fit_band_hz",
    "wake_cut": "wake_cut",
    "rem_cut": "rem_cut",
    "epsilon": "sparsify_epsilon",
    "filter_order": "filter_order",
    "cutoff": "filter_cutoff_hz",
    "zero_phase": "zero_phase",
    "cache_dir": "taper_cache_dir",
    "threads": "threads",
}


def _add_config_flags(p):
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", type=Path, help="key = value config file (also $MTSLOPE_CONFIG)")
    g.add_argument("--channel", help="channel label (default Cz)")
    g.add_argument("--epoch-s", dest="epoch_s", type=float, help="epoch length in seconds (30 sleep, 10 anesthesia)")
    g.add_argument("--target-rate", dest="target_rate", type=float, help="analysis sample rate in Hz (default 200)")
    g.add_argument("--smoothing", type=float, help="multitaper half-bandwidth in Hz (default 0.5)")
    g.add_argument("--n-tapers", dest="n_tapers", type=int, help="override the derived 2NW-1 taper count")
    g.add_argument("--fit-band", dest="fit_band", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--wake-cut", dest="wake_cut", type=float)
    g.add_argument("--rem-cut", dest="rem_cut", type=float)
    g.add_argument("--epsilon", type=float, help="sparsify tapers below this magnitude (0 = dense)")
    g.add_argument("--filter-order", dest="filter_order", type=int)
    g.add_argument("--cutoff", type=float, help="Butterworth cutoff in Hz (default 50)")
    g.add_argument("--zero-phase", dest="zero_phase", action="store_const", const=True,
                   help="forward-backward filtering instead of causal")
    g.add_argument("--cache-dir", dest="cache_dir", help="taper cache directory")
    g.add_argument("--threads", type=int)


def _config(args):
    values = {key: getattr(args, dest, None) for dest, key in _CONFIG_FLAGS.items()}
    return resolve_config(values, getattr(args, "config", None))


def _emit(text, out):
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_tapers(args):
    cfg = _config(args)
    params = cfg.taper_params
    ts = cached_tapers(params, cfg.taper_cache_dir)
    path = None
    if args.out:
        path = save_taper_cache(args.out, ts)
    elif cfg.taper_cache_dir:
        path = Path(cfg.taper_cache_dir) / cache_filename(params)
    summary = {
        "n_samples": params.n_samples,
        "sample_rate_hz": params.sample_rate_hz,
        "half_bandwidth_hz": params.half_bandwidth_hz,
        "nw": params.nw,
        "n_tapers": params.n_tapers,
        "eigenvalues": ts.eigenvalues.tolist(),
        "cache_file": str(path) if path else None,
    }
    if cfg.sparsify_epsilon > 0:
        summary["sparsity"] = sparsify_tapers(ts, cfg.sparsify_epsilon).sparsity.as_dict()
    _emit(json.dumps(summary, indent=2), args.output)


def cmd_psd(args):
    cfg = _config(args)
    pipe = Pipeline(cfg)
    epochs = pipe.epochs(read_recording(args.input))
    if args.epoch is not None:
        if not 0 <= args.epoch < len(epochs):
            raise NoDataError(f"epoch {args.epoch} out of range (0-{len(epochs) - 1})")
        epochs = [epochs[args.epoch]]
    psds = [multitaper_psd(e, pipe.tapers, band=ANALYSIS_BAND_HZ) for e in epochs]
    if args.format == "csv":
        if len(psds) != 1:
            raise InvalidSpecError("CSV output holds one epoch; pass --epoch")
        _emit(psd_to_csv(psds[0]), args.output)
    else:
        records = [
            {"epoch_index": (args.epoch if args.epoch is not None else i), "epoch_start_s": e.start_time_s,
             "channel": e.source_channel, "n_tapers": p.n_tapers_used, "delta_t_s": p.delta_t_s,
             "freq_hz": p.freqs_hz.tolist(), "power": p.power.tolist()}
            for i, (e, p) in enumerate(zip(epochs, psds))
        ]
        _emit(json.dumps(records), args.output)


def cmd_slope(args):
    cfg = _config(args)
    results = Pipeline(cfg).run(read_recording(args.input))
    _emit(features_to_csv((r.start_time_s, r.feature) for r in results), args.output)


def cmd_classify(args):
    cfg = _config(args)
    results = Pipeline(cfg).run(read_recording(args.input))
    lines = ["epoch_start_s,slope,label"]
    lines += [f"{r.start_time_s:g},{r.slope!r},{r.stage.value}" for r in results]
    _emit("\n".join(lines), args.output)


def cmd_evaluate(args):
    cfg = _config(args)
    if args.model_corpus:
        slopes, labels = slope_corpus(args.model_corpus, seed=args.seed)
        preds = [classify_slope(s, cfg.thresholds) for s in slopes]
        ev = evaluate(preds, labels, note="modelled slope corpus drawn from published per-stage "
                                          "slope statistics; not patient EEG")
        _emit(ev.to_json(), args.output)
        return
    if not (args.input and args.hypnogram):
        raise InvalidSpecError("evaluate needs INPUT and HYPNOGRAM (or --model-corpus N)")
    hyp = parse_hypnogram_csv(Path(args.hypnogram).read_text(encoding="utf-8"))
    pipe = Pipeline(cfg)
    if args.task == "binary":
        eps = pipe.epochs(read_recording(args.input))
        results = pipe.analyze_epochs(eps)
        labels = align_labels(hyp, eps)
        preds = [classify_binary_arousal(r.slope, cfg.thresholds) for r in results]
        ev = evaluate(preds, labels, task="binary", light_sleep=args.light_sleep)
    else:
        ev, results, labels = pipe.evaluate(read_recording(args.input), hyp)
        preds = [r.stage for r in results]
    if args.per_epoch:
        Path(args.per_epoch).write_text(
            per_epoch_csv((r.start_time_s, r.slope, p, a) for r, p, a in zip(results, preds, labels)),
            encoding="utf-8")
    _emit(ev.to_json(), args.output)


def cmd_synth(args):
    out = Path(args.output)
    if args.betas:
        betas = [float(b) for b in args.betas.split(",")]
        rec, hyp = labeled_recording(betas, args.epoch_len, args.rate, args.seed, args.channel,
                                     extra_channels=args.extra_channel or ())
        if args.hypnogram:
            Path(args.hypnogram).write_text(hypnogram_to_csv(hyp), encoding="utf-8")
    else:
        x = synthesize_powerlaw(SynthSpec(args.beta, args.duration, args.rate, args.seed, args.variance))
        labels = [args.channel] + list(args.extra_channel or ())
        rows = [x] + [synthesize_powerlaw(SynthSpec(args.beta, args.duration, args.rate, args.seed + 1 + i,
                                                     args.variance))
                      for i in range(len(labels) - 1)]
        rec = Recording.from_physical(labels, args.rate, np.vstack(rows),
                                      header={"patient": "X X X synthetic",
                                              "recording": f"synthetic beta={args.beta:g} seed={args.seed}"})
    if out.suffix.lower() == ".csv":
        out.write_text(write_csv_recording(rec), encoding="utf-8")
    else:
        out.write_bytes(write_edf(rec))


def cmd_bench(args):
    cfg = _config(args)
    report = run_bench(cfg, n_epochs=args.epochs, seed=args.seed, sparse_epsilon=args.sparse_epsilon)
    _emit(json.dumps(report, indent=2), args.output)


def build_parser():
    p = argparse.ArgumentParser(prog="mtslope", description="Arousal staging from the 30-45 Hz multitaper spectral slope")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("-o", "--output", help="output path (default stdout)")
        return sp

    sp = add("tapers", cmd_tapers, "compute/cache Slepian tapers and print a JSON summary")
    _add_config_flags(sp)
    sp.add_argument("--out", type=Path, help="write the taper cache file here")

    sp = add("psd", cmd_psd, "multitaper PSD over 0.5-45 Hz")
    _add_config_flags(sp)
    sp.add_argument("input")
    sp.add_argument("--epoch", type=int, help="epoch index (all epochs if omitted, JSON only)")
    sp.add_argument("--format", choices=("csv", "json"), default="json")

    sp = add("slope", cmd_slope, "per-epoch spectral slope CSV")
    _add_config_flags(sp)
    sp.add_argument("input")

    sp = add("classify", cmd_classify, "per-epoch stage CSV")
    _add_config_flags(sp)
    sp.add_argument("input")

    sp = add("evaluate", cmd_evaluate, "confusion matrix against a hypnogram, as JSON")
    _add_config_flags(sp)
    sp.add_argument("input", nargs="?")
    sp.add_argument("hypnogram", nargs="?")
    sp.add_argument("--task", choices=("three-way", "binary"), default="three-way")
    sp.add_argument("--light-sleep", dest="light_sleep", choices=("exclude", "reduced"), default="exclude")
    sp.add_argument("--per-epoch", dest="per_epoch", help="also write per-epoch CSV here")
    sp.add_argument("--model-corpus", dest="model_corpus", type=int, metavar="N",
                    help="evaluate a modelled slope corpus of N epochs per stage instead of files")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("synth", cmd_synth, "write a synthetic power-law recording (EDF, or CSV by suffix)")
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--betas", help="comma-separated beta per epoch; writes a labelled corpus")
    sp.add_argument("--hypnogram", help="hypnogram CSV path for --betas corpora")
    sp.add_argument("--duration", type=float, default=300.0)
    sp.add_argument("--epoch-len", dest="epoch_len", type=float, default=30.0)
    sp.add_argument("--rate", type=float, default=200.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--variance", type=float, default=100.0)
    sp.add_argument("--channel", default="Cz")
    sp.add_argument("--extra-channel", dest="extra_channel", action="append")

    sp = add("bench", cmd_bench, "per-stage timing and memory report")
    _add_config_flags(sp)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sparse-epsilon", dest="sparse_epsilon", type=float, default=DEFAULT_SPARSE_EPSILON)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not args.output:
        parser.error("synth needs -o/--output")
    try:
        args.func(args)
    except ParseError as e:
        print(f"mtslope: parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (InvalidSpecError, DegradationError) as e:
        print(f"mtslope: invalid configuration: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ChannelNotFoundError as e:
        print(f"mtslope: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NoDataError, AlignmentError, InvalidInputError, DegenerateSpectrumError, InsufficientBandError) as e:
        print(f"mtslope: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"mtslope: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
