"""``ecg-ident`` command line.

Exit codes: 0 success, 1 data error, 2 configuration/usage error, 3 SVM training
did not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import ingest
from .beats import WindowSpec, read_beats, segment_record, write_beats
from .config import ConfigError, PipelineConfig, load_config
from .evaluate import (EvalError, column_blocks, dump_report, grid_search, load_report, make_report,
                       render_report, resolve_group, run_experiment, table2_report)
from .features import compute_features, load_features
from .hermite import build_basis, fit_coefficients, reconstruct
from .pipeline import DataSource, PipelineError, kernel_from_config, pipeline_run, train_config
from .svm import save_model, train_multiclass
from .synth import random_subject_specs, synth_generate, to_csv

log = logging.getLogger("ecg_ident")

EXIT_DATA, EXIT_CONFIG, EXIT_CONVERGENCE = 1, 2, 3


class ConvergenceFailure(RuntimeError):
    pass


# flag name -> config key for options that override the configuration file
_OVERRIDES = {
    "channel": "channel", "fs": "fs", "M": "M", "pre_ms": "pre_ms", "post_ms": "post_ms",
    "L": "L", "delta": "delta", "kernel": "kernel", "sigma": "sigma", "C": "C",
    "degree": "degree", "poly_a": "poly_a", "poly_b": "poly_b", "strategy": "strategy",
    "selection": "selection", "scaling": "scaling", "group": "group", "grid": "grid",
    "seed": "seed", "subjects": "subjects", "duration": "duration_s", "noise": "noise_fraction",
    "jitter": "jitter_samples", "train_fraction": "train_fraction",
}


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    overrides = {}
    for flag, key in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "keep_truncated", False):
        overrides["exclude_truncated"] = False
    if getattr(args, "honest_cv", False):
        overrides["honest_cv"] = True
    return cfg.replace(**overrides) if overrides else cfg


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ----------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    cfg = _config(args)
    if args.csv:
        record, ann = ingest.load_csv(Path(args.csv).read_text(), cfg.fs, name=Path(args.csv).stem)
    elif args.record:
        record, ann = ingest.read_record(args.record, args.annotator)
    else:
        raise ConfigError("ingest needs --record or --csv")
    doc = ingest.to_ingest_json(record, ann, cfg.channel)
    ingest.write_ingest_json(args.out, doc)
    log.info("%s: %d samples, %d beats", doc["record"], len(doc["samples"]), len(doc["annotations"]))
    return 0


def cmd_beats(args) -> int:
    cfg = _config(args)
    spec = WindowSpec(cfg.pre_ms, cfg.post_ms, cfg.M)
    beats = []
    for path in args.inputs:
        doc = ingest.read_ingest_json(path)
        b, n_bad = segment_record(ingest.ingest_millivolts(doc), doc["annotations"], doc["fs"],
                                  spec, args.label or doc["record"])
        beats += b
        log.info("%s: %d beats, %d degenerate excluded", doc["record"], len(b), n_bad)
    write_beats(args.out, beats)
    return 0


def cmd_features(args) -> int:
    cfg = _config(args)
    beats = [b for p in args.inputs for b in read_beats(p)]
    groups = {g.strip().lower() for g in args.groups.replace(",", "+").split("+")}
    unknown = groups - {"morph", "hpe", "all"}
    if unknown:
        raise ConfigError(f"unknown feature families {sorted(unknown)}")
    morph = bool(groups & {"morph", "all"})
    hpe = bool(groups & {"hpe", "all"})
    basis = None
    if hpe and beats:
        M = (len(beats[0].hermite_window) - 1) // 2
        basis = build_basis(cfg.L, cfg.delta, M)
    table, n_trunc = compute_features(beats, morph, hpe, basis, keep_truncated=not cfg.exclude_truncated)
    if n_trunc:
        log.info("excluded %d truncated beats", n_trunc)
    _write(args.out, table.to_csv())
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    table = load_features(args.features)
    columns = resolve_group(cfg.group, table.columns)
    model = train_multiclass(table.select(columns), table.labels, kernel_from_config(cfg),
                             train_config(cfg), cfg.strategy, cfg.group, columns,
                             column_blocks(columns) if cfg.scaling == "block" else None)
    save_model(args.out, model)
    if not model.converged:
        raise ConvergenceFailure("one or more binary SVMs hit the iteration limit")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    table = load_features(args.features)
    tcfg = train_config(cfg)
    kernel, C = kernel_from_config(cfg), cfg.C
    grid_rows = []
    if cfg.grid == "default":
        best, grid_rows = grid_search(table, cfg.group, None, tcfg, cfg.fraction, cfg.strategy,
                                      cfg.honest_cv, cfg.scaling)
        kernel, C = best.kernel, best.C
    else:
        best = run_experiment(table, cfg.group, kernel, C, tcfg, cfg.fraction, cfg.strategy,
                              scaling=cfg.scaling)
    t2 = table2_report(table, kernel, C, tcfg, cfg.fraction, cfg.strategy, cfg.scaling) \
        if args.table2 else []
    doc = make_report([best], grid_rows, t2, cfg.to_dict())
    _write(args.out, dump_report(doc))
    log.info("%s: global rate %.2f%%", cfg.group, best.global_rate)
    if not best.converged:
        raise ConvergenceFailure("one or more binary SVMs hit the iteration limit")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    match = [b for b in read_beats(args.inputs)
             if b.beat_ordinal == args.beat and (args.label is None or b.subject_label == args.label)]
    if not match:
        raise EvalError(f"no beat with ordinal {args.beat} in {args.inputs}")
    beat = match[0]
    M = (len(beat.hermite_window) - 1) // 2
    basis = build_basis(cfg.L, cfg.delta, M)
    coeffs = fit_coefficients(beat.hermite_window, basis)
    rec = reconstruct(coeffs, basis)
    lines = ["t,original,reconstructed"]
    lines += [f"{int(t)},{o!r},{r!r}" for t, o, r in zip(basis.t, beat.hermite_window.tolist(), rec.tolist())]
    _write(args.out, "\n".join(lines) + "\n")
    log.info("beat %s/%d: residual nrmse %.4g", beat.subject_label, beat.beat_ordinal,
             coeffs.residual_nrmse)
    return 0


def cmd_report(args) -> int:
    _write(args.out, render_report(load_report(args.inputs), args.format))
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    specs = random_subject_specs(cfg.subjects, rng, cfg.noise_fraction, cfg.jitter_samples)
    for record, ann in synth_generate(specs, cfg.duration_s, cfg.fs, rng):
        (out / f"{record.header.record_name}.csv").write_text(to_csv(record, ann))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.source == "synth":
        source = DataSource.synth()
    elif args.data is None:
        raise ConfigError(f"--data is required for source {args.source}")
    elif args.source == "wfdb":
        source = DataSource.wfdb(args.data)
    else:
        source = DataSource.csv(args.data)
    report = pipeline_run(cfg, source, args.out_dir)
    sys.stdout.write(render_report(report, "markdown"))
    if not all(e["converged"] for e in report["experiments"]):
        raise ConvergenceFailure("one or more binary SVMs hit the iteration limit")
    return 0


# ----------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecg-ident", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        sp.add_argument("--config", default=argparse.SUPPRESS, help="configuration file")
        return sp

    sp = add("ingest", cmd_ingest, "decode a WFDB record or CSV into an ingest JSON")
    sp.add_argument("--record", help="record path without extension")
    sp.add_argument("--csv", help="CSV file with sample,mv[,r_peak]")
    sp.add_argument("--channel", type=int)
    sp.add_argument("--fs", type=float, help="sampling rate for CSV input")
    sp.add_argument("--annotator", default="atr")
    sp.add_argument("--out", required=True)

    sp = add("beats", cmd_beats, "cut beat windows around annotated R peaks")
    sp.add_argument("--in", dest="inputs", action="append", required=True)
    sp.add_argument("--M", type=int)
    sp.add_argument("--pre-ms", dest="pre_ms", type=float)
    sp.add_argument("--post-ms", dest="post_ms", type=float)
    sp.add_argument("--label", help="subject label (defaults to the record name)")
    sp.add_argument("--out", required=True)

    sp = add("features", cmd_features, "compute morphological and/or Hermite features")
    sp.add_argument("--in", dest="inputs", action="append", required=True)
    sp.add_argument("--groups", default="morph+hpe", help="morph, hpe or morph+hpe")
    sp.add_argument("--L", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--keep-truncated", action="store_true")
    sp.add_argument("--out", default="-")

    def svm_flags(sp):
        sp.add_argument("--features", action="append", required=True)
        sp.add_argument("--group")
        sp.add_argument("--kernel", choices=("rbf", "poly"))
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--C", type=float)
        sp.add_argument("--degree", type=float)
        sp.add_argument("--poly-a", dest="poly_a", type=float)
        sp.add_argument("--poly-b", dest="poly_b", type=float)
        sp.add_argument("--strategy", choices=("ovo", "ovr"))
        sp.add_argument("--selection", choices=("first-order", "second-order"))
        sp.add_argument("--scaling", choices=("block", "zscore"))

    sp = add("train", cmd_train, "train a multiclass SVM on a feature CSV")
    svm_flags(sp)
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "chronological split, train, and score")
    svm_flags(sp)
    sp.add_argument("--grid", choices=("none", "default"))
    sp.add_argument("--train-fraction", dest="train_fraction")
    sp.add_argument("--honest-cv", action="store_true")
    sp.add_argument("--table2", action="store_true", help="also run the 13 reference feature-group rows")
    sp.add_argument("--out", default="-")

    sp = add("reconstruct", cmd_reconstruct, "Hermite reconstruction of one beat")
    sp.add_argument("--in", dest="inputs", required=True)
    sp.add_argument("--beat", type=int, required=True, help="beat ordinal")
    sp.add_argument("--label")
    sp.add_argument("--L", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--out", default="-")

    sp = add("report", cmd_report, "render a report JSON")
    sp.add_argument("--in", dest="inputs", required=True)
    sp.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    sp.add_argument("--out", default="-")

    sp = add("synth", cmd_synth, "write synthetic subjects as CSV records")
    sp.add_argument("--subjects", type=int)
    sp.add_argument("--duration", type=float)
    sp.add_argument("--fs", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--noise", type=float, help="noise std as a fraction of the template peak")
    sp.add_argument("--jitter", type=float, help="RR jitter std in samples")
    sp.add_argument("--out-dir", required=True)

    sp = add("run", cmd_run, "run the whole pipeline")
    sp.add_argument("--source", choices=("synth", "wfdb", "csv"), default="synth")
    sp.add_argument("--data", nargs="*", help="WFDB directory/record stems or CSV files/directory")
    sp.add_argument("--out-dir", required=True)
    for flag in ("--group", "--kernel", "--strategy", "--selection", "--scaling", "--grid"):
        sp.add_argument(flag)
    for flag in ("--sigma", "--C", "--fs", "--duration", "--noise", "--jitter"):
        sp.add_argument(flag, type=float)
    for flag in ("--seed", "--subjects", "--channel"):
        sp.add_argument(flag, type=int)
    sp.add_argument("--honest-cv", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
