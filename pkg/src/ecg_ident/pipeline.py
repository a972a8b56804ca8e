"""End-to-end orchestration: ingest -> beats -> features -> evaluate."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ingest
from .beats import WindowSpec, read_beats, segment_record, write_beats
from .config import PipelineConfig
from .evaluate import (dump_report, grid_search, make_report, render_report, run_experiment,
                       table2_report)
from .features import compute_features
from .hermite import build_basis
from .svm import KernelSpec, TrainConfig
from .synth import random_subject_specs, synth_generate

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class DataSource:
    kind: str  # "wfdb" | "csv" | "synth"
    paths: tuple[Path, ...] = ()

    @classmethod
    def wfdb(cls, path) -> "DataSource":
        """A directory of WFDB records (every ``*.hea``) or explicit record stems."""
        paths = [Path(p) for p in ([path] if isinstance(path, (str, Path)) else path)]
        stems = []
        for p in paths:
            if p.is_dir():
                stems += sorted(h.with_suffix("") for h in p.glob("*.hea"))
            else:
                stems.append(p)
        return cls("wfdb", tuple(stems))

    @classmethod
    def csv(cls, path) -> "DataSource":
        paths = [Path(p) for p in ([path] if isinstance(path, (str, Path)) else path)]
        files = []
        for p in paths:
            files += sorted(p.glob("*.csv")) if p.is_dir() else [p]
        return cls("csv", tuple(files))

    @classmethod
    def synth(cls) -> "DataSource":
        return cls("synth")


def kernel_from_config(cfg: PipelineConfig) -> KernelSpec:
    if cfg.kernel == "rbf":
        return KernelSpec("rbf", sigma=cfg.sigma)
    return KernelSpec("poly", a=cfg.poly_a, b=cfg.poly_b, degree=cfg.degree)


def train_config(cfg: PipelineConfig) -> TrainConfig:
    return TrainConfig(C=cfg.C, kkt_tolerance=cfg.kkt_tolerance, max_iterations=cfg.max_iterations,
                       selection=cfg.selection)


def load_records(cfg: PipelineConfig, source: DataSource):
    """Yield ``(record, annotations)`` pairs for the data source."""
    if source.kind == "synth":
        rng = np.random.default_rng(cfg.seed)
        specs = random_subject_specs(cfg.subjects, rng, cfg.noise_fraction, cfg.jitter_samples)
        return synth_generate(specs, cfg.duration_s, cfg.fs, rng)
    if not source.paths:
        raise PipelineError("ingest", f"no {source.kind} records found")
    out = []
    for p in source.paths:
        try:
            if source.kind == "wfdb":
                out.append(ingest.read_record(p))
            elif source.kind == "csv":
                out.append(ingest.load_csv(Path(p).read_text(), cfg.fs, name=Path(p).stem))
            else:
                raise PipelineError("ingest", f"unknown data source {source.kind!r}")
        except (ingest.IngestError, OSError) as exc:
            raise PipelineError("ingest", f"{p}: {exc}") from exc
    return out


def pipeline_run(cfg: PipelineConfig, source: DataSource, out_dir: str | Path) -> dict:
    """Run every stage, writing intermediate artifacts under ``out_dir``; returns the report."""
    out = Path(out_dir)
    for sub in ("ingest", "beats"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()

    records = load_records(cfg, source)
    spec = WindowSpec(cfg.pre_ms, cfg.post_ms, cfg.M)
    beats, excluded = [], {"degenerate": 0, "truncated": 0}
    for record, ann in records:
        name = record.header.record_name
        try:
            doc = ingest.to_ingest_json(record, ann, cfg.channel)
        except ingest.IngestError as exc:
            raise PipelineError("ingest", f"{name}: {exc}") from exc
        ingest.write_ingest_json(out / "ingest" / f"{name}.json", doc)
        mv = ingest.ingest_millivolts(doc)
        rec_beats, n_bad = segment_record(mv, doc["annotations"], doc["fs"], spec, name)
        excluded["degenerate"] += n_bad
        path = out / "beats" / f"{name}.jsonl"
        write_beats(path, rec_beats)
        beats += list(read_beats(path))
    timings["segment"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    basis = build_basis(cfg.L, cfg.delta, cfg.M)
    table, n_trunc = compute_features(beats, basis=basis, keep_truncated=not cfg.exclude_truncated)
    excluded["truncated"] = n_trunc
    (out / "features.csv").write_text(table.to_csv())
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tcfg = train_config(cfg)
    kernel, C = kernel_from_config(cfg), cfg.C
    grid_rows = []
    try:
        if cfg.grid == "default":
            best, grid_rows = grid_search(table, cfg.group, None, tcfg, cfg.fraction, cfg.strategy,
                                          cfg.honest_cv, cfg.scaling)
            kernel, C = best.kernel, best.C
        else:
            best = run_experiment(table, cfg.group, kernel, C, tcfg, cfg.fraction, cfg.strategy,
                                  scaling=cfg.scaling)
        t2 = table2_report(table, kernel, C, tcfg, cfg.fraction, cfg.strategy, cfg.scaling) \
            if cfg.table2 else []
    except ValueError as exc:
        raise PipelineError("evaluate", str(exc)) from exc
    timings["evaluate"] = time.perf_counter() - t0

    report = make_report([best], grid_rows, t2, cfg.to_dict(),
                         cfg.seed if source.kind == "synth" else None,
                         {"source": source.kind,
                          "subjects": sorted(set(table.labels)),
                          "n_beats": len(table),
                          "excluded": excluded})
    (out / "report.json").write_text(dump_report(report))
    (out / "report.md").write_text(render_report(report, "markdown"))
    # wall-clock times live outside the report so reports stay byte-reproducible
    (out / "timings.json").write_text(
        "{" + ",".join(f'"{k}":{v:.3f}' for k, v in timings.items()) + "}\n")
    log.info("pipeline finished: %s", ", ".join(f"{k} {v:.1f}s" for k, v in timings.items()))
    return report
