"""Identification experiments: chronological split, feature groups, grid search, feature-group comparison table."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import FeatureTable
from .svm import KernelSpec, MulticlassModel, TrainConfig, train_multiclass

log = logging.getLogger(__name__)

REPORT_FORMAT = "ecg-ident/report"
REPORT_VERSION = 1

MORPH_GROUPS = {
    "amplitude": ("Pp", "Pn"),
    "surface": ("ArP", "ArN", "Ar"),
    "interval": ("No", "Ima", "Imi"),
    "slope": ("S1", "S2"),
}
BASE_GROUPS = ("amplitude", "surface", "interval", "slope", "hpe")

# (row caption, group identifier, published global rate in %)
TABLE2_ROWS = (
    ("Pn+Pp", "amplitude", 95.0),
    ("ArN+Ar+ArP", "surface", 95.0),
    ("No+Ima+Imi", "interval", 94.99),
    ("S1+S2", "slope", 95.02),
    ("(Pn+Pp) and (ArN+Ar+ArP)", "amplitude+surface", 95.91),
    ("(ArN+Ar+ArP) and (No+Ima+Imi)", "surface+interval", 95.01),
    ("(ArN+Ar+ArP) and (S1+S2)", "surface+slope", 95.0),
    ("(Pn+Pp) and (No+Ima+Imi)", "amplitude+interval", 94.88),
    ("(S1+S2) and (No+Ima+Imi)", "slope+interval", 95.0),
    ("(Pn+Pp) and (S1+S2)", "amplitude+slope", 95.0),
    ("(Pn+Pp),(ArN+Ar+ArP),(No+Ima+Imi) and (S1+S2)", "all", 96.45),
    ("Cn (n=1..60)", "hpe", 96.33),
    ("(Pn+Pp),(ArN+Ar+ArP),(No+Ima+Imi),(S1+S2) and Cn", "all+hpe", 98.97),
)


class EvalError(ValueError):
    pass


def group_members(group: str) -> list[str]:
    """Expand a group identifier such as ``"amplitude+slope"`` or ``"all+hpe"`` into base groups."""
    parts = [p.strip() for p in group.lower().split("+") if p.strip()]
    if not parts:
        raise EvalError("empty feature group")
    members: list[str] = []
    for p in parts:
        expanded = list(MORPH_GROUPS) if p in ("all", "morph") else [p]
        for e in expanded:
            if e not in BASE_GROUPS:
                raise EvalError(f"unknown feature group {p!r}")
            if e not in members:
                members.append(e)
    return sorted(members, key=BASE_GROUPS.index)


def resolve_group(group: str, available: Sequence[str] | None = None, L: int = 60) -> list[str]:
    """Column names of ``group`` in canonical order.

    The Hermite order count is inferred from ``available`` when given.
    """
    if available is not None:
        hpe = [c for c in available if re.fullmatch(r"c\d+", c)]
        L = len(hpe)
    cols: list[str] = []
    for m in group_members(group):
        cols += list(MORPH_GROUPS[m]) if m != "hpe" else [f"c{n}" for n in range(L)]
    if not cols:
        raise EvalError(f"group {group!r} resolves to no columns")
    return cols


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(1000)


def chronological_split(labels: Sequence, ordinals: Sequence[int],
                        train_fraction=Fraction(2, 3)) -> tuple[np.ndarray, np.ndarray]:
    """Per subject, the first ceil(f*n) beats in time order train and the rest test."""
    frac = _as_fraction(train_fraction)
    if not 0 < frac < 1:
        raise EvalError("train fraction must lie strictly between 0 and 1")
    ordinals = np.asarray(ordinals)
    by_label: dict = {}
    for i, lab in enumerate(labels):
        by_label.setdefault(lab, []).append(i)
    train, test = [], []
    for lab in sorted(by_label):
        idx = sorted(by_label[lab], key=lambda i: (ordinals[i], i))
        n = len(idx)
        if n < 3:
            raise EvalError(f"subject {lab!r} has only {n} beats (need at least 3)")
        k = -(-frac.numerator * n // frac.denominator)
        k = min(k, n - 1)
        train += idx[:k]
        test += idx[k:]
    return np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)


@dataclass
class ExperimentResult:
    group: str
    n_features: int
    kernel: KernelSpec
    C: float
    labels: list
    confusion: np.ndarray
    n_train: int
    n_test: int
    converged: bool
    subject_rate: float

    @property
    def global_rate(self) -> float:
        total = self.confusion.sum()
        return 100.0 * float(np.trace(self.confusion)) / float(total) if total else 0.0

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "n_features": self.n_features,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "global_rate": self.global_rate,
            "subject_rate": self.subject_rate,
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "converged": self.converged,
        }


def confusion_matrix(true_idx: np.ndarray, pred_idx: np.ndarray, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (true_idx, pred_idx), 1)
    return cm


def _subject_vote_rate(true_idx: np.ndarray, pred_idx: np.ndarray, k: int) -> float:
    subjects = np.unique(true_idx)
    hits = 0
    for s in subjects:
        counts = np.bincount(pred_idx[true_idx == s], minlength=k)
        hits += int(np.argmax(counts) == s)
    return 100.0 * hits / len(subjects)


def column_blocks(columns: Sequence[str]) -> list[str]:
    """Feature-family tag per column: ``"hpe"`` for Hermite coefficients, ``"morph"`` otherwise."""
    return ["hpe" if re.fullmatch(r"c\d+", c) else "morph" for c in columns]


def fit_and_score(X_train, y_train, X_test, y_test, kernel: KernelSpec, C: float,
                  config: TrainConfig, strategy: str = "ovo", group: str = "",
                  columns=(), scaling: str = "block") -> tuple[MulticlassModel, ExperimentResult]:
    if scaling not in ("block", "zscore"):
        raise EvalError(f"unknown scaling {scaling!r}")
    blocks = column_blocks(columns) if scaling == "block" else None
    model = train_multiclass(X_train, y_train, kernel, replace(config, C=C), strategy, group,
                             columns, blocks)
    index = {lab: i for i, lab in enumerate(model.labels)}
    unknown = sorted(set(y_test) - set(index))
    if unknown:
        raise EvalError(f"test labels absent from training: {unknown}")
    true_idx = np.array([index[lab] for lab in y_test], dtype=np.int64)
    pred_idx = model.predict_indices(X_test)
    k = len(model.labels)
    cm = confusion_matrix(true_idx, pred_idx, k)
    result = ExperimentResult(group, X_train.shape[1], kernel, C, list(model.labels), cm,
                              len(y_train), len(y_test), model.converged,
                              _subject_vote_rate(true_idx, pred_idx, k))
    return model, result


def run_experiment(table: FeatureTable, group: str, kernel: KernelSpec, C: float,
                   config: TrainConfig = TrainConfig(), train_fraction=Fraction(2, 3),
                   strategy: str = "ovo", split=None, scaling: str = "block") -> ExperimentResult:
    """Standardize on the training split, train, and classify every test beat."""
    if len(set(table.labels)) < 2:
        raise EvalError("identification needs at least 2 subjects")
    columns = resolve_group(group, table.columns)
    X = table.select(columns)
    train, test = split if split is not None else chronological_split(
        table.labels, table.ordinals, train_fraction)
    labels = np.array(table.labels, dtype=object)
    _, result = fit_and_score(X[train], list(labels[train]), X[test], list(labels[test]),
                              kernel, C, config, strategy, group, columns, scaling)
    return result


def default_grid() -> list[tuple[KernelSpec, float]]:
    grid = []
    for C in (10.0, 100.0, 1000.0):
        for sigma in (0.25, 0.5, 0.75, 1.0):
            grid.append((KernelSpec("rbf", sigma=sigma), C))
        for d in (1.0, 2.0):
            grid.append((KernelSpec("poly", a=1.0, b=0.0, degree=d), C))
    return grid


def reference_best() -> tuple[KernelSpec, float]:
    return KernelSpec("rbf", sigma=0.5), 1000.0


def _grid_key(r: ExperimentResult):
    k = r.kernel
    return (-r.global_rate, r.C, 0 if k.kind == "rbf" else 1,
            k.sigma if k.kind == "rbf" else k.degree)


def grid_search(table: FeatureTable, group: str, grid: Iterable[tuple[KernelSpec, float]] | None = None,
                config: TrainConfig = TrainConfig(), train_fraction=Fraction(2, 3),
                strategy: str = "ovo", honest_cv: bool = False, scaling: str = "block"):
    """Evaluate every (kernel, C) cell; returns ``(best, rows)``.

    By default cells are ranked on the test split itself. With ``honest_cv`` they are
    ranked on a chronological inner split of the training data and only the winner is
    scored on the test split.
    """
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise EvalError("empty hyperparameter grid")
    train, test = chronological_split(table.labels, table.ordinals, train_fraction)
    if not honest_cv:
        rows = [run_experiment(table, group, k, C, config, strategy=strategy, split=(train, test),
                              scaling=scaling)
                for k, C in grid]
        return min(rows, key=_grid_key), rows
    inner = table.rows(train)
    itrain, ival = chronological_split(inner.labels, inner.ordinals, train_fraction)
    rows = [run_experiment(inner, group, k, C, config, strategy=strategy, split=(itrain, ival),
                           scaling=scaling)
            for k, C in grid]
    chosen = min(rows, key=_grid_key)
    best = run_experiment(table, group, chosen.kernel, chosen.C, config, strategy=strategy,
                          split=(train, test))
    return best, rows


def table2_report(table: FeatureTable, kernel: KernelSpec | None = None, C: float | None = None,
                  config: TrainConfig = TrainConfig(), train_fraction=Fraction(2, 3),
                  strategy: str = "ovo", scaling: str = "block") -> list[dict]:
    """Every reference feature-group row at one hyperparameter setting, with published rates and deltas."""
    if kernel is None or C is None:
        kernel, C = reference_best()
    split = chronological_split(table.labels, table.ordinals, train_fraction)
    rows = []
    for caption, group, published in TABLE2_ROWS:
        r = run_experiment(table, group, kernel, C, config, strategy=strategy, split=split,
                           scaling=scaling)
        rows.append({
            "row": caption,
            "group": group,
            "rate": r.global_rate,
            "reference_rate": published,
            "delta": r.global_rate - published,
            "experiment": r.to_dict(),
        })
    return rows


# ----------------------------------------------------------------------------
# report documents

def make_report(experiments: Sequence[ExperimentResult] = (), grid: Sequence[ExperimentResult] = (),
                table2: Sequence[dict] = (), config: dict | None = None, seed=None,
                extra: dict | None = None) -> dict:
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "seed": seed,
        "config": config or {},
        "experiments": [e.to_dict() for e in experiments],
        "grid": [g.to_dict() for g in grid],
        "table2": list(table2),
    }
    if extra:
        doc.update(extra)
    return doc


def dump_report(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_report(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != REPORT_FORMAT:
        raise EvalError(f"{path} is not a report document")
    if doc.get("version") != REPORT_VERSION:
        raise EvalError(f"unsupported report version {doc.get('version')}")
    return doc


def _kernel_text(k: dict) -> str:
    return KernelSpec.from_dict(k).label()


def render_report(doc: dict, fmt: str = "markdown") -> str:
    """Tabulate experiments, grid cells and the feature-group comparison."""
    sections = []
    if doc.get("experiments"):
        sections.append(("experiments", ["group", "kernel", "C", "global_rate", "subject_rate",
                                         "n_train", "n_test"],
                         [[e["group"], _kernel_text(e["kernel"]), f"{e['C']:g}",
                           f"{e['global_rate']:.2f}", f"{e['subject_rate']:.2f}",
                           str(e["n_train"]), str(e["n_test"])] for e in doc["experiments"]]))
    if doc.get("grid"):
        sections.append(("grid", ["group", "kernel", "C", "global_rate"],
                         [[e["group"], _kernel_text(e["kernel"]), f"{e['C']:g}",
                           f"{e['global_rate']:.2f}"] for e in doc["grid"]]))
    if doc.get("table2"):
        sections.append(("table2", ["row", "rate", "reference_rate", "delta"],
                         [[r["row"], f"{r['rate']:.2f}", f"{r['reference_rate']:.2f}",
                           f"{r['delta']:+.2f}"] for r in doc["table2"]]))
    out = []
    for name, head, rows in sections:
        if fmt == "csv":
            out.append(f"# {name}")
            out.append(",".join(head))
            out += [",".join(f'"{c}"' if "," in c else c for c in row) for row in rows]
        elif fmt == "markdown":
            out.append(f"### {name}")
            out.append("")
            out.append("| " + " | ".join(head) + " |")
            out.append("|" + "|".join("---" for _ in head) + "|")
            out += ["| " + " | ".join(row) + " |" for row in rows]
        else:
            raise EvalError(f"unknown report format {fmt!r}")
        out.append("")
    return "\n".join(out)
