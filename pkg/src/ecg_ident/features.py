"""Per-beat feature tables (morphological descriptors and Hermite coefficients) and their CSV form."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .beats import Heartbeat
from .hermite import HermiteBasis, build_basis, fit_matrix
from .morph import NAMES as MORPH_COLUMNS, descriptor_matrix

log = logging.getLogger(__name__)


def hpe_columns(L: int) -> list[str]:
    return [f"c{n}" for n in range(L)]


@dataclass
class FeatureTable:
    labels: list[str]
    ordinals: np.ndarray
    columns: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.ordinals = np.asarray(self.ordinals, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.labels), len(self.columns))

    def __len__(self) -> int:
        return len(self.labels)

    def select(self, columns: Sequence[str]) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.columns)}
        missing = [c for c in columns if c not in index]
        if missing:
            raise KeyError(f"feature table lacks columns {missing}")
        return self.values[:, [index[c] for c in columns]]

    def rows(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable([self.labels[i] for i in idx], self.ordinals[idx], list(self.columns),
                            self.values[idx])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "ordinal", *self.columns])
        for lab, o, row in zip(self.labels, self.ordinals.tolist(), self.values.tolist()):
            w.writerow([lab, o, *(repr(v) for v in row)])
        return buf.getvalue()


def read_features_csv(text: str) -> FeatureTable:
    reader = csv.reader(io.StringIO(text))
    try:
        head = next(reader)
    except StopIteration:
        raise ValueError("empty feature CSV") from None
    if head[:2] != ["label", "ordinal"]:
        raise ValueError("feature CSV must start with label,ordinal columns")
    labels, ords, vals = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(head):
            raise ValueError(f"line {lineno}: expected {len(head)} cells, got {len(row)}")
        try:
            ords.append(int(row[1]))
            vals.append([float(v) for v in row[2:]])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric cell") from None
        labels.append(row[0])
    return FeatureTable(labels, np.array(ords, dtype=np.int64), head[2:],
                        np.array(vals, dtype=np.float64).reshape(len(labels), len(head) - 2))


def load_features(paths: Sequence[str | Path]) -> FeatureTable:
    """Read and column-join several feature CSVs on (label, ordinal)."""
    tables = [read_features_csv(Path(p).read_text()) for p in paths]
    return join_tables(tables)


def join_tables(tables: Sequence[FeatureTable]) -> FeatureTable:
    out = tables[0]
    for t in tables[1:]:
        key = {(lab, int(o)): i for i, (lab, o) in enumerate(zip(t.labels, t.ordinals))}
        keep, other = [], []
        for i, (lab, o) in enumerate(zip(out.labels, out.ordinals)):
            j = key.get((lab, int(o)))
            if j is not None:
                keep.append(i)
                other.append(j)
        new_cols = [c for c in t.columns if c not in out.columns]
        sel = [t.columns.index(c) for c in new_cols]
        out = FeatureTable([out.labels[i] for i in keep], out.ordinals[keep], out.columns + new_cols,
                           np.hstack([out.values[keep], t.values[other][:, sel]]))
    return out


def compute_features(beats: Sequence[Heartbeat], morph: bool = True, hpe: bool = True,
                     basis: HermiteBasis | None = None, keep_truncated: bool = False,
                     with_residual: bool = True) -> tuple[FeatureTable, int]:
    """Feature table for ``beats``; returns ``(table, n_truncated_excluded)``."""
    if not morph and not hpe:
        raise ValueError("select at least one feature family")
    kept = [b for b in beats if keep_truncated or not b.truncated]
    n_excluded = len(beats) - len(kept)
    if n_excluded:
        log.info("excluded %d truncated beats", n_excluded)
    labels = [b.subject_label for b in kept]
    ordinals = np.array([b.beat_ordinal for b in kept], dtype=np.int64)
    columns: list[str] = []
    blocks = []
    if morph:
        columns += MORPH_COLUMNS
        by_fs: dict[float, list[int]] = {}
        for i, b in enumerate(kept):
            by_fs.setdefault(b.fs, []).append(i)
        block = np.zeros((len(kept), len(MORPH_COLUMNS)))
        for fs, idx in by_fs.items():
            block[idx] = descriptor_matrix(np.stack([kept[i].qs_window for i in idx]), fs)
        blocks.append(block)
    if hpe:
        if kept:
            M = (len(kept[0].hermite_window) - 1) // 2
            basis = basis or build_basis(M=M)
            c, nrmse = fit_matrix(np.stack([b.hermite_window for b in kept]), basis)
        else:
            basis = basis or build_basis()
            c, nrmse = np.zeros((0, basis.L)), np.zeros(0)
        columns += hpe_columns(basis.L)
        blocks.append(c)
        if with_residual:
            columns.append("residual")
            blocks.append(nrmse[:, None])
    values = np.hstack(blocks) if kept else np.zeros((0, len(columns)))
    return FeatureTable(labels, ordinals, columns, values), n_excluded
