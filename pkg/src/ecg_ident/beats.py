"""Per-beat windows cut around annotated R peaks."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)


class DegenerateBeatError(ValueError):
    """A window with zero energy after mean removal."""


def ms_to_samples(ms: float, fs: float) -> int:
    """Convert a duration to a sample count, rounding half away from zero."""
    x = ms * fs / 1000.0
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class WindowSpec:
    pre_r_ms: float = 50.0
    post_r_ms: float = 100.0
    M: int = 100

    def __post_init__(self):
        if self.pre_r_ms <= 0 or self.post_r_ms <= 0:
            raise ValueError("window extents must be positive")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")

    def qs_bounds(self, fs: float) -> tuple[int, int]:
        """Samples before R and samples from R onward."""
        return ms_to_samples(self.pre_r_ms, fs), ms_to_samples(self.post_r_ms, fs)

    def qs_length(self, fs: float) -> int:
        return sum(self.qs_bounds(fs))


@dataclass(frozen=True)
class Heartbeat:
    r_index: int
    qs_window: np.ndarray
    hermite_window: np.ndarray
    fs: float
    subject_label: str
    beat_ordinal: int
    truncated: bool = False


def _window(x: np.ndarray, start: int, length: int) -> tuple[np.ndarray, bool]:
    out = np.zeros(length, dtype=np.float64)
    lo, hi = max(start, 0), min(start + length, len(x))
    if hi > lo:
        out[lo - start:hi - start] = x[lo:hi]
    return out, (lo != start or hi != start + length)


def segment_qs(x: np.ndarray, r_index: int, spec: WindowSpec, fs: float) -> tuple[np.ndarray, bool]:
    """Return the Q-to-S window and a truncation flag.

    The window spans ``[r - pre, r + post - 1]``; positions outside the record are
    zero-filled.
    """
    pre, post = spec.qs_bounds(fs)
    return _window(np.asarray(x, dtype=np.float64), r_index - pre, pre + post)


def extract_hermite_window(x: np.ndarray, r_index: int, M: int) -> tuple[np.ndarray, bool]:
    return _window(np.asarray(x, dtype=np.float64), r_index - M, 2 * M + 1)


def normalize_beat(window: np.ndarray) -> np.ndarray:
    """Zero mean, unit Euclidean norm."""
    w = np.asarray(window, dtype=np.float64)
    centered = w - w.mean()
    norm = np.linalg.norm(centered)
    # constant windows leave only rounding noise after centering
    if norm == 0.0 or norm <= 1e-12 * max(np.abs(w).max(), 1e-300) * math.sqrt(w.size):
        raise DegenerateBeatError("window is constant")
    return centered / norm


def segment_record(mv: np.ndarray, r_peaks: Iterable[int], fs: float, spec: WindowSpec,
                   label: str) -> tuple[list[Heartbeat], int]:
    """Cut every annotated beat of one record; returns ``(beats, n_degenerate)``."""
    mv = np.asarray(mv, dtype=np.float64)
    beats, n_bad = [], 0
    for ordinal, r in enumerate(r_peaks):
        r = int(r)
        qs, t1 = segment_qs(mv, r, spec, fs)
        raw, t2 = extract_hermite_window(mv, r, spec.M)
        try:
            hw = normalize_beat(raw)
        except DegenerateBeatError:
            n_bad += 1
            continue
        beats.append(Heartbeat(r, qs, hw, fs, label, ordinal, t1 or t2))
    if n_bad:
        log.info("%s: excluded %d degenerate beats", label, n_bad)
    return beats, n_bad


# ----------------------------------------------------------------------------
# beats file: one JSON object per line

def beat_to_line(b: Heartbeat) -> str:
    return json.dumps({
        "label": b.subject_label,
        "ordinal": b.beat_ordinal,
        "r_index": b.r_index,
        "fs": b.fs,
        "flags": ["truncated"] if b.truncated else [],
        "qs_window": b.qs_window.tolist(),
        "hermite_window": b.hermite_window.tolist(),
    }, separators=(",", ":"))


def beat_from_line(line: str) -> Heartbeat:
    d = json.loads(line)
    return Heartbeat(
        r_index=int(d["r_index"]),
        qs_window=np.asarray(d["qs_window"], dtype=np.float64),
        hermite_window=np.asarray(d["hermite_window"], dtype=np.float64),
        fs=float(d["fs"]),
        subject_label=str(d["label"]),
        beat_ordinal=int(d["ordinal"]),
        truncated="truncated" in d.get("flags", []),
    )


def write_beats(path: str | Path, beats: Iterable[Heartbeat]) -> None:
    with open(path, "w") as fh:
        for b in beats:
            fh.write(beat_to_line(b))
            fh.write("\n")


def read_beats(path: str | Path) -> Iterator[Heartbeat]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield beat_from_line(line)
