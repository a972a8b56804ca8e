"""The ten amplitude/area/interval/slope descriptors of a QRS window."""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

NAMES = ("Pp", "Pn", "ArP", "ArN", "Ar", "No", "Ima", "Imi", "S1", "S2")

# fraction of the dominant peak a sample must exceed to be counted in No
SIGNIFICANT_FRACTION = 0.70


@dataclass(frozen=True)
class MorphDescriptors:
    Pp: float
    Pn: float
    ArP: float
    ArN: float
    Ar: float
    No: int
    Ima: float
    Imi: float
    S1: float
    S2: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


def compute_descriptors(window, fs: float) -> MorphDescriptors:
    """Descriptors of one window in mV; the window's first sample is the QRS onset."""
    row = descriptor_matrix(np.asarray(window, dtype=np.float64)[None, :], fs)[0]
    return MorphDescriptors(*row[:5], int(row[5]), *row[6:])


def descriptor_matrix(windows: np.ndarray, fs: float) -> np.ndarray:
    """Vectorized descriptors for an (n_beats, n_samples) stack; columns follow ``NAMES``."""
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("each window needs at least 2 samples")
    n, length = x.shape
    rows = np.arange(n)
    ms_per_sample = 1000.0 / fs

    i_max = np.argmax(x, axis=1)
    i_min = np.argmin(x, axis=1)
    vmax = x[rows, i_max]
    vmin = x[rows, i_min]
    pp = np.maximum(vmax, 0.0)
    pn = np.minimum(vmin, 0.0)

    arp = np.clip(x, 0.0, None).sum(axis=1)
    arn = -np.clip(x, None, 0.0).sum(axis=1)
    ar = arp + arn

    thresh = SIGNIFICANT_FRACTION * np.maximum(np.abs(pp), np.abs(pn))
    no = (np.abs(x) > thresh[:, None]).sum(axis=1).astype(np.float64)

    ima = i_max * ms_per_sample
    imi = i_min * ms_per_sample

    first = np.minimum(i_max, i_min)
    second = np.maximum(i_max, i_min)
    t1 = first * ms_per_sample
    t2 = second * ms_per_sample
    x0 = x[:, 0]
    x1 = x[rows, first]
    x2 = x[rows, second]
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = np.where(first > 0, (x1 - x0) / t1, 0.0)
        s2 = np.where(second > first, (x2 - x1) / (t2 - t1), 0.0)

    return np.column_stack([pp, pn, arp, arn, ar, no, ima, imi, s1, s2])
