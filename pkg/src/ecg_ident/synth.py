"""Synthetic single-lead recordings built from per-subject Gaussian-bump beat templates."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .ingest import AnnotationSet, RecordHeader, SignalRecord, SignalSpec


@dataclass(frozen=True)
class Bump:
    center_ms: float  # relative to the R peak
    width_ms: float
    amplitude_mv: float


@dataclass(frozen=True)
class SyntheticSubjectSpec:
    bumps: tuple[Bump, ...]
    heart_rate_bpm: float = 72.0
    noise_std_mv: float = 0.0
    jitter_std_samples: float = 0.0

    def __post_init__(self):
        if len(self.bumps) != 3:
            raise ValueError("a template is made of exactly 3 bumps")
        if any(b.width_ms <= 0 for b in self.bumps):
            raise ValueError("bump widths must be positive")
        if not 30 <= self.heart_rate_bpm <= 200:
            raise ValueError("heart rate must lie in [30, 200] bpm")
        if self.noise_std_mv < 0 or self.jitter_std_samples < 0:
            raise ValueError("noise and jitter must be non-negative")

    def peak_mv(self) -> float:
        t = np.linspace(-200.0, 200.0, 4001)
        return float(np.abs(template(self, t)).max())


def template(spec: SyntheticSubjectSpec, t_ms) -> np.ndarray:
    t_ms = np.asarray(t_ms, dtype=np.float64)
    out = np.zeros_like(t_ms)
    for b in spec.bumps:
        out += b.amplitude_mv * np.exp(-0.5 * ((t_ms - b.center_ms) / b.width_ms) ** 2)
    return out


def random_subject_specs(k: int, rng: np.random.Generator, noise_fraction: float = 0.05,
                         jitter_samples: float = 2.0) -> list[SyntheticSubjectSpec]:
    """Draw ``k`` Q/R/S-like templates; noise std is ``noise_fraction`` of each template's peak."""
    specs = []
    for _ in range(k):
        q = Bump(-rng.uniform(15, 35), rng.uniform(5, 12), -rng.uniform(0.05, 0.5))
        r = Bump(0.0, rng.uniform(7, 16), rng.uniform(0.8, 2.0))
        s = Bump(rng.uniform(18, 45), rng.uniform(6, 16), -rng.uniform(0.1, 0.7))
        bpm = float(rng.uniform(55, 95))
        base = SyntheticSubjectSpec((q, r, s), bpm)
        specs.append(SyntheticSubjectSpec((q, r, s), bpm, noise_fraction * base.peak_mv(),
                                          jitter_samples))
    return specs


def synth_record(spec: SyntheticSubjectSpec, duration_s: float, fs: float,
                 rng: np.random.Generator, name: str) -> tuple[SignalRecord, AnnotationSet]:
    n = int(round(duration_s * fs))
    rr = 60.0 * fs / spec.heart_rate_bpm
    # support of the template in samples, generous enough for every bump
    reach = int(np.ceil(max(abs(b.center_ms) + 6 * b.width_ms for b in spec.bumps) * fs / 1000.0))
    offsets = np.arange(-reach, reach + 1)
    shape = template(spec, offsets * 1000.0 / fs)

    peaks = []
    pos = 0.5 * rr
    while True:
        p = int(round(pos))
        if p >= n:
            break
        peaks.append(p)
        pos += rr + (rng.normal(0.0, spec.jitter_std_samples) if spec.jitter_std_samples else 0.0)
    x = np.zeros(n)
    for p in peaks:
        lo, hi = max(p - reach, 0), min(p + reach + 1, n)
        x[lo:hi] += shape[lo - (p - reach):hi - (p - reach)]
    if spec.noise_std_mv:
        x += rng.normal(0.0, spec.noise_std_mv, size=n)
    header = RecordHeader(name, 1, float(fs), n, (SignalSpec(name, 0, 1.0, 0, "mV", "synthetic"),))
    peaks = np.asarray(peaks, dtype=np.int64)
    return SignalRecord(header, x[None, :]), AnnotationSet(peaks, np.ones(len(peaks)),
                                                             provenance="synthetic")


def synth_generate(specs, duration_s: float = 120.0, fs: float = 360.0,
                   seed: int | np.random.Generator = 7) -> list[tuple[SignalRecord, AnnotationSet]]:
    """One record per subject spec. ``specs`` may be a list or a subject count."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(specs, int):
        specs = random_subject_specs(specs, rng)
    if len(specs) < 2:
        raise ValueError("need at least 2 subjects")
    return [synth_record(s, duration_s, fs, rng, f"S{i:02d}") for i, s in enumerate(specs)]


def to_csv(record: SignalRecord, ann: AnnotationSet) -> str:
    flags = np.zeros(record.n_samples, dtype=np.int64)
    flags[ann.samples] = 1
    buf = io.StringIO()
    buf.write("sample,mv,r_peak\n")
    for i, (v, f) in enumerate(zip(record.millivolts(0).tolist(), flags.tolist())):
        buf.write(f"{i},{v!r},{f}\n")
    return buf.getvalue()
