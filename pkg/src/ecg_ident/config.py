"""Flat ``key = value`` pipeline configuration; defaults are the published settings."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # beats
    pre_ms: float = 50.0
    post_ms: float = 100.0
    M: int = 100
    channel: int = 0
    fs: float = 360.0  # only for CSV input, which carries no rate
    exclude_truncated: bool = True
    # hermite
    L: int = 60
    delta: float = 10.0
    # svm
    kernel: str = "rbf"
    sigma: float = 0.5
    C: float = 1000.0
    degree: float = 2.0
    poly_a: float = 1.0
    poly_b: float = 0.0
    strategy: str = "ovo"
    selection: str = "second-order"
    scaling: str = "block"
    kkt_tolerance: float = 1e-3
    max_iterations: int = 1_000_000
    # evaluation
    group: str = "all+hpe"
    train_fraction: str = "2/3"
    grid: str = "none"
    honest_cv: bool = False
    table2: bool = True
    # synthetic data
    seed: int = 7
    subjects: int = 18
    duration_s: float = 120.0
    noise_fraction: float = 0.05
    jitter_samples: float = 2.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            frac = Fraction(self.train_fraction)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"train_fraction {self.train_fraction!r} is not a fraction") from None
        checks = [
            (self.pre_ms > 0 and self.post_ms > 0, "window extents must be positive"),
            (self.M >= 1, "M must be >= 1"),
            (self.channel >= 0, "channel must be >= 0"),
            (self.fs > 0, "fs must be positive"),
            (self.L >= 1, "L must be >= 1"),
            (self.delta > 0, "delta must be positive"),
            (self.kernel in ("rbf", "poly"), "kernel must be rbf or poly"),
            (self.sigma > 0, "sigma must be positive"),
            (self.C > 0, "C must be positive"),
            (self.degree > 0, "degree must be positive"),
            (self.strategy in ("ovo", "ovr"), "strategy must be ovo or ovr"),
            (self.selection in ("first-order", "second-order"), "selection must be first-order or second-order"),
            (self.scaling in ("block", "zscore"), "scaling must be block or zscore"),
            (self.kkt_tolerance > 0, "kkt_tolerance must be positive"),
            (self.max_iterations >= 1, "max_iterations must be >= 1"),
            (0 < frac < 1, "train_fraction must lie in (0, 1)"),
            (self.grid in ("none", "default"), "grid must be none or default"),
            (self.subjects >= 2, "subjects must be >= 2"),
            (self.duration_s > 0, "duration_s must be positive"),
            (self.noise_fraction >= 0 and self.jitter_samples >= 0, "noise and jitter must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.train_fraction)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **overrides) -> "PipelineConfig":
        return from_mapping({**self.to_dict(), **overrides})


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, value, kind: str):
    if not isinstance(value, str):
        return value
    v = value.strip()
    try:
        if kind == "bool":
            if v.lower() in ("1", "true", "yes", "on"):
                return True
            if v.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == "int":
            return int(v)
        if kind == "float":
            return float(v)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return v


def from_mapping(mapping: dict) -> PipelineConfig:
    unknown = sorted(set(mapping) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = {k: _coerce(k, v, _TYPES[k]) for k, v in mapping.items()}
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str) -> PipelineConfig:
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        mapping[key] = value
    return from_mapping(mapping)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return parse_config(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
