"""Readers for PhysioNet WFDB records (format 212) and a plain CSV fallback."""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import USE_NUMBA, njit

DEFAULT_GAIN = 200.0

# MIT annotation pseudo-codes
SKIP, NUM, SUB, CHN, AUX = 59, 60, 61, 62, 63
BEAT_CODES = frozenset(list(range(1, 14)) + [34, 38])


class IngestError(ValueError):
    """Raised for malformed or unsupported input files."""


@dataclass(frozen=True)
class SignalSpec:
    file_name: str
    format_code: int
    gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    description: str = ""


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_rate: float
    n_samples: int | None
    signals: tuple[SignalSpec, ...]


@dataclass
class SignalRecord:
    """Decoded recording. ``channels`` has shape (n_signals, n_samples)."""

    header: RecordHeader
    channels: np.ndarray

    def __post_init__(self):
        self.channels = np.atleast_2d(self.channels)
        n = self.header.n_samples
        if n is not None and self.channels.shape[1] != n:
            raise IngestError(f"expected {n} samples per channel, got {self.channels.shape[1]}")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def fs(self) -> float:
        return self.header.sampling_rate

    def millivolts(self, channel: int = 0) -> np.ndarray:
        spec = self.header.signals[channel]
        return (self.channels[channel].astype(np.float64) - spec.baseline) / spec.gain


@dataclass
class AnnotationSet:
    samples: np.ndarray
    codes: np.ndarray
    channels: np.ndarray = field(default=None)
    provenance: str = "file"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int64)
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.channels is None:
            self.channels = np.zeros_like(self.samples)
        self.channels = np.asarray(self.channels, dtype=np.int64)
        if not (len(self.samples) == len(self.codes) == len(self.channels)):
            raise IngestError("annotation field lengths differ")
        if len(self.samples) and (self.samples[0] < 0 or np.any(np.diff(self.samples) <= 0)):
            raise IngestError("annotation sample indices must be non-negative and strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    def check_bounds(self, n_samples: int) -> None:
        if len(self.samples) and self.samples[-1] >= n_samples:
            raise IngestError(
                f"annotation at sample {int(self.samples[-1])} beyond record length {n_samples}"
            )


# ----------------------------------------------------------------------------
# header

_NUM = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


def _leading_number(token: str, what: str) -> float:
    m = _NUM.match(token)
    if not m:
        raise IngestError(f"cannot parse {what} from {token!r}")
    return float(m.group(0))


def _parse_gain(token: str) -> tuple[float, int | None, str]:
    # "200", "200/mV", "200(0)/mV", "0"
    m = re.fullmatch(r"([+-]?[\d.eE+-]+)(?:\(([+-]?\d+)\))?(?:/(\S+))?", token)
    if not m:
        raise IngestError(f"malformed gain field {token!r}")
    gain = float(m.group(1))
    baseline = int(m.group(2)) if m.group(2) is not None else None
    return (gain if gain != 0 else DEFAULT_GAIN), baseline, m.group(3) or "mV"


def parse_header(text: str) -> RecordHeader:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise IngestError("empty header")
    head = lines[0].split()
    if len(head) < 2:
        raise IngestError(f"malformed record line {lines[0]!r}")
    name = head[0]
    if "/" in name:
        raise IngestError("multi-segment records are not supported")
    try:
        n_signals = int(head[1])
    except ValueError:
        raise IngestError(f"malformed signal count {head[1]!r}") from None
    if n_signals < 1:
        raise IngestError("record declares no signals")
    fs = _leading_number(head[2], "sampling rate") if len(head) > 2 else 250.0
    if fs <= 0:
        raise IngestError("sampling rate must be positive")
    n_samples = int(head[3]) if len(head) > 3 else None

    sig_lines = lines[1:]
    if len(sig_lines) != n_signals:
        raise IngestError(f"header declares {n_signals} signals but has {len(sig_lines)} signal lines")
    signals = []
    for ln in sig_lines:
        parts = ln.split(maxsplit=8)
        if len(parts) < 2:
            raise IngestError(f"malformed signal line {ln!r}")
        fmt = int(_leading_number(parts[1], "format"))
        if fmt != 212:
            raise IngestError(f"unsupported signal format {fmt} (only 212 is supported)")
        gain, baseline, units = DEFAULT_GAIN, None, "mV"
        if len(parts) > 2:
            gain, baseline, units = _parse_gain(parts[2])
        adc_zero = int(parts[4]) if len(parts) > 4 else 0
        if baseline is None:
            baseline = adc_zero
        desc = parts[8] if len(parts) > 8 else ""
        signals.append(SignalSpec(parts[0], fmt, gain, baseline, units, desc))
    return RecordHeader(name, n_signals, fs, n_samples, tuple(signals))


# ----------------------------------------------------------------------------
# format 212

def decode_212(data: bytes, n_samples: int, n_signals: int) -> np.ndarray:
    """Unpack format-212 bytes into an (n_signals, n_samples) int16 array."""
    total = n_samples * n_signals
    need = (total * 3 + 1) // 2
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size < need:
        raise IngestError(f"truncated signal file: need {need} bytes, have {buf.size}")
    n_groups = (total + 1) // 2
    raw = np.zeros(n_groups * 3, dtype=np.uint8)
    raw[:need] = buf[:need]
    g = raw.reshape(-1, 3).astype(np.int32)
    out = np.empty(n_groups * 2, dtype=np.int32)
    out[0::2] = ((g[:, 1] & 0x0F) << 8) | g[:, 0]
    out[1::2] = ((g[:, 1] & 0xF0) << 4) | g[:, 2]
    out[out > 2047] -= 4096
    return out[:total].astype(np.int16).reshape(n_samples, n_signals).T.copy()


# ----------------------------------------------------------------------------
# annotations

@njit(cache=True)
def _scan_annotation_words(buf):
    # returns (times, codes, chans, n, status); status 0 ok, 1 no EOF
    n_bytes = buf.shape[0]
    cap = n_bytes // 2 + 1
    times = np.empty(cap, dtype=np.int64)
    codes = np.empty(cap, dtype=np.int64)
    chans = np.empty(cap, dtype=np.int64)
    n = 0
    t = 0
    chan = 0
    pos = 0
    while pos + 1 < n_bytes:
        word = np.int64(buf[pos]) | (np.int64(buf[pos + 1]) << 8)
        pos += 2
        code = word >> 10
        inc = word & 0x3FF
        if code == 0 and inc == 0:
            return times, codes, chans, n, 0
        if code == SKIP:
            if pos + 3 >= n_bytes:
                return times, codes, chans, n, 1
            hi = np.int64(buf[pos]) | (np.int64(buf[pos + 1]) << 8)
            lo = np.int64(buf[pos + 2]) | (np.int64(buf[pos + 3]) << 8)
            skip = (hi << 16) | lo
            if skip >= 2147483648:
                skip -= 4294967296
            t += skip
            pos += 4
        elif code == NUM or code == SUB:
            pass
        elif code == CHN:
            chan = inc
            if n > 0:
                chans[n - 1] = inc
        elif code == AUX:
            pos += inc + (inc & 1)
        else:
            t += inc
            times[n] = t
            codes[n] = code
            chans[n] = chan
            n += 1
    return times, codes, chans, n, 1


def read_annotations(data: bytes, beat_codes=BEAT_CODES) -> AnnotationSet:
    """Decode an MIT-format annotation stream, keeping beat annotations only.

    Pass ``beat_codes=None`` to keep every non-pseudo annotation.
    """
    buf = np.frombuffer(data, dtype=np.uint8)
    scan = _scan_annotation_words if USE_NUMBA else getattr(
        _scan_annotation_words, "py_func", _scan_annotation_words)
    times, codes, chans, n, status = scan(buf)
    if status != 0:
        raise IngestError("annotation stream ended before the EOF word")
    times, codes, chans = times[:n], codes[:n], chans[:n]
    if beat_codes is not None:
        keep = np.isin(codes, np.fromiter(beat_codes, dtype=np.int64))
        times, codes, chans = times[keep], codes[keep], chans[keep]
    return AnnotationSet(times, codes, chans, provenance="file")


# ----------------------------------------------------------------------------
# record / csv loaders

def read_record(stem: str | Path, annotator: str = "atr") -> tuple[SignalRecord, AnnotationSet]:
    """Load ``<stem>.hea``, its format-212 signal file and ``<stem>.<annotator>``."""
    stem = Path(stem)
    hea = stem.with_name(stem.name + ".hea")
    if not hea.exists():
        raise IngestError(f"header file not found: {hea}")
    header = parse_header(hea.read_text())
    files = {s.file_name for s in header.signals}
    if len(files) != 1:
        raise IngestError("signals spread over several files are not supported")
    dat = stem.parent / files.pop()
    if not dat.exists():
        raise IngestError(f"signal file not found: {dat}")
    data = dat.read_bytes()
    n_samples = header.n_samples
    if n_samples is None:
        n_samples = (len(data) * 2 // 3) // header.n_signals
    channels = decode_212(data, n_samples, header.n_signals)
    if header.n_samples is None:
        header = RecordHeader(header.record_name, header.n_signals, header.sampling_rate,
                              n_samples, header.signals)
    record = SignalRecord(header, channels)
    atr = stem.with_name(stem.name + "." + annotator)
    if not atr.exists():
        raise IngestError(f"annotation file not found: {atr}")
    ann = read_annotations(atr.read_bytes())
    ann.check_bounds(record.n_samples)
    return record, ann


def load_csv(text: str, fs: float = 360.0, name: str = "csv") -> tuple[SignalRecord, AnnotationSet]:
    """Parse ``sample,mv[,r_peak]`` text. Values are kept in mV (gain 1, baseline 0)."""
    reader = csv.reader(io.StringIO(text))
    try:
        columns = [c.strip() for c in next(reader)]
    except StopIteration:
        raise IngestError("empty CSV") from None
    for required in ("sample", "mv"):
        if required not in columns:
            raise IngestError(f"CSV is missing required column {required!r}")
    i_mv = columns.index("mv")
    i_flag = columns.index("r_peak") if "r_peak" in columns else None
    mv, flags = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            float(row[columns.index("sample")])
            mv.append(float(row[i_mv]))
            if i_flag is not None:
                flags.append(int(float(row[i_flag])))
        except (ValueError, IndexError):
            raise IngestError(f"non-numeric or missing cell on line {lineno}") from None
    if not mv:
        raise IngestError("CSV has no samples")
    values = np.array(mv, dtype=np.float64)
    header = RecordHeader(name, 1, float(fs), len(values),
                          (SignalSpec(name, 0, 1.0, 0, "mV", "csv"),))
    record = SignalRecord(header, values[None, :])
    idx = np.flatnonzero(np.array(flags)) if flags else np.array([], dtype=np.int64)
    ann = AnnotationSet(idx, np.ones(len(idx), dtype=np.int64), provenance="csv")
    return record, ann


# ----------------------------------------------------------------------------
# ingest JSON (interchange with the beats stage)

def to_ingest_json(record: SignalRecord, ann: AnnotationSet, channel: int = 0) -> dict:
    if not 0 <= channel < record.header.n_signals:
        raise IngestError(f"channel {channel} not in record with {record.header.n_signals} signals")
    spec = record.header.signals[channel]
    raw = record.channels[channel]
    values = raw.tolist() if raw.dtype.kind == "f" else [int(v) for v in raw]
    return {
        "format": "ecg-ident/ingest",
        "version": 1,
        "record": record.header.record_name,
        "fs": record.header.sampling_rate,
        "channel": channel,
        "gain": spec.gain,
        "baseline": spec.baseline,
        "description": spec.description,
        "provenance": ann.provenance,
        "samples": values,
        "annotations": [int(s) for s in ann.samples],
    }


def write_ingest_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, separators=(",", ":")))


def read_ingest_json(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ecg-ident/ingest":
        raise IngestError(f"{path} is not an ingest document")
    return doc


def ingest_millivolts(doc: dict) -> np.ndarray:
    return (np.asarray(doc["samples"], dtype=np.float64) - doc["baseline"]) / doc["gain"]

