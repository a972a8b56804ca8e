"""Personal identification from single-lead ECG beats.

Stages: :mod:`ingest` (WFDB/CSV), :mod:`beats` (R-anchored windows),
:mod:`morph` and :mod:`hermite` (features), :mod:`svm` (SMO-trained kernel
SVMs) and :mod:`evaluate` (chronological hold-out, grids, the 13-row feature-group comparison).
"""
from .beats import Heartbeat, WindowSpec, normalize_beat, segment_qs, extract_hermite_window
from .hermite import HermiteBasis, HermiteCoeffs, build_basis, fit_coefficients, reconstruct
from .ingest import AnnotationSet, RecordHeader, SignalRecord, decode_212, parse_header, read_annotations
from .morph import MorphDescriptors, compute_descriptors
from .svm import KernelSpec, MulticlassModel, TrainConfig, kernel_eval, train_binary, train_multiclass

__all__ = [
    "Heartbeat",
    "WindowSpec",
    "normalize_beat",
    "segment_qs",
    "extract_hermite_window",
    "HermiteBasis",
    "HermiteCoeffs",
    "build_basis",
    "fit_coefficients",
    "reconstruct",
    "AnnotationSet",
    "RecordHeader",
    "SignalRecord",
    "decode_212",
    "parse_header",
    "read_annotations",
    "MorphDescriptors",
    "compute_descriptors",
    "KernelSpec",
    "MulticlassModel",
    "TrainConfig",
    "kernel_eval",
    "train_binary",
    "train_multiclass",
]
__version__ = "0.1.0"
