"""Selective-prediction evaluation toolkit for multi-label classifiers."""

from .confidence import ConfidenceMatrix, EstimatorSpec, estimate_confidences
from .core import BinaryLabelView, Dataset, LabelSet, PredictionRecord, binary_view, validate_dataset
from .io import ingest, write_jsonl
from .selective import aurcc, macro_f1, macro_metrics, refinement, risk_coverage_curve, rpp

__all__ = [
    "BinaryLabelView",
    "ConfidenceMatrix",
    "Dataset",
    "EstimatorSpec",
    "LabelSet",
    "PredictionRecord",
    "aurcc",
    "binary_view",
    "estimate_confidences",
    "ingest",
    "macro_f1",
    "macro_metrics",
    "refinement",
    "risk_coverage_curve",
    "rpp",
    "validate_dataset",
    "write_jsonl",
]

__version__ = "0.1.0"
