"""Static PE feature extraction, hashing vectorizer, and boosted-tree baseline."""

from .pe import ParsedPe, ParseStatus, parse_pe, entry_section, section_entropy
from .features import (
    SchemaError,
    byte_entropy_histogram,
    byte_histogram,
    extract_raw,
    record_to_json,
    string_stats,
    validate_record,
)
from .hashing import murmur3_32, hash_pairs, hash_strings
from .vectorizer import DIM, layout_manifest, vectorize
from .dataset import (
    DataError,
    DatasetStats,
    JsonlError,
    dataset_stats,
    read_jsonl,
    read_labels,
    read_matrix,
    to_matrix,
    write_jsonl,
)
from .gbdt import BoostedModel, TrainParams, load_model, predict_proba, save_model, train
from .metrics import RocCurve, auc, evaluation_report, roc_curve, tpr_at_fpr
from .estimators import BoostedTreesClassifier, RawFeatureExtractor, RecordVectorizer

__version__ = "0.1.0"

__all__ = [
    "ParsedPe",
    "ParseStatus",
    "parse_pe",
    "entry_section",
    "section_entropy",
    "SchemaError",
    "byte_entropy_histogram",
    "byte_histogram",
    "extract_raw",
    "record_to_json",
    "string_stats",
    "validate_record",
    "murmur3_32",
    "hash_pairs",
    "hash_strings",
    "DIM",
    "layout_manifest",
    "vectorize",
    "DataError",
    "DatasetStats",
    "JsonlError",
    "dataset_stats",
    "read_jsonl",
    "read_labels",
    "read_matrix",
    "to_matrix",
    "write_jsonl",
    "BoostedModel",
    "TrainParams",
    "load_model",
    "predict_proba",
    "save_model",
    "train",
    "RocCurve",
    "auc",
    "evaluation_report",
    "roc_curve",
    "tpr_at_fpr",
    "BoostedTreesClassifier",
    "RawFeatureExtractor",
    "RecordVectorizer",
    "__version__",
]
