from .records import (
    Source,
    Feature,
    STUDENT_SCALES,
    LesionRecord,
    AnnotationRecord,
    AnnotationTable,
    DatasetManifest,
    ValidationReport
)
from .loader import (
    load_manifest,
    save_manifest,
    load_annotations,
    save_annotations,
    format_float,
    check_field_counts,
)
from .validator import validate_dataset

__all__ = [
    "Source",
    "Feature",
    "STUDENT_SCALES",
    "LesionRecord",
    "AnnotationRecord",
    "AnnotationTable",
    "DatasetManifest",
    "ValidationReport",
    "load_manifest",
    "save_manifest",
    "load_annotations",
    "save_annotations",
    "format_float",
    "check_field_counts",
    "validate_dataset"
]
