__version__ = "0.1.0"

from .config_manager import ConfigManager, deep_merge
from .errors import (
    LesionABCError,
    ConfigError,
    DatasetError,
    ImagingError,
    ScoringError,
    AggregationError,
    StatsError,
    TrainingError
)
from .interfaces import AnnotationScorer, ConfigManagerInterface
from .logger import setup_logging, progress_enabled
from .report import build_meta, sha256_file, write_json


__all__ = [
    "ConfigManager",
    "deep_merge",
    "LesionABCError",
    "ConfigError",
    "DatasetError",
    "ImagingError",
    "ScoringError",
    "AggregationError",
    "StatsError",
    "TrainingError",
    "AnnotationScorer",
    "ConfigManagerInterface",
    "setup_logging",
    "progress_enabled",
    "build_meta",
    "sha256_file",
    "write_json",
    "__version__"
]
