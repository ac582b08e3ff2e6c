from .standardizer import StandardizedPool, standardize, standardize_all, DEGENERATE_SCALE
from .feature_matrix import (
    FeatureMatrix,
    FEATURES,
    average_per_lesion,
    aggregate_table,
    export_matrix,
    import_matrix
)

__all__ = [
    "StandardizedPool",
    "standardize",
    "standardize_all",
    "DEGENERATE_SCALE",
    "FeatureMatrix",
    "FEATURES",
    "average_per_lesion",
    "aggregate_table",
    "export_matrix",
    "import_matrix"
]
