from .correlation import (
    BANDS,
    DEFAULT_THRESHOLDS,
    CorrelationResult,
    LabelCorrelationTable,
    AgreementMatrix,
    pearson,
    strength_band,
    align_labels,
    correlation_with_label,
    spread_correlation_with_label,
    agreement_matrix
)
from .raincloud import BoxSummary, RaincloudData, raincloud_export, gaussian_kde, silverman_bandwidth
from .permutation import permute_annotations
from .reports import (
    write_correlations_json,
    write_agreement_csv,
    write_raincloud_csv,
    raincloud_filename,
    agreement_filename
)

__all__ = [
    "BANDS",
    "DEFAULT_THRESHOLDS",
    "CorrelationResult",
    "LabelCorrelationTable",
    "AgreementMatrix",
    "pearson",
    "strength_band",
    "align_labels",
    "correlation_with_label",
    "spread_correlation_with_label",
    "agreement_matrix",
    "BoxSummary",
    "RaincloudData",
    "raincloud_export",
    "gaussian_kde",
    "silverman_bandwidth",
    "permute_annotations",
    "write_correlations_json",
    "write_agreement_csv",
    "write_raincloud_csv",
    "raincloud_filename",
    "agreement_filename"
]
