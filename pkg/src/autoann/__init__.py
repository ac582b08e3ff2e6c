from .palette import ReferencePalette, load_palette, to_lab, DEFAULT_ANCHORS, DEFAULT_TAU
from .scorers import (
    AutoScores,
    AsymmetryScorer,
    BorderScorer,
    ColorScorer,
    AutoScorerRegistry,
    color_shares,
    score_asymmetry,
    score_border,
    score_color,
    score_lesion
)
from .batch import AnnotateResult, annotate_batch, AUTO_ANNOTATOR_ID

__all__ = [
    "ReferencePalette",
    "load_palette",
    "to_lab",
    "DEFAULT_ANCHORS",
    "DEFAULT_TAU",
    "AutoScores",
    "AsymmetryScorer",
    "BorderScorer",
    "ColorScorer",
    "AutoScorerRegistry",
    "color_shares",
    "score_asymmetry",
    "score_border",
    "score_color",
    "score_lesion",
    "AnnotateResult",
    "annotate_batch",
    "AUTO_ANNOTATOR_ID"
]
