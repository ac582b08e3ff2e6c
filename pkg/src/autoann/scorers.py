import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from src.core.errors import ImagingError, ScoringError
from src.core.interfaces import AnnotationScorer
from src.imaging import (
    BinaryMask,
    RasterImage,
    axis_flip_iou,
    largest_component,
    perimeter,
    touches_border,
)
from .palette import ReferencePalette, to_lab


@dataclass(frozen=True)
class AutoScores:
    """单个病灶的自动 ABC 评分"""
    asymmetry: float
    border: float
    color: int
    border_touches_edge: bool

    def __post_init__(self):
        if not 0.0 <= self.asymmetry <= 1.0:
            raise ScoringError(f"asymmetry {self.asymmetry} outside [0, 1]")
        if not self.border >= 1.0:
            raise ScoringError(f"border {self.border} below 1")
        if not 0 <= self.color <= 6:
            raise ScoringError(f"color count {self.color} outside [0, 6]")

    def as_features(self) -> Dict[str, float]:
        return {"A": self.asymmetry, "B": self.border, "C": float(self.color)}


def _require_mask(mask: BinaryMask) -> None:
    if mask.is_empty():
        raise ScoringError("empty mask")


def score_asymmetry(mask: BinaryMask) -> float:
    """1 - 两条主轴反射交并比的均值"""
    _require_mask(mask)
    component = largest_component(mask)
    iou = (axis_flip_iou(component, "major") + axis_flip_iou(component, "minor")) / 2.0
    return min(1.0, max(0.0, 1.0 - iou))


def score_border(mask: BinaryMask) -> float:
    """紧致度 P² / (4πA)，下限截断为 1"""
    _require_mask(mask)
    component = largest_component(mask)
    length = perimeter(component)
    return max(1.0, length * length / (4.0 * math.pi * component.area))


def color_shares(image: RasterImage, mask: BinaryMask, palette: ReferencePalette) -> np.ndarray:
    """病灶像素按最近参考色（CIELAB 欧氏距离）划分后的占比"""
    _require_mask(mask)
    if (image.height, image.width) != (mask.height, mask.width):
        raise ScoringError(
            f"image {image.width}x{image.height} and mask {mask.width}x{mask.height} differ in size"
        )
    lab = to_lab(image.pixels[mask.bits])
    distances = ((lab[:, None, :] - palette.lab[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(distances, axis=1)
    counts = np.bincount(nearest, minlength=len(palette.anchors))
    return counts / float(len(nearest))


def score_color(image: RasterImage, mask: BinaryMask, palette: Optional[ReferencePalette] = None) -> int:
    """占比不低于 τ 的参考色数量"""
    palette = palette or ReferencePalette()
    shares = color_shares(image, mask, palette)
    return int(np.count_nonzero(shares >= palette.tau))


class AsymmetryScorer(AnnotationScorer):
    """A：反射重叠不对称度"""

    @property
    def feature(self) -> str:
        return "A"

    def score(self, image: RasterImage, mask: BinaryMask) -> float:
        return score_asymmetry(mask)


class BorderScorer(AnnotationScorer):
    """B：边界紧致度"""

    @property
    def feature(self) -> str:
        return "B"

    def score(self, image: RasterImage, mask: BinaryMask) -> float:
        return score_border(mask)


class ColorScorer(AnnotationScorer):
    """C：参考色计数"""

    def __init__(self, palette: Optional[ReferencePalette] = None):
        self.palette = palette or ReferencePalette()

    @property
    def feature(self) -> str:
        return "C"

    def score(self, image: RasterImage, mask: BinaryMask) -> float:
        return float(score_color(image, mask, self.palette))


class AutoScorerRegistry:
    """自动评分器管理器"""

    def __init__(self, palette: Optional[ReferencePalette] = None):
        """初始化并注册默认评分器"""
        self.scorers: Dict[str, AnnotationScorer] = {}
        self.register_scorer(AsymmetryScorer())
        self.register_scorer(BorderScorer())
        self.register_scorer(ColorScorer(palette))

    def register_scorer(self, scorer: AnnotationScorer) -> None:
        """注册评分器（同一特征后注册者覆盖）"""
        self.scorers[scorer.feature] = scorer

    def score_all(self, image: RasterImage, mask: BinaryMask) -> Dict[str, float]:
        """按特征顺序计算全部评分"""
        return {feature: self.scorers[feature].score(image, mask) for feature in sorted(self.scorers)}


def score_lesion(image: RasterImage, mask: BinaryMask, palette: Optional[ReferencePalette] = None) -> AutoScores:
    """计算单个病灶的 A、B、C 三项评分"""
    _require_mask(mask)
    try:
        scores = AutoScorerRegistry(palette).score_all(image, mask)
    except ImagingError as e:
        raise ScoringError(str(e)) from e
    return AutoScores(
        asymmetry=scores["A"],
        border=scores["B"],
        color=int(scores["C"]),
        border_touches_edge=touches_border(mask),
    )
