import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from src.aggregate import FeatureMatrix
from src.core.errors import StatsError
from src.dataset import Feature, Source
from .correlation import Labels, align_labels

logger = logging.getLogger(__name__)

KDE_GRID = 256
KDE_MIN_POINTS = 5


@dataclass(frozen=True)
class BoxSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float

    def levels(self) -> Tuple[Tuple[float, float], ...]:
        """(分位水平, 值) 序列"""
        return (
            (0.0, self.minimum),
            (0.25, self.q1),
            (0.5, self.median),
            (0.75, self.q3),
            (1.0, self.maximum),
        )


@dataclass(frozen=True, eq=False)
class RaincloudData:
    """一个诊断组的雨云图数据：原始点、核密度曲线和箱线统计"""
    group: int
    points: np.ndarray
    box: BoxSummary
    kde_x: Optional[np.ndarray] = None
    kde_y: Optional[np.ndarray] = None

    @property
    def has_kde(self) -> bool:
        return self.kde_x is not None


def silverman_bandwidth(points: np.ndarray) -> float:
    """Silverman 经验带宽；IQR 为 0 时退化为只用标准差"""
    n = len(points)
    sigma = float(np.std(points))
    q1, q3 = np.percentile(points, [25, 75])
    spread = (q3 - q1) / 1.34
    scale = min(sigma, spread) if spread > 0 else sigma
    return 0.9 * scale * n ** (-0.2)


def gaussian_kde(points: np.ndarray, grid_size: int = KDE_GRID) -> Tuple[np.ndarray, np.ndarray]:
    """高斯核密度估计，网格覆盖 [min-3h, max+3h]，数值积分归一化为 1"""
    h = silverman_bandwidth(points)
    if h <= 0:
        raise StatsError("kernel bandwidth is zero")
    grid = np.linspace(points.min() - 3 * h, points.max() + 3 * h, grid_size)
    density = norm.pdf((grid[:, None] - points[None, :]) / h).sum(axis=1) / (len(points) * h)
    density = density / trapezoid(density, grid)
    return grid, density


def _box(points: np.ndarray) -> BoxSummary:
    q1, median, q3 = np.percentile(points, [25, 50, 75])
    return BoxSummary(
        minimum=float(points.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        maximum=float(points.max()),
    )


def raincloud_export(
    matrix: FeatureMatrix,
    source: Source,
    feature: Feature,
    labels: Labels,
    grid_size: int = KDE_GRID,
    min_points: int = KDE_MIN_POINTS,
) -> Dict[int, RaincloudData]:
    """按诊断组（0 良性 / 1 恶性）拆分某个 (来源, 特征) 的聚合值"""
    y = align_labels(matrix, labels)
    values, available = matrix.column(source, feature)
    groups = {}
    for group in (0, 1):
        points = np.sort(values[available & (y == group)])
        if len(points) == 0:
            raise StatsError(f"empty group {group} for {Source(source).value}:{Feature(feature).value}")
        kde_x = kde_y = None
        if len(points) >= min_points and float(np.std(points)) > 0:
            kde_x, kde_y = gaussian_kde(points, grid_size)
        else:
            logger.info(
                "Group %d of %s:%s has too few distinct points for a density curve",
                group, Source(source).value, Feature(feature).value,
            )
        groups[group] = RaincloudData(group=group, points=points, box=_box(points), kde_x=kde_x, kde_y=kde_y)
    return groups
