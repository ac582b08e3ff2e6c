import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.aggregate import FeatureMatrix
from src.core.errors import StatsError
from src.dataset import Feature, Source

logger = logging.getLogger(__name__)

BANDS = ("negligible", "weak", "moderate", "strong", "very_strong")
DEFAULT_THRESHOLDS = (0.2, 0.4, 0.6, 0.8)

Labels = Union[Mapping[str, int], Sequence[int], np.ndarray]


def strength_band(r: float, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> str:
    """按 |r| 划分相关强度"""
    magnitude = abs(r)
    for band, upper in zip(BANDS, thresholds):
        if magnitude < upper:
            return band
    return BANDS[-1]


@dataclass(frozen=True)
class CorrelationResult:
    """Pearson 相关系数结果"""
    r: float
    n: int
    pair: Tuple[str, str]
    band: str

    def __post_init__(self):
        if abs(self.r) > 1.0:
            raise StatsError(f"correlation {self.r} outside [-1, 1]")
        if self.n < 2:
            raise StatsError("correlation needs at least two pairs")

    def to_dict(self) -> Dict[str, object]:
        return {"r": self.r, "n": self.n, "band": self.band}


def pearson(
    x,
    y,
    pair: Tuple[str, str] = ("x", "y"),
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> CorrelationResult:
    """积矩相关系数；任一侧缺失（NaN/None）的样本对先成对删除"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError(f"vectors must be one-dimensional with equal length, got {x.shape} and {y.shape}")
    keep = ~(np.isnan(x) | np.isnan(y))
    x = x[keep]
    y = y[keep]
    n = len(x)
    if n < 2:
        raise StatsError(f"undefined correlation: only {n} complete pair(s)")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("undefined correlation: zero variance")
    r = float(np.dot(dx, dy)) / np.sqrt(sxx * syy)
    r = float(min(1.0, max(-1.0, r)))
    return CorrelationResult(r=r, n=n, pair=pair, band=strength_band(r, thresholds))


def align_labels(matrix: FeatureMatrix, labels: Labels) -> np.ndarray:
    """把标签对齐到矩阵的病灶顺序"""
    if isinstance(labels, Mapping):
        missing = [lesion for lesion in matrix.lesion_ids if lesion not in labels]
        if missing:
            raise StatsError(f"no label for lesion {missing[0]}")
        return np.array([labels[lesion] for lesion in matrix.lesion_ids], dtype=np.float64)
    aligned = np.asarray(labels, dtype=np.float64)
    if aligned.shape != (matrix.n_lesions,):
        raise StatsError(f"expected {matrix.n_lesions} labels, got {aligned.shape}")
    return aligned


@dataclass(frozen=True)
class LabelCorrelationTable:
    """各 (来源, 特征) 与诊断标签的相关性；失败的单元格记录原因"""
    results: Dict[Tuple[str, str], CorrelationResult] = field(default_factory=dict)
    failures: Dict[Tuple[str, str], str] = field(default_factory=dict)

    def get(self, source: str, feature: str) -> Optional[CorrelationResult]:
        return self.results.get((str(source), str(feature)))

    def to_nested(self) -> Dict[str, Dict[str, Dict[str, object]]]:
        """{source: {feature: {r, n, band}}}"""
        nested: Dict[str, Dict[str, Dict[str, object]]] = {}
        for (source, feature), result in self.results.items():
            nested.setdefault(source, {})[feature] = result.to_dict()
        for (source, feature), reason in self.failures.items():
            nested.setdefault(source, {})[feature] = {"r": None, "n": None, "band": None, "reason": reason}
        return {s: dict(sorted(nested[s].items())) for s in sorted(nested)}


def _label_table(matrix: FeatureMatrix, labels: Labels, column_of, thresholds: Sequence[float]) -> LabelCorrelationTable:
    y = align_labels(matrix, labels)
    results = {}
    failures = {}
    for source in matrix.sources:
        for feature in matrix.features:
            key = (source.value, feature.value)
            values, available = column_of(source, feature)
            x = np.where(available, values, np.nan)
            try:
                results[key] = pearson(x, y, pair=(f"{source.value}:{feature.value}", "diagnosis"), thresholds=thresholds)
            except StatsError as e:
                failures[key] = str(e)
    return LabelCorrelationTable(results=results, failures=failures)


def correlation_with_label(
    matrix: FeatureMatrix,
    labels: Labels,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> LabelCorrelationTable:
    """每个 (来源, 特征) 与二值诊断标签的点二列相关（即 Pearson）"""
    return _label_table(matrix, labels, matrix.column, thresholds)


def spread_correlation_with_label(
    matrix: FeatureMatrix,
    labels: Labels,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> LabelCorrelationTable:
    """标注者分歧（每个病灶标准化标注的标准差）与诊断标签的相关"""
    def column_of(source: Source, feature: Feature):
        _, available = matrix.column(source, feature)
        return matrix.spread_column(source, feature), available

    return _label_table(matrix, labels, column_of, thresholds)


@dataclass(frozen=True)
class AgreementMatrix:
    """某个特征在不同来源之间的一致性矩阵（对称，对角为 1）"""
    feature: str
    sources: Tuple[str, ...]
    cells: Dict[Tuple[str, str], CorrelationResult]
    failures: Dict[Tuple[str, str], str]

    def r(self, a: str, b: str) -> Optional[float]:
        result = self.cells.get((str(a), str(b)))
        return None if result is None else result.r


def agreement_matrix(
    matrix: FeatureMatrix,
    feature: Feature,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> AgreementMatrix:
    """来源两两之间在共同可用病灶上的 Pearson 相关"""
    feature = Feature(feature)
    present = [s for s in matrix.sources if matrix.column(s, feature)[1].any()]
    if len(present) < 2:
        raise StatsError(f"agreement for {feature.value} needs at least two sources, found {len(present)}")

    cells = {}
    failures = {}
    for i, a in enumerate(present):
        values_a, available_a = matrix.column(a, feature)
        cells[(a.value, a.value)] = CorrelationResult(
            r=1.0, n=max(2, int(available_a.sum())), pair=(a.value, a.value), band=strength_band(1.0, thresholds)
        )
        for b in present[i + 1:]:
            values_b, available_b = matrix.column(b, feature)
            both = available_a & available_b
            try:
                result = pearson(
                    np.where(both, values_a, np.nan),
                    np.where(both, values_b, np.nan),
                    pair=(a.value, b.value),
                    thresholds=thresholds,
                )
            except StatsError as e:
                failures[(a.value, b.value)] = failures[(b.value, a.value)] = str(e)
                continue
            cells[(a.value, b.value)] = result
            cells[(b.value, a.value)] = CorrelationResult(r=result.r, n=result.n, pair=(b.value, a.value), band=result.band)

    return AgreementMatrix(
        feature=feature.value,
        sources=tuple(s.value for s in present),
        cells=cells,
        failures=failures,
    )
