import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.errors import AggregationError, DatasetError
from src.dataset import AnnotationTable, Feature, Source
from src.dataset.loader import check_field_counts, format_float
from .standardizer import StandardizedPool, standardize_all

logger = logging.getLogger(__name__)

MATRIX_COLUMNS = ["lesion_id", "source", "feature", "value", "available"]
EXTRA_COLUMNS = ["pool_mean", "pool_std", "spread"]
FEATURES: Tuple[Feature, ...] = (Feature.A, Feature.B, Feature.C)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """按病灶平均后的标准化标注矩阵，形状 (病灶, 来源, 特征)

    values 中缺失项为 NaN，availability 为 False。
    spread 为该病灶标准化标注的总体标准差（标注者分歧）。
    """
    lesion_ids: Tuple[str, ...]
    sources: Tuple[Source, ...]
    values: np.ndarray
    availability: np.ndarray
    stats: Dict[Tuple[str, str], Tuple[float, float]] = field(default_factory=dict)
    spread: Optional[np.ndarray] = None
    features: Tuple[Feature, ...] = FEATURES

    def __post_init__(self):
        shape = (len(self.lesion_ids), len(self.sources), len(self.features))
        values = np.array(self.values, dtype=np.float64)
        availability = np.array(self.availability, dtype=bool)
        if values.shape != shape or availability.shape != shape:
            raise AggregationError(f"matrix arrays must have shape {shape}")
        if np.any(np.isnan(values) == availability):
            raise AggregationError("availability must be false exactly where a value is absent")
        spread = self.spread
        if spread is None:
            spread = np.where(availability, 0.0, np.nan)
        spread = np.array(spread, dtype=np.float64)
        for array in (values, availability, spread):
            array.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "availability", availability)
        object.__setattr__(self, "spread", spread)
        object.__setattr__(self, "_index", {lesion: i for i, lesion in enumerate(self.lesion_ids)})

    @property
    def n_lesions(self) -> int:
        return len(self.lesion_ids)

    def index_of(self, lesion_id: str) -> int:
        try:
            return self._index[lesion_id]
        except KeyError:
            raise AggregationError(f"lesion {lesion_id} not in feature matrix") from None

    def source_index(self, source: Source) -> int:
        try:
            return self.sources.index(Source(source))
        except ValueError:
            raise AggregationError(f"source {Source(source).value} not in feature matrix") from None

    def feature_index(self, feature: Feature) -> int:
        return self.features.index(Feature(feature))

    def has_source(self, source: Source) -> bool:
        return Source(source) in self.sources

    def column(self, source: Source, feature: Feature) -> Tuple[np.ndarray, np.ndarray]:
        """返回某个 (来源, 特征) 的 (值, 可用性) 向量"""
        s = self.source_index(source)
        f = self.feature_index(feature)
        return self.values[:, s, f], self.availability[:, s, f]

    def spread_column(self, source: Source, feature: Feature) -> np.ndarray:
        return self.spread[:, self.source_index(source), self.feature_index(feature)]

    def pools(self) -> List[Tuple[Source, Feature]]:
        """至少有一个可用值的 (来源, 特征)"""
        present = []
        for s, source in enumerate(self.sources):
            for f, feature in enumerate(self.features):
                if self.availability[:, s, f].any():
                    present.append((source, feature))
        return present

    def with_values(self, values: np.ndarray, spread: Optional[np.ndarray] = None) -> "FeatureMatrix":
        """替换数值（可用性不变）"""
        return replace(self, values=values, spread=self.spread if spread is None else spread)

    def reindexed(self, lesion_ids: Sequence[str]) -> "FeatureMatrix":
        """按给定顺序重排病灶，不在矩阵中的病灶视为全部缺失"""
        shape = (len(lesion_ids), len(self.sources), len(self.features))
        values = np.full(shape, np.nan)
        availability = np.zeros(shape, dtype=bool)
        spread = np.full(shape, np.nan)
        for row, lesion_id in enumerate(lesion_ids):
            if lesion_id in self._index:
                i = self._index[lesion_id]
                values[row] = self.values[i]
                availability[row] = self.availability[i]
                spread[row] = self.spread[i]
        return replace(self, lesion_ids=tuple(lesion_ids), values=values, availability=availability, spread=spread)

    def equals(self, other: "FeatureMatrix", atol: float = 0.0) -> bool:
        """逐项比较（缺失项视为相等）"""
        if (self.lesion_ids, self.sources, self.features) != (other.lesion_ids, other.sources, other.features):
            return False
        if not np.array_equal(self.availability, other.availability):
            return False
        return bool(np.allclose(self.values, other.values, rtol=0.0, atol=atol, equal_nan=True))


def average_per_lesion(
    pools: Mapping[Tuple[Source, Feature], StandardizedPool],
    lesion_ids: Optional[Sequence[str]] = None,
) -> FeatureMatrix:
    """把每个病灶的标准化标注取算术平均"""
    if lesion_ids is None:
        lesion_ids = sorted({lesion for pool in pools.values() for lesion in pool.lesion_ids})
    lesion_ids = tuple(lesion_ids)
    index = {lesion: i for i, lesion in enumerate(lesion_ids)}
    sources = tuple(sorted({source for source, _ in pools}, key=lambda s: s.value))

    shape = (len(lesion_ids), len(sources), len(FEATURES))
    values = np.full(shape, np.nan)
    availability = np.zeros(shape, dtype=bool)
    spread = np.full(shape, np.nan)
    stats = {}

    for (source, feature), pool in sorted(pools.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        s = sources.index(source)
        f = FEATURES.index(feature)
        stats[(source.value, feature.value)] = (pool.mean, pool.std)
        frame = pd.DataFrame({"lesion_id": pool.lesion_ids, "z": pool.z})
        grouped = frame.groupby("lesion_id", sort=True)["z"]
        means = grouped.mean()
        spreads = grouped.std(ddof=0)
        for lesion_id, mean in means.items():
            if lesion_id not in index:
                raise AggregationError(f"annotation for unknown lesion {lesion_id}")
            i = index[lesion_id]
            values[i, s, f] = mean
            availability[i, s, f] = True
            spread[i, s, f] = spreads[lesion_id]

    return FeatureMatrix(
        lesion_ids=lesion_ids,
        sources=sources,
        values=values,
        availability=availability,
        stats=stats,
        spread=spread,
    )


def aggregate_table(
    table: AnnotationTable,
    lesion_ids: Optional[Sequence[str]] = None,
    per_annotator: bool = False,
) -> Tuple[FeatureMatrix, List[str]]:
    """标准化全部池并按病灶平均，返回 (矩阵, 警告列表)"""
    if len(table) == 0:
        raise AggregationError("no annotations to aggregate")
    pools = standardize_all(table, per_annotator=per_annotator)
    warnings = [f"{s.value}:{f.value}: {pool.warning}" for (s, f), pool in pools.items() if pool.warning]
    return average_per_lesion(pools, lesion_ids), warnings


def export_matrix(matrix: FeatureMatrix, path: str) -> None:
    """导出 features.csv（含可用性与池统计量）"""
    rows = []
    for i, lesion_id in enumerate(matrix.lesion_ids):
        for s, source in enumerate(matrix.sources):
            for f, feature in enumerate(matrix.features):
                available = bool(matrix.availability[i, s, f])
                stats = matrix.stats.get((source.value, feature.value))
                rows.append([
                    lesion_id,
                    source.value,
                    feature.value,
                    format_float(matrix.values[i, s, f]) if available else "",
                    "1" if available else "0",
                    format_float(stats[0]) if stats else "",
                    format_float(stats[1]) if stats else "",
                    format_float(matrix.spread[i, s, f]) if available else "",
                ])
    frame = pd.DataFrame(rows, columns=MATRIX_COLUMNS + EXTRA_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def _parse_float(token: str, row: int, column: str, path: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise AggregationError(f"{path}: row {row}: malformed {column} {token!r}") from None


def import_matrix(path: str) -> FeatureMatrix:
    """读取 features.csv"""
    if not os.path.isfile(path):
        raise AggregationError(f"file not found: {path}")
    try:
        check_field_counts(path)
    except DatasetError as e:
        raise AggregationError(str(e)) from None
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, index_col=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise AggregationError(f"{path}: malformed matrix ({e})") from None
    columns = [str(c).strip() for c in frame.columns]
    if columns[:len(MATRIX_COLUMNS)] != MATRIX_COLUMNS:
        raise AggregationError(f"{path}: expected columns {','.join(MATRIX_COLUMNS)}")
    frame.columns = columns
    if frame.empty:
        raise AggregationError(f"{path}: empty matrix")
    extras = [c for c in EXTRA_COLUMNS if c in columns]

    lesion_ids: List[str] = []
    seen = set()
    cells: Dict[Tuple[str, Source, Feature], Tuple[float, float]] = {}
    stats: Dict[Tuple[str, str], Tuple[float, float]] = {}
    sources = set()
    for index, row in enumerate(frame.to_dict("records")):
        row_number = index + 2
        try:
            source = Source.parse(row["source"])
            feature = Feature.parse(row["feature"])
        except DatasetError as e:
            raise AggregationError(f"{path}: row {row_number}: {e}") from None
        lesion_id = row["lesion_id"].strip()
        if lesion_id not in seen:
            seen.add(lesion_id)
            lesion_ids.append(lesion_id)
        sources.add(source)
        flag = row["available"].strip()
        if flag not in ("0", "1"):
            raise AggregationError(f"{path}: row {row_number}: available must be 0 or 1")
        token = row["value"].strip()
        if (flag == "1") != bool(token):
            raise AggregationError(f"{path}: row {row_number}: value presence disagrees with available flag")
        if flag == "1":
            value = _parse_float(token, row_number, "value", path)
            spread = 0.0
            if "spread" in extras and row["spread"].strip():
                spread = _parse_float(row["spread"], row_number, "spread", path)
            cells[(lesion_id, source, feature)] = (value, spread)
        if "pool_mean" in extras and row["pool_mean"].strip():
            stats[(source.value, feature.value)] = (
                _parse_float(row["pool_mean"], row_number, "pool_mean", path),
                _parse_float(row["pool_std"], row_number, "pool_std", path),
            )

    ordered_sources = tuple(sorted(sources, key=lambda s: s.value))
    shape = (len(lesion_ids), len(ordered_sources), len(FEATURES))
    values = np.full(shape, np.nan)
    availability = np.zeros(shape, dtype=bool)
    spread = np.full(shape, np.nan)
    index = {lesion: i for i, lesion in enumerate(lesion_ids)}
    for (lesion_id, source, feature), (value, cell_spread) in cells.items():
        key = (index[lesion_id], ordered_sources.index(source), FEATURES.index(feature))
        values[key] = value
        availability[key] = True
        spread[key] = cell_spread

    return FeatureMatrix(
        lesion_ids=tuple(lesion_ids),
        sources=ordered_sources,
        values=values,
        availability=availability,
        stats=stats,
        spread=spread,
    )
