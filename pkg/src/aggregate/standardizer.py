import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.core.errors import AggregationError
from src.dataset import AnnotationTable, Feature, Source

logger = logging.getLogger(__name__)

DEGENERATE_SCALE = "degenerate scale: zero variance"


@dataclass(frozen=True, eq=False)
class StandardizedPool:
    """一个 (来源, 特征) 池的标准化结果，逐条标注对齐"""
    source: Source
    feature: Feature
    lesion_ids: Tuple[str, ...]
    annotator_ids: Tuple[str, ...]
    raw: np.ndarray
    z: np.ndarray
    mean: float
    std: float
    warning: Optional[str] = None
    per_annotator: bool = False

    def __len__(self) -> int:
        return len(self.z)


def _zscore(values: np.ndarray) -> Tuple[np.ndarray, float, float]:
    mean = float(np.mean(values))
    std = float(np.std(values))  # 总体标准差
    if std == 0.0:
        return np.zeros_like(values), mean, std
    return (values - mean) / std, mean, std


def standardize(
    table: AnnotationTable,
    source: Source,
    feature: Feature,
    per_annotator: bool = False,
) -> StandardizedPool:
    """把一个 (来源, 特征) 池的原始值标准化为均值 0、标准差 1

    默认在整个池上计算；per_annotator=True 时按标注者分别标准化。
    """
    pool = table.select(source, feature)
    if len(pool) == 0:
        raise AggregationError(f"no annotations for {source.value}:{feature.value}")

    lesion_ids = tuple(r.lesion_id for r in pool.records)
    annotator_ids = tuple(r.annotator_id for r in pool.records)
    raw = np.array([r.value for r in pool.records], dtype=np.float64)
    z, mean, std = _zscore(raw)
    warning = None

    if per_annotator:
        z = np.empty_like(raw)
        degenerate = []
        annotators = np.array(annotator_ids, dtype=object)
        for annotator in sorted(set(annotator_ids)):
            rows = annotators == annotator
            z[rows], _, annotator_std = _zscore(raw[rows])
            if annotator_std == 0.0:
                degenerate.append(annotator)
        if degenerate:
            warning = f"{DEGENERATE_SCALE} for annotator(s) {', '.join(degenerate)}"
    elif std == 0.0:
        warning = DEGENERATE_SCALE

    if warning:
        logger.warning("%s:%s %s", source.value, feature.value, warning)

    return StandardizedPool(
        source=source,
        feature=feature,
        lesion_ids=lesion_ids,
        annotator_ids=annotator_ids,
        raw=raw,
        z=z,
        mean=mean,
        std=std,
        warning=warning,
        per_annotator=per_annotator,
    )


def standardize_all(table: AnnotationTable, per_annotator: bool = False) -> Dict[Tuple[Source, Feature], StandardizedPool]:
    """对表中出现的每个池执行标准化"""
    return {
        (source, feature): standardize(table, source, feature, per_annotator=per_annotator)
        for source, feature in table.pools()
    }
