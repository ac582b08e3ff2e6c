from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple
import os

import pandas as pd

from src.core.errors import DatasetError


class Source(str, Enum):
    """标注来源"""
    STUDENT = "student"
    CROWD = "crowd"
    AUTO = "auto"
    EXPERT = "expert"

    @classmethod
    def parse(cls, token: str) -> "Source":
        """解析来源字符串（大小写不敏感）"""
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            raise DatasetError(f"unknown source {token!r}") from None

    def __str__(self) -> str:
        return self.value


class Feature(str, Enum):
    """ABC 特征"""
    A = "A"
    B = "B"
    C = "C"

    @property
    def long_name(self) -> str:
        return {"A": "asymmetry", "B": "border", "C": "color"}[self.value]

    @classmethod
    def parse(cls, token: str) -> "Feature":
        """解析特征字符串"""
        try:
            return cls(str(token).strip().upper())
        except ValueError:
            raise DatasetError(f"unknown feature {token!r}") from None

    def __str__(self) -> str:
        return self.value


# 学生标注的原始量表
STUDENT_SCALES: Dict[Feature, Tuple[float, float]] = {
    Feature.A: (0.0, 5.0),
    Feature.B: (0.0, 100.0),
    Feature.C: (0.0, 15.0),
}


@dataclass(frozen=True)
class LesionRecord:
    """单个病灶记录"""
    lesion_id: str
    image_path: str
    mask_path: Optional[str]
    diagnosis: int  # 0 健康（痣），1 异常

    def __post_init__(self):
        if self.diagnosis not in (0, 1):
            raise DatasetError(
                f"lesion {self.lesion_id}: diagnosis must be 0 or 1, got {self.diagnosis!r}",
                lesion_id=self.lesion_id,
            )


@dataclass(frozen=True)
class AnnotationRecord:
    """单条原始标注"""
    lesion_id: str
    source: Source
    feature: Feature
    annotator_id: str
    value: float


@dataclass(frozen=True)
class DatasetManifest:
    """病灶清单"""
    records: Tuple[LesionRecord, ...]
    name: str
    base_dir: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.records:
            raise DatasetError("empty manifest")
        seen = set()
        for record in self.records:
            if record.lesion_id in seen:
                raise DatasetError(f"duplicate lesion_id {record.lesion_id}", lesion_id=record.lesion_id)
            seen.add(record.lesion_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LesionRecord]:
        return iter(self.records)

    @property
    def lesion_ids(self) -> List[str]:
        return [r.lesion_id for r in self.records]

    def labels(self) -> Dict[str, int]:
        """lesion_id -> 诊断标签"""
        return {r.lesion_id: r.diagnosis for r in self.records}

    def get(self, lesion_id: str) -> Optional[LesionRecord]:
        for record in self.records:
            if record.lesion_id == lesion_id:
                return record
        return None

    def resolve(self, path: str) -> str:
        """相对路径按清单所在目录解析"""
        if os.path.isabs(path) or not self.base_dir:
            return path
        return os.path.join(self.base_dir, path)


@dataclass(frozen=True)
class AnnotationTable:
    """原始标注表，按 (病灶, 来源, 特征, 标注者) 组织"""
    records: Tuple[AnnotationRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[AnnotationRecord]:
        return iter(self.records)

    def select(self, source: Source, feature: Feature) -> "AnnotationTable":
        """筛选某个 (来源, 特征) 池"""
        return AnnotationTable(tuple(
            r for r in self.records if r.source == source and r.feature == feature
        ))

    def pools(self) -> List[Tuple[Source, Feature]]:
        """表中出现的 (来源, 特征) 组合，按字典序"""
        present = {(r.source, r.feature) for r in self.records}
        return sorted(present, key=lambda p: (p[0].value, p[1].value))

    def sources(self) -> List[Source]:
        return sorted({r.source for r in self.records}, key=lambda s: s.value)

    def lesion_ids(self) -> List[str]:
        return sorted({r.lesion_id for r in self.records})

    def tally(self) -> Dict[Tuple[str, str], int]:
        """按 (来源, 特征) 统计行数"""
        counts = Counter((r.source.value, r.feature.value) for r in self.records)
        return dict(sorted(counts.items()))

    def merged(self, other: "AnnotationTable") -> "AnnotationTable":
        return AnnotationTable(self.records + other.records)

    def sorted(self) -> "AnnotationTable":
        """按 lesion_id、来源、特征、标注者排序"""
        return AnnotationTable(tuple(sorted(
            self.records,
            key=lambda r: (r.lesion_id, r.source.value, r.feature.value, r.annotator_id),
        )))

    def to_frame(self) -> pd.DataFrame:
        """转换为 pandas DataFrame"""
        return pd.DataFrame(
            {
                "lesion_id": [r.lesion_id for r in self.records],
                "source": [r.source.value for r in self.records],
                "feature": [r.feature.value for r in self.records],
                "annotator_id": [r.annotator_id for r in self.records],
                "value": [float(r.value) for r in self.records],
            },
            columns=["lesion_id", "source", "feature", "annotator_id", "value"],
        )


@dataclass(frozen=True)
class ValidationReport:
    """数据集校验报告"""
    errors: Tuple[Tuple[str, str], ...]
    warnings: Tuple[Tuple[str, str], ...]
    counts: Dict[Tuple[str, str], int]

    @property
    def accepted(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        return f"{len(self.errors)} error(s), {len(self.warnings)} warning(s), {sum(self.counts.values())} annotation(s)"
