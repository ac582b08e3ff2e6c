import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from src.aggregate import FeatureMatrix, aggregate_table
from src.core.errors import TrainingError
from src.dataset import AnnotationRecord, AnnotationTable, Feature, Source
from src.imaging import BinaryMask, RasterImage

logger = logging.getLogger(__name__)

N_NUISANCE = 5

# 潜变量到原始量表的仿射映射 (截距, 斜率, 下限, 上限, 是否取整)
_SCALES: Dict[Source, Dict[Feature, Tuple[float, float, float, float, bool]]] = {
    Source.STUDENT: {
        Feature.A: (2.5, 1.0, 0.0, 5.0, True),
        Feature.B: (50.0, 15.0, 0.0, 100.0, True),
        Feature.C: (7.5, 3.0, 0.0, 15.0, True),
    },
    Source.CROWD: {
        Feature.A: (5.0, 1.5, 1.0, 10.0, False),
        Feature.B: (5.0, 1.5, 1.0, 10.0, False),
        Feature.C: (5.0, 1.5, 1.0, 10.0, False),
    },
    Source.AUTO: {
        Feature.A: (0.25, 0.08, -np.inf, np.inf, False),
        Feature.B: (1.3, 0.2, -np.inf, np.inf, False),
        Feature.C: (3.0, 1.0, -np.inf, np.inf, False),
    },
}

# 每个来源的标注者数量与各特征的病灶覆盖率
_ANNOTATORS = {Source.AUTO: 1, Source.CROWD: 2, Source.STUDENT: 3}
_COVERAGE = {
    Source.AUTO: {Feature.A: 1.0, Feature.B: 1.0, Feature.C: 1.0},
    Source.CROWD: {Feature.A: 0.8, Feature.B: 0.8, Feature.C: 0.8},
    Source.STUDENT: {Feature.A: 1.0, Feature.B: 1.0, Feature.C: 0.6},
}


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    lesion_ids: Tuple[str, ...]
    x: np.ndarray
    labels: np.ndarray
    matrix: FeatureMatrix
    table: AnnotationTable
    latent: np.ndarray

    def __len__(self) -> int:
        return len(self.lesion_ids)


def _latent_scores(z: np.ndarray) -> Dict[Feature, np.ndarray]:
    """A 只依赖 z1；B、C 混入 z2、z3，三者方差均为 1"""
    return {
        Feature.A: z[:, 0],
        Feature.B: 0.6 * z[:, 0] + 0.8 * z[:, 1],
        Feature.C: 0.6 * z[:, 0] + 0.8 * z[:, 2],
    }


def _to_scale(source: Source, feature: Feature, score: np.ndarray) -> np.ndarray:
    intercept, slope, low, high, integral = _SCALES[source][feature]
    values = intercept + slope * score
    if integral:
        values = np.rint(values)
    return np.clip(values, low, high)


def generate_synthetic(
    n: int,
    d: int,
    noise_cls: float,
    noise_ann: float,
    seed: int,
    n_nuisance: int = N_NUISANCE,
    noise_x: float = 1.0,
) -> SyntheticDataset:
    """已知结构的合成数据集

    z ~ N(0, I)，x 为 z 的随机线性嵌入加噪声，label = 1[z1 + noise_cls·η > 0]；
    各来源的 A/B/C 标注是 z1、z2、z3 的仿射函数加 noise_ann·η，再经过标准化与平均。
    """
    if n < 50 or d < 2:
        raise TrainingError(f"degenerate parameters: need n >= 50 and d >= 2, got n={n}, d={d}")
    if noise_cls < 0 or noise_ann < 0 or noise_x < 0 or n_nuisance < 0:
        raise TrainingError("degenerate parameters: noise levels must be non-negative")

    rng = np.random.default_rng(seed)
    k = 3 + n_nuisance
    z = rng.standard_normal((n, k))
    embedding = rng.standard_normal((k, d)) / np.sqrt(k)
    x = z @ embedding + noise_x * rng.standard_normal((n, d))
    labels = (z[:, 0] + noise_cls * rng.standard_normal(n) > 0).astype(np.int64)
    if labels.min() == labels.max():
        raise TrainingError("degenerate parameters: generated labels hold a single class")

    lesion_ids = tuple(f"syn_{i:05d}" for i in range(n))
    scores = _latent_scores(z)
    records: List[AnnotationRecord] = []
    for source in (Source.AUTO, Source.CROWD, Source.STUDENT):
        for feature in (Feature.A, Feature.B, Feature.C):
            covered = rng.random(n) < _COVERAGE[source][feature]
            for annotator in range(_ANNOTATORS[source]):
                noisy = scores[feature] + noise_ann * rng.standard_normal(n)
                values = _to_scale(source, feature, noisy)
                annotator_id = f"{source.value}:{annotator + 1:02d}"
                for i in np.flatnonzero(covered):
                    records.append(AnnotationRecord(lesion_ids[i], source, feature, annotator_id, float(values[i])))

    table = AnnotationTable(tuple(records)).sorted()
    matrix, warnings = aggregate_table(table, lesion_ids)
    for warning in warnings:
        logger.warning("synthetic pool %s", warning)
    logger.info("Generated %d synthetic lesions (%.1f%% positive)", n, 100.0 * labels.mean())
    return SyntheticDataset(
        lesion_ids=lesion_ids,
        x=x,
        labels=labels,
        matrix=matrix,
        table=table,
        latent=z,
    )


_SKIN = np.array([228.0, 196.0, 172.0])
_LIGHT = np.array([180.0, 120.0, 80.0])
_DARK = np.array([100.0, 60.0, 30.0])
_BLUE_GRAY = np.array([100.0, 120.0, 150.0])


def render_synthetic_lesion(latent: np.ndarray, size: int = 32) -> Tuple[RasterImage, BinaryMask]:
    """把一个病灶的潜变量画成小图像和掩码

    z2 控制拉长程度与边缘起伏，z1 控制颜色深浅，z3 > 0 时叠加蓝灰区域。病灶不接触图像边界。
    """
    z = np.asarray(latent, dtype=np.float64)
    if z.shape[0] < 3:
        raise TrainingError("latent vector needs at least three entries")
    elongation = 0.3 * np.tanh(z[1])
    angle = np.pi * np.tanh(z[3]) if z.shape[0] > 3 else 0.0
    wobble = 0.15 * (1.0 + np.tanh(z[1])) / 2.0

    radius = 0.28 * size
    center = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    dy = rows - center
    dx = cols - center
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    phi = np.arctan2(v, u)
    boundary = radius * (1.0 + wobble * np.sin(5.0 * phi))
    r = np.hypot(u / (1.0 + elongation), v / (1.0 - elongation))
    bits = r <= boundary

    darkness = 1.0 / (1.0 + np.exp(-z[0]))
    lesion_color = (1.0 - darkness) * _LIGHT + darkness * _DARK
    pixels = np.broadcast_to(_SKIN, (size, size, 3)).copy()
    pixels[bits] = lesion_color
    if z[2] > 0:
        pixels[bits & (u > 0)] = _BLUE_GRAY
    image = RasterImage(np.rint(pixels).astype(np.uint8))
    return image, BinaryMask(bits)
