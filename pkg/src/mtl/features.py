import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from tqdm import tqdm

from src.autoann import score_asymmetry, score_border
from src.core.errors import DatasetError, TrainingError
from src.core.logger import progress_enabled
from src.dataset import DatasetManifest, check_field_counts, format_float
from src.imaging import BinaryMask, RasterImage, decode_image, decode_mask, luma

logger = logging.getLogger(__name__)

FEATURE_SIZE = 8
HISTOGRAM_BINS = 8


def descriptor_blocks(size: int = FEATURE_SIZE, bins: int = HISTOGRAM_BINS) -> Tuple[slice, slice, slice]:
    """(灰度, 颜色直方图, 形状) 三段在向量中的位置"""
    n_gray = size * size
    n_hist = 3 * bins
    return slice(0, n_gray), slice(n_gray, n_gray + n_hist), slice(n_gray + n_hist, n_gray + n_hist + 3)


def descriptor_dim(size: int = FEATURE_SIZE, bins: int = HISTOGRAM_BINS) -> int:
    return size * size + 3 * bins + 3


@dataclass(frozen=True, eq=False)
class FeatureVector:
    lesion_id: str
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim != 1 or not np.isfinite(x).all():
            raise TrainingError(f"feature vector for {self.lesion_id} must be a finite 1-D array")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def dim(self) -> int:
        return len(self.x)


def _downscaled_gray(image: RasterImage, size: int) -> np.ndarray:
    gray = Image.fromarray(luma(image.pixels).astype(np.float32))
    small = gray.resize((size, size), resample=Image.Resampling.BOX)
    return np.asarray(small, dtype=np.float64).reshape(-1) / 255.0


def _color_histogram(image: RasterImage, region: np.ndarray, bins: int) -> np.ndarray:
    pixels = image.pixels[region]
    counts = [np.histogram(pixels[:, c], bins=bins, range=(0, 256))[0] for c in range(3)]
    return np.concatenate(counts).astype(np.float64) / len(pixels)


def _shape_terms(image: RasterImage, mask: Optional[BinaryMask]) -> np.ndarray:
    """面积占比、紧致度、不对称度；无掩码时为 (0, 1, 0)"""
    if mask is None or mask.is_empty():
        return np.array([0.0, 1.0, 0.0])
    area_fraction = mask.area / float(image.width * image.height)
    return np.array([area_fraction, score_border(mask), score_asymmetry(mask)])


def describe(
    image: RasterImage,
    mask: Optional[BinaryMask] = None,
    size: int = FEATURE_SIZE,
    bins: int = HISTOGRAM_BINS,
) -> np.ndarray:
    """未缩放的描述子：灰度缩略图 + 掩码内颜色直方图 + 形状项"""
    if mask is not None and mask.bits.shape != image.pixels.shape[:2]:
        raise DatasetError("mask and image dimensions differ")
    if mask is None or mask.is_empty():
        region = np.ones(image.pixels.shape[:2], dtype=bool)
    else:
        region = mask.bits
    return np.concatenate([
        _downscaled_gray(image, size),
        _color_histogram(image, region, bins),
        _shape_terms(image, mask),
    ])


@dataclass(frozen=True)
class BlockScaler:
    """按数据集范围逐段做 min-max 缩放到 [0, 1]"""
    minima: Tuple[float, ...]
    maxima: Tuple[float, ...]
    size: int = FEATURE_SIZE
    bins: int = HISTOGRAM_BINS

    @classmethod
    def fit(cls, raw: np.ndarray, size: int = FEATURE_SIZE, bins: int = HISTOGRAM_BINS) -> "BlockScaler":
        raw = np.atleast_2d(raw)
        blocks = descriptor_blocks(size, bins)
        return cls(
            minima=tuple(float(raw[:, b].min()) for b in blocks),
            maxima=tuple(float(raw[:, b].max()) for b in blocks),
            size=size,
            bins=bins,
        )

    def transform(self, raw: np.ndarray) -> np.ndarray:
        scaled = np.array(np.atleast_2d(raw), dtype=np.float64)
        for block, low, high in zip(descriptor_blocks(self.size, self.bins), self.minima, self.maxima):
            span = high - low
            if span > 0:
                scaled[:, block] = (scaled[:, block] - low) / span
            else:
                scaled[:, block] = 0.0
        return scaled


def build_features(
    image: RasterImage,
    mask: Optional[BinaryMask] = None,
    lesion_id: str = "",
    scaler: Optional[BlockScaler] = None,
) -> FeatureVector:
    """单个病灶的特征向量；给定 scaler 时按数据集范围缩放，否则返回原始描述子"""
    size = scaler.size if scaler else FEATURE_SIZE
    bins = scaler.bins if scaler else HISTOGRAM_BINS
    raw = describe(image, mask, size, bins)
    return FeatureVector(lesion_id, scaler.transform(raw)[0] if scaler else raw)


def build_feature_set(
    images: Sequence[RasterImage],
    masks: Sequence[Optional[BinaryMask]],
    lesion_ids: Sequence[str],
    size: int = FEATURE_SIZE,
    bins: int = HISTOGRAM_BINS,
) -> List[FeatureVector]:
    """两遍处理：先算原始描述子，再用整个数据集的范围缩放"""
    if not (len(images) == len(masks) == len(lesion_ids)):
        raise TrainingError("images, masks and lesion ids must align")
    if not images:
        return []
    raw = np.vstack([describe(img, msk, size, bins) for img, msk in zip(images, masks)])
    scaled = BlockScaler.fit(raw, size, bins).transform(raw)
    return [FeatureVector(lesion_id, row) for lesion_id, row in zip(lesion_ids, scaled)]


def build_manifest_features(
    manifest: DatasetManifest,
    size: int = FEATURE_SIZE,
    bins: int = HISTOGRAM_BINS,
) -> List[FeatureVector]:
    """从清单中的图像和掩码构建特征向量"""
    images, masks = [], []
    for record in tqdm(manifest.records, desc="features", disable=not progress_enabled()):
        with open(manifest.resolve(record.image_path), "rb") as f:
            images.append(decode_image(f.read()))
        mask = None
        if record.mask_path:
            with open(manifest.resolve(record.mask_path), "rb") as f:
                mask = decode_mask(f.read())
        masks.append(mask)
    return build_feature_set(images, masks, manifest.lesion_ids, size, bins)


def save_vectors(vectors: Sequence[FeatureVector], path: str) -> None:
    """vectors.csv：lesion_id,x0..x{d-1}"""
    if not vectors:
        raise TrainingError("no feature vectors to save")
    d = vectors[0].dim
    rows = [[v.lesion_id] + [format_float(value) for value in v.x] for v in vectors]
    frame = pd.DataFrame(rows, columns=["lesion_id"] + [f"x{i}" for i in range(d)])
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def load_vectors(path: str) -> List[FeatureVector]:
    if not os.path.isfile(path):
        raise DatasetError(f"file not found: {path}")
    check_field_counts(path)
    try:
        frame = pd.read_csv(path, dtype={"lesion_id": str}, index_col=False, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetError(f"{path}: malformed vectors file ({e})") from None
    if list(frame.columns[:1]) != ["lesion_id"] or frame.shape[1] < 2:
        raise DatasetError(f"{path}: expected columns lesion_id,x0,...")
    try:
        values = frame.iloc[:, 1:].to_numpy(dtype=np.float64)
    except (TypeError, ValueError):
        raise DatasetError(f"{path}: vectors must be numeric") from None
    if not np.isfinite(values).all():
        raise DatasetError(f"{path}: vectors must be finite")
    return [FeatureVector(str(lesion_id), row) for lesion_id, row in zip(frame["lesion_id"], values)]
