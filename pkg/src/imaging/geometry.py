"""掩码几何：连通域、矩、主轴反射重叠率与边界周长"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.core.errors import ImagingError
from .raster import BinaryMask

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

# Moore 邻域，顺时针，从西侧开始；(dy, dx)
MOORE_OFFSETS = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_OFFSET_INDEX = {offset: i for i, offset in enumerate(MOORE_OFFSETS)}

# 旋转坐标先截断到该精度，使镜像输入得到完全对称的栅格化结果
_SNAP_DECIMALS = 9


@dataclass(frozen=True)
class ShapeMoments:
    """形状矩"""
    area: int
    centroid: Tuple[float, float]  # (x̄, ȳ)，像素 (i, j) 中心为 (j+0.5, i+0.5)
    theta: float
    mu20: float
    mu02: float
    mu11: float


def _require_pixels(mask: BinaryMask) -> None:
    if mask.is_empty():
        raise ImagingError("empty mask")


def touches_border(mask: BinaryMask) -> bool:
    """掩码是否接触图像边缘（可能被裁切）"""
    bits = mask.bits
    return bool(bits[0, :].any() or bits[-1, :].any() or bits[:, 0].any() or bits[:, -1].any())


def largest_component(mask: BinaryMask) -> BinaryMask:
    """保留像素数最多的 8 连通域；并列时取扫描顺序中最先出现的"""
    _require_pixels(mask)
    labels, count = ndimage.label(mask.bits, structure=EIGHT_CONNECTED)
    if count == 1:
        return mask
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    # 每个连通域第一个像素在扫描顺序中的位置
    ids, first_index = np.unique(flat, return_index=True)
    first = dict(zip(ids.tolist(), first_index.tolist()))
    best = max(range(1, count + 1), key=lambda label: (sizes[label], -first[label]))
    return BinaryMask(labels == best)


def _centered_coordinates(mask: BinaryMask) -> Tuple[np.ndarray, np.ndarray, int]:
    """像素中心相对质心的坐标

    分子用整数精确计算，镜像/旋转后的掩码得到严格取反的坐标。
    """
    ys, xs = np.nonzero(mask.bits)
    n = len(xs)
    xs = xs.astype(np.int64)
    ys = ys.astype(np.int64)
    sx = int(xs.sum())
    sy = int(ys.sum())
    dx = (n * (2 * xs + 1) - (2 * sx + n)) / (2.0 * n)
    dy = (n * (2 * ys + 1) - (2 * sy + n)) / (2.0 * n)
    return dx, dy, n


def _orientation(mu20: float, mu02: float, mu11: float) -> float:
    scale = mu20 + mu02
    tolerance = 1e-12 * scale
    if abs(mu11) <= tolerance and abs(mu20 - mu02) <= tolerance:
        # 各向同性，方向无意义
        return 0.0
    if mu11 == 0.0:
        return 0.0 if mu20 >= mu02 else math.pi / 2
    return 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)


def moments(mask: BinaryMask) -> ShapeMoments:
    """面积、质心、中心二阶矩与主轴方向"""
    _require_pixels(mask)
    dx, dy, n = _centered_coordinates(mask)
    ys, xs = np.nonzero(mask.bits)
    cx = (2.0 * float(xs.sum()) + n) / (2.0 * n)
    cy = (2.0 * float(ys.sum()) + n) / (2.0 * n)
    # fsum 的结果与求和顺序无关
    mu20 = math.fsum((dx * dx).tolist())
    mu02 = math.fsum((dy * dy).tolist())
    mu11 = math.fsum((dx * dy).tolist())
    return ShapeMoments(
        area=n,
        centroid=(cx, cy),
        theta=_orientation(mu20, mu02, mu11),
        mu20=mu20,
        mu02=mu02,
        mu11=mu11,
    )


def _rotation_terms(theta: float) -> Tuple[float, float]:
    if theta == 0.0:
        return 1.0, 0.0
    if theta == math.pi / 2:
        return 0.0, 1.0
    return math.cos(theta), math.sin(theta)


def _symmetric_round(values: np.ndarray) -> np.ndarray:
    """最近邻取整，0.5 远离零方向，满足 r(-v) = -r(v)"""
    snapped = np.round(values, _SNAP_DECIMALS)
    return (np.sign(snapped) * np.floor(np.abs(snapped) + 0.5)).astype(np.int64)


def _cell_keys(u: np.ndarray, v: np.ndarray, offset: int) -> np.ndarray:
    return np.unique((u + offset) * (2 * offset + 1) + (v + offset))


def principal_frame_cells(mask: BinaryMask) -> Tuple[np.ndarray, np.ndarray]:
    """把像素中心旋转到主轴坐标系并最近邻栅格化，返回 (u, v) 整数格点"""
    _require_pixels(mask)
    stats = moments(mask)
    dx, dy, _ = _centered_coordinates(mask)
    c, s = _rotation_terms(stats.theta)
    u = dx * c + dy * s
    v = dy * c - dx * s
    return _symmetric_round(u), _symmetric_round(v)


def axis_flip_iou(mask: BinaryMask, axis: str = "major") -> float:
    """沿主轴（major）或次轴（minor）反射后的交并比"""
    if axis not in ("major", "minor"):
        raise ImagingError(f"unknown axis {axis!r}")
    u, v = principal_frame_cells(mask)
    offset = int(max(np.abs(u).max(), np.abs(v).max())) + 1
    original = _cell_keys(u, v, offset)
    if axis == "major":
        reflected = _cell_keys(u, -v, offset)
    else:
        reflected = _cell_keys(-u, v, offset)
    inter = np.intersect1d(original, reflected, assume_unique=True).size
    union = original.size + reflected.size - inter
    return inter / union


def perimeter(mask: BinaryMask) -> float:
    """Moore 邻域轮廓追踪的边界长度：直走 1，斜走 √2；孤立像素为 4

    只追踪扫描顺序中第一个像素所在连通域的外轮廓。
    """
    _require_pixels(mask)
    padded = np.pad(mask.bits, 1, constant_values=False)
    rows, cols = np.nonzero(padded)
    start = (int(rows[0]), int(cols[0]))

    y0, x0 = start
    if not padded[y0 - 1:y0 + 2, x0 - 1:x0 + 2].sum() > 1:
        return 4.0

    straight = 0
    diagonal = 0
    current = start
    backtrack = 0  # 起点是扫描顺序第一个像素，其西侧必为背景
    first_move = None
    max_steps = 8 * int(padded.sum()) + 8
    while True:
        if straight + diagonal > max_steps:
            raise ImagingError("contour tracing did not close")
        cy, cx = current
        for step in range(1, 9):
            direction = (backtrack + step) % 8
            oy, ox = MOORE_OFFSETS[direction]
            if padded[cy + oy, cx + ox]:
                break
        move = (current, direction)
        if first_move is None:
            first_move = move
        elif move == first_move:
            break
        if direction % 2:
            diagonal += 1
        else:
            straight += 1
        # 新的回溯方向：上一个被检查的背景邻居相对新像素的位置
        py, px = MOORE_OFFSETS[(direction - 1) % 8]
        ny, nx = cy + oy, cx + ox
        backtrack = _OFFSET_INDEX[(cy + py - ny, cx + px - nx)]
        current = (ny, nx)
    return straight + diagonal * math.sqrt(2.0)
