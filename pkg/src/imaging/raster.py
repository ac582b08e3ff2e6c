import io
from dataclasses import dataclass
from typing import TypeVar, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.core.errors import ImagingError

SUPPORTED_FORMATS = ("PNG", "JPEG")
TRANSFORM_OPS = ("flip_h", "flip_v", "rot90", "rot180", "rot270")
MASK_THRESHOLD = 127


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8 位 RGB 图像，行优先，形状 (height, width, 3)"""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.shape[0] * pixels.shape[1] == 0:
            raise ImagingError(f"invalid RGB raster shape {pixels.shape}")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """病灶分割掩码，True 表示病灶像素"""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.size == 0:
            raise ImagingError(f"invalid mask shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.bits.shape, self.bits.tobytes()))


Raster = TypeVar("Raster", RasterImage, BinaryMask)


def _open(data: bytes) -> Image.Image:
    try:
        image = Image.open(io.BytesIO(data))
    except UnidentifiedImageError:
        raise ImagingError("unsupported format") from None
    if image.format not in SUPPORTED_FORMATS:
        raise ImagingError(f"unsupported format {image.format}")
    try:
        image.load()
    except (OSError, SyntaxError, EOFError, ValueError) as e:
        raise ImagingError(f"truncated or corrupt {image.format} payload: {e}") from None
    return image


def decode_image(data: bytes) -> RasterImage:
    """解码 PNG/JPEG 为 8 位 RGB 图像（灰度图复制到三个通道）"""
    image = _open(data)
    return RasterImage(np.asarray(image.convert("RGB"), dtype=np.uint8))


def luma(pixels: np.ndarray) -> np.ndarray:
    """0.299R + 0.587G + 0.114B，四舍五入到整数"""
    rgb = pixels.astype(np.float64)
    return np.rint(0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2])


def decode_mask(data: bytes) -> BinaryMask:
    """解码掩码：亮度 > 127 的像素为病灶"""
    image = decode_image(data)
    return BinaryMask(luma(image.pixels) > MASK_THRESHOLD)


def encode_png(raster: Union[RasterImage, BinaryMask]) -> bytes:
    """编码为 PNG 字节（掩码写成 0/255 灰度图）"""
    if isinstance(raster, BinaryMask):
        image = Image.fromarray(raster.bits.astype(np.uint8) * 255)
    else:
        image = Image.fromarray(np.array(raster.pixels))
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def transform(raster: Raster, op: str) -> Raster:
    """无损的像素置换：翻转与 90 度倍数旋转"""
    array = raster.bits if isinstance(raster, BinaryMask) else raster.pixels
    if op == "flip_h":
        out = np.fliplr(array)
    elif op == "flip_v":
        out = np.flipud(array)
    elif op == "rot90":
        out = np.rot90(array, k=1, axes=(0, 1))
    elif op == "rot180":
        out = np.rot90(array, k=2, axes=(0, 1))
    elif op == "rot270":
        out = np.rot90(array, k=3, axes=(0, 1))
    else:
        raise ImagingError(f"unknown transform {op!r}")
    return type(raster)(out.copy())
