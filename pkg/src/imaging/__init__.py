from .raster import (
    RasterImage,
    BinaryMask,
    TRANSFORM_OPS,
    decode_image,
    decode_mask,
    encode_png,
    luma,
    transform
)
from .geometry import (
    ShapeMoments,
    largest_component,
    moments,
    axis_flip_iou,
    perimeter,
    principal_frame_cells,
    touches_border
)

__all__ = [
    "RasterImage",
    "BinaryMask",
    "TRANSFORM_OPS",
    "decode_image",
    "decode_mask",
    "encode_png",
    "luma",
    "transform",
    "ShapeMoments",
    "largest_component",
    "moments",
    "axis_flip_iou",
    "perimeter",
    "principal_frame_cells",
    "touches_border"
]
