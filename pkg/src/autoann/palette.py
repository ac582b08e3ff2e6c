import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from skimage.color import rgb2lab

from src.core.errors import ConfigError

DEFAULT_ANCHORS: Tuple[Tuple[str, Tuple[int, int, int]], ...] = (
    ("white", (255, 255, 255)),
    ("red", (204, 51, 51)),
    ("light_brown", (180, 120, 80)),
    ("dark_brown", (100, 60, 30)),
    ("blue_gray", (100, 120, 150)),
    ("black", (30, 30, 30)),
)
DEFAULT_TAU = 0.05


def to_lab(rgb: np.ndarray) -> np.ndarray:
    """8 位 sRGB (N, 3) 转 CIELAB（D65）"""
    rgb = np.asarray(rgb, dtype=np.float64).reshape(-1, 1, 3) / 255.0
    return rgb2lab(rgb, illuminant="D65").reshape(-1, 3)


@dataclass(frozen=True)
class ReferencePalette:
    """颜色评分使用的六个参考色与出现阈值 τ"""
    anchors: Tuple[Tuple[str, Tuple[int, int, int]], ...] = DEFAULT_ANCHORS
    tau: float = DEFAULT_TAU
    lab: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.anchors) != 6:
            raise ConfigError(f"palette needs exactly six anchors, got {len(self.anchors)}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"palette tau must be in (0, 1), got {self.tau}")
        for name, rgb in self.anchors:
            if len(rgb) != 3 or any(not 0 <= c <= 255 for c in rgb):
                raise ConfigError(f"anchor {name} is not an 8-bit RGB triplet")
        lab = to_lab(np.array([rgb for _, rgb in self.anchors]))
        lab.setflags(write=False)
        object.__setattr__(self, "lab", lab)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.anchors)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReferencePalette":
        """从 {"anchors": {name: [r,g,b]}, "tau": 0.05} 构建"""
        anchors = data.get("anchors")
        if anchors is None:
            anchors = dict(DEFAULT_ANCHORS)
        if not isinstance(anchors, dict):
            raise ConfigError("palette anchors must be a mapping name -> [r, g, b]")
        parsed = tuple((str(name), tuple(int(c) for c in rgb)) for name, rgb in anchors.items())
        return cls(anchors=parsed, tau=float(data.get("tau", DEFAULT_TAU)))

    def to_dict(self) -> Dict[str, Any]:
        return {"anchors": {name: list(rgb) for name, rgb in self.anchors}, "tau": self.tau}


def load_palette(path: Optional[str] = None, config: Optional[Dict[str, Any]] = None) -> ReferencePalette:
    """加载调色板：JSON 文件优先，其次配置，最后默认值"""
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read palette {path}: {e}") from e
        return ReferencePalette.from_dict(data)
    if config:
        return ReferencePalette.from_dict(config)
    return ReferencePalette()
