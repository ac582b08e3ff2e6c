import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

from src.core.errors import ConfigError, DatasetError
from src.dataset import Feature, Source


@dataclass(frozen=True, order=True)
class Auxiliary:
    """辅助回归头的监督目标：某个来源的某个特征"""
    source: Source
    feature: Feature

    @property
    def label(self) -> str:
        return f"{self.source.value}:{self.feature.value}"

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, token: str) -> "Auxiliary":
        parts = str(token).strip().split(":")
        if len(parts) != 2:
            raise ConfigError(f"auxiliary must look like source:feature, got {token!r}")
        try:
            return cls(Source.parse(parts[0]), Feature.parse(parts[1]))
        except DatasetError as e:
            raise ConfigError(f"invalid auxiliary {token!r}: {e}") from None


def parse_auxiliaries(value: Union[None, str, Iterable[Any]]) -> Tuple[Auxiliary, ...]:
    """接受 "auto:A,auto:B" 字符串或列表"""
    if value is None:
        return ()
    if isinstance(value, str):
        tokens = [t for t in value.split(",") if t.strip()]
    else:
        tokens = list(value)
    return tuple(t if isinstance(t, Auxiliary) else Auxiliary.parse(t) for t in tokens)


@dataclass(frozen=True)
class TrainConfig:
    """多任务训练配置"""
    epochs: int = 30
    batch_size: int = 20
    learning_rate: float = 2e-5
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    hidden: Tuple[int, int] = (32, 16)
    seed: int = 0
    loss_weights: Tuple[float, float] = (1.0, 1.0)
    k_folds: int = 5
    split_ratios: Tuple[float, float, float] = (0.70, 0.175, 0.125)
    auxiliaries: Tuple[Auxiliary, ...] = ()
    ensemble: bool = False
    randomize_annotations: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "loss_weights", tuple(float(w) for w in self.loss_weights))
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        object.__setattr__(self, "auxiliaries", parse_auxiliaries(self.auxiliaries))
        self._validate()

    def _validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("epochs, batch_size and workers must be positive")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be a non-negative number, got {self.learning_rate}")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ConfigError(f"rmsprop_decay must lie in (0, 1), got {self.rmsprop_decay}")
        if self.rmsprop_epsilon <= 0:
            raise ConfigError("rmsprop_epsilon must be positive")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ConfigError(f"hidden must hold two positive layer sizes, got {self.hidden}")
        if len(self.loss_weights) != 2 or min(self.loss_weights) < 0 or self.loss_weights[0] == 0:
            raise ConfigError(f"loss_weights must be (cls > 0, reg >= 0), got {self.loss_weights}")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if len(self.split_ratios) != 3 or min(self.split_ratios) <= 0:
            raise ConfigError("split_ratios must hold three positive fractions (train, val, test)")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split_ratios must sum to 1, got {sum(self.split_ratios)}")
        if len(set(self.auxiliaries)) != len(self.auxiliaries):
            raise ConfigError("duplicate auxiliary targets")
        if len(self.auxiliaries) > 1 and not self.ensemble:
            raise ConfigError("several auxiliary targets need --ensemble")

    @property
    def is_baseline(self) -> bool:
        return not self.auxiliaries

    @property
    def members(self) -> Tuple[Optional[Auxiliary], ...]:
        """集成成员；基线模型只有一个无辅助头的成员"""
        return self.auxiliaries if self.auxiliaries else (None,)

    def with_overrides(self, **changes: Any) -> "TrainConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "TrainConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid training config: {e}") from None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["hidden"] = list(self.hidden)
        data["loss_weights"] = list(self.loss_weights)
        data["split_ratios"] = list(self.split_ratios)
        data["auxiliaries"] = [a.label for a in self.auxiliaries]
        return data


@dataclass(frozen=True)
class SynthParams:
    """合成数据生成参数"""
    n: int = 2000
    d: int = 91
    noise_cls: float = 1.0
    noise_ann: float = 0.3
    seed: int = 0
    render_images: bool = True
    image_size: int = 32

    def __post_init__(self):
        if self.n < 50:
            raise ConfigError(f"synthetic datasets need n >= 50, got {self.n}")
        if self.d < 2:
            raise ConfigError(f"synthetic datasets need d >= 2, got {self.d}")
        if self.noise_cls < 0 or self.noise_ann < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.image_size < 16:
            raise ConfigError("image_size must be at least 16")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "SynthParams":
        known = {f.name for f in fields(cls)}
        try:
            return cls(**{k: v for k, v in (data or {}).items() if k in known})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid synthetic parameters: {e}") from None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def split_sizes(total: int, ratios: Sequence[float]) -> Tuple[int, ...]:
    """最大余数法分配整数份额，总和恰为 total"""
    raw = [total * r for r in ratios]
    sizes = [math.floor(x) for x in raw]
    remainder = total - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return tuple(sizes)
