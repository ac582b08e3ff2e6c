import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from src.core.errors import TrainingError

logger = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wc", "bc", "Wr", "br")
REGRESSION_PARAMS = ("Wr", "br")
PROB_CLAMP = 1e-12


@dataclass(eq=False)
class ModelParams:
    """两层 ReLU 主干 + 分类头 + 回归头

    W1 (d, h1), W2 (h1, h2)，两个头均为 (h2, 1)。
    """
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray
    Wr: np.ndarray
    br: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d, h1 = self.W1.shape
        h2 = self.W2.shape[1]
        expected = {
            "W1": (d, h1), "b1": (h1,),
            "W2": (h1, h2), "b2": (h2,),
            "Wc": (h2, 1), "bc": (1,),
            "Wr": (h2, 1), "br": (1,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise TrainingError(f"parameter {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> Tuple[int, int]:
        return self.W1.shape[1], self.W2.shape[1]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.items())

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: value.copy() for name, value in self.items()})

    def is_finite(self) -> bool:
        return all(np.isfinite(value).all() for _, value in self.items())

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(value, getattr(other, name)) for name, value in self.items())


def init_params(d: int, hidden: Tuple[int, int], rng: Union[int, np.random.Generator]) -> ModelParams:
    """He 初始化，偏置为 0"""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    h1, h2 = hidden
    return ModelParams(
        W1=rng.normal(0.0, np.sqrt(2.0 / d), size=(d, h1)),
        b1=np.zeros(h1),
        W2=rng.normal(0.0, np.sqrt(2.0 / h1), size=(h1, h2)),
        b2=np.zeros(h2),
        Wc=rng.normal(0.0, np.sqrt(1.0 / h2), size=(h2, 1)),
        bc=np.zeros(1),
        Wr=rng.normal(0.0, np.sqrt(1.0 / h2), size=(h2, 1)),
        br=np.zeros(1),
    )


@dataclass(frozen=True, eq=False)
class Batch:
    """一个小批量；annotations 在不可用处的取值被忽略"""
    x: np.ndarray
    labels: np.ndarray
    annotations: np.ndarray
    available: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        n = x.shape[0]
        labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        available = np.asarray(self.available, dtype=bool).reshape(-1)
        annotations = np.asarray(self.annotations, dtype=np.float64).reshape(-1)
        if n == 0:
            raise TrainingError("empty batch")
        if not (len(labels) == len(available) == len(annotations) == n):
            raise TrainingError("batch arrays must have one entry per item")
        # 缺失项置 0，避免 NaN 参与运算
        annotations = np.where(available, annotations, 0.0)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "available", available)
        object.__setattr__(self, "annotations", annotations)

    def __len__(self) -> int:
        return self.x.shape[0]

    @classmethod
    def unlabelled(cls, x: np.ndarray, labels: np.ndarray) -> "Batch":
        n = np.atleast_2d(x).shape[0]
        return cls(x=x, labels=labels, annotations=np.zeros(n), available=np.zeros(n, dtype=bool))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    cls: float
    reg: float

    def to_dict(self) -> Dict[str, float]:
        return {"total": self.total, "cls": self.cls, "reg": self.reg}


@dataclass(frozen=True, eq=False)
class _Cache:
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    p: np.ndarray
    y_hat: np.ndarray


def _forward(params: ModelParams, x: np.ndarray) -> _Cache:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise TrainingError(f"input has {x.shape[1]} features, model expects {params.input_dim}")
    z1 = x @ params.W1 + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.W2 + params.b2
    a2 = np.maximum(z2, 0.0)
    p = expit((a2 @ params.Wc + params.bc)[:, 0])
    y_hat = (a2 @ params.Wr + params.br)[:, 0]
    return _Cache(x=x, z1=z1, a1=a1, z2=z2, a2=a2, p=p, y_hat=y_hat)


def forward(params: ModelParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (恶性概率 p, 标注回归值 ŷ)，每行一个样本"""
    cache = _forward(params, x)
    return cache.p, cache.y_hat


def loss(
    p: np.ndarray,
    y_hat: np.ndarray,
    labels: np.ndarray,
    annotations: np.ndarray,
    available: np.ndarray,
    class_weights: Tuple[float, float] = (1.0, 1.0),
    loss_weights: Tuple[float, float] = (1.0, 1.0),
) -> LossBreakdown:
    """类别加权交叉熵 + 掩码均方误差

    均方误差除以可用样本数；没有可用样本时为 0。
    """
    p = np.clip(np.asarray(p, dtype=np.float64).reshape(-1), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    available = np.asarray(available, dtype=bool).reshape(-1)
    target = np.where(available, np.asarray(annotations, dtype=np.float64).reshape(-1), 0.0)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)

    w = np.where(y == 1, class_weights[1], class_weights[0])
    cls = float(np.mean(-w * (y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
    m = int(available.sum())
    reg = float(np.sum(np.where(available, (y_hat - target) ** 2, 0.0)) / m) if m else 0.0
    lam_cls, lam_reg = loss_weights
    return LossBreakdown(total=lam_cls * cls + lam_reg * reg, cls=cls, reg=reg)


def batch_loss(
    params: ModelParams,
    batch: Batch,
    class_weights: Tuple[float, float] = (1.0, 1.0),
    loss_weights: Tuple[float, float] = (1.0, 1.0),
) -> LossBreakdown:
    p, y_hat = forward(params, batch.x)
    return loss(p, y_hat, batch.labels, batch.annotations, batch.available, class_weights, loss_weights)


def backward(
    params: ModelParams,
    batch: Batch,
    class_weights: Tuple[float, float] = (1.0, 1.0),
    loss_weights: Tuple[float, float] = (1.0, 1.0),
) -> Tuple[Dict[str, np.ndarray], LossBreakdown]:
    """总损失对每个参数的解析梯度

    交叉熵对 logit 的梯度取 w·(p - y)，与截断前的损失一致。
    """
    cache = _forward(params, batch.x)
    breakdown = loss(cache.p, cache.y_hat, batch.labels, batch.annotations, batch.available,
                     class_weights, loss_weights)
    n = len(batch)
    lam_cls, lam_reg = loss_weights

    w = np.where(batch.labels == 1, class_weights[1], class_weights[0])
    d_logit = lam_cls * w * (cache.p - batch.labels) / n
    m = int(batch.available.sum())
    if m and lam_reg:
        d_yhat = lam_reg * 2.0 * np.where(batch.available, cache.y_hat - batch.annotations, 0.0) / m
    else:
        d_yhat = np.zeros(n)

    grads = {
        "Wc": cache.a2.T @ d_logit[:, None],
        "bc": np.array([d_logit.sum()]),
        "Wr": cache.a2.T @ d_yhat[:, None],
        "br": np.array([d_yhat.sum()]),
    }
    d_a2 = d_logit[:, None] @ params.Wc.T + d_yhat[:, None] @ params.Wr.T
    d_z2 = d_a2 * (cache.z2 > 0)
    grads["W2"] = cache.a1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ params.W2.T) * (cache.z1 > 0)
    grads["W1"] = cache.x.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return {name: grads[name] for name in PARAM_NAMES}, breakdown


def numerical_gradient(
    params: ModelParams,
    batch: Batch,
    class_weights: Tuple[float, float] = (1.0, 1.0),
    loss_weights: Tuple[float, float] = (1.0, 1.0),
    eps: float = 1e-5,
    names: Optional[Tuple[str, ...]] = None,
) -> Dict[str, np.ndarray]:
    """中心差分梯度，用于核对 backward"""
    grads = {}
    for name in names or PARAM_NAMES:
        value = getattr(params, name)
        grad = np.zeros_like(value)
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + eps
            upper = batch_loss(params, batch, class_weights, loss_weights).total
            value[index] = original - eps
            lower = batch_loss(params, batch, class_weights, loss_weights).total
            value[index] = original
            grad[index] = (upper - lower) / (2.0 * eps)
        grads[name] = grad
    return grads
