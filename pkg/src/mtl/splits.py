import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.core.errors import TrainingError
from .config import TrainConfig, split_sizes

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """一折的 train/val/test 下标（各自升序）"""
    fold: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def _binary_labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or not np.isin(y, (0, 1)).all():
        raise TrainingError("labels must be a vector of 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise TrainingError("single-class input: both diagnoses must be present")
    return y


def class_weights(labels) -> Tuple[float, float]:
    """平衡权重 w_c = n / (2 n_c)"""
    y = _binary_labels(labels)
    n = len(y)
    n1 = int(y.sum())
    n0 = n - n1
    return n / (2.0 * n0), n / (2.0 * n1)


def _class_allocation(totals: Tuple[int, ...], n_pos: int, ratios) -> Tuple[List[int], List[int]]:
    """把各部分的总量拆成正类和负类的个数"""
    pos = list(split_sizes(n_pos, ratios))
    # 正类不能多于该部分总量
    for i in range(len(pos)):
        while pos[i] > totals[i]:
            pos[i] -= 1
            j = min((k for k in range(len(pos)) if pos[k] < totals[k]), key=lambda k: pos[k] - totals[k])
            pos[j] += 1
    neg = [t - p for t, p in zip(totals, pos)]
    return pos, neg


def stratified_splits(labels, config: TrainConfig = TrainConfig()) -> List[FoldSplit]:
    """分层 k 折划分，每折包含 train/val/test 三部分

    各部分大小按最大余数法取整，每类在各部分中的比例与全局比例相差不超过 1 个样本。
    每个类别固定一次随机排列，第 f 折旋转 round(f * n_c / k) 位，测试集随折轮换。
    """
    y = _binary_labels(labels)
    n = len(y)
    k = config.k_folds
    if n < k:
        raise TrainingError(f"need at least {k} lesions for {k} folds, got {n}")

    totals = split_sizes(n, config.split_ratios)
    n_pos = int(y.sum())
    pos_sizes, neg_sizes = _class_allocation(totals, n_pos, config.split_ratios)

    rng = np.random.default_rng(config.seed)
    orders = {
        1: rng.permutation(np.flatnonzero(y == 1)),
        0: rng.permutation(np.flatnonzero(y == 0)),
    }
    per_class_sizes = {1: pos_sizes, 0: neg_sizes}

    folds = []
    for fold in range(k):
        parts = {"train": [], "val": [], "test": []}
        for cls, order in orders.items():
            shift = int(round(fold * len(order) / k))
            rotated = np.roll(order, -shift)
            train_n, val_n, test_n = per_class_sizes[cls]
            parts["test"].append(rotated[:test_n])
            parts["val"].append(rotated[test_n:test_n + val_n])
            parts["train"].append(rotated[test_n + val_n:test_n + val_n + train_n])
        folds.append(FoldSplit(
            fold=fold,
            train=np.sort(np.concatenate(parts["train"])),
            val=np.sort(np.concatenate(parts["val"])),
            test=np.sort(np.concatenate(parts["test"])),
        ))
    logger.debug("Stratified %d folds with sizes %s", k, totals)
    return folds
