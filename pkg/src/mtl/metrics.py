from typing import Tuple

import numpy as np
from scipy.stats import rankdata

from src.core.errors import TrainingError


def _check(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise TrainingError(f"scores and labels must be equal-length vectors, got {s.shape} and {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise TrainingError("labels must be 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise TrainingError("single-class input: AUC needs both diagnoses")
    if not np.isfinite(s).all():
        raise TrainingError("scores must be finite")
    return s, y


def auc(scores, labels) -> float:
    """基于秩的 AUC（Mann-Whitney U），并列计 0.5"""
    s, y = _check(scores, labels)
    ranks = rankdata(s, method="average")
    n1 = int(y.sum())
    n0 = len(y) - n1
    u = float(ranks[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def roc_curve(scores, labels) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC 曲线 (fpr, tpr, threshold)，首点为 (0, 0, inf)"""
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s = s[order]
    y = y[order]
    # 每个不同分数的最后一个位置
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = np.cumsum(1 - y)[last]
    n1 = tps[-1]
    n0 = fps[-1]
    fpr = np.r_[0.0, fps / n0]
    tpr = np.r_[0.0, tps / n1]
    thresholds = np.r_[np.inf, s[last]]
    return fpr, tpr, thresholds
