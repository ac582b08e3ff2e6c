import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.aggregate import FeatureMatrix
from src.core.errors import TrainingError
from src.core.logger import progress_enabled
from src.stats import permute_annotations
from .config import Auxiliary, TrainConfig
from .metrics import auc, roc_curve
from .network import Batch, LossBreakdown, ModelParams, backward, batch_loss, forward, init_params
from .optimizer import init_state, rmsprop_step
from .splits import FoldSplit, class_weights, stratified_splits

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrainingData:
    """对齐后的训练数据：特征、标签与聚合标注矩阵（病灶顺序一致）"""
    lesion_ids: Tuple[str, ...]
    x: np.ndarray
    labels: np.ndarray
    matrix: Optional[FeatureMatrix] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] != len(self.lesion_ids) or labels.shape != (len(self.lesion_ids),):
            raise TrainingError("features, labels and lesion ids must align")
        if not np.isfinite(x).all():
            raise TrainingError("feature vectors must be finite")
        if self.matrix is not None and tuple(self.matrix.lesion_ids) != tuple(self.lesion_ids):
            raise TrainingError("feature matrix lesion order differs from the training data")
        object.__setattr__(self, "lesion_ids", tuple(self.lesion_ids))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.lesion_ids)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def target(self, auxiliary: Optional[Auxiliary]) -> Tuple[np.ndarray, np.ndarray]:
        """辅助头的回归目标与可用性；基线返回全部不可用"""
        n = len(self)
        if auxiliary is None:
            return np.zeros(n), np.zeros(n, dtype=bool)
        if self.matrix is None or not self.matrix.has_source(auxiliary.source):
            raise TrainingError(f"no annotations from source {auxiliary.source.value} for auxiliary {auxiliary}")
        values, available = self.matrix.column(auxiliary.source, auxiliary.feature)
        if not available.any():
            raise TrainingError(f"auxiliary {auxiliary} has no available annotations")
        return np.where(available, values, 0.0), np.array(available)

    def batch(self, rows: np.ndarray, auxiliary: Optional[Auxiliary]) -> Batch:
        values, available = self.target(auxiliary)
        return Batch(x=self.x[rows], labels=self.labels[rows], annotations=values[rows], available=available[rows])

    def with_matrix(self, matrix: FeatureMatrix) -> "TrainingData":
        return replace(self, matrix=matrix)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    val_auc: Optional[float]

    def to_dict(self) -> Dict[str, object]:
        return {"epoch": self.epoch, "loss": self.loss.to_dict(), "val_auc": self.val_auc}


@dataclass(frozen=True, eq=False)
class TrainResult:
    """训练结果：按验证集 AUC 选出的快照与逐轮历史"""
    params: ModelParams
    history: Tuple[EpochRecord, ...]
    best_epoch: int
    auxiliary: Optional[Auxiliary]
    seed: int


def _val_auc(params: ModelParams, data: TrainingData, val_idx: np.ndarray) -> Optional[float]:
    if len(val_idx) == 0 or len(np.unique(data.labels[val_idx])) < 2:
        return None
    p, _ = forward(params, data.x[val_idx])
    return auc(p, data.labels[val_idx])


def train(
    config: TrainConfig,
    data: TrainingData,
    train_idx: np.ndarray,
    val_idx: Optional[np.ndarray] = None,
    auxiliary: Optional[Auxiliary] = None,
    seed: Optional[int] = None,
) -> TrainResult:
    """小批量 RMSprop 训练

    每轮按种子打乱顺序；没有辅助目标时回归损失权重强制为 0（基线模型）。
    返回验证 AUC 最高的那一轮的参数，没有可用验证集时返回最后一轮。
    """
    seed = config.seed if seed is None else seed
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx if val_idx is not None else [], dtype=np.int64)
    if len(train_idx) == 0:
        raise TrainingError("empty training set")

    weights = class_weights(data.labels[train_idx])
    loss_weights = config.loss_weights if auxiliary is not None else (config.loss_weights[0], 0.0)
    rng = np.random.default_rng(seed)
    params = init_params(data.dim, config.hidden, rng)
    state = init_state(params)
    full_batch = data.batch(train_idx, auxiliary)

    history: List[EpochRecord] = []
    best_params = params
    best_auc = -np.inf
    best_epoch = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            batch = data.batch(order[start:start + config.batch_size], auxiliary)
            grads, _ = backward(params, batch, weights, loss_weights)
            params, state = rmsprop_step(params, grads, state, config)
        breakdown = batch_loss(params, full_batch, weights, loss_weights)
        val_auc = _val_auc(params, data, val_idx)
        history.append(EpochRecord(epoch=epoch, loss=breakdown, val_auc=val_auc))
        if val_auc is None:
            best_params, best_epoch = params, epoch
        elif val_auc > best_auc:
            best_params, best_auc, best_epoch = params, val_auc, epoch
        logger.debug("epoch %d aux=%s loss=%.6f val_auc=%s", epoch, auxiliary, breakdown.total, val_auc)

    return TrainResult(
        params=best_params.copy(),
        history=tuple(history),
        best_epoch=best_epoch,
        auxiliary=auxiliary,
        seed=seed,
    )


def ensemble_predict(models: Sequence[ModelParams], x: np.ndarray) -> np.ndarray:
    """集成预测：成员概率的算术平均"""
    if not models:
        raise TrainingError("ensemble needs at least one model")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    dims = {m.input_dim for m in models}
    if len(dims) != 1 or x.shape[1] not in dims:
        raise TrainingError(f"dimension mismatch: inputs have {x.shape[1]} features, models expect {sorted(dims)}")
    predictions = np.vstack([forward(m, x)[0] for m in models])
    # 成员输出完全相同时直接返回，避免求和再除带来的舍入
    if (predictions == predictions[0]).all():
        return predictions[0]
    return predictions.mean(axis=0)


@dataclass(frozen=True, eq=False)
class FoldOutcome:
    fold: int
    auc: float
    member_auc: Dict[str, float]
    roc: Tuple[np.ndarray, np.ndarray, np.ndarray]
    members: Tuple[TrainResult, ...]


@dataclass(frozen=True, eq=False)
class EvalReport:
    """交叉验证报告：逐折 AUC、均值 ± 标准差、ROC 曲线与配置回显"""
    per_fold_auc: Tuple[float, ...]
    mean: float
    std: float
    roc: Tuple[Tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    config: TrainConfig
    member_auc: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    best_epochs: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    models: Tuple[Tuple[ModelParams, ...], ...] = ()

    def __post_init__(self):
        if any(not 0.0 <= a <= 1.0 for a in self.per_fold_auc):
            raise TrainingError("AUC outside [0, 1]")

    def summary(self) -> str:
        return f"AUC {self.mean:.3f} ± {self.std:.3f} over {len(self.per_fold_auc)} folds"

    def to_dict(self) -> Dict[str, object]:
        return {
            "per_fold_auc": list(self.per_fold_auc),
            "mean": self.mean,
            "std": self.std,
            "member_auc": {k: list(v) for k, v in sorted(self.member_auc.items())},
            "best_epochs": {k: list(v) for k, v in sorted(self.best_epochs.items())},
            "config": self.config.to_dict(),
        }


def member_name(auxiliary: Optional[Auxiliary]) -> str:
    return "baseline" if auxiliary is None else auxiliary.label


def _run_fold(config: TrainConfig, data: TrainingData, split: FoldSplit) -> FoldOutcome:
    members = []
    member_auc = {}
    test_labels = data.labels[split.test]
    for position, auxiliary in enumerate(config.members):
        result = train(
            config, data, split.train, split.val,
            auxiliary=auxiliary,
            seed=config.seed + 1000 * split.fold + position,
        )
        members.append(result)
        member_auc[member_name(auxiliary)] = auc(forward(result.params, data.x[split.test])[0], test_labels)
    scores = ensemble_predict([m.params for m in members], data.x[split.test])
    return FoldOutcome(
        fold=split.fold,
        auc=auc(scores, test_labels),
        member_auc=member_auc,
        roc=roc_curve(scores, test_labels),
        members=tuple(members),
    )


def cross_validate(config: TrainConfig, data: TrainingData) -> EvalReport:
    """分层 k 折交叉验证，在每折的测试集上评估（集成时评估成员概率平均）"""
    if config.randomize_annotations:
        if data.matrix is None:
            raise TrainingError("randomized annotations need a feature matrix")
        data = data.with_matrix(permute_annotations(data.matrix, config.seed))
        logger.info("Training on permuted annotations (seed %d)", config.seed)
    for auxiliary in config.auxiliaries:
        data.target(auxiliary)

    splits = stratified_splits(data.labels, config)
    progress = dict(total=len(splits), desc="folds", disable=not progress_enabled())
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(tqdm(pool.map(lambda s: _run_fold(config, data, s), splits), **progress))
    else:
        outcomes = [_run_fold(config, data, s) for s in tqdm(splits, **progress)]
    outcomes.sort(key=lambda o: o.fold)

    per_fold = tuple(o.auc for o in outcomes)
    names = [member_name(a) for a in config.members]
    report = EvalReport(
        per_fold_auc=per_fold,
        mean=float(np.mean(per_fold)),
        std=float(np.std(per_fold)),
        roc=tuple(o.roc for o in outcomes),
        config=config,
        member_auc={name: tuple(o.member_auc[name] for o in outcomes) for name in names},
        best_epochs={
            name: tuple(o.members[i].best_epoch for o in outcomes) for i, name in enumerate(names)
        },
        models=tuple(tuple(m.params for m in o.members) for o in outcomes),
    )
    logger.info("%s (%s)", report.summary(), ", ".join(names))
    return report
