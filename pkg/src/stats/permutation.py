import logging
from typing import Callable, Optional

import numpy as np

from src.aggregate import FeatureMatrix
from src.core.errors import StatsError

logger = logging.getLogger(__name__)

PermutationFn = Callable[[np.random.Generator, int], np.ndarray]


def _default_permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.permutation(n)


def permute_annotations(
    matrix: FeatureMatrix,
    seed: int,
    permutation_fn: Optional[PermutationFn] = None,
) -> FeatureMatrix:
    """随机标注对照：在每个 (来源, 特征) 内部把聚合值在可用病灶之间打乱

    可用性模式与数值多重集保持不变，标签不动。按来源、特征的固定顺序消耗随机数，
    同一种子得到同一结果。
    """
    permutation_fn = permutation_fn or _default_permutation
    rng = np.random.default_rng(seed)
    values = np.array(matrix.values)
    spread = np.array(matrix.spread)
    for s, source in enumerate(matrix.sources):
        for f, feature in enumerate(matrix.features):
            rows = np.flatnonzero(matrix.availability[:, s, f])
            if len(rows) == 0:
                continue
            order = np.asarray(permutation_fn(rng, len(rows)))
            if sorted(order.tolist()) != list(range(len(rows))):
                raise StatsError(f"permutation for {source.value}:{feature.value} is not a bijection")
            values[rows, s, f] = matrix.values[rows[order], s, f]
            spread[rows, s, f] = matrix.spread[rows[order], s, f]
    logger.info("Annotations permuted within %d pools (seed %d)", len(matrix.pools()), seed)
    return matrix.with_values(values, spread)
