from typing import Dict, Optional, Tuple

import numpy as np

from src.core.errors import TrainingError
from .config import TrainConfig
from .network import ModelParams

OptimizerState = Dict[str, np.ndarray]


def init_state(params: ModelParams) -> OptimizerState:
    return {name: np.zeros_like(value) for name, value in params.items()}


def rmsprop_step(
    params: ModelParams,
    grads: Dict[str, np.ndarray],
    state: Optional[OptimizerState],
    config: TrainConfig,
) -> Tuple[ModelParams, OptimizerState]:
    """RMSprop 更新，返回新的参数和状态（不修改输入）

    s <- rho*s + (1-rho)*g^2;  theta <- theta - lr*g/(sqrt(s)+eps)
    """
    state = state if state is not None else init_state(params)
    rho = config.rmsprop_decay
    updated = {}
    new_state = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise TrainingError(f"gradient {name} has shape {g.shape}, expected {value.shape}")
        s = rho * state[name] + (1.0 - rho) * g * g
        updated[name] = value - config.learning_rate * g / (np.sqrt(s) + config.rmsprop_epsilon)
        new_state[name] = s
    new_params = ModelParams(**updated)
    if not new_params.is_finite():
        raise TrainingError("non-finite parameters after update")
    return new_params, new_state
