import base64
import json
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import TrainingError
from src.core.report import write_json
from .config import Auxiliary
from .network import PARAM_NAMES, ModelParams

CHECKPOINT_FORMAT = "lesionabc-mtl"
CHECKPOINT_VERSION = 1


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    """小端 float64 + base64"""
    data = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return {"shape": list(array.shape), "dtype": "<f8", "data": base64.b64encode(data).decode("ascii")}


def decode_array(payload: Mapping[str, Any]) -> np.ndarray:
    if payload.get("dtype") != "<f8":
        raise TrainingError(f"unsupported array dtype {payload.get('dtype')!r}")
    raw = base64.b64decode(payload["data"])
    shape = tuple(int(s) for s in payload["shape"])
    array = np.frombuffer(raw, dtype="<f8")
    if array.size != int(np.prod(shape)):
        raise TrainingError(f"array data does not match shape {shape}")
    return array.reshape(shape).astype(np.float64)


def params_to_dict(params: ModelParams) -> Dict[str, Any]:
    return {name: encode_array(value) for name, value in params.items()}


def params_from_dict(payload: Mapping[str, Any]) -> ModelParams:
    missing = [name for name in PARAM_NAMES if name not in payload]
    if missing:
        raise TrainingError(f"checkpoint is missing layer(s) {', '.join(missing)}")
    return ModelParams(**{name: decode_array(payload[name]) for name in PARAM_NAMES})


def save_model(
    path: str,
    members: Sequence[Tuple[Optional[Auxiliary], ModelParams]],
    config: Optional[Mapping[str, Any]] = None,
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """写出 model.json（集成成员按给定顺序保存）"""
    if not members:
        raise TrainingError("nothing to save")
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "members": [
            {"auxiliary": None if aux is None else aux.label, "layers": params_to_dict(params)}
            for aux, params in members
        ],
        "config": dict(config or {}),
        "meta": dict(meta or {}),
    }
    write_json(path, payload)


def load_model(path: str) -> Tuple[List[Tuple[Optional[Auxiliary], ModelParams]], Dict[str, Any]]:
    """读取 model.json，返回 (成员列表, 完整载荷)"""
    if not os.path.isfile(path):
        raise TrainingError(f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise TrainingError(f"{path}: unreadable checkpoint ({e})") from None
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise TrainingError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise TrainingError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    members = []
    for member in payload.get("members", []):
        aux = member.get("auxiliary")
        members.append((None if aux is None else Auxiliary.parse(aux), params_from_dict(member["layers"])))
    if not members:
        raise TrainingError(f"{path}: checkpoint has no members")
    return members, payload
