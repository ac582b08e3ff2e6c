import hashlib
import json
import os
from typing import Any, Dict, Mapping, Optional

import numpy as np

from . import __version__ as TOOL_VERSION


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_meta(seed: Optional[int], inputs: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """报告元信息：种子、工具版本和输入文件摘要"""
    digests = {}
    for name, path in sorted((inputs or {}).items()):
        if path and os.path.isfile(path):
            digests[name] = {"path": os.path.basename(path), "sha256": sha256_file(path)}
    return {"seed": seed, "tool_version": TOOL_VERSION, "inputs": digests}


def _to_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return _to_builtin(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: str, payload: Mapping[str, Any]) -> None:
    """键排序、UTF-8 编码写出，同样的输入得到同样的字节"""
    text = json.dumps(_to_builtin(dict(payload)), sort_keys=True, indent=2, ensure_ascii=False)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text + "\n")
