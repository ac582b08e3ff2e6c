import os
from typing import Any, Dict, Mapping, Optional

import pandas as pd

from src.core.report import write_json
from src.dataset import format_float
from .correlation import AgreementMatrix, LabelCorrelationTable
from .raincloud import RaincloudData

RAINCLOUD_COLUMNS = ["group", "kind", "x", "y"]


def write_correlations_json(
    path: str,
    table: LabelCorrelationTable,
    meta: Mapping[str, Any],
    spread: Optional[LabelCorrelationTable] = None,
) -> None:
    """correlations.json：顶层按来源分组，另附 meta（以及可选的分歧相关）"""
    payload: Dict[str, Any] = dict(table.to_nested())
    payload["meta"] = dict(meta)
    if spread is not None:
        payload["spread"] = spread.to_nested()
    write_json(path, payload)


def write_agreement_csv(path: str, agreement: AgreementMatrix) -> None:
    """agreement_<feature>.csv：方阵，未定义的单元格留空"""
    rows = []
    for a in agreement.sources:
        row = [a]
        for b in agreement.sources:
            r = agreement.r(a, b)
            row.append("" if r is None else format_float(r))
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["source"] + list(agreement.sources))
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def write_raincloud_csv(path: str, groups: Mapping[int, RaincloudData]) -> None:
    """raincloud_<source>_<feature>.csv 长表

    point 行 y 为 0；box 行 y 为分位水平；kde 行为 (网格, 密度)。
    """
    rows = []
    for group in sorted(groups):
        data = groups[group]
        for value in data.points:
            rows.append([group, "point", format_float(value), "0.0"])
        for level, value in data.box.levels():
            rows.append([group, "box", format_float(value), format_float(level)])
        if data.has_kde:
            for x, y in zip(data.kde_x, data.kde_y):
                rows.append([group, "kde", format_float(x), format_float(y)])
    frame = pd.DataFrame(rows, columns=RAINCLOUD_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def raincloud_filename(out_dir: str, source: str, feature: str) -> str:
    return os.path.join(out_dir, f"raincloud_{source}_{feature}.csv")


def agreement_filename(out_dir: str, feature: str) -> str:
    return os.path.join(out_dir, f"agreement_{feature}.csv")
