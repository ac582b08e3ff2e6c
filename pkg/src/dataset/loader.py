import csv
import logging
import math
import os
from typing import List

import pandas as pd

from src.core.errors import DatasetError
from .records import (
    AnnotationRecord,
    AnnotationTable,
    DatasetManifest,
    Feature,
    LesionRecord,
    Source,
)

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["lesion_id", "image_path", "mask_path", "diagnosis"]
ANNOTATION_COLUMNS = ["lesion_id", "source", "feature", "annotator_id", "value"]


def format_float(value: float) -> str:
    """浮点数的无损文本形式"""
    return repr(float(value))


def check_field_counts(path: str) -> None:
    """每个非空数据行的字段数必须与表头一致"""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            expected = None
            for fields in reader:
                if not fields:
                    continue
                if expected is None:
                    expected = len(fields)
                    continue
                if len(fields) != expected:
                    row = reader.line_num
                    raise DatasetError(
                        f"{path}: malformed row {row}: expected {expected} fields, got {len(fields)}",
                        row=row,
                    )
    except csv.Error as e:
        raise DatasetError(f"{path}: malformed CSV ({e})") from None
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"{path}: cannot read ({e})") from None


def read_csv_strict(path: str, columns: List[str]) -> pd.DataFrame:
    """按固定表头读取 CSV，所有字段保留为字符串"""
    if not os.path.isfile(path):
        raise DatasetError(f"file not found: {path}")
    check_field_counts(path)
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8",
            skip_blank_lines=True,
            index_col=False,
        )
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: missing header") from None
    except pd.errors.ParserError as e:
        raise DatasetError(f"{path}: malformed row ({e})") from None
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"{path}: cannot read ({e})") from None

    header = [str(c).strip() for c in frame.columns]
    if header != columns:
        raise DatasetError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
    frame.columns = columns
    return frame


def load_manifest(path: str) -> DatasetManifest:
    """加载病灶清单 manifest.csv"""
    frame = read_csv_strict(path, MANIFEST_COLUMNS)
    if frame.empty:
        raise DatasetError("empty manifest")

    records = []
    for index, row in enumerate(frame.itertuples(index=False)):
        lesion_id = row.lesion_id.strip()
        if not lesion_id:
            raise DatasetError(f"{path}: row {index + 2} has an empty lesion_id", row=index + 2)
        diagnosis = row.diagnosis.strip()
        if diagnosis not in ("0", "1"):
            raise DatasetError(
                f"lesion {lesion_id}: diagnosis must be 0 or 1, got {diagnosis!r}",
                lesion_id=lesion_id,
                row=index + 2,
            )
        mask_path = row.mask_path.strip() or None
        records.append(LesionRecord(lesion_id, row.image_path.strip(), mask_path, int(diagnosis)))

    name = os.path.splitext(os.path.basename(path))[0]
    manifest = DatasetManifest(tuple(records), name=name, base_dir=os.path.dirname(os.path.abspath(path)))
    logger.debug("Loaded %d lesions from %s", len(manifest), path)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    """保存病灶清单"""
    frame = pd.DataFrame(
        [
            [r.lesion_id, r.image_path, r.mask_path or "", str(r.diagnosis)]
            for r in manifest.records
        ],
        columns=MANIFEST_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def load_annotations(path: str) -> AnnotationTable:
    """加载原始标注 annotations.csv"""
    frame = read_csv_strict(path, ANNOTATION_COLUMNS)

    records = []
    for index, row in enumerate(frame.itertuples(index=False)):
        row_number = index + 2
        try:
            source = Source.parse(row.source)
            feature = Feature.parse(row.feature)
        except DatasetError as e:
            raise DatasetError(f"{path}: row {row_number}: {e}", lesion_id=row.lesion_id, row=row_number) from None
        try:
            value = float(row.value)
        except ValueError:
            value = math.nan
        if not math.isfinite(value):
            raise DatasetError(
                f"{path}: row {row_number}: non-numeric value {row.value!r}",
                lesion_id=row.lesion_id,
                row=row_number,
            )
        records.append(AnnotationRecord(
            lesion_id=row.lesion_id.strip(),
            source=source,
            feature=feature,
            annotator_id=row.annotator_id.strip(),
            value=value,
        ))
    return AnnotationTable(tuple(records))


def save_annotations(table: AnnotationTable, path: str) -> None:
    """保存标注表"""
    frame = pd.DataFrame(
        [
            [r.lesion_id, r.source.value, r.feature.value, r.annotator_id, format_float(r.value)]
            for r in table.records
        ],
        columns=ANNOTATION_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
