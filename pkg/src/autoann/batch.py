import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

from tqdm import tqdm

from src.core.errors import LesionABCError
from src.core.logger import progress_enabled
from src.dataset import (
    AnnotationRecord,
    AnnotationTable,
    DatasetManifest,
    Feature,
    LesionRecord,
    Source,
)
from src.imaging import decode_image, decode_mask
from .palette import ReferencePalette
from .scorers import AutoScores, score_lesion

logger = logging.getLogger(__name__)

AUTO_ANNOTATOR_ID = "auto:v1"


@dataclass(frozen=True)
class AnnotateResult:
    """批量自动标注结果"""
    table: AnnotationTable
    warnings: Tuple[Tuple[str, str], ...]
    errors: Tuple[Tuple[str, str], ...]
    edge_touching: Tuple[str, ...]


def _read(manifest: DatasetManifest, path: str) -> bytes:
    with open(manifest.resolve(path), "rb") as f:
        return f.read()


def _score_record(
    manifest: DatasetManifest, record: LesionRecord, palette: ReferencePalette
) -> Tuple[str, Optional[AutoScores], Optional[str]]:
    """返回 (lesion_id, 评分, 错误信息)"""
    if not record.mask_path:
        return record.lesion_id, None, None
    try:
        image = decode_image(_read(manifest, record.image_path))
        mask = decode_mask(_read(manifest, record.mask_path))
        return record.lesion_id, score_lesion(image, mask, palette), None
    except (LesionABCError, OSError) as e:
        return record.lesion_id, None, str(e)


def annotate_batch(
    manifest: DatasetManifest,
    palette: Optional[ReferencePalette] = None,
    workers: int = 1,
    annotator_id: str = AUTO_ANNOTATOR_ID,
) -> AnnotateResult:
    """对清单中所有带掩码的病灶计算自动标注

    输出按 lesion_id、特征排序，与调度顺序无关。
    """
    palette = palette or ReferencePalette()
    records = list(manifest.records)

    def job(record: LesionRecord):
        return _score_record(manifest, record, palette)

    progress = dict(total=len(records), desc="annotate", disable=not progress_enabled())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(tqdm(pool.map(job, records), **progress))
    else:
        outcomes = [job(record) for record in tqdm(records, **progress)]

    rows: List[AnnotationRecord] = []
    warnings = []
    errors = []
    edge_touching = []
    for lesion_id, scores, error in sorted(outcomes, key=lambda o: o[0]):
        if error is not None:
            logger.warning("Lesion %s not scored: %s", lesion_id, error)
            errors.append((lesion_id, error))
            continue
        if scores is None:
            logger.warning("Lesion %s has no mask, skipped", lesion_id)
            warnings.append((lesion_id, "no mask"))
            continue
        if scores.border_touches_edge:
            logger.warning("Lesion %s mask touches the image border", lesion_id)
            warnings.append((lesion_id, "mask touches image border"))
            edge_touching.append(lesion_id)
        for feature, value in sorted(scores.as_features().items()):
            rows.append(AnnotationRecord(
                lesion_id=lesion_id,
                source=Source.AUTO,
                feature=Feature(feature),
                annotator_id=annotator_id,
                value=value,
            ))

    return AnnotateResult(
        table=AnnotationTable(tuple(rows)),
        warnings=tuple(warnings),
        errors=tuple(errors),
        edge_touching=tuple(edge_touching),
    )
