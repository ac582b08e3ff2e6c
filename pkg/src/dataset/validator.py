import os
from typing import Dict, Optional, Tuple

from .records import (
    AnnotationTable,
    DatasetManifest,
    Feature,
    Source,
    STUDENT_SCALES,
    ValidationReport,
)


def validate_dataset(
    manifest: DatasetManifest,
    table: AnnotationTable,
    check_files: bool = True,
    student_scales: Optional[Dict[Feature, Tuple[float, float]]] = None,
) -> ValidationReport:
    """校验清单与标注表的一致性

    只对学生标注做量表检查，其他来源的量表未知，按任意实数处理。
    """
    scales = student_scales or STUDENT_SCALES
    known = set(manifest.lesion_ids)
    errors = []
    warnings = []

    if check_files:
        for record in manifest.records:
            if not os.path.isfile(manifest.resolve(record.image_path)):
                errors.append((record.lesion_id, f"image not found: {record.image_path}"))
            if record.mask_path and not os.path.isfile(manifest.resolve(record.mask_path)):
                errors.append((record.lesion_id, f"mask not found: {record.mask_path}"))

    annotated = set()
    for record in table.records:
        if record.lesion_id not in known:
            errors.append((record.lesion_id, "annotation references unknown lesion"))
            continue
        annotated.add(record.lesion_id)
        if record.source == Source.STUDENT and record.feature in scales:
            low, high = scales[record.feature]
            if not low <= record.value <= high:
                errors.append((
                    record.lesion_id,
                    f"student {record.feature.value} value {record.value:g} outside scale [{low:g}, {high:g}]",
                ))

    for lesion_id in manifest.lesion_ids:
        if lesion_id not in annotated:
            warnings.append((lesion_id, "no annotations"))

    return ValidationReport(errors=tuple(errors), warnings=tuple(warnings), counts=table.tally())
