"""VinDr-Mammo adapter.

breast-level_annotations.csv gives one row per image (BI-RADS, density, split);
finding_annotations.csv gives zero or more finding rows per image, joined here
by image_id. No biopsy labels: diagnosis is always Unknown. Every case is kept
and the published train/test split is preserved.
"""

from __future__ import annotations

import ast
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

from mammounify.adapters.common import (
    AdapterReport,
    MetadataTable,
    RawRow,
    check_draft,
    read_metadata_csv,
    resolve_image,
    source_dir,
)
from mammounify.errors import InputDataError, RowError
from mammounify.model import Asymmetry, Dataset, Diagnosis, FindingSet, Split, UnifiedRecord
from mammounify.vocabulary import encode_patient_id, map_density, parse_birads, parse_laterality, parse_view

log = logging.getLogger(__name__)

BREAST_REQUIRED = {
    "study_id": ["study_id"],
    "image_id": ["image_id"],
    "laterality": ["laterality"],
    "view": ["view_position", "view"],
    "birads": ["breast_birads"],
    "density": ["breast_density"],
    "split": ["split"],
}
FINDING_REQUIRED = {
    "image_id": ["image_id"],
    "categories": ["finding_categories"],
}

SPLITS = {"training": Split.TRAIN, "train": Split.TRAIN, "test": Split.TEST}

NO_FINDING = "No Finding"
_CATEGORY_FLAGS = {
    "mass": FindingSet(mass=True),
    "suspicious calcification": FindingSet(calcification=True),
    "architectural distortion": FindingSet(architectural_distortion=True),
    "asymmetry": FindingSet(asymmetry=Asymmetry.ASYMMETRY),
    "focal asymmetry": FindingSet(asymmetry=Asymmetry.FOCAL),
    "global asymmetry": FindingSet(asymmetry=Asymmetry.GLOBAL),
}


def parse_categories(text: str) -> List[str]:
    """"['Mass', 'Suspicious Calcification']" -> ['Mass', 'Suspicious Calcification']."""
    t = (text or "").strip()
    if not t:
        return []
    if t.startswith("["):
        try:
            value = ast.literal_eval(t)
        except (ValueError, SyntaxError):
            raise RowError(f"unparseable finding_categories {text!r}") from None
        if not isinstance(value, (list, tuple)):
            raise RowError(f"finding_categories is not a list: {text!r}")
        return [str(v).strip() for v in value if str(v).strip()]
    return [p.strip() for p in t.split(",") if p.strip()]


def category_findings(categories: Sequence[str]) -> FindingSet:
    """Known categories set flags; anything else (skin thickening, lymph node, ...) is kept verbatim."""
    out = FindingSet()
    for cat in categories:
        if cat.lower() == NO_FINDING.lower():
            continue
        mapped = _CATEGORY_FLAGS.get(" ".join(cat.split()).lower())
        out = out.merge(mapped if mapped is not None else FindingSet(other_findings=(cat.replace(";", ","),)))
    return out


def _finding_index(table: MetadataTable, report: AdapterReport) -> Dict[str, FindingSet]:
    index: Dict[str, FindingSet] = {}
    for row in table:
        image_id = table.value(row, "image_id")
        if not image_id:
            report.warn(row, "finding row without image_id ignored")
            continue
        try:
            found = category_findings(parse_categories(table.value(row, "categories")))
        except RowError as e:
            report.warn(row, f"finding row ignored: {e}")
            continue
        index[image_id] = index.get(image_id, FindingSet()).merge(found)
    return index


def _draft(
    table: MetadataTable, row: RawRow, findings: Dict[str, FindingSet], report: AdapterReport, image_root: str, pattern: str
) -> UnifiedRecord:
    study_id = table.value(row, "study_id")
    image_id = table.value(row, "image_id")
    if not study_id or not image_id:
        raise RowError("empty study_id or image_id")
    split_raw = table.value(row, "split").lower()
    if split_raw not in SPLITS:
        raise RowError(f"unrecognized split {table.value(row, 'split')!r}")

    density_raw = table.value(row, "density")
    density = map_density(density_raw, Dataset.VINDR)
    if density is None and density_raw:
        report.warn(row, f"unmappable density {density_raw!r}")

    draft = UnifiedRecord(
        dataset=Dataset.VINDR,
        patient_id=encode_patient_id(Dataset.VINDR, study_id),
        image_id=image_id,
        laterality=parse_laterality(table.value(row, "laterality")),
        view=parse_view(table.value(row, "view")),
        diagnosis=Diagnosis.UNKNOWN,
        density=density,
        birads=parse_birads(table.value(row, "birads")),
        findings=findings.get(image_id, FindingSet()),
        split=SPLITS[split_raw],
        raw_folder=study_id,
        source_image=resolve_image(image_root, pattern, study_id=study_id, image_id=image_id),
    )
    return check_draft(draft)


def parse_vindr(
    files: Sequence[str],
    *,
    image_root: Optional[str] = None,
    image_pattern: str = "images/{study_id}/{image_id}.dicom",
) -> Tuple[List[UnifiedRecord], AdapterReport]:
    """files = (breast-level CSV, finding-level CSV)."""
    if len(files) != 2:
        raise InputDataError(
            f"VinDr needs the breast-level and the finding-level CSV, got {len(files)} file(s)",
            module="dataset-adapters",
        )
    for path in files:
        if not os.path.isfile(path):
            raise InputDataError(f"VinDr metadata file not found: {path}", module="dataset-adapters")
    breast_csv, finding_csv = files
    report = AdapterReport(Dataset.VINDR)
    root = image_root or source_dir(files)

    findings = _finding_index(read_metadata_csv(finding_csv, Dataset.VINDR, FINDING_REQUIRED), report)
    table = read_metadata_csv(breast_csv, Dataset.VINDR, BREAST_REQUIRED)
    drafts: List[UnifiedRecord] = []
    seen = set()
    for row in table:
        report.rows_read += 1
        try:
            draft = _draft(table, row, findings, report, root, image_pattern)
        except RowError as e:
            report.quarantine(row, e)
            continue
        drafts.append(draft)
        seen.add(draft.image_id)
        report.rows_emitted += 1

    orphans = sorted(set(findings) - seen)
    for image_id in orphans:
        report.warn(None, f"findings for image_id {image_id} have no breast-level row", source_file=finding_csv)
    report.drafts = len(drafts)
    log.info("VinDr: %d row(s), %d draft(s), %d quarantined", report.rows_read, len(drafts), report.rows_quarantined)
    return drafts, report
