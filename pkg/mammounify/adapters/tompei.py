"""TOMPEI-CMMD adapter.

Metadata is examination-based (one row per breast); images are patient-based
folders. Each kept row yields a CC and an MLO draft. Rows the dataset marks as
excluded are counted and dropped; nothing else is filtered here.
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import replace
from typing import List, Optional, Tuple

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
from mammounify.model import Asymmetry, Dataset, FindingSet, Split, UnifiedRecord, View
from mammounify.vocabulary import (
    encode_patient_id,
    map_density,
    map_pathology,
    parse_age,
    parse_birads,
    parse_laterality,
)

log = logging.getLogger(__name__)

REQUIRED = {
    "patient_id": ["patient_id", "id1", "patient id"],
    "laterality": ["laterality", "leftright", "left or right breast"],
    "pathology": ["classification", "pathology", "diagnosis"],
}
OPTIONAL = {
    "age": ["age"],
    "density": ["density", "breast density", "breast_density"],
    "birads": ["birads", "bi-rads", "bi-rads assessment"],
    "abnormality": ["abnormality", "abnormality type"],
    "findings": ["findings", "finding location", "location"],
    "excluded": ["excluded", "exclude"],
}

EXCLUDED_MARKS = {"1", "y", "yes", "true", "x", "excluded"}
NO_ABNORMALITY = {"", "none", "normal", "-", "n/a"}

_ABNORMALITY_TOKENS = {
    "mass": "mass",
    "calcification": "calcification",
    "calcifications": "calcification",
    "architectural distortion": "architectural_distortion",
    "asymmetry": Asymmetry.ASYMMETRY,
    "focal asymmetry": Asymmetry.FOCAL,
    "global asymmetry": Asymmetry.GLOBAL,
}


def parse_abnormality(text: str) -> FindingSet:
    """'mass', 'calcification', 'both', or a ','/';'/'+'-separated combination."""
    t = " ".join(text.split()).lower()
    if t in NO_ABNORMALITY:
        return FindingSet()
    if t == "both":
        return FindingSet(mass=True, calcification=True)
    flags = {"mass": False, "calcification": False, "architectural_distortion": False}
    asymmetry: Optional[Asymmetry] = None
    for token in (p.strip() for p in re.split(r"[,;+/]| and ", t)):
        if not token:
            continue
        hit = _ABNORMALITY_TOKENS.get(token)
        if hit is None:
            raise RowError(f"unrecognized abnormality {token!r}")
        if isinstance(hit, Asymmetry):
            asymmetry = hit
        else:
            flags[hit] = True
    return FindingSet(asymmetry=asymmetry, **flags)


def _drafts(table: MetadataTable, row: RawRow, report: AdapterReport, image_root: str, pattern: str) -> List[UnifiedRecord]:
    raw_pid = table.value(row, "patient_id")
    if not raw_pid:
        raise RowError("empty patient_id")
    laterality = parse_laterality(table.value(row, "laterality"))

    density_raw = table.value(row, "density")
    density = map_density(density_raw, Dataset.TOMPEI)
    if density is None and density_raw:
        # the TOMPEI vocabulary is closed; a new phrasing must be added to the table, not guessed
        raise RowError(f"unrecognized TOMPEI density description {density_raw!r}")

    age_raw = table.value(row, "age")
    age = parse_age(age_raw)
    if age is None and age_raw:
        report.warn(row, f"non-numeric age {age_raw!r} stored as absent")

    base = FindingSet()
    if table.has("abnormality"):
        base = parse_abnormality(table.value(row, "abnormality"))
    locations = tuple(p.strip() for p in table.value(row, "findings").split(";") if p.strip())
    findings = replace(base, other_findings=locations)

    common = dict(
        dataset=Dataset.TOMPEI,
        patient_id=encode_patient_id(Dataset.TOMPEI, raw_pid),
        laterality=laterality,
        diagnosis=map_pathology(table.value(row, "pathology"), Dataset.TOMPEI),
        age=age,
        density=density,
        birads=parse_birads(table.value(row, "birads")),
        findings=findings,
        split=Split.UNSPLIT,
        raw_folder=raw_pid,
    )
    return [
        check_draft(
            UnifiedRecord(
                view=view,
                source_image=resolve_image(image_root, pattern, patient=raw_pid, laterality=laterality.value, view=view.value),
                **common,
            )
        )
        for view in View
    ]


def parse_tompei(
    path: str,
    *,
    image_root: Optional[str] = None,
    image_pattern: str = "images/{patient}/{laterality}_{view}.dcm",
) -> Tuple[List[UnifiedRecord], AdapterReport]:
    report = AdapterReport(Dataset.TOMPEI)
    if not os.path.isfile(path):
        raise InputDataError(f"TOMPEI metadata file not found: {path}", module="dataset-adapters")
    root = image_root or source_dir([path])
    table = read_metadata_csv(path, Dataset.TOMPEI, REQUIRED, OPTIONAL)
    drafts: List[UnifiedRecord] = []
    for row in table:
        report.rows_read += 1
        if table.value(row, "excluded").lower() in EXCLUDED_MARKS:
            report.rows_excluded += 1
            report.warn(row, "excluded by dataset flag")
            continue
        try:
            drafts.extend(_drafts(table, row, report, root, image_pattern))
        except RowError as e:
            report.quarantine(row, e)
            continue
        report.rows_emitted += 1
    report.drafts = len(drafts)
    log.info(
        "TOMPEI: %d row(s), %d draft(s), %d excluded, %d quarantined",
        report.rows_read, len(drafts), report.rows_excluded, report.rows_quarantined,
    )
    return drafts, report
