"""CBIS-DDSM adapter.

Image-based layout: four case-description CSVs (mass/calc x train/test), one row
per abnormality. The same image can appear in several rows and in both the mass
and calc subsets; case selection merges those drafts later.
"""

from __future__ import annotations

import logging
import os
from typing import List, Optional, Sequence, Tuple

from mammounify.adapters.common import (
    AdapterReport,
    MetadataTable,
    RawRow,
    check_draft,
    descriptor,
    read_metadata_csv,
    resolve_image,
    source_dir,
)
from mammounify.errors import InputDataError, RowError
from mammounify.model import Asymmetry, Dataset, FindingSet, Split, UnifiedRecord
from mammounify.vocabulary import (
    encode_patient_id,
    map_density,
    map_pathology,
    parse_birads,
    parse_laterality,
    parse_view,
)

log = logging.getLogger(__name__)

REQUIRED = {
    "patient_id": ["patient_id", "patient id"],
    "density": ["breast_density", "breast density"],
    "laterality": ["left or right breast", "left_or_right_breast"],
    "view": ["image view", "image_view"],
    "abnormality_type": ["abnormality type", "abnormality_type"],
    "assessment": ["assessment"],
    "pathology": ["pathology"],
    "image_path": ["image file path", "image_file_path"],
}
OPTIONAL = {
    "mass_shape": ["mass shape", "mass_shape"],
    "mass_margin": ["mass margins", "mass margin", "mass_margins"],
    "calc_type": ["calc type", "calc_type"],
    "calc_distribution": ["calc distribution", "calc_distribution"],
}

# mass-shape tokens that are really other abnormalities
AD_TOKEN = "ARCHITECTURAL_DISTORTION"
ASYMMETRY_TOKENS = {
    "ASYMMETRIC_BREAST_TISSUE": Asymmetry.ASYMMETRY,
    "FOCAL_ASYMMETRIC_DENSITY": Asymmetry.FOCAL,
}


def split_mass_shape(shape: Optional[str]) -> Tuple[Optional[str], bool, Optional[Asymmetry]]:
    """'IRREGULAR-ARCHITECTURAL_DISTORTION' -> ('IRREGULAR', True, None)."""
    if not shape:
        return None, False, None
    kept: List[str] = []
    distortion = False
    asymmetry: Optional[Asymmetry] = None
    for token in (t.strip() for t in shape.split("-")):
        if not token:
            continue
        upper = token.upper()
        if upper == AD_TOKEN:
            distortion = True
        elif upper in ASYMMETRY_TOKENS:
            asymmetry = ASYMMETRY_TOKENS[upper]
        else:
            kept.append(token)
    return ("-".join(kept) or None), distortion, asymmetry


def _findings(table: MetadataTable, row: RawRow) -> FindingSet:
    kind = table.value(row, "abnormality_type").lower()
    if kind == "mass":
        shape, distortion, asymmetry = split_mass_shape(descriptor(table.value(row, "mass_shape")))
        margin = descriptor(table.value(row, "mass_margin"))
        # a "mass" row whose shape only names distortion/asymmetry is not counted as a mass
        is_mass = shape is not None or margin is not None or not (distortion or asymmetry)
        return FindingSet(
            mass=is_mass,
            mass_shape=shape if is_mass else None,
            mass_margin=margin if is_mass else None,
            asymmetry=asymmetry,
            architectural_distortion=distortion,
        )
    if kind == "calcification":
        return FindingSet(
            calcification=True,
            calc_morphology=descriptor(table.value(row, "calc_type")),
            calc_distribution=descriptor(table.value(row, "calc_distribution")),
        )
    raise RowError(f"unrecognized abnormality type {table.value(row, 'abnormality_type')!r}")


def _draft(table: MetadataTable, row: RawRow, report: AdapterReport, image_root: str, image_pattern: str) -> UnifiedRecord:
    raw_pid = table.value(row, "patient_id")
    if not raw_pid:
        raise RowError("empty patient_id")
    image_path = table.value(row, "image_path").replace("\\", "/")
    if not image_path:
        raise RowError("empty image file path")

    density_raw = table.value(row, "density")
    density = map_density(density_raw, Dataset.CBIS)
    if density is None and density_raw:
        report.warn(row, f"unmappable density {density_raw!r}")

    draft = UnifiedRecord(
        dataset=Dataset.CBIS,
        patient_id=encode_patient_id(Dataset.CBIS, raw_pid),
        laterality=parse_laterality(table.value(row, "laterality")),
        view=parse_view(table.value(row, "view")),
        diagnosis=map_pathology(table.value(row, "pathology"), Dataset.CBIS),
        density=density,
        birads=parse_birads(table.value(row, "assessment")),
        findings=_findings(table, row),
        split=Split.UNSPLIT,  # subset train/test is discarded: patients overlap between them
        raw_folder=image_path.split("/")[0],
        source_image=resolve_image(image_root, image_pattern, image_file_path=image_path),
    )
    return check_draft(draft)


def parse_cbis(
    files: Sequence[str],
    *,
    image_root: Optional[str] = None,
    image_pattern: str = "{image_file_path}",
) -> Tuple[List[UnifiedRecord], AdapterReport]:
    """One draft per CSV row, in file order then line order."""
    report = AdapterReport(Dataset.CBIS)
    root = image_root or source_dir(files)
    drafts: List[UnifiedRecord] = []
    for path in files:
        if not os.path.isfile(path):
            raise InputDataError(f"CBIS metadata file not found: {path}", module="dataset-adapters")
        table = read_metadata_csv(path, Dataset.CBIS, REQUIRED, OPTIONAL)
        for row in table:
            report.rows_read += 1
            try:
                drafts.append(_draft(table, row, report, root, image_pattern))
            except RowError as e:
                report.quarantine(row, e)
                continue
            report.rows_emitted += 1
    report.drafts = len(drafts)
    log.info("CBIS: %d row(s), %d draft(s), %d quarantined", report.rows_read, len(drafts), report.rows_quarantined)
    return drafts, report
