"""Builders shared by the test modules."""

from __future__ import annotations

from dataclasses import replace
from typing import Dict, List, Optional, Tuple

from mammounify.image_io import ImageBuffer, SourceImageMeta
from mammounify.model import (
    Dataset,
    DensityCategory,
    Diagnosis,
    Exam,
    FindingSet,
    Laterality,
    NormalizationParams,
    QcReport,
    Split,
    UnifiedRecord,
    View,
)
from mammounify.pipeline import DetectorConfig, mirror_horizontal, process_image
from mammounify.selection import Outcome, SelectionDecision
from mammounify.store import StoreManifest, write_store
from mammounify.synthetic import synthetic_breast
from mammounify.vocabulary import encode_patient_id

SMALL = (48, 40)


def make_record(
    dataset: Dataset = Dataset.CBIS,
    patient_id: str = "CBIS_00000000000a",
    laterality: Laterality = Laterality.L,
    view: View = View.CC,
    *,
    diagnosis: Optional[Diagnosis] = None,
    split: Optional[Split] = None,
    birads: Optional[int] = 3,
    density: Optional[DensityCategory] = DensityCategory.B,
    age: Optional[int] = 55,
    findings: FindingSet = FindingSet(mass=True, mass_shape="OVAL"),
    processed: bool = True,
    **extra,
) -> UnifiedRecord:
    """A record that passes validate_record unless the caller breaks it on purpose."""
    if diagnosis is None:
        diagnosis = Diagnosis.UNKNOWN if dataset is Dataset.VINDR else Diagnosis.BENIGN
    if split is None:
        split = Split.TRAIN if dataset is Dataset.VINDR else Split.UNSPLIT
    r = UnifiedRecord(
        dataset=dataset,
        patient_id=patient_id,
        laterality=laterality,
        view=view,
        diagnosis=diagnosis,
        age=age,
        density=density,
        birads=birads,
        findings=findings,
        split=split,
        raw_folder=extra.pop("raw_folder", "folder"),
        **extra,
    )
    return r.with_processed_path() if processed else r


def make_qc(flipped: bool = False, inverted: bool = False, key: Tuple[str, Laterality, View] = ("p", Laterality.L, View.CC)) -> QcReport:
    return QcReport(
        image_key=key,
        declared_laterality=key[1],
        detected_laterality=key[1].opposite if flipped else key[1],
        laterality_confidence=0.5,
        laterality_tie=False,
        laterality_flipped=flipped,
        mirrored=False,
        intensity_inverted=inverted,
        intensity_confidence=0.9,
        source_bit_depth=16,
        stored_bits=16,
        normalization=NormalizationParams(0, 65535),
    )


def raw_image(laterality: Laterality, seed: int, size: Tuple[int, int] = SMALL) -> ImageBuffer:
    """What a scanner would export: tissue on the side of the breast."""
    img = synthetic_breast(size[0], size[1], seed=seed)
    return mirror_horizontal(img) if laterality is Laterality.R else img


def build_store(
    root: str,
    *,
    patients: int = 3,
    dataset: Dataset = Dataset.CBIS,
    size: Tuple[int, int] = SMALL,
) -> Tuple[StoreManifest, List[Exam]]:
    """A clean store of `patients` x 4 images, written through the real pipeline."""
    exams: List[Exam] = []
    qc: List[QcReport] = []
    images: Dict[Tuple[str, Laterality, View], ImageBuffer] = {}
    detector = DetectorConfig()
    meta = SourceImageMeta(photometric=None, stored_bits=16, path="synthetic")
    for i in range(patients):
        pid = encode_patient_id(dataset, f"P{i:03d}")
        for j, lat in enumerate(Laterality):
            records = []
            for k, view in enumerate(View):
                rec = make_record(dataset, pid, lat, view, birads=1 + i % 5)
                buf, report = process_image(raw_image(lat, 4 * i + 2 * j + k, size), lat, meta, detector, image_key=rec.key)
                images[rec.key] = buf
                qc.append(report)
                records.append(rec)
            exams.append(Exam(dataset, pid, lat, tuple(records)))
    decisions = [SelectionDecision(e.key, Outcome.KEEP) for e in exams]
    manifest = write_store(exams, qc, root, images, dataset=dataset, decisions=decisions)
    return manifest, exams


def with_findings(record: UnifiedRecord, **flags) -> UnifiedRecord:
    return replace(record, findings=FindingSet(**flags))
