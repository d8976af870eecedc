"""Unified store: layout, writer, reader and validator.

Layout (the artifact's public contract):

  <root>/manifest.json          schema_version, dataset, counts, config fingerprint
  <root>/metadata.csv           one row per image, METADATA_COLUMNS order
  <root>/qc_report.csv          one row per image, QC_COLUMNS order
  <root>/selection.csv          one row per assembled exam (keep/exclude + reasons)
  <root>/skipped_images.csv     selected images that could not be stored
  <root>/<patient_id>/meta.txt  per-laterality key: value blocks
  <root>/<patient_id>/<L|R>_<CC|MLO>.png   16-bit grayscale, tissue on the left

CSV dialect: comma separated, every field quoted, UTF-8, LF line endings.
No timestamps or absolute paths anywhere, so identical inputs give identical bytes.
A `.incomplete` sentinel marks a store whose writer did not finish.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import shutil
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from mammounify.errors import (
    ImageReadError,
    MissingImagesError,
    SchemaVersionError,
    StoreError,
)
from mammounify.image_io import ImageBuffer, read_image, write_image
from mammounify.model import (
    IMAGE_SLOTS,
    Asymmetry,
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
    canonical_image_path,
    format_image_key,
    join_list,
    slot_name,
    split_list,
    validate_record,
)
from mammounify.pipeline import DetectorConfig, detect_intensity_flip, measure_laterality
from mammounify.selection import Outcome, Reason, SelectionDecision

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0.0"
MANIFEST = "manifest.json"
METADATA = "metadata.csv"
QC_REPORT = "qc_report.csv"
SELECTION = "selection.csv"
SKIPPED = "skipped_images.csv"
META_TXT = "meta.txt"
SENTINEL = ".incomplete"

METADATA_COLUMNS = (
    "patient_id",
    "image_id",
    "laterality",
    "view",
    "age",
    "breast_density",
    "diagnosis",
    "birads",
    "mass",
    "mass_shape",
    "mass_margin",
    "mass_density",
    "calcification",
    "calc_morphology",
    "calc_distribution",
    "asymmetry",
    "architectural_distortion",
    "other_findings",
    "split",
    "raw_folder",
    "processed_path",
)

QC_COLUMNS = (
    "image_key",
    "declared_laterality",
    "detected_laterality",
    "laterality_confidence",
    "laterality_tie",
    "laterality_flipped",
    "mirrored",
    "intensity_inverted",
    "intensity_confidence",
    "source_bit_depth",
    "stored_bits",
    "min_in",
    "max_in",
    "target_bits",
    "photometric",
    "polarity_disagreement",
    "rescale_applied",
    "constant_image",
    "warnings",
)

SELECTION_COLUMNS = ("exam_key", "outcome", "reasons")
SKIPPED_COLUMNS = ("image_key", "source_path", "reason")


# -----------------------------
# Manifest
# -----------------------------
@dataclass(frozen=True)
class StoreManifest:
    root: str
    dataset: Dataset
    patients: int
    images: int
    schema_version: str = SCHEMA_VERSION
    config_fingerprint: str = ""
    exams_excluded: int = 0
    images_skipped: int = 0
    source: str = "harmonize"

    def __post_init__(self) -> None:
        if self.images < self.patients:
            raise StoreError(f"manifest has {self.images} image(s) for {self.patients} patient(s)")
        parts = self.schema_version.split(".")
        if len(parts) != 3 or not all(p.isdigit() for p in parts):
            raise StoreError(f"schema_version {self.schema_version!r} is not MAJOR.MINOR.PATCH")

    def to_json(self) -> str:
        body = {
            "config_fingerprint": self.config_fingerprint,
            "dataset": self.dataset.value,
            "exams_excluded": self.exams_excluded,
            "images": self.images,
            "images_skipped": self.images_skipped,
            "patients": self.patients,
            "schema_version": self.schema_version,
            "source": self.source,
        }
        return json.dumps(body, sort_keys=True, indent=2) + "\n"

    @classmethod
    def load(cls, root: str) -> "StoreManifest":
        path = os.path.join(root, MANIFEST)
        if not os.path.isfile(path):
            raise StoreError(f"no {MANIFEST} in {root}", hint="Is this a store written by `run.py harmonize`?")
        try:
            with open(path, "r", encoding="utf-8") as f:
                body = json.load(f)
        except json.JSONDecodeError as e:
            raise StoreError(f"{path} is not valid JSON: {e}") from e
        found = str(body.get("schema_version", ""))
        if found != SCHEMA_VERSION:
            raise SchemaVersionError(found, SCHEMA_VERSION)
        try:
            return cls(
                root=root,
                dataset=Dataset(body["dataset"]),
                patients=int(body["patients"]),
                images=int(body["images"]),
                schema_version=found,
                config_fingerprint=str(body.get("config_fingerprint", "")),
                exams_excluded=int(body.get("exams_excluded", 0)),
                images_skipped=int(body.get("images_skipped", 0)),
                source=str(body.get("source", "harmonize")),
            )
        except (KeyError, ValueError) as e:
            raise StoreError(f"{path} is missing or has an invalid field: {e}") from e


# -----------------------------
# Row codecs
# -----------------------------
def _flag(value: bool) -> str:
    return "1" if value else "0"


def _text(value: Optional[Any]) -> str:
    if value is None:
        return ""
    if isinstance(value, (Laterality, View, Diagnosis, DensityCategory, Asymmetry, Split, Dataset)):
        return value.value
    return str(value)


def record_to_row(r: UnifiedRecord) -> Dict[str, str]:
    f = r.findings
    return {
        "patient_id": r.patient_id,
        "image_id": _text(r.image_id),
        "laterality": r.laterality.value,
        "view": r.view.value,
        "age": _text(r.age),
        "breast_density": _text(r.density),
        "diagnosis": r.diagnosis.value,
        "birads": _text(r.birads),
        "mass": _flag(f.mass),
        "mass_shape": _text(f.mass_shape),
        "mass_margin": _text(f.mass_margin),
        "mass_density": _text(f.mass_density),
        "calcification": _flag(f.calcification),
        "calc_morphology": _text(f.calc_morphology),
        "calc_distribution": _text(f.calc_distribution),
        "asymmetry": _text(f.asymmetry),
        "architectural_distortion": _flag(f.architectural_distortion),
        "other_findings": join_list(f.other_findings),
        "split": r.split.value,
        "raw_folder": r.raw_folder,
        "processed_path": r.processed_path,
    }


def _opt(text: str) -> Optional[str]:
    return text if text != "" else None


def _opt_int(text: str) -> Optional[int]:
    return int(text) if text != "" else None


def _bool(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"flag must be 0 or 1, got {text!r}")
    return text == "1"


def row_to_record(row: Mapping[str, str], dataset: Dataset) -> UnifiedRecord:
    findings = FindingSet(
        mass=_bool(row["mass"]),
        mass_shape=_opt(row["mass_shape"]),
        mass_margin=_opt(row["mass_margin"]),
        mass_density=_opt(row["mass_density"]),
        calcification=_bool(row["calcification"]),
        calc_morphology=_opt(row["calc_morphology"]),
        calc_distribution=_opt(row["calc_distribution"]),
        asymmetry=Asymmetry(row["asymmetry"]) if row["asymmetry"] else None,
        architectural_distortion=_bool(row["architectural_distortion"]),
        other_findings=split_list(row["other_findings"]),
    )
    return UnifiedRecord(
        dataset=dataset,
        patient_id=row["patient_id"],
        image_id=_opt(row["image_id"]),
        laterality=Laterality(row["laterality"]),
        view=View(row["view"]),
        age=_opt_int(row["age"]),
        density=DensityCategory(row["breast_density"]) if row["breast_density"] else None,
        diagnosis=Diagnosis(row["diagnosis"]),
        birads=_opt_int(row["birads"]),
        findings=findings,
        split=Split(row["split"]),
        raw_folder=row["raw_folder"],
        processed_path=row["processed_path"],
    )


def _fmt_float(x: float) -> str:
    return f"{x:.6f}"


def qc_to_row(q: QcReport) -> Dict[str, str]:
    return {
        "image_key": format_image_key(q.image_key),
        "declared_laterality": q.declared_laterality.value,
        "detected_laterality": q.detected_laterality.value,
        "laterality_confidence": _fmt_float(q.laterality_confidence),
        "laterality_tie": _flag(q.laterality_tie),
        "laterality_flipped": _flag(q.laterality_flipped),
        "mirrored": _flag(q.mirrored),
        "intensity_inverted": _flag(q.intensity_inverted),
        "intensity_confidence": _fmt_float(q.intensity_confidence),
        "source_bit_depth": str(q.source_bit_depth),
        "stored_bits": str(q.stored_bits),
        "min_in": str(q.normalization.min_in),
        "max_in": str(q.normalization.max_in),
        "target_bits": str(q.normalization.target_bits),
        "photometric": _text(q.photometric),
        "polarity_disagreement": _flag(q.polarity_disagreement),
        "rescale_applied": _flag(q.rescale_applied),
        "constant_image": _flag(q.constant_image),
        "warnings": join_list(q.warnings),
    }


def parse_image_key(text: str) -> Tuple[str, Laterality, View]:
    """'CBIS_0123456789ab/L_CC' -> (patient_id, L, CC)."""
    patient_id, _, slot = text.rpartition("/")
    lat, _, view = slot.partition("_")
    return patient_id, Laterality(lat), View(view)


def row_to_qc(row: Mapping[str, str]) -> QcReport:
    return QcReport(
        image_key=parse_image_key(row["image_key"]),
        declared_laterality=Laterality(row["declared_laterality"]),
        detected_laterality=Laterality(row["detected_laterality"]),
        laterality_confidence=float(row["laterality_confidence"]),
        laterality_tie=_bool(row["laterality_tie"]),
        laterality_flipped=_bool(row["laterality_flipped"]),
        mirrored=_bool(row["mirrored"]),
        intensity_inverted=_bool(row["intensity_inverted"]),
        intensity_confidence=float(row["intensity_confidence"]),
        source_bit_depth=int(row["source_bit_depth"]),
        stored_bits=int(row["stored_bits"]),
        normalization=NormalizationParams(int(row["min_in"]), int(row["max_in"]), int(row["target_bits"])),
        photometric=_opt(row["photometric"]),
        polarity_disagreement=_bool(row["polarity_disagreement"]),
        rescale_applied=_bool(row["rescale_applied"]),
        constant_image=_bool(row["constant_image"]),
        warnings=split_list(row["warnings"]),
    )


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Mapping[str, str]]) -> None:
    df = pd.DataFrame(list(rows), columns=list(columns), dtype=str)
    df.to_csv(path, index=False, quoting=csv.QUOTE_ALL, lineterminator="\n", encoding="utf-8")


def read_csv(path: str, columns: Sequence[str]) -> List[Dict[str, str]]:
    if not os.path.isfile(path):
        raise StoreError(f"missing {os.path.basename(path)} in {os.path.dirname(path)}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    if tuple(df.columns) != tuple(columns):
        raise StoreError(f"{path} columns {list(df.columns)} do not match the {SCHEMA_VERSION} layout")
    return df.to_dict(orient="records")


def image_sort_key(r: UnifiedRecord) -> Tuple[str, str, str]:
    return (r.patient_id, r.laterality.value, r.view.value)


# -----------------------------
# meta.txt
# -----------------------------
def render_meta_txt(patient_id: str, exams: Sequence[Exam]) -> str:
    """`patient_id:` line, then one `[L]`/`[R]` block per breast present."""
    lines = [f"patient_id: {patient_id}"]
    for exam in sorted(exams, key=lambda e: e.laterality.value):
        lines += [
            f"[{exam.laterality.value}]",
            f"age: {_text(exam.age)}",
            f"breast_density: {_text(exam.density)}",
            f"diagnosis: {_text(exam.diagnosis)}",
            f"birads: {_text(exam.birads)}",
            f"views: {join_list(v.value for v in exam.views)}",
        ]
    return "\n".join(lines) + "\n"


def parse_meta_txt(text: str) -> Dict[str, Dict[str, str]]:
    """Inverse of render_meta_txt: {"": {patient_id}, "L": {...}, "R": {...}}."""
    out: Dict[str, Dict[str, str]] = {"": {}}
    block = ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            block = line[1:-1]
            out[block] = {}
            continue
        key, _, value = line.partition(":")
        out[block][key.strip()] = value.strip()
    return out


# -----------------------------
# Writer
# -----------------------------
@dataclass(frozen=True)
class SkippedImage:
    image_key: Tuple[str, Laterality, View]
    source_path: str
    reason: str

    def as_row(self) -> Dict[str, str]:
        return {"image_key": format_image_key(self.image_key), "source_path": self.source_path, "reason": self.reason}


def is_store(root: str) -> bool:
    return os.path.isfile(os.path.join(root, MANIFEST)) or os.path.isfile(os.path.join(root, SENTINEL))


def write_patient_folder(root: str, patient_id: str, images: Sequence[Tuple[UnifiedRecord, ImageBuffer]], exams: Sequence[Exam]) -> None:
    """Write one patient's PNGs and meta.txt. Safe to call from worker processes."""
    folder = os.path.join(root, patient_id)
    os.makedirs(folder, exist_ok=True)
    for record, buf in images:
        write_image(buf, os.path.join(root, *record.processed_path.split("/")))
    with open(os.path.join(folder, META_TXT), "w", encoding="utf-8", newline="\n") as f:
        f.write(render_meta_txt(patient_id, exams))


class StoreWriter:
    """Single writer for the global files. Patient folders may be written by anyone in between."""

    def __init__(self, root: str, dataset: Dataset, config_fingerprint: str = "", source: str = "harmonize"):
        self.root = root
        self.dataset = dataset
        self.config_fingerprint = config_fingerprint
        self.source = source

    def begin(self) -> None:
        if os.path.exists(self.root):
            if not os.path.isdir(self.root):
                raise StoreError(f"output root {self.root} exists and is not a directory")
            if os.listdir(self.root):
                if not is_store(self.root):
                    raise StoreError(
                        f"output root {self.root} is not empty and is not a store",
                        hint="Choose an empty directory; only existing stores are rebuilt in place.",
                    )
                log.info("rebuilding existing store at %s", self.root)
                shutil.rmtree(self.root)
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, SENTINEL), "w", encoding="utf-8") as f:
            f.write("write in progress\n")

    def finish(
        self,
        records: Sequence[UnifiedRecord],
        qc: Sequence[QcReport],
        decisions: Sequence[SelectionDecision] = (),
        skipped: Sequence[SkippedImage] = (),
    ) -> StoreManifest:
        check_collisions(records)
        ordered = sorted(records, key=image_sort_key)
        qc_sorted = sorted(qc, key=lambda q: (q.image_key[0], q.image_key[1].value, q.image_key[2].value))
        write_csv(os.path.join(self.root, METADATA), METADATA_COLUMNS, (record_to_row(r) for r in ordered))
        write_csv(os.path.join(self.root, QC_REPORT), QC_COLUMNS, (qc_to_row(q) for q in qc_sorted))
        write_csv(
            os.path.join(self.root, SELECTION),
            SELECTION_COLUMNS,
            (d.as_row() for d in sorted(decisions, key=lambda d: (d.exam_key[0], d.exam_key[1].value))),
        )
        write_csv(
            os.path.join(self.root, SKIPPED),
            SKIPPED_COLUMNS,
            (s.as_row() for s in sorted(skipped, key=lambda s: format_image_key(s.image_key))),
        )
        manifest = StoreManifest(
            root=self.root,
            dataset=self.dataset,
            patients=len({r.patient_id for r in ordered}),
            images=len(ordered),
            config_fingerprint=self.config_fingerprint,
            exams_excluded=sum(1 for d in decisions if d.outcome is Outcome.EXCLUDE),
            images_skipped=len(skipped),
            source=self.source,
        )
        with open(os.path.join(self.root, MANIFEST), "w", encoding="utf-8", newline="\n") as f:
            f.write(manifest.to_json())
        os.remove(os.path.join(self.root, SENTINEL))
        log.info("store written: %s (%d patient(s), %d image(s))", self.root, manifest.patients, manifest.images)
        return manifest


def check_collisions(records: Sequence[UnifiedRecord]) -> None:
    seen: Dict[str, UnifiedRecord] = {}
    for r in records:
        if r.processed_path in seen:
            raise StoreError(
                f"filename collision: two records map to {r.processed_path}",
                hint="Duplicate exam keys must be resolved by case selection before writing.",
            )
        seen[r.processed_path] = r


def write_store(
    exams: Sequence[Exam],
    qc: Sequence[QcReport],
    root: str,
    images: Mapping[Tuple[str, Laterality, View], ImageBuffer],
    *,
    dataset: Dataset,
    config_fingerprint: str = "",
    decisions: Sequence[SelectionDecision] = (),
    skipped: Sequence[SkippedImage] = (),
    source: str = "harmonize",
) -> StoreManifest:
    """Write kept exams and their processed images in one go (small stores, tests, injector)."""
    keys = [e.key for e in exams]
    if len(keys) != len(set(keys)):
        raise StoreError("filename collision: duplicate exam keys in write_store input")
    records = [r for e in exams for r in e.records]
    check_collisions(records)

    writer = StoreWriter(root, dataset, config_fingerprint, source)
    writer.begin()
    by_patient: Dict[str, List[Exam]] = {}
    for e in exams:
        by_patient.setdefault(e.patient_id, []).append(e)
    for patient_id in sorted(by_patient):
        pex = by_patient[patient_id]
        items = [(r, images[r.key]) for e in pex for r in e.records]
        write_patient_folder(root, patient_id, items, pex)
    return writer.finish(records, qc, decisions, skipped)


# -----------------------------
# Reader
# -----------------------------
def read_records(root: str, manifest: StoreManifest) -> List[UnifiedRecord]:
    rows = read_csv(os.path.join(root, METADATA), METADATA_COLUMNS)
    try:
        return [row_to_record(row, manifest.dataset) for row in rows]
    except (KeyError, ValueError) as e:
        raise StoreError(f"{METADATA} has an invalid value: {e}") from e


def read_store(root: str) -> Tuple[List[UnifiedRecord], StoreManifest]:
    """Records in metadata.csv order plus the manifest; every processed image must exist."""
    if os.path.isfile(os.path.join(root, SENTINEL)):
        raise StoreError(f"{root} is an incomplete store (writer did not finish)", hint="Re-run the command that wrote it.")
    manifest = StoreManifest.load(root)
    records = read_records(root, manifest)
    missing = [r.processed_path for r in records if not os.path.isfile(os.path.join(root, *r.processed_path.split("/")))]
    if missing:
        raise MissingImagesError(missing)
    return records, manifest


def read_qc(root: str) -> List[QcReport]:
    rows = read_csv(os.path.join(root, QC_REPORT), QC_COLUMNS)
    try:
        return [row_to_qc(row) for row in rows]
    except (KeyError, ValueError) as e:
        raise StoreError(f"{QC_REPORT} has an invalid value: {e}") from e


def parse_exam_key(text: str) -> Tuple[str, Laterality]:
    patient_id, _, lat = text.rpartition(":")
    return patient_id, Laterality(lat)


def read_selection(root: str) -> List[SelectionDecision]:
    rows = read_csv(os.path.join(root, SELECTION), SELECTION_COLUMNS)
    try:
        return [
            SelectionDecision(
                parse_exam_key(row["exam_key"]),
                Outcome(row["outcome"]),
                tuple(Reason(r) for r in split_list(row["reasons"])),
            )
            for row in rows
        ]
    except ValueError as e:
        raise StoreError(f"{SELECTION} has an invalid value: {e}") from e


def read_skipped(root: str) -> List[SkippedImage]:
    rows = read_csv(os.path.join(root, SKIPPED), SKIPPED_COLUMNS)
    try:
        return [SkippedImage(parse_image_key(row["image_key"]), row["source_path"], row["reason"]) for row in rows]
    except ValueError as e:
        raise StoreError(f"{SKIPPED} has an invalid value: {e}") from e


def exams_from_records(records: Sequence[UnifiedRecord]) -> List[Exam]:
    groups: Dict[Tuple[str, Laterality], List[UnifiedRecord]] = {}
    for r in sorted(records, key=image_sort_key):
        groups.setdefault(r.exam_key, []).append(r)
    return [
        Exam(dataset=rs[0].dataset, patient_id=k[0], laterality=k[1], records=tuple(rs))
        for k, rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value))
    ]


# -----------------------------
# Validator
# -----------------------------
@dataclass(frozen=True)
class StoreViolation:
    key: str
    rule: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.key}: {self.rule}" + (f" ({self.message})" if self.message else "")


_CANONICAL_NAMES = {f"{slot_name(lat, view)}.png" for lat, view in IMAGE_SLOTS}


def sample_keys(keys: Sequence[str], sample: Optional[int], seed: int) -> set:
    """Seeded subset of image keys; None checks everything, 0 nothing."""
    ordered = sorted(keys)
    if sample is None or sample >= len(ordered):
        return set(ordered)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(ordered), size=sample, replace=False)
    return {ordered[i] for i in sorted(picks)}


def validate_store(
    root: str,
    detector: Optional[DetectorConfig] = None,
    *,
    sample: Optional[int] = 64,
    seed: int = 0,
    progress: bool = False,
) -> List[StoreViolation]:
    """Every rule a store must satisfy. Never raises for bad stores; returns the violations."""
    detector = detector or DetectorConfig()
    out: List[StoreViolation] = []
    if os.path.isfile(os.path.join(root, SENTINEL)):
        out.append(StoreViolation("store", "incomplete-store", f"{SENTINEL} sentinel present"))
    try:
        manifest = StoreManifest.load(root)
        records = read_records(root, manifest)
    except StoreError as e:
        return out + [StoreViolation("store", "unreadable-store", str(e))]

    if manifest.images != len(records) or manifest.patients != len({r.patient_id for r in records}):
        out.append(StoreViolation("store", "manifest-count", f"manifest {manifest.patients}/{manifest.images}"))

    seen: Dict[Tuple[str, Laterality, View, Optional[str]], int] = {}
    for r in records:
        key = format_image_key(r.key)
        uniq = (r.patient_id, r.laterality, r.view, r.image_id)
        if uniq in seen:
            out.append(StoreViolation(key, "duplicate-key"))
        seen[uniq] = 1
        for v in validate_record(r):
            out.append(StoreViolation(key, v.rule, v.field))

    out.extend(_check_layout(root, records))

    picked = sample_keys([format_image_key(r.key) for r in records], sample, seed)
    full = (1 << 16) - 1
    for r in tqdm(records, desc="validate", unit="img", disable=not progress):
        key = format_image_key(r.key)
        path = os.path.join(root, *canonical_image_path(r.patient_id, r.laterality, r.view).split("/"))
        if not os.path.isfile(path):
            out.append(StoreViolation(key, "missing-image", r.processed_path))
            continue
        try:
            buf, _ = read_image(path)
        except ImageReadError as e:
            out.append(StoreViolation(key, "unreadable-image", e.category))
            continue
        if buf.bit_depth != 16:
            out.append(StoreViolation(key, "bit-depth", f"{buf.bit_depth}-bit"))
            continue
        lo, hi = int(buf.samples.min()), int(buf.samples.max())
        if not (lo == 0 and hi in (0, full)):
            out.append(StoreViolation(key, "dynamic-range", f"min={lo} max={hi}"))
        if key in picked:
            ev = measure_laterality(buf, detector)
            if not ev.tie and ev.side is Laterality.R:
                out.append(StoreViolation(key, "orientation", "tissue detected on the right edge"))
            if detect_intensity_flip(buf, detector)[0]:
                out.append(StoreViolation(key, "polarity", "bright background"))
    return out


def _check_layout(root: str, records: Sequence[UnifiedRecord]) -> List[StoreViolation]:
    out: List[StoreViolation] = []
    patients = {r.patient_id for r in records}
    referenced = {r.processed_path for r in records}
    for pid in sorted(patients):
        folder = os.path.join(root, pid)
        if not os.path.isdir(folder):
            continue
        if not os.path.isfile(os.path.join(folder, META_TXT)):
            out.append(StoreViolation(pid, "missing-meta"))
        for name in sorted(os.listdir(folder)):
            if name == META_TXT:
                continue
            if name not in _CANONICAL_NAMES:
                out.append(StoreViolation(f"{pid}/{name}", "filename-convention"))
            elif f"{pid}/{name}" not in referenced:
                out.append(StoreViolation(f"{pid}/{name}", "unreferenced-image"))
    return out
