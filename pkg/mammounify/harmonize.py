"""Harmonization run: adapter -> case selection -> per-image pipeline -> store.

Patients are processed by a worker pool (one task per patient); results are
merged in patient order, so the store does not depend on the worker count.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from tqdm import tqdm

from mammounify.adapters import AdapterReport, load_dataset
from mammounify.config import RunConfig
from mammounify.errors import ConfigError, ImageReadError
from mammounify.image_io import ImageBuffer, read_image
from mammounify.model import Dataset, Exam, Laterality, QcReport, UnifiedRecord, format_image_key
from mammounify.pipeline import DetectorConfig, process_image
from mammounify.selection import Outcome, SelectionDecision, reason_counts, select
from mammounify.store import (
    SkippedImage,
    StoreManifest,
    StoreWriter,
    exams_from_records,
    read_selection,
    read_store,
    write_patient_folder,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatientTask:
    root: str
    patient_id: str
    exams: Tuple[Exam, ...]
    detector: DetectorConfig
    apply_rescale: bool = False
    declared_override: Optional[Laterality] = None


@dataclass(frozen=True)
class PatientResult:
    records: Tuple[UnifiedRecord, ...]
    qc: Tuple[QcReport, ...]
    skipped: Tuple[SkippedImage, ...]


@dataclass
class HarmonizeResult:
    manifest: StoreManifest
    decisions: List[SelectionDecision] = field(default_factory=list)
    qc: List[QcReport] = field(default_factory=list)
    skipped: List[SkippedImage] = field(default_factory=list)
    dropped: List[UnifiedRecord] = field(default_factory=list)
    report: Optional[AdapterReport] = None

    @property
    def kept(self) -> int:
        return sum(1 for d in self.decisions if d.outcome is Outcome.KEEP)

    @property
    def excluded(self) -> int:
        return sum(1 for d in self.decisions if d.outcome is Outcome.EXCLUDE)

    def summary_lines(self) -> List[str]:
        n = len(self.qc)
        lat = sum(1 for q in self.qc if q.laterality_flipped)
        inv = sum(1 for q in self.qc if q.intensity_inverted)
        lines = [
            f"dataset          : {self.manifest.dataset.value}",
            f"store            : {self.manifest.root}",
        ]
        if self.report is not None:
            r = self.report
            lines.append(
                f"rows             : {r.rows_read} read, {r.rows_emitted} emitted, "
                f"{r.rows_quarantined} quarantined, {r.rows_excluded} excluded by the dataset"
            )
        lines += [
            f"exams            : {self.kept} kept, {self.excluded} excluded",
            f"images           : {self.manifest.images} stored, {len(self.skipped)} skipped, {len(self.dropped)} dropped (missing)",
            f"patients         : {self.manifest.patients}",
            f"laterality flips : {lat}/{n} ({(lat / n if n else 0.0):.1%})",
            f"intensity flips  : {inv}/{n} ({(inv / n if n else 0.0):.1%})",
        ]
        reasons = {k: v for k, v in reason_counts(self.decisions).items() if v}
        if reasons:
            lines.append("exclusions       : " + ", ".join(f"{k}={v}" for k, v in sorted(reasons.items())))
        return lines


def store_root(cfg: RunConfig, dataset: Dataset) -> str:
    return os.path.join(cfg.output_root, dataset.value.lower())


# -----------------------------
# Worker
# -----------------------------
def process_patient(task: PatientTask) -> PatientResult:
    """Read, process and write every image of one patient. Runs in a worker process."""
    stored: List[Tuple[UnifiedRecord, ImageBuffer]] = []
    qc: List[QcReport] = []
    skipped: List[SkippedImage] = []
    for exam in task.exams:
        for record in exam.records:
            src = record.source_image or ""
            if not src or not os.path.isfile(src):
                skipped.append(SkippedImage(record.key, src, "missing-file"))
                continue
            try:
                image, meta = read_image(src, apply_rescale=task.apply_rescale)
            except ImageReadError as e:
                log.warning("skipping %s: %s", format_image_key(record.key), e)
                skipped.append(SkippedImage(record.key, src, e.category))
                continue
            declared = task.declared_override or record.laterality
            processed, report = process_image(image, declared, meta, task.detector, image_key=record.key)
            stored.append((record, processed))
            qc.append(report)

    if stored:
        kept_keys = {r.key for r, _ in stored}
        exams = [
            replace(e, records=tuple(r for r in e.records if r.key in kept_keys))
            for e in task.exams
            if any(r.key in kept_keys for r in e.records)
        ]
        write_patient_folder(task.root, task.patient_id, stored, exams)
    return PatientResult(tuple(r for r, _ in stored), tuple(qc), tuple(skipped))


def run_patients(tasks: Sequence[PatientTask], workers: int, *, desc: str = "harmonize") -> Iterator[PatientResult]:
    """Results in task order whatever the worker count."""
    bar = tqdm(total=len(tasks), desc=desc, unit="patient", disable=not tasks)
    try:
        if workers <= 1:
            for task in tasks:
                yield process_patient(task)
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(process_patient, tasks, chunksize=4):
                    yield result
                    bar.update(1)
    finally:
        bar.close()


def _tasks(root: str, exams: Sequence[Exam], cfg: RunConfig, declared: Optional[Laterality] = None) -> List[PatientTask]:
    by_patient: Dict[str, List[Exam]] = {}
    for e in exams:
        by_patient.setdefault(e.patient_id, []).append(e)
    return [
        PatientTask(root, pid, tuple(by_patient[pid]), cfg.detector, cfg.apply_rescale, declared)
        for pid in sorted(by_patient)
    ]


def _collect(results: Iterator[PatientResult]) -> Tuple[List[UnifiedRecord], List[QcReport], List[SkippedImage]]:
    records: List[UnifiedRecord] = []
    qc: List[QcReport] = []
    skipped: List[SkippedImage] = []
    for res in results:
        records.extend(res.records)
        qc.extend(res.qc)
        skipped.extend(res.skipped)
    return records, qc, skipped


# -----------------------------
# Entry points
# -----------------------------
def split_missing(drafts: Sequence[UnifiedRecord]) -> Tuple[List[UnifiedRecord], List[UnifiedRecord]]:
    present: List[UnifiedRecord] = []
    missing: List[UnifiedRecord] = []
    for d in drafts:
        (present if d.source_image and os.path.isfile(d.source_image) else missing).append(d)
    return present, missing


def harmonize(cfg: RunConfig, dataset: Dataset, out_root: Optional[str] = None) -> HarmonizeResult:
    source = cfg.source(dataset)
    if not os.path.isdir(source.root) or not os.access(source.root, os.R_OK | os.X_OK):
        raise ConfigError(
            f"{dataset.value} dataset root is not a readable directory: {source.root}",
            hint=f"Fix datasets.{dataset.value.lower()}.root in the config.",
        )
    root = out_root or store_root(cfg, dataset)

    drafts, report = load_dataset(dataset, source)
    dropped: List[UnifiedRecord] = []
    if cfg.drop_missing_images:
        drafts, dropped = split_missing(drafts)
        for d in dropped:
            log.warning("image file missing, draft dropped: %s (%s)", format_image_key(d.key), d.source_image)

    kept, decisions = select(drafts, dataset)
    writer = StoreWriter(root, dataset, cfg.fingerprint())
    writer.begin()
    records, qc, skipped = _collect(run_patients(_tasks(root, kept, cfg), cfg.workers))
    manifest = writer.finish(records, qc, decisions, skipped)
    return HarmonizeResult(manifest, decisions, qc, skipped, dropped, report)


def reprocess_store(cfg: RunConfig, src_root: str, out_root: str) -> HarmonizeResult:
    """Run the per-image pipeline again over an existing store (e.g. an injected copy).

    Stored images are canonical, so every image is expected to show a left breast.
    """
    src = os.path.realpath(src_root)
    dst = os.path.realpath(out_root)
    if src == dst or dst.startswith(src + os.sep):
        raise ConfigError(f"output {out_root} must be outside the source store {src_root}")
    records, manifest = read_store(src_root)
    decisions = read_selection(src_root)
    sourced = [replace(r, source_image=os.path.join(src_root, *r.processed_path.split("/"))) for r in records]

    writer = StoreWriter(out_root, manifest.dataset, cfg.fingerprint(), source="reprocess")
    writer.begin()
    tasks = _tasks(out_root, exams_from_records(sourced), cfg, declared=Laterality.L)
    stored, qc, skipped = _collect(run_patients(tasks, cfg.workers, desc="reprocess"))
    result = writer.finish(stored, qc, decisions, skipped)
    return HarmonizeResult(result, decisions, qc, skipped)
