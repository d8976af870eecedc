"""Case selection: breast-level exams and the per-dataset inclusion rules.

Exclusion table
  CBIS    missing_view, inconsistent_diagnosis, inconsistent_birads, birads_zero, duplicate_conflict
  TOMPEI  duplicate_conflict (the dataset's own exclusions are applied by the adapter)
  VINDR   duplicate_conflict (every case is otherwise retained)

All applicable reasons are recorded; none takes precedence.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from mammounify.model import (
    Dataset,
    Exam,
    Laterality,
    Split,
    UnifiedRecord,
    View,
    format_exam_key,
    join_list,
    split_list,
)

log = logging.getLogger(__name__)


class Outcome(str, Enum):
    KEEP = "keep"
    EXCLUDE = "exclude"


class Reason(str, Enum):
    MISSING_VIEW = "missing_view"
    INCONSISTENT_DIAGNOSIS = "inconsistent_diagnosis"
    INCONSISTENT_BIRADS = "inconsistent_birads"
    BIRADS_ZERO = "birads_zero"
    DUPLICATE_CONFLICT = "duplicate_conflict"


@dataclass(frozen=True)
class SelectionDecision:
    exam_key: Tuple[str, Laterality]
    outcome: Outcome
    reasons: Tuple[Reason, ...] = ()

    def __post_init__(self) -> None:
        if (self.outcome is Outcome.EXCLUDE) != bool(self.reasons):
            raise ValueError(f"{self.outcome.value} decision with reasons {self.reasons}")

    def as_row(self) -> Dict[str, str]:
        return {
            "exam_key": format_exam_key(self.exam_key),
            "outcome": self.outcome.value,
            "reasons": join_list(r.value for r in self.reasons),
        }


# fields two drafts of one image must agree on before they can be merged
_SHARED_FIELDS = ("diagnosis", "birads", "density", "age", "split", "image_id")


def _mergeable(a: UnifiedRecord, b: UnifiedRecord) -> bool:
    return all(getattr(a, f) == getattr(b, f) for f in _SHARED_FIELDS)


def _merge(a: UnifiedRecord, b: UnifiedRecord) -> UnifiedRecord:
    folders = sorted(set(split_list(a.raw_folder)) | set(split_list(b.raw_folder)))
    return replace(a, findings=a.findings.merge(b.findings), raw_folder=join_list(folders))


def assemble_exams(drafts: Sequence[UnifiedRecord]) -> List[Exam]:
    """Group drafts by (patient, laterality); merge repeated views when they agree."""
    groups: "OrderedDict[Tuple[str, Laterality], Dict[View, List[UnifiedRecord]]]" = OrderedDict()
    for d in drafts:
        groups.setdefault(d.exam_key, {}).setdefault(d.view, []).append(d)

    exams: List[Exam] = []
    for (patient_id, laterality), by_view in groups.items():
        conflict = False
        records: List[UnifiedRecord] = []
        for view in View:
            candidates = by_view.get(view)
            if not candidates:
                continue
            merged = candidates[0]
            for other in candidates[1:]:
                if _mergeable(merged, other):
                    merged = _merge(merged, other)
                else:
                    conflict = True
            records.append(merged)
        exams.append(
            Exam(
                dataset=records[0].dataset,
                patient_id=patient_id,
                laterality=laterality,
                records=tuple(records),
                duplicate_conflict=conflict,
            )
        )
    exams.sort(key=lambda e: (e.patient_id, e.laterality.value))
    return exams


def apply_exclusions(exam: Exam, dataset: Dataset) -> SelectionDecision:
    reasons: List[Reason] = []
    if dataset is Dataset.CBIS:
        if len(exam.records) < len(View):
            reasons.append(Reason.MISSING_VIEW)
        if len({r.diagnosis for r in exam.records}) > 1:
            reasons.append(Reason.INCONSISTENT_DIAGNOSIS)
        if len({r.birads for r in exam.records}) > 1:
            reasons.append(Reason.INCONSISTENT_BIRADS)
        if any(r.birads == 0 for r in exam.records):
            reasons.append(Reason.BIRADS_ZERO)
    if exam.duplicate_conflict:
        reasons.append(Reason.DUPLICATE_CONFLICT)
    outcome = Outcome.EXCLUDE if reasons else Outcome.KEEP
    return SelectionDecision(exam.key, outcome, tuple(reasons))


def resolve_split(exam: Exam, dataset: Dataset) -> Optional[Split]:
    """CBIS/TOMPEI -> unsplit. VinDr -> the records' split, or None when views disagree."""
    if dataset is not Dataset.VINDR:
        return Split.UNSPLIT
    splits = {r.split for r in exam.records}
    if len(splits) != 1:
        return None
    return splits.pop()


def select(drafts: Sequence[UnifiedRecord], dataset: Dataset) -> Tuple[List[Exam], List[SelectionDecision]]:
    """Kept exams (records finalized with split and processed_path) plus one decision per exam."""
    kept: List[Exam] = []
    decisions: List[SelectionDecision] = []
    for exam in assemble_exams(drafts):
        decision = apply_exclusions(exam, dataset)
        if decision.outcome is Outcome.KEEP:
            split = resolve_split(exam, dataset)
            if split is None:
                decision = SelectionDecision(exam.key, Outcome.EXCLUDE, (Reason.DUPLICATE_CONFLICT,))
            else:
                records = tuple(replace(r, split=split).with_processed_path() for r in exam.records)
                kept.append(replace(exam, records=records))
        decisions.append(decision)
    n_ex = sum(1 for d in decisions if d.outcome is Outcome.EXCLUDE)
    log.info("%s selection: %d exam(s) kept, %d excluded", dataset.value, len(kept), n_ex)
    return kept, decisions


def reason_counts(decisions: Sequence[SelectionDecision]) -> Dict[str, int]:
    counts = {r.value: 0 for r in Reason}
    for d in decisions:
        for r in d.reasons:
            counts[r.value] += 1
    return counts
