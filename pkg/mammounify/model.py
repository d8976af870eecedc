"""MammoUnify - shared domain vocabulary.

Categories, harmonized records, breast-level exams and per-image QC reports.
Every type here is an immutable value object; they are safe to hand to worker
processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

BIRADS_SCORES = tuple(range(0, 7))
HARMONIZED_BIRADS = (1, 2, 3, 4, 5)
MAX_AGE_YEARS = 120
LIST_SEPARATOR = ";"


class Dataset(str, Enum):
    CBIS = "CBIS"
    TOMPEI = "TOMPEI"
    VINDR = "VINDR"


class DensityCategory(str, Enum):
    """BI-RADS breast density, A (almost entirely fatty) .. D (extremely dense)."""

    A = "A"
    B = "B"
    C = "C"
    D = "D"


class Diagnosis(str, Enum):
    NORMAL = "Normal"
    BENIGN = "Benign"
    MALIGNANT = "Malignant"
    UNKNOWN = "Unknown"  # only for datasets without biopsy labels


class Laterality(str, Enum):
    L = "L"
    R = "R"

    @property
    def opposite(self) -> "Laterality":
        return Laterality.R if self is Laterality.L else Laterality.L


class View(str, Enum):
    CC = "CC"
    MLO = "MLO"


class Asymmetry(str, Enum):
    ASYMMETRY = "Asymmetry"
    FOCAL = "Focal"
    GLOBAL = "Global"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"
    UNSPLIT = "unsplit"


# (laterality, view) -> the four canonical image slots of a patient
IMAGE_SLOTS: Tuple[Tuple[Laterality, View], ...] = tuple(
    (lat, view) for lat in Laterality for view in View
)

ABNORMALITIES = ("mass", "calcification", "asymmetry", "architectural_distortion")


def slot_name(laterality: Laterality, view: View) -> str:
    """`Laterality_View` file stem, e.g. L_CC."""
    return f"{laterality.value}_{view.value}"


def canonical_image_path(patient_id: str, laterality: Laterality, view: View) -> str:
    """Store-relative path of a processed image (POSIX separators)."""
    return f"{patient_id}/{slot_name(laterality, view)}.png"


def join_list(items: Iterable[str]) -> str:
    return LIST_SEPARATOR.join(items)


def split_list(text: str) -> Tuple[str, ...]:
    return tuple(part for part in (text or "").split(LIST_SEPARATOR) if part)


@dataclass(frozen=True)
class FindingSet:
    mass: bool = False
    mass_shape: Optional[str] = None
    mass_margin: Optional[str] = None
    mass_density: Optional[str] = None
    calcification: bool = False
    calc_morphology: Optional[str] = None
    calc_distribution: Optional[str] = None
    asymmetry: Optional[Asymmetry] = None
    architectural_distortion: bool = False
    other_findings: Tuple[str, ...] = ()

    def has(self, abnormality: str) -> bool:
        if abnormality == "asymmetry":
            return self.asymmetry is not None
        return bool(getattr(self, abnormality))

    def abnormalities(self) -> List[str]:
        return [a for a in ABNORMALITIES if self.has(a)]

    def merge(self, other: "FindingSet") -> "FindingSet":
        """Union of two finding sets; differing descriptors are joined in sorted order."""
        asym = [a for a in (self.asymmetry, other.asymmetry) if a is not None]
        others = list(dict.fromkeys(self.other_findings + other.other_findings))
        return FindingSet(
            mass=self.mass or other.mass,
            mass_shape=_merge_text(self.mass_shape, other.mass_shape),
            mass_margin=_merge_text(self.mass_margin, other.mass_margin),
            mass_density=_merge_text(self.mass_density, other.mass_density),
            calcification=self.calcification or other.calcification,
            calc_morphology=_merge_text(self.calc_morphology, other.calc_morphology),
            calc_distribution=_merge_text(self.calc_distribution, other.calc_distribution),
            # Global > Focal > Asymmetry when two sources disagree
            asymmetry=max(asym, key=_ASYMMETRY_RANK.get) if asym else None,
            architectural_distortion=self.architectural_distortion or other.architectural_distortion,
            other_findings=tuple(others),
        )


_ASYMMETRY_RANK = {Asymmetry.ASYMMETRY: 0, Asymmetry.FOCAL: 1, Asymmetry.GLOBAL: 2}


def _merge_text(a: Optional[str], b: Optional[str]) -> Optional[str]:
    values = sorted(set(split_list(a or "")) | set(split_list(b or "")))
    return join_list(values) if values else None


@dataclass(frozen=True)
class UnifiedRecord:
    """One breast-side image's harmonized metadata row.

    `source_image` points at the raw file while a run is in flight. It is not
    part of the stored metadata and does not take part in equality.
    """

    dataset: Dataset
    patient_id: str
    laterality: Laterality
    view: View
    diagnosis: Diagnosis
    image_id: Optional[str] = None
    age: Optional[int] = None
    density: Optional[DensityCategory] = None
    birads: Optional[int] = None
    findings: FindingSet = FindingSet()
    split: Split = Split.UNSPLIT
    raw_folder: str = ""
    processed_path: str = ""
    source_image: Optional[str] = field(default=None, compare=False, repr=False)

    @property
    def key(self) -> Tuple[str, Laterality, View]:
        return (self.patient_id, self.laterality, self.view)

    @property
    def exam_key(self) -> Tuple[str, Laterality]:
        return (self.patient_id, self.laterality)

    def with_processed_path(self) -> "UnifiedRecord":
        return replace(self, processed_path=canonical_image_path(self.patient_id, self.laterality, self.view))


def format_image_key(key: Tuple[str, Laterality, View]) -> str:
    patient_id, lat, view = key
    return f"{patient_id}/{slot_name(lat, view)}"


def format_exam_key(key: Tuple[str, Laterality]) -> str:
    return f"{key[0]}:{key[1].value}"


@dataclass(frozen=True)
class Exam:
    """Breast-level grouping (patient x laterality) of CC and MLO records."""

    dataset: Dataset
    patient_id: str
    laterality: Laterality
    records: Tuple[UnifiedRecord, ...] = ()
    duplicate_conflict: bool = False

    @property
    def key(self) -> Tuple[str, Laterality]:
        return (self.patient_id, self.laterality)

    @property
    def views(self) -> Tuple[View, ...]:
        return tuple(r.view for r in self.records)

    def record(self, view: View) -> Optional[UnifiedRecord]:
        for r in self.records:
            if r.view is view:
                return r
        return None

    @property
    def diagnosis(self) -> Optional[Diagnosis]:
        return _agreed(r.diagnosis for r in self.records)

    @property
    def birads(self) -> Optional[int]:
        return _agreed(r.birads for r in self.records)

    @property
    def density(self) -> Optional[DensityCategory]:
        return _agreed(r.density for r in self.records)

    @property
    def age(self) -> Optional[int]:
        return _agreed(r.age for r in self.records)


def _agreed(values: Iterable):
    distinct = set(values)
    if len(distinct) == 1:
        return distinct.pop()
    return None


@dataclass(frozen=True)
class NormalizationParams:
    min_in: int
    max_in: int
    target_bits: int = 16

    def __post_init__(self) -> None:
        if self.max_in < self.min_in:
            raise ValueError(f"normalization max_in {self.max_in} < min_in {self.min_in}")


@dataclass(frozen=True)
class QcReport:
    """Detected defects and applied corrections for one image."""

    image_key: Tuple[str, Laterality, View]
    declared_laterality: Laterality
    detected_laterality: Laterality
    laterality_confidence: float
    laterality_tie: bool
    laterality_flipped: bool  # declared side contradicted by the detector
    mirrored: bool
    intensity_inverted: bool
    intensity_confidence: float
    source_bit_depth: int
    stored_bits: int
    normalization: NormalizationParams
    photometric: Optional[str] = None
    polarity_disagreement: bool = False
    rescale_applied: bool = False
    constant_image: bool = False
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}" + (f" ({self.message})" if self.message else "")


_DESCRIPTOR_FLAGS: Dict[str, str] = {
    "mass_shape": "mass",
    "mass_margin": "mass",
    "mass_density": "mass",
    "calc_morphology": "calcification",
    "calc_distribution": "calcification",
}


def validate_record(record: UnifiedRecord, *, draft: bool = False) -> List[Violation]:
    """Check a record against the core-model invariants. Never raises.

    Drafts (adapter output before case selection) may still carry BI-RADS 0
    and have no processed path yet. Harmonized CBIS records carry only BI-RADS
    1-5; TOMPEI and VinDr records may keep a 0.
    """
    out: List[Violation] = []
    if not (record.patient_id or "").strip():
        out.append(Violation("patient_id", "patient-id-empty"))

    f = record.findings
    for descriptor, flag in _DESCRIPTOR_FLAGS.items():
        if getattr(f, descriptor) and not getattr(f, flag):
            out.append(Violation(descriptor, "descriptor-without-flag", f"{flag} flag is not set"))
    for item in f.other_findings:
        if not item or LIST_SEPARATOR in item:
            out.append(Violation("other_findings", "other-finding-separator", repr(item)))

    if record.birads is not None:
        if record.birads not in BIRADS_SCORES:
            out.append(Violation("birads", "birads-range", str(record.birads)))
        elif not draft and record.birads not in HARMONIZED_BIRADS:
            # BI-RADS 0 is removed by case selection for CBIS only; the other
            # datasets keep every case, so 0 survives there. 6 never should.
            if record.birads == 6 or record.dataset is Dataset.CBIS:
                out.append(Violation("birads", "birads-not-harmonized", str(record.birads)))

    if record.age is not None and not 0 <= record.age <= MAX_AGE_YEARS:
        out.append(Violation("age", "age-range", str(record.age)))

    if record.dataset is Dataset.VINDR:
        if record.split is Split.UNSPLIT:
            out.append(Violation("split", "vindr-requires-split"))
        if record.diagnosis is not Diagnosis.UNKNOWN:
            out.append(Violation("diagnosis", "vindr-diagnosis-unknown", record.diagnosis.value))
    else:
        if record.split is not Split.UNSPLIT:
            out.append(Violation("split", "split-must-be-unsplit", record.split.value))
        if record.diagnosis is Diagnosis.UNKNOWN:
            out.append(Violation("diagnosis", "unknown-diagnosis-requires-vindr"))

    if not draft:
        expected = canonical_image_path(record.patient_id, record.laterality, record.view)
        if record.processed_path != expected:
            out.append(Violation("processed_path", "laterality-view-naming", f"expected {expected}"))
    return out
