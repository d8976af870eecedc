"""Code tables that translate each dataset's raw labels into the shared vocabulary.

Tables are frozen. Unknown density strings are reported (CBIS, VinDr) or
rejected (TOMPEI); unknown pathology labels always reject the row.
"""

from __future__ import annotations

import hashlib
import re
from typing import Dict, Optional

from mammounify.errors import RowError
from mammounify.model import BIRADS_SCORES, Dataset, DensityCategory, Diagnosis, Laterality, View

# -----------------------------
# Density
# -----------------------------
CBIS_DENSITY: Dict[str, DensityCategory] = {
    "1": DensityCategory.A,
    "2": DensityCategory.B,
    "3": DensityCategory.C,
    "4": DensityCategory.D,
}

VINDR_DENSITY: Dict[str, DensityCategory] = {
    "density a": DensityCategory.A,
    "density b": DensityCategory.B,
    "density c": DensityCategory.C,
    "density d": DensityCategory.D,
}

# Observed TOMPEI phrasings. Anything else fails the row instead of being guessed.
TOMPEI_DENSITY: Dict[str, DensityCategory] = {
    "almost entirely fatty": DensityCategory.A,
    "fatty": DensityCategory.A,
    "scattered areas of fibroglandular density": DensityCategory.B,
    "scattered fibroglandular densities": DensityCategory.B,
    "scattered": DensityCategory.B,
    "heterogeneously dense": DensityCategory.C,
    "extremely dense": DensityCategory.D,
}

DENSITY_TABLES: Dict[Dataset, Dict[str, DensityCategory]] = {
    Dataset.CBIS: CBIS_DENSITY,
    Dataset.TOMPEI: TOMPEI_DENSITY,
    Dataset.VINDR: VINDR_DENSITY,
}


def _norm(raw: Optional[str]) -> str:
    return " ".join((raw or "").split()).lower()


def map_density(raw: Optional[str], dataset: Dataset) -> Optional[DensityCategory]:
    """Raw density label -> category, or None when empty or not in the table."""
    text = _norm(raw)
    if not text:
        return None
    if dataset is Dataset.CBIS and re.fullmatch(r"\d+\.0+", text):
        text = text.split(".")[0]
    return DENSITY_TABLES[dataset].get(text)


# -----------------------------
# Pathology
# -----------------------------
CBIS_PATHOLOGY: Dict[str, Diagnosis] = {
    "MALIGNANT": Diagnosis.MALIGNANT,
    "BENIGN": Diagnosis.BENIGN,
    "BENIGN_WITHOUT_CALLBACK": Diagnosis.BENIGN,
}

TOMPEI_PATHOLOGY: Dict[str, Diagnosis] = {
    "NORMAL": Diagnosis.NORMAL,
    "BENIGN": Diagnosis.BENIGN,
    "MALIGNANT": Diagnosis.MALIGNANT,
}


def map_pathology(raw: Optional[str], dataset: Dataset) -> Diagnosis:
    """Raw pathology label -> Diagnosis. Raises RowError naming the raw value."""
    if dataset is Dataset.VINDR:
        return Diagnosis.UNKNOWN
    table = CBIS_PATHOLOGY if dataset is Dataset.CBIS else TOMPEI_PATHOLOGY
    key = (raw or "").strip().upper()
    try:
        return table[key]
    except KeyError:
        raise RowError(f"unrecognized {dataset.value} pathology label {raw!r}", module="core-model") from None


# -----------------------------
# BI-RADS, laterality, view, age
# -----------------------------
_BIRADS_RE = re.compile(r"^(?:bi-?rads\s*)?(\d+)(?:\.0+)?$", re.IGNORECASE)


def parse_birads(raw: Optional[str]) -> Optional[int]:
    """Accepts "4", "4.0" and "BI-RADS 4". Empty -> None; anything outside 0-6 is a row error."""
    text = (raw or "").strip()
    if not text:
        return None
    m = _BIRADS_RE.match(text)
    if not m or int(m.group(1)) not in BIRADS_SCORES:
        raise RowError(f"BI-RADS value {raw!r} is not a score in 0-6", module="core-model")
    return int(m.group(1))


_LATERALITY = {"L": Laterality.L, "LEFT": Laterality.L, "R": Laterality.R, "RIGHT": Laterality.R}


def parse_laterality(raw: Optional[str]) -> Laterality:
    key = (raw or "").strip().upper()
    if key not in _LATERALITY:
        raise RowError(f"unrecognized laterality {raw!r}", module="core-model")
    return _LATERALITY[key]


def parse_view(raw: Optional[str]) -> View:
    key = (raw or "").strip().upper()
    try:
        return View(key)
    except ValueError:
        raise RowError(f"unrecognized view position {raw!r}", module="core-model") from None


def parse_age(raw: Optional[str]) -> Optional[int]:
    """Integer years when numeric ("45", "45.0", "045Y"), None otherwise."""
    text = (raw or "").strip().upper().rstrip("Y")
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    if not value.is_integer():
        return None
    return int(value)


def encode_patient_id(dataset: Dataset, raw_id: str) -> str:
    """Stable one-way patient id: `<DATASET>_<12 hex chars>`."""
    digest = hashlib.sha256(f"{dataset.value}:{raw_id.strip()}".encode("utf-8")).hexdigest()
    return f"{dataset.value}_{digest[:12]}"
