"""Bias audit: distributions, co-occurrence, abnormality tables, corruption prevalence.

Every table has an explicit `absent` bucket, so each record lands in exactly one
cell per axis and margins always close. Categories a dataset does not define
(VinDr diagnosis, CBIS Normal) are left off the axis rather than shown as zeros.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from mammounify.model import (
    ABNORMALITIES,
    HARMONIZED_BIRADS,
    BIRADS_SCORES,
    Dataset,
    DensityCategory,
    Diagnosis,
    QcReport,
    UnifiedRecord,
    View,
)

log = logging.getLogger(__name__)

ABSENT = "absent"
FIELDS = ("diagnosis", "birads", "density")
FORMATS = ("csv", "json", "md")

DIAGNOSIS_AXES: Dict[Dataset, Tuple[str, ...]] = {
    Dataset.CBIS: (Diagnosis.BENIGN.value, Diagnosis.MALIGNANT.value),
    Dataset.TOMPEI: (Diagnosis.NORMAL.value, Diagnosis.BENIGN.value, Diagnosis.MALIGNANT.value),
    Dataset.VINDR: (),
}
_DEFAULT_DIAGNOSIS_AXIS = (Diagnosis.NORMAL.value, Diagnosis.BENIGN.value, Diagnosis.MALIGNANT.value)


# -----------------------------
# Table type
# -----------------------------
@dataclass(frozen=True)
class AuditTable:
    title: str
    row_field: str
    col_field: str
    row_labels: Tuple[str, ...]
    col_labels: Tuple[str, ...]
    cells: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.row_labels):
            raise ValueError(f"{self.title}: {len(self.cells)} row(s) for {len(self.row_labels)} label(s)")
        for row in self.cells:
            if len(row) != len(self.col_labels):
                raise ValueError(f"{self.title}: row width {len(row)} != {len(self.col_labels)} column(s)")
            if any(c < 0 for c in row):
                raise ValueError(f"{self.title}: negative count")

    @property
    def row_totals(self) -> Tuple[int, ...]:
        return tuple(sum(row) for row in self.cells)

    @property
    def col_totals(self) -> Tuple[int, ...]:
        return tuple(sum(row[j] for row in self.cells) for j in range(len(self.col_labels)))

    @property
    def total(self) -> int:
        return sum(self.row_totals)

    def cell(self, row: str, col: str) -> int:
        return self.cells[self.row_labels.index(row)][self.col_labels.index(col)]

    def transpose(self) -> "AuditTable":
        cells = tuple(tuple(self.cells[i][j] for i in range(len(self.row_labels))) for j in range(len(self.col_labels)))
        return AuditTable(self.title, self.col_field, self.row_field, self.col_labels, self.row_labels, cells)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(list(self.cells), index=list(self.row_labels), columns=list(self.col_labels), dtype="int64")
        df.index.name = self.row_field
        return df

    def as_dict(self) -> Dict[str, object]:
        return {
            "title": self.title,
            "row_field": self.row_field,
            "col_field": self.col_field,
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "cells": [list(r) for r in self.cells],
            "row_totals": list(self.row_totals),
            "col_totals": list(self.col_totals),
            "total": self.total,
        }


# -----------------------------
# Axes
# -----------------------------
def infer_dataset(records: Sequence[UnifiedRecord]) -> Optional[Dataset]:
    found = {r.dataset for r in records}
    return found.pop() if len(found) == 1 else None


def axis(field: str, dataset: Optional[Dataset], *, harmonized_birads: bool = False) -> Tuple[str, ...]:
    if field == "diagnosis":
        values = DIAGNOSIS_AXES[dataset] if dataset is not None else _DEFAULT_DIAGNOSIS_AXIS
    elif field == "birads":
        values = tuple(str(b) for b in (HARMONIZED_BIRADS if harmonized_birads else BIRADS_SCORES))
    elif field == "density":
        values = tuple(d.value for d in DensityCategory)
    else:
        raise ValueError(f"unsupported audit field {field!r}; expected one of {FIELDS}")
    return values + (ABSENT,)


def label(record: UnifiedRecord, field: str, labels: Sequence[str]) -> str:
    if field == "diagnosis":
        value = record.diagnosis.value
    elif field == "birads":
        value = "" if record.birads is None else str(record.birads)
    elif field == "density":
        value = record.density.value if record.density is not None else ""
    else:
        raise ValueError(f"unsupported audit field {field!r}")
    return value if value in labels else ABSENT


def _counts(rows: Sequence[str], cols: Sequence[str], row_axis: Sequence[str], col_axis: Sequence[str]) -> Tuple[Tuple[int, ...], ...]:
    if not rows:
        return tuple(tuple(0 for _ in col_axis) for _ in row_axis)
    ct = pd.crosstab(pd.Series(list(rows), name="r"), pd.Series(list(cols), name="c"))
    ct = ct.reindex(index=list(row_axis), columns=list(col_axis), fill_value=0)
    return tuple(tuple(int(v) for v in row) for row in ct.to_numpy())


# -----------------------------
# Tables
# -----------------------------
def to_breast_level(records: Sequence[UnifiedRecord]) -> List[UnifiedRecord]:
    """One record per (patient, laterality): the first view's labels, findings merged over views."""
    groups: Dict[Tuple[str, str], List[UnifiedRecord]] = {}
    order = {v: i for i, v in enumerate(View)}
    for r in records:
        groups.setdefault((r.patient_id, r.laterality.value), []).append(r)
    out: List[UnifiedRecord] = []
    for key in sorted(groups):
        views = sorted(groups[key], key=lambda r: order[r.view])
        findings = views[0].findings
        for other in views[1:]:
            findings = findings.merge(other.findings)
        out.append(replace(views[0], findings=findings))
    return out


def distribution(records: Sequence[UnifiedRecord], field: str, *, dataset: Optional[Dataset] = None) -> AuditTable:
    dataset = dataset or infer_dataset(records)
    cols = axis(field, dataset)
    labels = [label(r, field, cols) for r in records]
    cells = _counts(["all"] * len(labels), labels, ("all",), cols)
    return AuditTable(f"{field} distribution", "records", field, ("all",), cols, cells)


def co_occurrence(
    records: Sequence[UnifiedRecord], field_a: str, field_b: str, *, dataset: Optional[Dataset] = None
) -> AuditTable:
    dataset = dataset or infer_dataset(records)
    rows_axis = axis(field_a, dataset)
    cols_axis = axis(field_b, dataset)
    a = [label(r, field_a, rows_axis) for r in records]
    b = [label(r, field_b, cols_axis) for r in records]
    return AuditTable(f"{field_a} x {field_b}", field_a, field_b, rows_axis, cols_axis, _counts(a, b, rows_axis, cols_axis))


def abnormality_table(records: Sequence[UnifiedRecord], *, dataset: Optional[Dataset] = None) -> Dict[str, AuditTable]:
    """Per abnormality, counts by BI-RADS 1-5 and by diagnosis.

    A record with several abnormalities counts once in each of their rows.
    """
    dataset = dataset or infer_dataset(records)
    out: Dict[str, AuditTable] = {}
    for field in ("birads", "diagnosis"):
        cols = axis(field, dataset, harmonized_birads=True)
        rows: List[str] = []
        values: List[str] = []
        for r in records:
            lab = label(r, field, cols)
            for abn in r.findings.abnormalities():
                rows.append(abn)
                values.append(lab)
        out[field] = AuditTable(
            f"abnormalities by {field}", "abnormality", field, ABNORMALITIES, cols, _counts(rows, values, ABNORMALITIES, cols)
        )
    return out


def corruption_prevalence(reports: Sequence[QcReport]) -> Dict[str, float]:
    n = len(reports)
    lat = sum(1 for q in reports if q.laterality_flipped)
    inten = sum(1 for q in reports if q.intensity_inverted)
    return {
        "images": n,
        "laterality_flipped": lat,
        "intensity_inverted": inten,
        "laterality_flip_rate": lat / n if n else 0.0,
        "intensity_flip_rate": inten / n if n else 0.0,
    }


def prevalence_table(reports: Sequence[QcReport]) -> AuditTable:
    rates = corruption_prevalence(reports)
    n = int(rates["images"])
    lat, inten = int(rates["laterality_flipped"]), int(rates["intensity_inverted"])
    return AuditTable(
        "corruption prevalence",
        "defect",
        "status",
        ("laterality_flip", "intensity_flip"),
        ("flagged", "clean"),
        ((lat, n - lat), (inten, n - inten)),
    )


def audit_tables(
    records: Sequence[UnifiedRecord],
    reports: Sequence[QcReport],
    *,
    dataset: Optional[Dataset] = None,
    granularity: str = "breast",
) -> Dict[str, AuditTable]:
    """Every table a store audit emits, keyed by output file stem.

    Distributions and abnormality tables follow `granularity`; the diagnosis x
    BI-RADS co-occurrence is emitted at both image and breast level, labeled.
    """
    if granularity not in ("image", "breast"):
        raise ValueError(f"granularity must be image or breast, got {granularity!r}")
    dataset = dataset or infer_dataset(records)
    breasts = to_breast_level(records)
    counted = breasts if granularity == "breast" else list(records)

    tables: Dict[str, AuditTable] = {}
    for field in FIELDS:
        tables[f"distribution_{field}"] = distribution(counted, field, dataset=dataset)
    tables["co_occurrence_diagnosis_birads_image"] = co_occurrence(records, "diagnosis", "birads", dataset=dataset)
    tables["co_occurrence_diagnosis_birads_breast"] = co_occurrence(breasts, "diagnosis", "birads", dataset=dataset)
    tables["co_occurrence_density_birads"] = co_occurrence(counted, "density", "birads", dataset=dataset)
    abn = abnormality_table(counted, dataset=dataset)
    tables["abnormality_birads"] = abn["birads"]
    tables["abnormality_diagnosis"] = abn["diagnosis"]
    tables["corruption_prevalence"] = prevalence_table(reports)
    return tables


# -----------------------------
# Rendering
# -----------------------------
def percent(count: int, total: int) -> str:
    """Share of `total` in percent, half-even to one decimal; 0 total -> 0.0."""
    if total == 0:
        return "0.0"
    value = Decimal(count * 100) / Decimal(total)
    return str(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN))


def _md_row(cells: Sequence[str]) -> str:
    return "| " + " | ".join(cells) + " |"


def table_markdown(table: AuditTable) -> str:
    header = [table.row_field]
    for c in table.col_labels:
        header += [c, f"{c} %"]
    header.append("total")
    lines = [f"### {table.title}", "", _md_row(header), _md_row(["---"] * len(header))]
    for name, row, total in zip(table.row_labels, table.cells, table.row_totals):
        cells = [name]
        for v in row:
            cells += [str(v), percent(v, total)]
        cells.append(str(total))
        lines.append(_md_row(cells))
    totals = ["total"]
    for v in table.col_totals:
        totals += [str(v), percent(v, table.total)]
    totals.append(str(table.total))
    lines.append(_md_row(totals))
    return "\n".join(lines) + "\n"


def abnormality_markdown(by_birads: AuditTable, by_diagnosis: AuditTable) -> str:
    """Combined layout: BI-RADS columns, then diagnosis columns, then the row total."""
    br_cols = [f"BI-RADS {c}" if c != ABSENT else "BI-RADS absent" for c in by_birads.col_labels]
    dx_cols = [c if c != ABSENT else "diagnosis absent" for c in by_diagnosis.col_labels]
    header = ["abnormality"] + br_cols + dx_cols + ["total"]
    lines = ["### abnormalities by BI-RADS and diagnosis", "", _md_row(header), _md_row(["---"] * len(header))]
    for i, name in enumerate(by_birads.row_labels):
        row = [name] + [str(v) for v in by_birads.cells[i]] + [str(v) for v in by_diagnosis.cells[i]]
        row.append(str(by_birads.row_totals[i]))
        lines.append(_md_row(row))
    return "\n".join(lines) + "\n"


def _write(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path


def render_report(
    tables: Mapping[str, AuditTable],
    out_dir: str,
    formats: Sequence[str] = FORMATS,
    *,
    extra_json: Optional[Mapping[str, object]] = None,
) -> List[str]:
    """Write `<stem>.{csv,json,md}` per table; returns the written paths in a stable order."""
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f"unknown report format(s) {unknown}; expected {FORMATS}")
    os.makedirs(out_dir, exist_ok=True)
    written: List[str] = []
    for stem in sorted(tables):
        table = tables[stem]
        if "csv" in formats:
            df = table.to_frame()
            df["total"] = list(table.row_totals)
            path = os.path.join(out_dir, f"{stem}.csv")
            df.to_csv(path, lineterminator="\n", encoding="utf-8")
            written.append(path)
        if "json" in formats:
            written.append(_write(os.path.join(out_dir, f"{stem}.json"), json.dumps(table.as_dict(), indent=2, sort_keys=True) + "\n"))
        if "md" in formats:
            written.append(_write(os.path.join(out_dir, f"{stem}.md"), table_markdown(table)))
    if "md" in formats and "abnormality_birads" in tables and "abnormality_diagnosis" in tables:
        text = abnormality_markdown(tables["abnormality_birads"], tables["abnormality_diagnosis"])
        written.append(_write(os.path.join(out_dir, "abnormality_table.md"), text))
    if extra_json:
        for stem in sorted(extra_json):
            body = json.dumps(extra_json[stem], indent=2, sort_keys=True) + "\n"
            written.append(_write(os.path.join(out_dir, f"{stem}.json"), body))
    log.info("audit report: %d file(s) in %s", len(written), out_dir)
    return written
