"""Shared CSV plumbing for the dataset adapters.

Column lookup is case-insensitive and whitespace-trimmed against a fixed alias
list per column. A renamed column is a schema error, never a fuzzy match.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence

import pandas as pd

from mammounify.errors import AdapterSchemaError, RowError
from mammounify.model import Dataset, UnifiedRecord, validate_record

log = logging.getLogger(__name__)

Aliases = Mapping[str, Sequence[str]]


@dataclass(frozen=True)
class RawRow:
    dataset: Dataset
    source_fields: Dict[str, str]  # original header -> cell text, file column order
    source_file: str
    line: int  # 1-based file line; the header is line 1


class AdapterWarning(NamedTuple):
    source_file: str
    line: int
    message: str


@dataclass
class AdapterReport:
    """rows_read = rows_emitted + rows_quarantined + rows_excluded, per adapter."""

    dataset: Dataset
    rows_read: int = 0
    rows_emitted: int = 0
    rows_quarantined: int = 0
    rows_excluded: int = 0
    drafts: int = 0
    warnings: List[AdapterWarning] = field(default_factory=list)

    def warn(self, row: Optional[RawRow], message: str, source_file: str = "") -> None:
        src = row.source_file if row else source_file
        line = row.line if row else 0
        self.warnings.append(AdapterWarning(src, line, message))
        log.debug("%s:%d %s", os.path.basename(src), line, message)

    def quarantine(self, row: RawRow, err: Exception) -> None:
        self.rows_quarantined += 1
        self.warn(row, f"quarantined: {err}")

    @property
    def conserved(self) -> bool:
        return self.rows_read == self.rows_emitted + self.rows_quarantined + self.rows_excluded


class MetadataTable:
    """One metadata CSV with its columns resolved to canonical names."""

    def __init__(self, path: str, dataset: Dataset, rows: List[RawRow], columns: Dict[str, Optional[str]]):
        self.path = path
        self.dataset = dataset
        self.rows = rows
        self.columns = columns

    def __iter__(self) -> Iterator[RawRow]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def has(self, name: str) -> bool:
        return self.columns.get(name) is not None

    def value(self, row: RawRow, name: str) -> str:
        """Trimmed cell text for canonical column `name`; "" when the optional column is absent."""
        actual = self.columns.get(name)
        if actual is None:
            return ""
        return (row.source_fields.get(actual) or "").strip()


def resolve_columns(
    header: Sequence[str], required: Aliases, optional: Aliases, source_file: str
) -> Dict[str, Optional[str]]:
    by_key: Dict[str, str] = {}
    for col in header:
        by_key.setdefault(" ".join(str(col).split()).lower(), col)

    def find(aliases: Sequence[str]) -> Optional[str]:
        for alias in aliases:
            hit = by_key.get(alias.lower())
            if hit is not None:
                return hit
        return None

    resolved: Dict[str, Optional[str]] = {}
    for name, aliases in required.items():
        hit = find(aliases)
        if hit is None:
            raise AdapterSchemaError(aliases[0], source_file)
        resolved[name] = hit
    for name, aliases in optional.items():
        resolved[name] = find(aliases)
    return resolved


def read_metadata_csv(path: str, dataset: Dataset, required: Aliases, optional: Aliases = None) -> MetadataTable:
    """Read every cell as text. A zero-byte file is an empty table (no schema check)."""
    optional = optional or {}
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8-sig")
    except pd.errors.EmptyDataError:
        log.info("%s is empty", path)
        return MetadataTable(path, dataset, [], {k: None for k in (*required, *optional)})
    columns = resolve_columns(list(df.columns), required, optional, path)
    header = [str(c) for c in df.columns]
    rows = [
        RawRow(dataset=dataset, source_fields=dict(zip(header, values)), source_file=path, line=i + 2)
        for i, values in enumerate(df.itertuples(index=False, name=None))
    ]
    log.info("read %d row(s) from %s", len(rows), path)
    return MetadataTable(path, dataset, rows, columns)


def check_draft(draft: UnifiedRecord) -> UnifiedRecord:
    """Reject drafts that break a core-model rule; the caller quarantines the row."""
    violations = validate_record(draft, draft=True)
    if violations:
        raise RowError("; ".join(str(v) for v in violations), module="dataset-adapters")
    return draft


def resolve_image(root: str, pattern: str, **values: str) -> str:
    """Fill the image path pattern and anchor it under `root` (POSIX or native separators)."""
    rel = pattern.format(**values).replace("\\", "/").lstrip("/")
    return os.path.normpath(os.path.join(root, *rel.split("/")))


def source_dir(files: Sequence[str]) -> str:
    return os.path.dirname(os.path.abspath(files[0])) if files else os.getcwd()


def descriptor(text: str) -> Optional[str]:
    """Descriptor cell -> value; empty, N/A and NaN-like cells are absent."""
    t = (text or "").strip()
    if not t or t.upper() in ("N/A", "NA", "NAN", "NONE", "-"):
        return None
    return t
