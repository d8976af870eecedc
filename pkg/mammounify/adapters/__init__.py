"""Per-dataset metadata adapters: native CSV layout -> UnifiedRecord drafts."""

from __future__ import annotations

from typing import List, Tuple

from mammounify.adapters.cbis import parse_cbis
from mammounify.adapters.common import AdapterReport, AdapterWarning, RawRow
from mammounify.adapters.tompei import parse_tompei
from mammounify.adapters.vindr import parse_vindr
from mammounify.config import DatasetSource
from mammounify.errors import InputDataError
from mammounify.model import Dataset, UnifiedRecord

__all__ = [
    "AdapterReport",
    "AdapterWarning",
    "RawRow",
    "load_dataset",
    "parse_cbis",
    "parse_tompei",
    "parse_vindr",
]


def load_dataset(dataset: Dataset, source: DatasetSource) -> Tuple[List[UnifiedRecord], AdapterReport]:
    paths = list(source.paths())
    if dataset is Dataset.CBIS:
        return parse_cbis(paths, image_root=source.root, image_pattern=source.image_pattern)
    if dataset is Dataset.TOMPEI:
        if len(paths) != 1:
            raise InputDataError(f"TOMPEI expects one metadata file, got {len(paths)}", module="dataset-adapters")
        return parse_tompei(paths[0], image_root=source.root, image_pattern=source.image_pattern)
    return parse_vindr(paths, image_root=source.root, image_pattern=source.image_pattern)
