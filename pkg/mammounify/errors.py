"""MammoUnify - exception hierarchy and exit-code taxonomy.

Exit codes (stable, documented in README):
  0  ok
  2  config error
  3  input-data error
  4  validation failure
  5  internal error
"""

from __future__ import annotations

from typing import List, Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT_DATA = 3
EXIT_VALIDATION = 4
EXIT_INTERNAL = 5


class MammoError(Exception):
    """Base error. Carries the module that raised it and a remediation hint."""

    exit_code = EXIT_INTERNAL
    module = "mammounify"

    def __init__(self, message: str, *, hint: Optional[str] = None, module: Optional[str] = None):
        super().__init__(message)
        self.hint = hint
        if module:
            self.module = module


class ConfigError(MammoError):
    exit_code = EXIT_CONFIG
    module = "config"


class InputDataError(MammoError):
    exit_code = EXIT_INPUT_DATA


class ImageReadError(InputDataError):
    """Image could not be decoded. `category` is one of the image-io error categories."""

    module = "image-io"

    def __init__(self, category: str, path: str, detail: str = ""):
        msg = f"{category}: {path}" + (f" ({detail})" if detail else "")
        super().__init__(msg, hint=_IMAGE_HINTS.get(category))
        self.category = category
        self.path = path


class ImageWriteError(MammoError):
    """Writer contract or I/O failure while saving a processed image."""

    module = "image-io"

    def __init__(self, category: str, path: str, detail: str = ""):
        msg = f"{category}: {path}" + (f" ({detail})" if detail else "")
        super().__init__(msg, hint=_IMAGE_HINTS.get(category))
        self.category = category
        self.path = path


_IMAGE_HINTS = {
    "unsupported-transfer-syntax": "Compressed DICOM is not decoded; convert to uncompressed little-endian first (e.g. `gdcmconv --raw`).",
    "unsupported-color": "Only single-channel grayscale images are supported.",
    "unsupported-format": "Expected a PNG or DICOM file.",
    "unsupported-bit-depth": "Only 8- and 16-bit containers are supported.",
    "truncated": "The file is incomplete; re-download it from the dataset source.",
    "normalize-first": "Run normalize_dynamic_range before writing; the store is 16-bit only.",
    "io-failure": "Check free disk space and write permissions on the output root.",
}


class AdapterSchemaError(InputDataError):
    """A required metadata column is missing. Fatal for the adapter."""

    module = "dataset-adapters"

    def __init__(self, column: str, source_file: str):
        super().__init__(
            f"missing required column '{column}' in {source_file}",
            hint="Check the dataset root/file names in the config; renamed columns are not guessed.",
        )
        self.column = column
        self.source_file = source_file


class RowError(InputDataError):
    """One metadata row cannot be mapped. The adapter quarantines the row and continues."""

    module = "dataset-adapters"


class StoreError(InputDataError):
    module = "unified-store"


class SchemaVersionError(StoreError):
    def __init__(self, found: str, expected: str):
        super().__init__(
            f"store schema_version {found!r} does not match {expected!r}",
            hint="Rebuild the store with `run.py harmonize`; stores are never coerced between versions.",
        )
        self.found = found
        self.expected = expected


class MissingImagesError(StoreError):
    def __init__(self, paths: List[str]):
        shown = ", ".join(paths[:20]) + (" ..." if len(paths) > 20 else "")
        super().__init__(
            f"{len(paths)} image(s) referenced by metadata.csv are missing: {shown}",
            hint="Restore the files or rebuild the store.",
        )
        self.paths = list(paths)


class ValidationFailed(MammoError):
    exit_code = EXIT_VALIDATION
    module = "unified-store"

    def __init__(self, violations: list):
        super().__init__(f"{len(violations)} violation(s)")
        self.violations = list(violations)
