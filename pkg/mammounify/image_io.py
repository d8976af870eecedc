"""Image decode/encode. The only module that touches PNG or DICOM bytes.

Inputs:  8/16-bit grayscale PNG, DICOM with uncompressed little-endian monochrome pixel data.
Output:  16-bit grayscale PNG, non-interlaced.

MONOCHROME1 pixel data is returned as stored; polarity is the pipeline's job.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pydicom
from PIL import Image, UnidentifiedImageError
from pydicom.errors import InvalidDicomError
from pydicom.pixels import apply_rescale as dicom_apply_rescale
from pydicom.uid import ExplicitVRLittleEndian, ImplicitVRLittleEndian

from mammounify.errors import ImageReadError, ImageWriteError

log = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
DICOM_MAGIC = b"DICM"
SUPPORTED_TRANSFER_SYNTAXES = (ExplicitVRLittleEndian, ImplicitVRLittleEndian)
STORED_BITS = (8, 10, 12, 14, 16)
PHOTOMETRICS = ("MONOCHROME1", "MONOCHROME2")

_DTYPES = {8: np.dtype(np.uint8), 16: np.dtype(np.uint16)}


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W grayscale samples in an 8- or 16-bit container. The array is read-only."""

    samples: np.ndarray
    bit_depth: int

    def __post_init__(self) -> None:
        if self.bit_depth not in _DTYPES:
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2-D (H x W), got shape {arr.shape}")
        if arr.dtype != _DTYPES[self.bit_depth]:
            raise ValueError(f"{self.bit_depth}-bit buffer needs {_DTYPES[self.bit_depth]}, got {arr.dtype}")
        h, w = arr.shape
        if w < 2 or h < 1:
            raise ValueError(f"image must be at least 2 px wide and 1 px tall, got {w}x{h}")
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "samples", view)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def full_scale(self) -> int:
        return (1 << self.bit_depth) - 1

    def same_samples(self, other: "ImageBuffer") -> bool:
        return self.bit_depth == other.bit_depth and np.array_equal(self.samples, other.samples)

    @classmethod
    def from_array(cls, arr: np.ndarray, bit_depth: int) -> "ImageBuffer":
        return cls(np.ascontiguousarray(arr, dtype=_DTYPES[bit_depth]), bit_depth)


@dataclass(frozen=True)
class SourceImageMeta:
    photometric: Optional[str]
    stored_bits: int
    path: str
    rescale_applied: bool = False

    def __post_init__(self) -> None:
        if self.stored_bits not in STORED_BITS:
            raise ValueError(f"stored_bits must be one of {STORED_BITS}, got {self.stored_bits}")


# -----------------------------
# Reading
# -----------------------------
def sniff_format(path: str) -> str:
    """'png', 'dicom' or 'unknown' from the leading bytes."""
    with open(path, "rb") as fh:
        head = fh.read(132)
    if head.startswith(PNG_SIGNATURE):
        return "png"
    if len(head) >= 132 and head[128:132] == DICOM_MAGIC:
        return "dicom"
    return "unknown"


def read_image(path: str, *, apply_rescale: bool = False) -> Tuple[ImageBuffer, SourceImageMeta]:
    """Decode `path` into an ImageBuffer plus what the container says about it.

    `apply_rescale` only affects DICOM (RescaleSlope/Intercept, clipped to the container).
    Raises ImageReadError with one of: unsupported-format, unsupported-transfer-syntax,
    unsupported-color, unsupported-bit-depth, truncated.
    """
    try:
        kind = sniff_format(path)
    except OSError as e:
        raise ImageReadError("truncated", path, str(e)) from e
    if kind == "png":
        return _read_png(path)
    if kind == "dicom":
        return _read_dicom(path, apply_rescale)
    raise ImageReadError("unsupported-format", path)


_PNG_COLOR_MODES = {"RGB", "RGBA", "LA", "P", "PA", "CMYK", "YCbCr", "HSV", "La", "RGBa"}


def _read_png(path: str) -> Tuple[ImageBuffer, SourceImageMeta]:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in _PNG_COLOR_MODES:
                raise ImageReadError("unsupported-color", path, f"mode {mode}")
            arr = np.asarray(im)
    except UnidentifiedImageError as e:
        raise ImageReadError("unsupported-format", path, str(e)) from e
    except (OSError, SyntaxError, ValueError) as e:
        raise ImageReadError("truncated", path, str(e)) from e

    if mode == "L":
        bit_depth = 8
    elif mode.startswith("I;16") or mode == "I":
        bit_depth = 16
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise ImageReadError("unsupported-bit-depth", path, "samples exceed 16 bits")
    else:
        raise ImageReadError("unsupported-bit-depth", path, f"mode {mode}")

    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ImageReadError("unsupported-format", path, f"shape {arr.shape}")
    buf = ImageBuffer.from_array(arr, bit_depth)
    return buf, SourceImageMeta(photometric=None, stored_bits=bit_depth, path=path)


def _read_dicom(path: str, apply_rescale: bool) -> Tuple[ImageBuffer, SourceImageMeta]:
    try:
        ds = pydicom.dcmread(path)
    except InvalidDicomError as e:
        raise ImageReadError("unsupported-format", path, str(e)) from e
    except (EOFError, OSError, ValueError) as e:
        raise ImageReadError("truncated", path, str(e)) from e

    ts = getattr(getattr(ds, "file_meta", None), "TransferSyntaxUID", None)
    if ts not in SUPPORTED_TRANSFER_SYNTAXES:
        raise ImageReadError("unsupported-transfer-syntax", path, str(ts))

    photometric = str(ds.get("PhotometricInterpretation", "")).strip().upper()
    if int(ds.get("SamplesPerPixel", 1)) != 1 or photometric not in PHOTOMETRICS:
        raise ImageReadError("unsupported-color", path, photometric or "no PhotometricInterpretation")

    bits_allocated = int(ds.get("BitsAllocated", 0))
    bits_stored = int(ds.get("BitsStored", bits_allocated))
    if bits_allocated not in _DTYPES or bits_stored not in STORED_BITS or bits_stored > bits_allocated:
        raise ImageReadError("unsupported-bit-depth", path, f"allocated={bits_allocated} stored={bits_stored}")
    if int(ds.get("PixelRepresentation", 0)) != 0:
        raise ImageReadError("unsupported-bit-depth", path, "signed pixel data")
    if int(ds.get("NumberOfFrames", 1) or 1) != 1:
        raise ImageReadError("unsupported-format", path, "multi-frame DICOM")
    if "PixelData" not in ds:
        raise ImageReadError("truncated", path, "no PixelData element")

    try:
        arr = ds.pixel_array
    except (ValueError, AttributeError, EOFError) as e:
        raise ImageReadError("truncated", path, str(e)) from e
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ImageReadError("unsupported-format", path, f"shape {arr.shape}")

    rescaled = False
    slope = float(ds.get("RescaleSlope", 1) or 1)
    intercept = float(ds.get("RescaleIntercept", 0) or 0)
    if apply_rescale and (slope != 1.0 or intercept != 0.0):
        full = (1 << bits_allocated) - 1
        arr = np.clip(np.rint(dicom_apply_rescale(arr, ds)), 0, full)
        rescaled = True
        log.debug("rescale slope=%s intercept=%s applied to %s", slope, intercept, path)

    buf = ImageBuffer.from_array(arr, bits_allocated)
    meta = SourceImageMeta(photometric=photometric, stored_bits=bits_stored, path=path, rescale_applied=rescaled)
    return buf, meta


# -----------------------------
# Writing
# -----------------------------
def write_image(buffer: ImageBuffer, path: str) -> None:
    """Write a 16-bit grayscale PNG. 8-bit buffers are refused; normalize them first."""
    if buffer.bit_depth != 16:
        raise ImageWriteError("normalize-first", path, f"{buffer.bit_depth}-bit buffer")
    parent = os.path.dirname(path)
    try:
        if parent:
            os.makedirs(parent, exist_ok=True)
        Image.fromarray(np.ascontiguousarray(buffer.samples, dtype="<u2")).save(path, format="PNG")
    except OSError as e:
        raise ImageWriteError("io-failure", path, str(e)) from e
