"""Synthetic mammogram-like images and small dataset trees in each native layout.

Images are canonical: a textured half-ellipse "breast" against the left edge and
a zero background elsewhere (under half the area, so the median is background).
Used by the sample-dataset script, the restoration oracle and the tests.
"""

from __future__ import annotations

import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from pydicom.dataset import FileDataset, FileMetaDataset
from pydicom.uid import ExplicitVRLittleEndian, generate_uid

from mammounify.image_io import ImageBuffer, write_image
from mammounify.model import Laterality, View
from mammounify.pipeline import invert_intensity, mirror_horizontal

# Digital Mammography X-Ray Image Storage - For Presentation
MAMMO_SOP_CLASS = "1.2.840.10008.5.1.4.1.1.1.2"

# (height, width) range of the full-resolution corpus
FULL_RES_MIN = (2812, 2012)
FULL_RES_MAX = (3580, 2812)


def synthetic_breast(height: int, width: int, *, bit_depth: int = 16, stored_bits: Optional[int] = None, seed: int = 0) -> ImageBuffer:
    """Canonical synthetic image: tissue on the left, zero background on the right."""
    stored = stored_bits or bit_depth
    top = (1 << stored) - 1
    rng = np.random.default_rng(seed)
    yy, xx = np.ogrid[:height, :width]
    cy = (height - 1) / 2.0
    b = max(0.48 * height, 1.0)
    a = max(0.48 * width, 1.0)
    inside = ((xx / a) ** 2 + ((yy - cy) / b) ** 2) <= 1.0

    base = 0.25 + 0.35 * (1.0 - xx / max(width - 1, 1)) + 0.1 * np.sin(yy / max(height / 7.0, 1.0))
    noise = rng.normal(0.0, 0.08, size=(height, width))
    tissue = np.clip(base + noise, 0.05, 0.95) * top
    samples = np.where(inside, np.maximum(np.rint(tissue), 1), 0)
    # guarantees a textured left window even on tiny images
    samples[:, 0] = rng.integers(1, top + 1, size=height)
    return ImageBuffer.from_array(samples.astype(np.uint16 if bit_depth == 16 else np.uint8), bit_depth)


def corrupt(image: ImageBuffer, *, mirror: bool = False, invert: bool = False, stored_bits: Optional[int] = None) -> ImageBuffer:
    """Apply the laterality and/or intensity defect. Inversion is within the stored bit range."""
    out = image
    if invert:
        if stored_bits is not None and stored_bits != image.bit_depth:
            full = (1 << stored_bits) - 1
            out = ImageBuffer.from_array(full - out.samples.astype(np.int64), out.bit_depth)
        else:
            out = invert_intensity(out)
    if mirror:
        out = mirror_horizontal(out)
    return out


def random_full_resolution(rng: np.random.Generator) -> Tuple[int, int]:
    h = int(rng.integers(FULL_RES_MIN[0], FULL_RES_MAX[0] + 1))
    w = int(rng.integers(FULL_RES_MIN[1], FULL_RES_MAX[1] + 1))
    return h, w


# -----------------------------
# File writers
# -----------------------------
def write_png(image: ImageBuffer, path: str) -> str:
    """Raw-dataset PNG writer; unlike the store writer it keeps 8-bit images 8-bit."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    if image.bit_depth == 16:
        write_image(image, path)
    else:
        Image.fromarray(np.ascontiguousarray(image.samples)).save(path, format="PNG")
    return path


def write_dicom(
    image: ImageBuffer,
    path: str,
    *,
    stored_bits: Optional[int] = None,
    photometric: str = "MONOCHROME2",
    rescale: Optional[Tuple[float, float]] = None,
) -> str:
    """Uncompressed explicit-VR little-endian single-frame DICOM."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    sop_uid = generate_uid()
    meta = FileMetaDataset()
    meta.MediaStorageSOPClassUID = MAMMO_SOP_CLASS
    meta.MediaStorageSOPInstanceUID = sop_uid
    meta.TransferSyntaxUID = ExplicitVRLittleEndian

    ds = FileDataset(path, {}, file_meta=meta, preamble=b"\0" * 128)
    ds.SOPClassUID = MAMMO_SOP_CLASS
    ds.SOPInstanceUID = sop_uid
    ds.Modality = "MG"
    ds.Rows, ds.Columns = image.height, image.width
    ds.SamplesPerPixel = 1
    ds.PhotometricInterpretation = photometric
    ds.BitsAllocated = image.bit_depth
    ds.BitsStored = stored_bits or image.bit_depth
    ds.HighBit = ds.BitsStored - 1
    ds.PixelRepresentation = 0
    if rescale is not None:
        ds.RescaleSlope, ds.RescaleIntercept = rescale
    dtype = "<u2" if image.bit_depth == 16 else "u1"
    ds.PixelData = np.ascontiguousarray(image.samples, dtype=dtype).tobytes()
    ds.save_as(path, enforce_file_format=True)
    return path


# -----------------------------
# Sample dataset trees
# -----------------------------
def _image(rng: np.random.Generator, size: Tuple[int, int], bit_depth: int, stored: int, laterality: Laterality, defect: Dict[str, bool]) -> ImageBuffer:
    img = synthetic_breast(size[0], size[1], bit_depth=bit_depth, stored_bits=stored, seed=int(rng.integers(0, 2**31)))
    # raw right breasts show tissue on the right; a laterality defect shows it on the wrong side
    mirror = (laterality is Laterality.R) != defect.get("laterality", False)
    return corrupt(img, mirror=mirror, invert=defect.get("intensity", False), stored_bits=stored)


def _defects(rng: np.random.Generator, lat_rate: float, int_rate: float) -> Dict[str, bool]:
    return {"laterality": bool(rng.random() < lat_rate), "intensity": bool(rng.random() < int_rate)}


CBIS_COLUMNS = (
    "patient_id", "breast_density", "left or right breast", "image view", "abnormality id",
    "abnormality type", "mass shape", "mass margins", "calc type", "calc distribution",
    "assessment", "pathology", "subtlety", "image file path",
)

_CBIS_CASES = [
    # (abnormality type, shape/type, margin/distribution, assessment, pathology)
    ("mass", "IRREGULAR", "SPICULATED", "5", "MALIGNANT"),
    ("mass", "OVAL", "CIRCUMSCRIBED", "3", "BENIGN"),
    ("calcification", "PLEOMORPHIC", "SEGMENTAL", "4", "MALIGNANT"),
    ("calcification", "PUNCTATE", "CLUSTERED", "2", "BENIGN_WITHOUT_CALLBACK"),
    ("mass", "ARCHITECTURAL_DISTORTION", "ILL_DEFINED", "4", "BENIGN"),
    ("mass", "LOBULATED", "OBSCURED", "0", "BENIGN"),
]


def write_cbis_sample(
    root: str,
    *,
    patients: int = 6,
    size: Tuple[int, int] = (96, 64),
    seed: int = 0,
    laterality_defect_rate: float = 0.3,
    intensity_defect_rate: float = 0.0,
) -> List[str]:
    """CBIS-DDSM-like tree: four case-description CSVs plus one PNG per row."""
    rng = np.random.default_rng(seed)
    rows: Dict[str, List[Dict[str, str]]] = {
        "mass_case_description_train_set.csv": [],
        "mass_case_description_test_set.csv": [],
        "calc_case_description_train_set.csv": [],
        "calc_case_description_test_set.csv": [],
    }
    for i in range(patients):
        pid = f"P_{i + 1:05d}"
        kind, d1, d2, birads, pathology = _CBIS_CASES[i % len(_CBIS_CASES)]
        lat = Laterality.L if i % 2 == 0 else Laterality.R
        subset = "Training" if i % 3 else "Test"
        views = list(View) if i % 5 != 4 else [View.CC]  # every fifth patient misses MLO
        for view in views:
            folder = f"{'Mass' if kind == 'mass' else 'Calc'}-{subset}_{pid}_{'LEFT' if lat is Laterality.L else 'RIGHT'}_{view.value}"
            rel = f"{folder}/000000.png"
            write_png(_image(rng, size, 16, 16, lat, _defects(rng, laterality_defect_rate, intensity_defect_rate)), os.path.join(root, rel))
            row = {c: "" for c in CBIS_COLUMNS}
            row.update({
                "patient_id": pid,
                "breast_density": str(1 + i % 4),
                "left or right breast": "LEFT" if lat is Laterality.L else "RIGHT",
                "image view": view.value,
                "abnormality id": "1",
                "abnormality type": kind,
                "assessment": birads,
                "pathology": pathology,
                "subtlety": str(1 + i % 5),
                "image file path": rel,
            })
            if kind == "mass":
                row.update({"mass shape": d1, "mass margins": d2})
            else:
                row.update({"calc type": d1, "calc distribution": d2})
            name = f"{'mass' if kind == 'mass' else 'calc'}_case_description_{'train' if subset == 'Training' else 'test'}_set.csv"
            rows[name].append(row)

    written = []
    for name, body in rows.items():
        path = os.path.join(root, name)
        pd.DataFrame(body, columns=list(CBIS_COLUMNS)).to_csv(path, index=False)
        written.append(path)
    return written


TOMPEI_COLUMNS = ("ID1", "LeftRight", "Age", "number", "abnormality", "classification", "subtype", "density", "birads", "findings", "excluded")
_TOMPEI_DENSITY = ("almost entirely fatty", "scattered areas of fibroglandular density", "heterogeneously dense", "extremely dense")
_TOMPEI_CASES = [
    ("mass", "Malignant", "5"),
    ("calcification", "Benign", "2"),
    ("both", "Malignant", "4"),
    ("", "Normal", "1"),
]


def write_tompei_sample(
    root: str,
    *,
    patients: int = 4,
    size: Tuple[int, int] = (96, 64),
    seed: int = 0,
    intensity_defect_rate: float = 0.3,
    stored_bits: int = 12,
) -> List[str]:
    """TOMPEI-CMMD-like tree: one metadata CSV, DICOM CC/MLO pairs per breast."""
    rng = np.random.default_rng(seed)
    body: List[Dict[str, str]] = []
    for i in range(patients):
        pid = f"D1-{i + 1:04d}"
        lat = Laterality.L if i % 2 == 0 else Laterality.R
        abn, cls, birads = _TOMPEI_CASES[i % len(_TOMPEI_CASES)]
        for view in View:
            defect = _defects(rng, 0.0, intensity_defect_rate)
            img = _image(rng, size, 16, stored_bits, lat, defect)
            path = os.path.join(root, "images", pid, f"{lat.value}_{view.value}.dcm")
            write_dicom(img, path, stored_bits=stored_bits)
        body.append({
            "ID1": pid,
            "LeftRight": lat.value,
            "Age": str(40 + 3 * i),
            "number": "1",
            "abnormality": abn,
            "classification": cls,
            "subtype": "",
            "density": _TOMPEI_DENSITY[i % 4],
            "birads": birads,
            "findings": "upper outer quadrant" if abn else "",
            "excluded": "",
        })
    path = os.path.join(root, "tompei_cmmd_metadata.csv")
    os.makedirs(root, exist_ok=True)
    pd.DataFrame(body, columns=list(TOMPEI_COLUMNS)).to_csv(path, index=False)
    return [path]


VINDR_BREAST_COLUMNS = ("study_id", "series_id", "image_id", "laterality", "view_position", "height", "width", "breast_birads", "breast_density", "split")
VINDR_FINDING_COLUMNS = ("study_id", "series_id", "image_id", "laterality", "view_position", "breast_birads", "breast_density", "finding_categories", "finding_birads", "split")
_VINDR_FINDINGS = ["['No Finding']", "['Mass']", "['Suspicious Calcification', 'Focal Asymmetry']", "['Architectural Distortion', 'Skin Thickening']"]


def write_vindr_sample(
    root: str,
    *,
    studies: int = 4,
    size: Tuple[int, int] = (96, 64),
    seed: int = 0,
    intensity_defect_rate: float = 0.25,
) -> List[str]:
    """VinDr-Mammo-like tree: breast- and finding-level CSVs, four DICOMs per study.

    Intensity defects are written as MONOCHROME1 files, the way the scanner exports them.
    """
    rng = np.random.default_rng(seed)
    breast: List[Dict[str, str]] = []
    finding: List[Dict[str, str]] = []
    for i in range(studies):
        study = f"{i + 1:032x}"
        split = "training" if i % 4 else "test"
        for lat in Laterality:
            for view in View:
                image_id = f"{i + 1:08x}{lat.value}{view.value}".lower()
                defect = _defects(rng, 0.0, intensity_defect_rate)
                img = _image(rng, size, 16, 16, lat, defect)
                photometric = "MONOCHROME1" if defect["intensity"] else "MONOCHROME2"
                write_dicom(img, os.path.join(root, "images", study, f"{image_id}.dicom"), photometric=photometric)
                birads = 1 + (i + (lat is Laterality.R)) % 5
                common = {
                    "study_id": study,
                    "series_id": f"{i + 1:016x}",
                    "image_id": image_id,
                    "laterality": lat.value,
                    "view_position": view.value,
                    "breast_birads": f"BI-RADS {birads}",
                    "breast_density": f"DENSITY {'ABCD'[i % 4]}",
                    "split": split,
                }
                breast.append({**common, "height": str(size[0]), "width": str(size[1])})
                finding.append({**common, "finding_categories": _VINDR_FINDINGS[(i + (lat is Laterality.R)) % len(_VINDR_FINDINGS)], "finding_birads": "", })
    os.makedirs(root, exist_ok=True)
    b = os.path.join(root, "breast-level_annotations.csv")
    f = os.path.join(root, "finding_annotations.csv")
    pd.DataFrame(breast, columns=list(VINDR_BREAST_COLUMNS)).to_csv(b, index=False)
    pd.DataFrame(finding, columns=list(VINDR_FINDING_COLUMNS)).to_csv(f, index=False)
    return [b, f]


SAMPLE_WRITERS = {
    "cbis": write_cbis_sample,
    "tompei": write_tompei_sample,
    "vindr": write_vindr_sample,
}
