"""Per-image corrections: dynamic-range normalization, laterality (variance rule), polarity.

Store convention: breast tissue on the LEFT edge, background zero, 16-bit full range.

Processing order is normalize -> orient -> polarity. Polarity needs orientation
first (the background window is the right edge of a canonical image). When an
image has to be inverted, the inversion is applied to the source samples and
the result is normalized and oriented again, which keeps corrected images
sample-identical to their clean twins.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import numpy as np

from mammounify.errors import ConfigError
from mammounify.image_io import ImageBuffer, SourceImageMeta
from mammounify.model import Laterality, NormalizationParams, QcReport, View

log = logging.getLogger(__name__)

Side = Literal["left", "right"]

DEFAULT_MIN_WINDOW = 16
DEFAULT_WINDOW_FRACTION = 0.02


# -----------------------------
# Detector configuration
# -----------------------------
@dataclass(frozen=True)
class DetectorConfig:
    """window_width: None -> max(16 px, 2% of W); int -> pixels; float in (0,1) -> fraction of W."""

    window_width: Optional[Union[int, float]] = None
    sigma_tie_epsilon: float = 1.0
    background_threshold: float = 0.5

    def __post_init__(self) -> None:
        w = self.window_width
        if w is not None:
            if isinstance(w, bool) or not isinstance(w, (int, float)):
                raise ConfigError(f"detector.window_width must be null, an int or a fraction, got {w!r}")
            if isinstance(w, float) and not 0.0 < w < 1.0:
                raise ConfigError(f"detector.window_width fraction must be in (0, 1), got {w}")
            if isinstance(w, int) and w < 1:
                raise ConfigError(f"detector.window_width must be >= 1 px, got {w}")
        if not self.sigma_tie_epsilon >= 0:
            raise ConfigError(f"detector.sigma_tie_epsilon must be >= 0, got {self.sigma_tie_epsilon}")
        if not 0.0 < self.background_threshold < 1.0:
            raise ConfigError(f"detector.background_threshold must be in (0, 1), got {self.background_threshold}")

    @classmethod
    def from_mapping(cls, raw: Optional[Mapping[str, Any]]) -> "DetectorConfig":
        raw = dict(raw or {})
        unknown = set(raw) - {"window_width", "sigma_tie_epsilon", "background_threshold"}
        if unknown:
            raise ConfigError(f"unknown detector key(s): {', '.join(sorted(unknown))}")
        kwargs: Dict[str, Any] = {}
        if raw.get("window_width") is not None:
            kwargs["window_width"] = raw["window_width"]
        for key in ("sigma_tie_epsilon", "background_threshold"):
            if raw.get(key) is not None:
                try:
                    kwargs[key] = float(raw[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"detector.{key} must be a number, got {raw[key]!r}") from None
        return cls(**kwargs)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "window_width": self.window_width,
            "sigma_tie_epsilon": self.sigma_tie_epsilon,
            "background_threshold": self.background_threshold,
        }

    def resolve_window(self, width: int) -> int:
        """Window width in pixels for an image `width` px wide; always 1 <= n < W/2 for W >= 3."""
        w = self.window_width
        if w is None:
            n = max(DEFAULT_MIN_WINDOW, round(DEFAULT_WINDOW_FRACTION * width))
        elif isinstance(w, float):
            n = max(1, round(w * width))
        else:
            n = w
        return max(1, min(n, (width - 1) // 2))


# -----------------------------
# Laterality
# -----------------------------
def _window(image: ImageBuffer, side: Side, n: int) -> np.ndarray:
    # Right windows are read outward-in so that a mirrored image's left window
    # is the identical array.
    s = image.samples
    if side == "left":
        return s[:, :n]
    if side == "right":
        return s[:, image.width - n:][:, ::-1]
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def window_sigma(image: ImageBuffer, side: Side, n: int) -> float:
    """Population standard deviation of the n edge columns on `side`, all rows."""
    if not 1 <= n <= image.width:
        raise ValueError(f"window width {n} out of range 1..{image.width}")
    win = _window(image, side, n).astype(np.int64)
    count = win.size
    s1 = int(win.sum())
    s2 = int(np.square(win).sum())
    # exact integer variance numerator; identical under mirroring and inversion
    return math.sqrt(count * s2 - s1 * s1) / count


@dataclass(frozen=True)
class LateralityEvidence:
    side: Laterality
    confidence: float
    tie: bool
    sigma_left: float
    sigma_right: float
    window: int


def measure_laterality(image: ImageBuffer, cfg: DetectorConfig) -> LateralityEvidence:
    n = cfg.resolve_window(image.width)
    sl = window_sigma(image, "left", n)
    sr = window_sigma(image, "right", n)
    if abs(sl - sr) <= cfg.sigma_tie_epsilon:
        return LateralityEvidence(Laterality.R, 0.0, True, sl, sr, n)
    side = Laterality.L if sl > sr else Laterality.R
    return LateralityEvidence(side, abs(sl - sr) / max(sl, sr, 1.0), False, sl, sr, n)


def detect_laterality(image: ImageBuffer, cfg: DetectorConfig) -> Tuple[Laterality, float]:
    """Tissue side by edge-window variance: L if the left window is busier, else R.

    Differences within sigma_tie_epsilon fall to R with confidence 0; see
    measure_laterality for the tie flag.
    """
    ev = measure_laterality(image, cfg)
    return ev.side, ev.confidence


def mirror_horizontal(image: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(np.ascontiguousarray(image.samples[:, ::-1]), image.bit_depth)


@dataclass(frozen=True)
class OrientationResult:
    declared: Laterality
    detected: Laterality
    confidence: float
    tie: bool
    laterality_flipped: bool
    mirrored: bool

    @property
    def warnings(self) -> Tuple[str, ...]:
        return ("laterality-tie",) if self.tie else ()


def standardize_orientation(
    image: ImageBuffer, declared: Laterality, cfg: DetectorConfig
) -> Tuple[ImageBuffer, OrientationResult]:
    """Mirror images whose tissue sits on the right. Ties pass through unmirrored."""
    ev = measure_laterality(image, cfg)
    mirrored = not ev.tie and ev.side is Laterality.R
    out = mirror_horizontal(image) if mirrored else image
    result = OrientationResult(
        declared=declared,
        detected=ev.side,
        confidence=ev.confidence,
        tie=ev.tie,
        laterality_flipped=not ev.tie and ev.side is not declared,
        mirrored=mirrored,
    )
    return out, result


# -----------------------------
# Polarity
# -----------------------------
def detect_intensity_flip(image: ImageBuffer, cfg: DetectorConfig) -> Tuple[bool, float]:
    """Bright background check on a canonically oriented image (background = right edge)."""
    n = cfg.resolve_window(image.width)
    median = float(np.median(_window(image, "right", n)))
    level = median / image.full_scale
    thr = cfg.background_threshold
    confidence = min(1.0, abs(level - thr) / max(thr, 1.0 - thr))
    return median > thr * image.full_scale, confidence


def invert_intensity(image: ImageBuffer) -> ImageBuffer:
    full = image.full_scale
    return ImageBuffer(np.subtract(full, image.samples, dtype=image.samples.dtype), image.bit_depth)


# -----------------------------
# Dynamic range
# -----------------------------
def normalize_dynamic_range(
    image: ImageBuffer, stored_bits: int, target_bits: int = 16
) -> Tuple[ImageBuffer, NormalizationParams]:
    """Per-image linear min-max stretch to [0, 2^target_bits - 1].

    Rounds to nearest with exact halves rounded DOWN (not banker's, not half-up):
    out = (2*(v - min)*T + R - 1) // (2*R), with R = max - min and T = 2^target_bits - 1.
    So [0, 1, 2] maps to [0, 32767, 65535]; the exact 32767.5 becomes 32767.
    Constant images map to all zeros.
    """
    if target_bits not in (8, 16):
        raise ValueError(f"target_bits must be 8 or 16, got {target_bits}")
    if stored_bits > image.bit_depth:
        log.debug("stored_bits=%d exceeds container width %d", stored_bits, image.bit_depth)
    s = image.samples
    lo, hi = int(s.min()), int(s.max())
    params = NormalizationParams(min_in=lo, max_in=hi, target_bits=target_bits)
    if lo == hi:
        return ImageBuffer.from_array(np.zeros(s.shape), target_bits), params
    span = hi - lo
    top = (1 << target_bits) - 1
    out = (2 * (s.astype(np.int64) - lo) * top + span - 1) // (2 * span)
    return ImageBuffer.from_array(out, target_bits), params


# -----------------------------
# Full per-image pipeline
# -----------------------------
def process_image(
    image: ImageBuffer,
    declared: Laterality,
    meta: SourceImageMeta,
    cfg: DetectorConfig,
    image_key: Optional[Tuple[str, Laterality, View]] = None,
) -> Tuple[ImageBuffer, QcReport]:
    """normalize -> standardize_orientation -> detect_intensity_flip -> conditional inversion.

    A MONOCHROME1 header always inverts; if the detector did not see a bright
    background the disagreement is recorded. With background_threshold >= 0.5
    the output is a fixed point: processing it again changes no sample.
    """
    warnings: List[str] = []
    norm, params = normalize_dynamic_range(image, meta.stored_bits)
    oriented, orient = standardize_orientation(norm, declared, cfg)
    flipped, flip_conf = detect_intensity_flip(oriented, cfg)

    header_inverted = meta.photometric == "MONOCHROME1"
    disagreement = header_inverted and not flipped
    inverted = False
    if flipped or header_inverted:
        source = invert_intensity(image)
        norm2, params2 = normalize_dynamic_range(source, meta.stored_bits)
        oriented2, orient2 = standardize_orientation(norm2, declared, cfg)
        if header_inverted or not detect_intensity_flip(oriented2, cfg)[0]:
            oriented, orient, params = oriented2, orient2, params2
        else:
            # Rounding moved the re-normalized image across the laterality tie band.
            # Invert the already oriented image instead; exact at full range.
            oriented = invert_intensity(oriented)
            warnings.append("polarity-fallback")
            if detect_intensity_flip(oriented, cfg)[0]:
                warnings.append("ambiguous-polarity")
        inverted = True
    if disagreement:
        warnings.append("polarity-disagreement")
        log.warning("MONOCHROME1 header but no bright background detected: %s", meta.path)

    constant = params.min_in == params.max_in
    if constant:
        warnings.append("constant-image")
    warnings.extend(orient.warnings)

    report = QcReport(
        image_key=image_key or ("", declared, View.CC),
        declared_laterality=declared,
        detected_laterality=orient.detected,
        laterality_confidence=orient.confidence,
        laterality_tie=orient.tie,
        laterality_flipped=orient.laterality_flipped,
        mirrored=orient.mirrored,
        intensity_inverted=inverted,
        intensity_confidence=flip_conf,
        source_bit_depth=image.bit_depth,
        stored_bits=meta.stored_bits,
        normalization=params,
        photometric=meta.photometric,
        polarity_disagreement=disagreement,
        rescale_applied=meta.rescale_applied,
        constant_image=constant,
        warnings=tuple(sorted(set(warnings))),
    )
    return oriented, report
