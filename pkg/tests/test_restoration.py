"""Corrupted twins of a clean image must process to exactly the clean output."""

import numpy as np
import pytest

from mammounify.image_io import SourceImageMeta
from mammounify.model import Laterality
from mammounify.pipeline import DetectorConfig, process_image
from mammounify.synthetic import corrupt, random_full_resolution, synthetic_breast

DEFECTS = [(True, False), (False, True), (True, True)]
FORMATS = [(8, 8), (16, 16), (16, 12)]  # (container bits, stored bits)


def check_twins(height, width, bits, stored, seed, defects=DEFECTS):
    cfg = DetectorConfig()
    meta = SourceImageMeta(photometric="MONOCHROME2", stored_bits=stored, path="twin")
    clean = synthetic_breast(height, width, bit_depth=bits, stored_bits=stored, seed=seed)
    expected, _ = process_image(clean, Laterality.L, meta, cfg)
    for mirror, invert in defects:
        twin = corrupt(clean, mirror=mirror, invert=invert, stored_bits=stored)
        out, qc = process_image(twin, Laterality.L, meta, cfg)
        assert out.same_samples(expected), (height, width, bits, stored, seed, mirror, invert)
        assert (qc.laterality_flipped, qc.mirrored, qc.intensity_inverted) == (mirror, mirror, invert)
        assert "ambiguous-polarity" not in qc.warnings


@pytest.mark.parametrize("bits,stored", FORMATS)
@pytest.mark.parametrize("mirror,invert", DEFECTS)
@pytest.mark.parametrize("size", [(48, 40), (96, 64), (160, 120)])
def test_twin_restored(size, bits, stored, mirror, invert):
    check_twins(size[0], size[1], bits, stored, seed=size[0] + bits + stored, defects=[(mirror, invert)])


# 67 seeds x 3 formats = 201 canonical images, each with every defect
@pytest.mark.slow
@pytest.mark.parametrize("bits,stored", FORMATS)
@pytest.mark.parametrize("seed", range(67))
def test_full_resolution_twins_restored(seed, bits, stored):
    height, width = random_full_resolution(np.random.default_rng(seed))
    check_twins(height, width, bits, stored, seed=seed)
