import os

import pytest

from mammounify.config import InjectionScopes
from mammounify.errors import ConfigError, StoreError
from mammounify.harmonize import reprocess_store
from mammounify.image_io import read_image
from mammounify.inject import PLAN_FILE, InjectionPlan, apply_injection, fraction_count, load_plan, plan_for_store, plan_injection
from mammounify.model import IMAGE_SLOTS, format_image_key
from mammounify.store import StoreManifest, read_store, validate_store

from tests.helpers import make_record


def singles(n=100):
    return [make_record(patient_id=f"p{i:03d}") for i in range(n)]


def same_images(root_a, root_b, records):
    for r in records:
        a, _ = read_image(os.path.join(root_a, *r.processed_path.split("/")))
        b, _ = read_image(os.path.join(root_b, *r.processed_path.split("/")))
        if not a.same_samples(b):
            return False
    return True


# -----------------------------
# planning
# -----------------------------
def test_exact_counts_for_100_patients():
    plan = plan_injection(singles(), 0.3, 0.6, seed=42)
    assert len(plan.intensity) == 30
    assert len(plan.laterality) == 60
    assert plan.intensity == tuple(sorted(plan.intensity))


def test_zero_fractions_give_empty_plan():
    plan = plan_injection(singles(10), 0.0, 0.0, seed=1)
    assert plan.empty


def test_same_seed_same_plan():
    records = singles(50)
    assert plan_injection(records, 0.4, 0.2, seed=9) == plan_injection(list(reversed(records)), 0.4, 0.2, seed=9)
    assert plan_injection(records, 0.4, 0.2, seed=9) != plan_injection(records, 0.4, 0.2, seed=10)


def test_streams_are_independent():
    # the intensity draw must not move when only q changes
    records = singles(40)
    assert plan_injection(records, 0.5, 0.1, seed=5).intensity == plan_injection(records, 0.5, 0.9, seed=5).intensity


def test_fraction_count_guards_float_error():
    assert fraction_count(0.29, 100) == 29
    assert fraction_count(0.57, 100) == 57
    assert fraction_count(1.0, 7) == 7
    assert fraction_count(0.5, 3) == 1


def test_scopes():
    records = [
        make_record(patient_id=f"p{i}", laterality=lat, view=view) for i in range(5) for lat, view in IMAGE_SLOTS
    ]
    plan = plan_injection(records, 1.0, 0.0, seed=0, scopes=InjectionScopes("image", "patient"))
    assert len(plan.intensity) == 20
    assert all(plan.inverts(r) for r in records)
    plan = plan_injection(records, 0.0, 0.4, seed=0, scopes=InjectionScopes("image", "patient"))
    assert len(plan.laterality) == 2
    assert sum(plan.mirrors(r) for r in records) == 8


@pytest.mark.parametrize("p,q,seed", [(1.5, 0.0, 0), (0.0, -0.1, 0), (0.1, 0.1, -1), (0.1, 0.1, 1 << 64)])
def test_invalid_parameters(p, q, seed):
    with pytest.raises(ConfigError):
        plan_injection(singles(5), p, q, seed)


def test_empty_store_cannot_be_planned():
    with pytest.raises(StoreError):
        plan_injection([], 0.1, 0.1, seed=0)


def test_plan_json_round_trip():
    plan = plan_injection(singles(20), 0.25, 0.5, seed=77)
    assert InjectionPlan.from_json(plan.to_json()) == plan


# -----------------------------
# applying
# -----------------------------
def test_target_inside_source_refused(clean_store):
    root, _, _ = clean_store
    records, _ = read_store(root)
    plan = plan_injection(records, 0.5, 0.5, seed=0)
    with pytest.raises(ConfigError):
        apply_injection(root, plan, os.path.join(root, "copy"))
    with pytest.raises(ConfigError):
        apply_injection(root, plan, root)


def test_non_empty_target_refused(clean_store, tmp_path):
    root, _, _ = clean_store
    records, _ = read_store(root)
    busy = tmp_path / "busy"
    busy.mkdir()
    (busy / "x").write_text("x")
    with pytest.raises(StoreError):
        apply_injection(root, plan_injection(records, 0.5, 0.5, seed=0), str(busy))


def test_copy_records_plan_and_source(clean_store, tmp_path):
    root, _, _ = clean_store
    records, _ = read_store(root)
    plan = plan_injection(records, 0.5, 0.5, seed=4)
    dst = str(tmp_path / "inj")
    apply_injection(root, plan, dst)
    assert load_plan(dst) == plan
    assert StoreManifest.load(dst).source == "inject"
    assert StoreManifest.load(root).source == "harmonize"
    with open(os.path.join(root, "metadata.csv"), "rb") as a, open(os.path.join(dst, "metadata.csv"), "rb") as b:
        assert a.read() == b.read()
    assert not os.path.exists(os.path.join(root, PLAN_FILE))


def test_plan_for_store_reads_the_store(clean_store):
    root, _, _ = clean_store
    records, _ = read_store(root)
    assert plan_for_store(root, 0.5, 0.5, seed=4) == plan_injection(records, 0.5, 0.5, seed=4)
    with pytest.raises(StoreError):
        plan_for_store(os.path.join(root, "missing"), 0.5, 0.5, seed=4)


def test_load_plan_needs_file(clean_store):
    with pytest.raises(StoreError):
        load_plan(clean_store[0])


def test_double_inversion_is_identity(clean_store, tmp_path):
    root, _, _ = clean_store
    records, _ = read_store(root)
    plan = plan_injection(records, 1.0, 0.0, seed=0, scopes=InjectionScopes("image", "image"))
    once, twice = str(tmp_path / "once"), str(tmp_path / "twice")
    apply_injection(root, plan, once)
    apply_injection(once, plan, twice, workers=2)
    assert not same_images(root, once, records)
    assert same_images(root, twice, records)


def test_every_mirrored_image_fails_orientation(clean_store, tmp_path):
    root, _, _ = clean_store
    records, _ = read_store(root)
    dst = str(tmp_path / "mirrored")
    apply_injection(root, plan_injection(records, 0.0, 1.0, seed=0), dst)
    flagged = {v.key for v in validate_store(dst, sample=None) if v.rule == "orientation"}
    assert flagged == {format_image_key(r.key) for r in records}


def test_reprocessing_restores_the_clean_store(clean_store, tmp_path, make_config):
    root, _, _ = clean_store
    records, _ = read_store(root)
    plan = plan_injection(records, 0.5, 0.5, seed=3)
    dst, restored = str(tmp_path / "inj"), str(tmp_path / "restored")
    apply_injection(root, plan, dst)

    result = reprocess_store(make_config(), dst, restored)
    assert result.manifest.source == "reprocess"
    assert same_images(root, restored, records)
    assert sum(q.laterality_flipped for q in result.qc) == len(plan.laterality) == 6
    assert sum(q.intensity_inverted for q in result.qc) == sum(plan.inverts(r) for r in records) == 4
    assert validate_store(restored, sample=None) == []
