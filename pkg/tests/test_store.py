import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mammounify.errors import MissingImagesError, SchemaVersionError, StoreError
from mammounify.image_io import ImageBuffer, read_image, write_image
from mammounify.model import (
    Asymmetry,
    Dataset,
    DensityCategory,
    Diagnosis,
    Exam,
    FindingSet,
    Laterality,
    Split,
    UnifiedRecord,
    View,
    format_image_key,
)
from mammounify.pipeline import invert_intensity, mirror_horizontal
from mammounify.selection import Outcome, Reason, SelectionDecision
from mammounify.store import (
    MANIFEST,
    METADATA,
    METADATA_COLUMNS,
    SENTINEL,
    SkippedImage,
    StoreManifest,
    StoreWriter,
    exams_from_records,
    parse_meta_txt,
    read_qc,
    read_selection,
    read_skipped,
    read_store,
    record_to_row,
    render_meta_txt,
    row_to_record,
    sample_keys,
    validate_store,
    write_store,
)
from mammounify.synthetic import write_png
from mammounify.vocabulary import encode_patient_id

from tests.helpers import build_store, make_record


def rules(violations):
    return sorted({v.rule for v in violations})


def png(root, record):
    return os.path.join(root, *record.processed_path.split("/"))


def test_one_patient_layout(tmp_path):
    root = str(tmp_path / "s")
    manifest, exams = build_store(root, patients=1)
    pid = exams[0].patient_id
    assert sorted(os.listdir(os.path.join(root, pid))) == ["L_CC.png", "L_MLO.png", "R_CC.png", "R_MLO.png", "meta.txt"]
    assert (manifest.patients, manifest.images) == (1, 4)
    assert not os.path.exists(os.path.join(root, SENTINEL))


def test_empty_store(tmp_path):
    root = str(tmp_path / "e")
    manifest = write_store([], [], root, {}, dataset=Dataset.TOMPEI)
    assert (manifest.patients, manifest.images) == (0, 0)
    with open(os.path.join(root, METADATA), encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert len(lines) == 1
    assert lines[0].split(",")[0] == '"patient_id"'
    records, loaded = read_store(root)
    assert records == [] and loaded.dataset is Dataset.TOMPEI


def test_rewrite_is_byte_identical(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    build_store(a, patients=2)
    build_store(b, patients=2)
    for name in (METADATA, MANIFEST, "qc_report.csv", "selection.csv"):
        with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
            assert fa.read() == fb.read(), name


def test_read_store_round_trip(clean_store):
    root, manifest, exams = clean_store
    records, loaded = read_store(root)
    ordered = sorted(exams, key=lambda e: (e.patient_id, e.laterality.value))
    assert records == [r for e in ordered for r in e.records]
    assert loaded.patients == manifest.patients == 3
    assert loaded.config_fingerprint == manifest.config_fingerprint
    assert exams_from_records(records) == ordered


words = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ_", min_size=1, max_size=8)
maybe_words = st.none() | words

findings = st.builds(
    FindingSet,
    mass=st.booleans(),
    mass_shape=maybe_words,
    mass_margin=maybe_words,
    mass_density=maybe_words,
    calcification=st.booleans(),
    calc_morphology=maybe_words,
    calc_distribution=maybe_words,
    asymmetry=st.none() | st.sampled_from(Asymmetry),
    architectural_distortion=st.booleans(),
    other_findings=st.lists(words, max_size=3).map(tuple),
)


@st.composite
def exam_sets(draw):
    dataset = draw(st.sampled_from(Dataset))
    exams = []
    for i in range(draw(st.integers(min_value=1, max_value=4))):
        pid = encode_patient_id(dataset, f"P{i:03d}")
        for lat in Laterality:
            views = draw(st.sets(st.sampled_from(View)))
            records = tuple(
                UnifiedRecord(
                    dataset=dataset,
                    patient_id=pid,
                    laterality=lat,
                    view=view,
                    diagnosis=draw(st.sampled_from(Diagnosis)),
                    image_id=draw(maybe_words),
                    age=draw(st.none() | st.integers(min_value=18, max_value=99)),
                    density=draw(st.none() | st.sampled_from(DensityCategory)),
                    birads=draw(st.none() | st.integers(min_value=0, max_value=6)),
                    findings=draw(findings),
                    split=draw(st.sampled_from(Split)),
                    raw_folder=draw(words),
                ).with_processed_path()
                for view in View
                if view in views
            )
            if records:
                exams.append(Exam(dataset, pid, lat, records))
    return dataset, exams


@settings(max_examples=25, deadline=None)
@given(exam_sets())
def test_random_store_round_trip(tmp_path_factory, drawn):
    dataset, exams = drawn
    root = str(tmp_path_factory.mktemp("rt") / "store")
    tile = ImageBuffer.from_array(np.arange(12, dtype=np.uint16).reshape(3, 4), 16)
    records = [r for e in exams for r in e.records]
    manifest = write_store(exams, [], root, {r.key: tile for r in records}, dataset=dataset)
    loaded, loaded_manifest = read_store(root)
    assert loaded == sorted(records, key=lambda r: (r.patient_id, r.laterality.value, r.view.value))
    assert loaded_manifest.dataset is dataset
    assert (loaded_manifest.patients, loaded_manifest.images) == (manifest.patients, len(records))


def test_qc_and_selection_round_trip(clean_store):
    root, _, exams = clean_store
    qc = read_qc(root)
    assert len(qc) == 12
    assert all(q.normalization.target_bits == 16 for q in qc)
    decisions = read_selection(root)
    assert [d.exam_key for d in decisions] == sorted((e.key for e in exams), key=lambda k: (k[0], k[1].value))
    assert all(d.outcome is Outcome.KEEP for d in decisions)
    assert read_skipped(root) == []


def test_record_row_round_trip():
    r = make_record(image_id="img7", age=None, density=None)
    row = record_to_row(r)
    assert tuple(row) == METADATA_COLUMNS
    assert row["age"] == "" and row["mass"] == "1"
    assert row_to_record(row, Dataset.CBIS) == r


def test_missing_png_named(clean_store):
    root, _, exams = clean_store
    victim = exams[1].records[0]
    os.remove(png(root, victim))
    with pytest.raises(MissingImagesError) as e:
        read_store(root)
    assert e.value.paths == [victim.processed_path]


def test_schema_version_mismatch(clean_store):
    root = clean_store[0]
    path = os.path.join(root, MANIFEST)
    with open(path, encoding="utf-8") as f:
        body = json.load(f)
    body["schema_version"] = "0.9.0"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(body, f)
    with pytest.raises(SchemaVersionError) as e:
        read_store(root)
    assert e.value.found == "0.9.0"


def test_incomplete_store_refused(clean_store):
    root = clean_store[0]
    open(os.path.join(root, SENTINEL), "w").close()
    with pytest.raises(StoreError, match="incomplete"):
        read_store(root)
    assert "incomplete-store" in rules(validate_store(root, sample=0))


def test_manifest_contract():
    with pytest.raises(StoreError):
        StoreManifest(root="x", dataset=Dataset.CBIS, patients=2, images=1)
    with pytest.raises(StoreError):
        StoreManifest(root="x", dataset=Dataset.CBIS, patients=0, images=0, schema_version="1.0")


def test_manifest_has_no_paths(clean_store):
    root = clean_store[0]
    with open(os.path.join(root, MANIFEST), encoding="utf-8") as f:
        body = json.load(f)
    assert root not in json.dumps(body)
    assert body["source"] == "harmonize"


def test_writer_refuses_foreign_directory(tmp_path):
    root = tmp_path / "busy"
    root.mkdir()
    (root / "notes.txt").write_text("keep me")
    with pytest.raises(StoreError):
        StoreWriter(str(root), Dataset.CBIS).begin()
    assert (root / "notes.txt").exists()


def test_writer_rebuilds_existing_store(clean_store):
    root = clean_store[0]
    manifest = write_store([], [], root, {}, dataset=Dataset.CBIS)
    assert manifest.images == 0
    assert os.listdir(root) and read_store(root)[0] == []


def test_filename_collision(tmp_path):
    r = make_record()
    exams = [Exam(Dataset.CBIS, r.patient_id, r.laterality, (r, r))]
    with pytest.raises(StoreError, match="collision"):
        write_store(exams, [], str(tmp_path / "c"), {r.key: None}, dataset=Dataset.CBIS)


def test_skipped_and_decisions_written(tmp_path):
    root = str(tmp_path / "s")
    decision = SelectionDecision(("p", Laterality.L), Outcome.EXCLUDE, (Reason.MISSING_VIEW,))
    skipped = SkippedImage(("p", Laterality.R, View.CC), "/raw/x.dcm", "truncated")
    manifest = write_store([], [], root, {}, dataset=Dataset.CBIS, decisions=[decision], skipped=[skipped])
    assert (manifest.exams_excluded, manifest.images_skipped) == (1, 1)
    assert read_selection(root) == [decision]
    assert read_skipped(root) == [skipped]


def test_meta_txt():
    cc = make_record(view=View.CC, birads=4, age=61)
    mlo = make_record(view=View.MLO, birads=4, age=61)
    text = render_meta_txt(cc.patient_id, [Exam(Dataset.CBIS, cc.patient_id, Laterality.L, (cc, mlo))])
    parsed = parse_meta_txt(text)
    assert parsed[""] == {"patient_id": cc.patient_id}
    assert parsed["L"] == {"age": "61", "breast_density": "B", "diagnosis": "Benign", "birads": "4", "views": "CC;MLO"}
    assert "R" not in parsed


# -----------------------------
# validator
# -----------------------------
def test_clean_store_validates(clean_store):
    assert validate_store(clean_store[0], sample=None) == []


def test_mirrored_image_violates_orientation(clean_store):
    root, _, exams = clean_store
    victim = exams[2].records[1]
    buf, _ = read_image(png(root, victim))
    write_image(mirror_horizontal(buf), png(root, victim))
    violations = validate_store(root, sample=None)
    assert {v.key for v in violations} == {format_image_key(victim.key)}
    assert "orientation" in rules(violations)


def test_inverted_image_violates_polarity(clean_store):
    root, _, exams = clean_store
    victim = exams[0].records[0]
    buf, _ = read_image(png(root, victim))
    write_image(invert_intensity(buf), png(root, victim))
    assert rules(validate_store(root, sample=None)) == ["polarity"]


def test_8bit_image_violates_bit_depth(clean_store):
    root, _, exams = clean_store
    victim = exams[0].records[1]
    write_png(ImageBuffer(np.zeros((8, 8), dtype=np.uint8), 8), png(root, victim))
    assert rules(validate_store(root, sample=0)) == ["bit-depth"]


def test_unnormalized_image_violates_range(clean_store):
    root, _, exams = clean_store
    victim = exams[0].records[1]
    write_image(ImageBuffer(np.full((8, 8), 5, dtype=np.uint16), 16), png(root, victim))
    assert rules(validate_store(root, sample=0)) == ["dynamic-range"]


def test_layout_violations(clean_store):
    root, _, exams = clean_store
    pid = exams[0].patient_id
    os.remove(os.path.join(root, pid, "meta.txt"))
    with open(os.path.join(root, pid, "left_cc.png"), "wb") as f:
        f.write(b"x")
    assert rules(validate_store(root, sample=0)) == ["filename-convention", "missing-meta"]


def test_unreadable_store(tmp_path):
    assert rules(validate_store(str(tmp_path))) == ["unreadable-store"]


def test_manifest_count_mismatch(clean_store):
    root = clean_store[0]
    path = os.path.join(root, MANIFEST)
    with open(path, encoding="utf-8") as f:
        body = json.load(f)
    body["images"] = 99
    with open(path, "w", encoding="utf-8") as f:
        json.dump(body, f)
    assert rules(validate_store(root, sample=0)) == ["manifest-count"]


def test_sample_keys_seeded():
    keys = [f"k{i:02d}" for i in range(20)]
    assert sample_keys(keys, 5, seed=3) == sample_keys(keys, 5, seed=3)
    assert len(sample_keys(keys, 5, seed=3)) == 5
    assert sample_keys(keys, None, seed=0) == set(keys)
    assert sample_keys(keys, 0, seed=0) == set()
