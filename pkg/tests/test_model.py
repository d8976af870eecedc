import pytest
from hypothesis import given
from hypothesis import strategies as st

from mammounify.model import (
    IMAGE_SLOTS,
    Asymmetry,
    Dataset,
    DensityCategory,
    Diagnosis,
    Exam,
    FindingSet,
    Laterality,
    NormalizationParams,
    Split,
    View,
    canonical_image_path,
    format_exam_key,
    format_image_key,
    validate_record,
)

from tests.helpers import make_record


def rules(record, **kw):
    return [v.rule for v in validate_record(record, **kw)]


def test_four_canonical_slots():
    assert len(IMAGE_SLOTS) == 4
    names = {canonical_image_path("p", lat, view) for lat, view in IMAGE_SLOTS}
    assert names == {"p/L_CC.png", "p/L_MLO.png", "p/R_CC.png", "p/R_MLO.png"}


def test_density_order_is_total():
    assert [d.value for d in sorted(DensityCategory, key=lambda d: d.value)] == ["A", "B", "C", "D"]


@pytest.mark.parametrize("enum", [Dataset, DensityCategory, Diagnosis, Laterality, View, Asymmetry, Split])
def test_enum_values_round_trip(enum):
    for member in enum:
        assert enum(member.value) is member


def test_valid_cbis_record_has_no_violations():
    assert validate_record(make_record()) == []


def test_descriptor_without_flag():
    r = make_record(findings=FindingSet(mass=False, mass_shape="IRREGULAR"))
    assert rules(r) == ["descriptor-without-flag"]


def test_calc_descriptor_needs_calc_flag():
    r = make_record(findings=FindingSet(calc_distribution="CLUSTERED"))
    assert rules(r) == ["descriptor-without-flag"]


def test_vindr_requires_split():
    r = make_record(Dataset.VINDR, "VINDR_00000000000a", split=Split.UNSPLIT)
    assert "vindr-requires-split" in rules(r)


def test_vindr_diagnosis_must_be_unknown():
    r = make_record(Dataset.VINDR, "VINDR_00000000000a", diagnosis=Diagnosis.MALIGNANT)
    assert rules(r) == ["vindr-diagnosis-unknown"]


def test_unknown_diagnosis_only_for_vindr():
    assert rules(make_record(diagnosis=Diagnosis.UNKNOWN)) == ["unknown-diagnosis-requires-vindr"]


def test_cbis_split_must_be_unsplit():
    assert rules(make_record(split=Split.TEST)) == ["split-must-be-unsplit"]


def test_birads_zero_is_a_draft_value_for_cbis():
    r = make_record(birads=0)
    assert rules(r) == ["birads-not-harmonized"]
    assert rules(r, draft=True) == []


@pytest.mark.parametrize("dataset", [Dataset.TOMPEI, Dataset.VINDR])
def test_birads_zero_survives_outside_cbis(dataset):
    r = make_record(dataset, f"{dataset.value}_00000000000a", birads=0)
    assert rules(r) == []


def test_birads_six_never_harmonized():
    assert rules(make_record(Dataset.TOMPEI, "TOMPEI_00000000000a", birads=6)) == ["birads-not-harmonized"]


def test_birads_out_of_range():
    assert rules(make_record(birads=7), draft=True) == ["birads-range"]


def test_age_range():
    assert rules(make_record(age=121)) == ["age-range"]
    assert rules(make_record(age=None)) == []


def test_processed_path_naming():
    r = make_record(processed=False)
    assert rules(r) == ["laterality-view-naming"]
    assert rules(r, draft=True) == []


def test_other_finding_may_not_hold_separator():
    r = make_record(findings=FindingSet(other_findings=("skin;thickening",)))
    assert rules(r) == ["other-finding-separator"]


def test_empty_patient_id():
    assert "patient-id-empty" in rules(make_record(patient_id="  ", processed=False), draft=True)


def test_violation_names_field_and_rule():
    v = validate_record(make_record(age=200))[0]
    assert (v.field, v.rule) == ("age", "age-range")
    assert str(v).startswith("age: age-range")


def test_finding_merge():
    a = FindingSet(mass=True, mass_shape="OVAL", asymmetry=Asymmetry.FOCAL, other_findings=("x",))
    b = FindingSet(calcification=True, mass_shape="IRREGULAR", asymmetry=Asymmetry.GLOBAL, other_findings=("x", "y"))
    m = a.merge(b)
    assert m.mass and m.calcification
    assert m.mass_shape == "IRREGULAR;OVAL"
    assert m.asymmetry is Asymmetry.GLOBAL
    assert m.other_findings == ("x", "y")
    assert m.abnormalities() == ["mass", "calcification", "asymmetry"]


@given(st.sampled_from(list(Laterality)))
def test_opposite_is_an_involution(lat):
    assert lat.opposite is not lat
    assert lat.opposite.opposite is lat


def test_exam_agreement():
    cc = make_record(view=View.CC, birads=4)
    mlo = make_record(view=View.MLO, birads=5)
    exam = Exam(Dataset.CBIS, cc.patient_id, Laterality.L, (cc, mlo))
    assert exam.views == (View.CC, View.MLO)
    assert exam.diagnosis is Diagnosis.BENIGN
    assert exam.birads is None
    assert exam.record(View.MLO) is mlo


def test_keys_format():
    r = make_record(patient_id="CBIS_0123456789ab", laterality=Laterality.R, view=View.MLO)
    assert format_image_key(r.key) == "CBIS_0123456789ab/R_MLO"
    assert format_exam_key(r.exam_key) == "CBIS_0123456789ab:R"


def test_normalization_params_order():
    with pytest.raises(ValueError):
        NormalizationParams(min_in=10, max_in=9)


def test_source_image_not_part_of_equality():
    a = make_record(source_image="/a.png")
    b = make_record(source_image="/b.png")
    assert a == b
