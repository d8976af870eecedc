import pytest

from mammounify.model import Dataset, Diagnosis, FindingSet, Laterality, Split, View, validate_record
from mammounify.selection import (
    Outcome,
    Reason,
    SelectionDecision,
    apply_exclusions,
    assemble_exams,
    reason_counts,
    select,
)

from tests.helpers import make_record


def draft(pid="CBIS_000000000001", lat=Laterality.L, view=View.CC, dataset=Dataset.CBIS, **kw):
    return make_record(dataset, pid, lat, view, processed=False, **kw)


def pair(pid, dataset=Dataset.CBIS, cc=None, mlo=None, **kw):
    return [draft(pid, view=View.CC, dataset=dataset, **{**kw, **(cc or {})}),
            draft(pid, view=View.MLO, dataset=dataset, **{**kw, **(mlo or {})})]


def test_two_views_make_one_exam():
    exams = assemble_exams(pair("p1"))
    assert len(exams) == 1
    assert exams[0].views == (View.CC, View.MLO)
    assert not exams[0].duplicate_conflict


def test_agreeing_duplicates_merge():
    mass = draft(findings=FindingSet(mass=True, mass_shape="OVAL"), raw_folder="Mass-Training_x")
    calc = draft(findings=FindingSet(calcification=True, calc_morphology="PUNCTATE"), raw_folder="Calc-Training_x")
    (exam,) = assemble_exams([mass, calc])
    (merged,) = exam.records
    assert merged.findings.mass and merged.findings.calcification
    assert merged.raw_folder == "Calc-Training_x;Mass-Training_x"
    assert not exam.duplicate_conflict


def test_conflicting_duplicates_flagged():
    drafts = pair("p1", diagnosis=Diagnosis.BENIGN) + [draft("p1", diagnosis=Diagnosis.MALIGNANT)]
    (exam,) = assemble_exams(drafts)
    assert exam.duplicate_conflict
    assert apply_exclusions(exam, Dataset.CBIS).reasons == (Reason.DUPLICATE_CONFLICT,)


def test_cbis_six_exam_fixture():
    drafts = (
        pair("p1_keep")
        + [draft("p2_missing", view=View.CC)]
        + pair("p3_dx", cc={"diagnosis": Diagnosis.BENIGN}, mlo={"diagnosis": Diagnosis.MALIGNANT})
        + pair("p4_birads", cc={"birads": 3}, mlo={"birads": 4})
        + pair("p5_zero", birads=0)
        + pair("p6_dup")
        + [draft("p6_dup", view=View.CC, age=70)]
    )
    kept, decisions = select(drafts, Dataset.CBIS)
    by_key = {d.exam_key[0]: d for d in decisions}
    assert [e.patient_id for e in kept] == ["p1_keep"]
    assert len(decisions) == 6
    assert by_key["p1_keep"].outcome is Outcome.KEEP
    assert by_key["p2_missing"].reasons == (Reason.MISSING_VIEW,)
    assert by_key["p3_dx"].reasons == (Reason.INCONSISTENT_DIAGNOSIS,)
    assert by_key["p4_birads"].reasons == (Reason.INCONSISTENT_BIRADS,)
    assert by_key["p5_zero"].reasons == (Reason.BIRADS_ZERO,)
    assert by_key["p6_dup"].reasons == (Reason.DUPLICATE_CONFLICT,)


def test_all_reasons_are_recorded():
    drafts = [draft("p", view=View.CC, birads=0)]
    _, (decision,) = select(drafts, Dataset.CBIS)
    assert decision.reasons == (Reason.MISSING_VIEW, Reason.BIRADS_ZERO)


def test_kept_records_are_harmonized():
    kept, _ = select(pair("p1") + pair("p2", lat=Laterality.R), Dataset.CBIS)
    records = [r for e in kept for r in e.records]
    assert len(records) == 4
    assert all(validate_record(r) == [] for r in records)
    assert records[0].processed_path == "p1/L_CC.png"


def test_cbis_test_subset_becomes_unsplit():
    kept, _ = select(pair("p1", raw_folder="Mass-Test_P_1_LEFT_CC"), Dataset.CBIS)
    assert {r.split for r in kept[0].records} == {Split.UNSPLIT}


def test_vindr_keeps_birads_zero_and_single_views():
    drafts = [draft("v1", dataset=Dataset.VINDR, birads=0)]
    kept, decisions = select(drafts, Dataset.VINDR)
    assert decisions[0].outcome is Outcome.KEEP
    assert kept[0].records[0].birads == 0


def test_vindr_split_passes_through():
    kept, _ = select(pair("v1", dataset=Dataset.VINDR, split=Split.TEST), Dataset.VINDR)
    assert {r.split for r in kept[0].records} == {Split.TEST}


def test_vindr_mixed_split_excluded():
    drafts = pair("v1", dataset=Dataset.VINDR, cc={"split": Split.TRAIN}, mlo={"split": Split.TEST})
    kept, decisions = select(drafts, Dataset.VINDR)
    assert kept == []
    assert decisions[0].reasons == (Reason.DUPLICATE_CONFLICT,)


def test_tompei_all_valid_kept():
    drafts = []
    for i in range(3):
        drafts += pair(f"t{i}", dataset=Dataset.TOMPEI, birads=i)
    kept, decisions = select(drafts, Dataset.TOMPEI)
    assert len(kept) == 3
    assert all(d.outcome is Outcome.KEEP for d in decisions)


def test_empty_input():
    assert select([], Dataset.CBIS) == ([], [])


def test_decision_requires_reasons_iff_excluded():
    with pytest.raises(ValueError):
        SelectionDecision(("p", Laterality.L), Outcome.EXCLUDE)
    with pytest.raises(ValueError):
        SelectionDecision(("p", Laterality.L), Outcome.KEEP, (Reason.BIRADS_ZERO,))


def test_decision_row():
    d = SelectionDecision(("p", Laterality.R), Outcome.EXCLUDE, (Reason.MISSING_VIEW, Reason.BIRADS_ZERO))
    assert d.as_row() == {"exam_key": "p:R", "outcome": "exclude", "reasons": "missing_view;birads_zero"}


def test_reason_counts():
    _, decisions = select([draft("a", birads=0), draft("b")], Dataset.CBIS)
    counts = reason_counts(decisions)
    assert counts["missing_view"] == 2
    assert counts["birads_zero"] == 1
    assert counts["duplicate_conflict"] == 0


def test_selection_is_order_independent():
    drafts = pair("p1") + pair("p2") + [draft("p3", view=View.MLO)]
    assert select(drafts, Dataset.CBIS) == select(list(reversed(drafts)), Dataset.CBIS)
