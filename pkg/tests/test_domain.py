import io
import math

import pytest

from ahclab.domain import (AUG_TYPES, AugType, FitResult, TaskScore, WorkerRecord,
                           derive_experience, export_workers, ingest_workers)
from ahclab.errors import DomainError, SchemaError


def test_aug_type_enumeration():
    assert len(AUG_TYPES) == 7
    assert "information_synthesis" in AUG_TYPES
    assert "pure_substitution" in AUG_TYPES
    assert AugType("none") is AugType.NONE


def test_task_score_validation():
    s = TaskScore("t1", "O1", 50.0, 30.0, "none", 2.0)
    assert s.aug_type is AugType.NONE
    with pytest.raises(DomainError):
        TaskScore("t1", "O1", 101.0, 30.0, "none")
    with pytest.raises(DomainError):
        TaskScore("t1", "O1", 50.0, -1.0, "none")
    with pytest.raises(DomainError):
        TaskScore("t1", "O1", 50.0, 30.0, "none", importance=-0.1)
    with pytest.raises(ValueError):
        TaskScore("t1", "O1", 50.0, 30.0, "not_a_type")


def test_worker_record_validation():
    with pytest.raises(DomainError):
        WorkerRecord("w", 10.0, 12.0, 17, 0.0, False, True, True, "O1", "S1", 1.0)
    with pytest.raises(DomainError):
        WorkerRecord("w", float("nan"), 12.0, 30, 12.0, False, True, True, "O1", "S1", 1.0)
    with pytest.raises(DomainError):
        WorkerRecord("w", 10.0, 12.0, 30, 12.0, False, True, True, "O1", "S1", 0.0)


def test_derive_experience():
    assert derive_experience(30, 11.0) == 13.0
    assert derive_experience(20, 16.0) == 0.0  # floored at zero
    assert derive_experience(30, None) is None
    with pytest.raises(DomainError):
        derive_experience(10, 4.0)


HEADER = ("worker_id,income,age,education_years,female,urban,formal,"
          "occupation_code,sector_code,sampling_weight")


def _csv(*rows):
    return io.StringIO("\n".join([HEADER, *rows]) + "\n")


def test_ingest_basic_row():
    recs, rep = ingest_workers(_csv("w1,1682943,30,11,0,1,1,O1,S1,1.5"))
    assert rep.rows_read == 1 and rep.rows_kept == 1
    r = recs[0]
    assert r.log_income == pytest.approx(math.log(1682943), abs=1e-12)
    assert r.experience == 13.0
    assert r.female is False and r.urban is True and r.formal is True
    assert rep.income_summary["mean"] == pytest.approx(1682943.0)


def test_ingest_sample_restrictions():
    recs, rep = ingest_workers(_csv(
        "w1,1000,30,11,0,1,1,O1,S1,1.0",
        "w2,1000,17,11,0,1,1,O1,S1,1.0",   # too young
        "w3,1000,66,11,0,1,1,O1,S1,1.0",   # too old
        "w4,0,30,11,0,1,1,O1,S1,1.0",      # nonpositive income
        "w5,-5,30,11,0,1,1,O1,S1,1.0",
    ))
    assert rep.rows_read == 5
    assert rep.rows_kept == 1
    assert rep.dropped_age == 2
    assert rep.dropped_income == 2
    assert [r.worker_id for r in recs] == ["w1"]


def test_ingest_missing_education_kept_as_none():
    recs, _ = ingest_workers(_csv("w1,1000,30,,0,1,1,O1,S1,1.0"))
    assert recs[0].education_years is None
    assert recs[0].experience is None


def test_ingest_row_level_errors_collected():
    recs, rep = ingest_workers(_csv(
        "w1,notanumber,30,11,0,1,1,O1,S1,1.0",
        "w2,1000,30.5,11,0,1,1,O1,S1,1.0",    # fractional age
        "w3,1000,30,11,maybe,1,1,O1,S1,1.0",  # bad boolean
        "w4,1000,30,11,0,1,1,O1,S1,1.0",
    ))
    assert rep.rows_kept == 1
    assert len(rep.parse_errors) == 3
    assert rep.parse_errors[0][0] == 2  # 1-based line numbers, after header


def test_ingest_missing_mandatory_column_is_fatal():
    bad = io.StringIO("worker_id,age\nw1,30\n")
    with pytest.raises(SchemaError):
        ingest_workers(bad)


def test_ingest_schema_remapping():
    src = io.StringIO("id,salary,edad,yrs,f,u,fm,occ,sec,wt\n"
                      "w1,1000,30,11,1,0,1,O1,S1,2.0\n")
    recs, _ = ingest_workers(src, schema_config={
        "worker_id": "id", "income": "salary", "age": "edad",
        "education_years": "yrs", "female": "f", "urban": "u", "formal": "fm",
        "occupation_code": "occ", "sector_code": "sec", "sampling_weight": "wt"})
    assert recs[0].worker_id == "w1" and recs[0].female is True


def test_export_roundtrip():
    recs, _ = ingest_workers(_csv(
        "w1,1682943,30,11,0,1,1,O1,S1,1.5",
        "w2,2500.75,45,,1,0,0,O2,S2,0.8",
    ))
    buf = io.StringIO()
    export_workers(recs, buf)
    buf.seek(0)
    again, rep = ingest_workers(buf)
    assert rep.rows_kept == 2 and not rep.parse_errors
    for a, b in zip(recs, again):
        assert b.log_income == pytest.approx(a.log_income, abs=1e-12)
        assert (a.worker_id, a.age, a.education_years, a.experience, a.female,
                a.urban, a.formal, a.occupation_code, a.sector_code,
                a.sampling_weight) == \
               (b.worker_id, b.age, b.education_years, b.experience, b.female,
                b.urban, b.formal, b.occupation_code, b.sector_code,
                b.sampling_weight)


def test_fit_result_accessors_and_checks():
    fit = FitResult("m", ["const", "x"], [1.0, 2.0], [0.1, 0.2], [0.0, 0.5],
                    r_squared=0.9, n_obs=10)
    assert fit.coef("x") == 2.0
    assert fit.se("const") == 0.1
    assert fit.pvalue("x") == 0.5
    d = fit.to_dict()
    assert d["terms"] == ["const", "x"] and d["n_obs"] == 10
    with pytest.raises(DomainError):
        FitResult("m", ["a"], [1.0, 2.0], [0.1], [0.5], 0.5, 5)
    with pytest.raises(DomainError):
        FitResult("m", ["a"], [1.0], [-0.1], [0.5], 0.5, 5)
    with pytest.raises(DomainError):
        FitResult("m", ["a"], [1.0], [0.1], [1.5], 0.5, 5)
