import io
import warnings

import numpy as np
import pytest

from ahclab.domain import TaskScore, WorkerRecord
from ahclab.errors import DomainError
from ahclab.indices import (CellIndicators, D_PROXY_WEIGHTS, IndexConfig, IndexVariant,
                            attach_indices, compute_d_proxy, compute_index,
                            read_cell_indicators_csv, read_cells_csv, read_indices_csv,
                            standardize, write_cell_indicators_csv, write_cells_csv,
                            write_indices_csv)
from oracles import weighted_mean_oracle, weighted_median_oracle


def T(occ, a, s, imp=1.0, tid=None):
    T.counter = getattr(T, "counter", 0) + 1
    return TaskScore(tid or f"t{T.counter}", occ, a, s, "none", imp)


def test_standardize_weighted_moments():
    # weighted mean 12.5, weighted population variance 18.75
    z = standardize([10.0, 20.0], weights=[3.0, 1.0])
    assert z[0] == pytest.approx((10 - 12.5) / np.sqrt(18.75))
    assert z[1] == pytest.approx((20 - 12.5) / np.sqrt(18.75))


def test_standardize_constant_names_variable():
    with pytest.raises(DomainError, match="ahc"):
        standardize([5.0, 5.0, 5.0], name="ahc")
    with pytest.raises(DomainError):
        standardize([1.0])


def test_importance_weighted_index_matches_oracle():
    scores = [T("O1", 60.0, 30.0, 2.0), T("O1", 40.0, 10.0, 1.0),
              T("O2", 80.0, 50.0, 1.0), T("O2", 20.0, 70.0, 3.0)]
    idx, rep = compute_index(scores, IndexConfig(standardize=False))
    by = {i.occupation_code: i for i in idx}
    assert by["O1"].ahc_raw == pytest.approx(weighted_mean_oracle([60, 40], [2, 1]))
    assert by["O1"].sub_raw == pytest.approx(weighted_mean_oracle([30, 10], [2, 1]))
    assert by["O2"].ahc_raw == pytest.approx(weighted_mean_oracle([80, 20], [1, 3]))
    assert by["O1"].n_tasks == 2
    assert rep.n_occupations == 2


def test_raw_unweighted_variant():
    scores = [T("O1", 60.0, 30.0, 5.0), T("O1", 40.0, 10.0, 1.0)]
    idx, _ = compute_index(scores, IndexConfig(variant="raw_unweighted",
                                               standardize=False))
    assert idx[0].ahc_raw == pytest.approx(50.0)
    # substitution slot stays importance-weighted regardless of variant
    assert idx[0].sub_raw == pytest.approx(weighted_mean_oracle([30, 10], [5, 1]))


def test_binary_median_variant_ties_go_high():
    scores = [T("O1", 30.0, 0.0), T("O2", 50.0, 0.0), T("O3", 70.0, 0.0)]
    idx, _ = compute_index(scores, IndexConfig(variant="binary_median",
                                               standardize=False))
    by = {i.occupation_code: i.ahc_raw for i in idx}
    assert by == {"O1": 0.0, "O2": 1.0, "O3": 1.0}  # the median itself maps to 1
    med = weighted_median_oracle([30.0, 50.0, 70.0], [1.0, 1.0, 1.0])
    assert med == 50.0


def test_substitution_displacement_variant():
    scores = [T("O1", 60.0, 33.0, 2.0), T("O1", 40.0, 11.0, 1.0),
              T("O2", 10.0, 90.0, 1.0)]
    idx, _ = compute_index(scores, IndexConfig(variant="substitution_displacement",
                                               standardize=False))
    by = {i.occupation_code: i for i in idx}
    assert by["O1"].ahc_raw == pytest.approx(by["O1"].sub_raw)
    assert by["O2"].ahc_raw == pytest.approx(90.0)


def test_zero_importance_occupation_skipped_and_reported():
    scores = [T("O1", 60.0, 30.0, 0.0), T("O1", 40.0, 10.0, 0.0),
              T("O2", 80.0, 50.0, 1.0), T("O3", 20.0, 10.0, 1.0)]
    idx, rep = compute_index(scores, IndexConfig(standardize=False))
    assert [i.occupation_code for i in idx] == ["O2", "O3"]
    assert rep.skipped == [("O1", "all-zero importance")]


def test_standardized_indices_have_zero_mean_unit_variance():
    rng = np.random.default_rng(0)
    scores = [T(f"O{i}", float(rng.uniform(10, 90)), float(rng.uniform(10, 90)),
                float(rng.uniform(0.5, 3))) for i in range(30)]
    idx, _ = compute_index(scores, IndexConfig(standardize=True))
    a = np.array([i.ahc_std for i in idx])
    s = np.array([i.sub_std for i in idx])
    assert abs(a.mean()) < 1e-12 and abs(a.std() - 1) < 1e-12
    assert abs(s.mean()) < 1e-12 and abs(s.std() - 1) < 1e-12


def test_employment_weighted_standardization():
    scores = [T("O1", 30.0, 10.0), T("O2", 50.0, 20.0), T("O3", 70.0, 30.0)]
    weights = {"O1": 10.0, "O2": 1.0, "O3": 1.0}
    idx, _ = compute_index(scores, IndexConfig(standardize=True,
                                               standardization_weights=weights))
    a = np.array([i.ahc_std for i in idx])
    w = np.array([10.0, 1.0, 1.0])
    assert abs(np.average(a, weights=w)) < 1e-12
    assert np.average(a ** 2, weights=w) == pytest.approx(1.0)


def test_d_proxy_weights_and_minmax():
    cells = [
        CellIndicators("S1", "", 0.2, 8.0, 1000.0, 0.1),
        CellIndicators("S2", "", 0.8, 14.0, 5000.0, 0.6),
        CellIndicators("S3", "", 0.5, 11.0, 3000.0, 0.35),
    ]
    out = compute_d_proxy(cells)
    assert out[0].d_raw == pytest.approx(0.0)
    assert out[1].d_raw == pytest.approx(1.0)
    # S3 sits exactly halfway on every normalized indicator
    assert out[2].d_raw == pytest.approx(0.5)
    assert D_PROXY_WEIGHTS == (0.30, 0.25, 0.20, 0.25)


def test_d_proxy_hand_computed_value():
    cells = [
        CellIndicators("S1", "", 0.0, 0.0, 0.0, 0.0),
        CellIndicators("S2", "", 1.0, 10.0, 100.0, 1.0),
        CellIndicators("S3", "", 0.5, 10.0, 25.0, 0.8),
    ]
    out = compute_d_proxy(cells)
    expect = 0.30 * 0.5 + 0.25 * 1.0 + 0.20 * 0.25 + 0.25 * 0.8
    assert out[2].d_raw == pytest.approx(expect)


def test_d_proxy_constant_indicator_warns_not_raises():
    cells = [
        CellIndicators("S1", "", 0.5, 8.0, 1000.0, 0.1),
        CellIndicators("S2", "", 0.5, 14.0, 5000.0, 0.6),
    ]
    with pytest.warns(UserWarning, match="formality_rate"):
        out = compute_d_proxy(cells)
    assert out[0].d_raw == pytest.approx(0.0)
    assert out[1].d_raw == pytest.approx(0.25 + 0.20 + 0.25)


def test_d_proxy_bad_weights_rejected():
    cells = [CellIndicators("S1", "", 0.2, 8.0, 1000.0, 0.1),
             CellIndicators("S2", "", 0.8, 14.0, 5000.0, 0.6)]
    with pytest.raises(DomainError):
        compute_d_proxy(cells, weights=(0.5, 0.5, 0.5, 0.5))
    with pytest.raises(DomainError):
        compute_d_proxy(cells[:1])


def _worker(i, occ, sec):
    return WorkerRecord(f"w{i}", 10.0, 11.0, 30, 13.0, False, True, True,
                        occ, sec, 1.0)


def test_attach_indices_left_total_with_nans():
    scores = [T("O1", 30.0, 10.0), T("O2", 70.0, 30.0)]
    idx, _ = compute_index(scores)
    cells = compute_d_proxy([CellIndicators("S1", "", 0.2, 8.0, 1000.0, 0.1),
                             CellIndicators("S2", "", 0.8, 14.0, 5000.0, 0.6)])
    workers = [_worker(0, "O1", "S1"), _worker(1, "O2", "S2"),
               _worker(2, "O9", "S1"), _worker(3, "O1", "S9")]
    df, rep = attach_indices(workers, idx, cells)
    assert len(df) == 4
    assert rep.matched_index == 3 and rep.unmatched_index == 1
    assert rep.matched_cell == 3 and rep.unmatched_cell == 1
    assert np.isnan(df.loc[2, "ahc_std"])
    assert np.isnan(df.loc[3, "d_std"])
    # d_log is log(d_raw) where positive, NaN at the min-max floor of zero
    assert np.isnan(df.loc[0, "d_log"])
    assert df.loc[1, "d_log"] == pytest.approx(np.log(df.loc[1, "d_raw"]))


def test_attach_indices_occgroup_join():
    scores = [T("O11", 30.0, 10.0), T("O21", 70.0, 30.0)]
    idx, _ = compute_index(scores)
    cells = compute_d_proxy([CellIndicators("S1", "O", 0.2, 8.0, 1000.0, 0.1),
                             CellIndicators("S1", "X", 0.8, 14.0, 5000.0, 0.6)])
    workers = [_worker(0, "O11", "S1")]
    df, rep = attach_indices(workers, idx, cells, occgroup_digits=1)
    assert rep.matched_cell == 1
    assert df.loc[0, "occgroup_code"] == "O"


def test_csv_roundtrips(tmp_path):
    scores = [T("O1", 30.0, 10.0), T("O2", 70.0, 30.0)]
    idx, _ = compute_index(scores)
    buf = io.StringIO()
    write_indices_csv(idx, buf)
    buf.seek(0)
    assert read_indices_csv(buf) == idx

    raw = [CellIndicators("S1", "", 0.2, 8.0, 1000.0, 0.1),
           CellIndicators("S2", "", 0.8, 14.0, 5000.0, 0.6)]
    buf = io.StringIO()
    write_cell_indicators_csv(raw, buf)
    buf.seek(0)
    assert read_cell_indicators_csv(buf) == raw

    cells = compute_d_proxy(raw)
    buf = io.StringIO()
    write_cells_csv(cells, buf)
    buf.seek(0)
    assert read_cells_csv(buf) == cells
