import numpy as np
import pytest

from ahclab.errors import DomainError
from ahclab.validation import (external_validation_report, krippendorff_interval,
                               level_bias_adjust, pearson, reliability_report,
                               spearman)
from oracles import krippendorff_oracle, pearson_oracle


def test_pearson_frozen_fixture():
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_pearson_matches_oracle_on_random_fixtures():
    rng = np.random.default_rng(11)
    for _ in range(6):
        n = int(rng.integers(5, 60))
        x = rng.normal(size=n)
        y = 0.5 * x + rng.normal(size=n)
        assert pearson(x, y) == pytest.approx(pearson_oracle(x, y), abs=1e-12)


def test_pearson_guards():
    with pytest.raises(DomainError):
        pearson([1, 2], [1, 2])
    with pytest.raises(DomainError):
        pearson([1, 1, 1], [1, 2, 3])


def test_spearman_rank_invariance_and_ties():
    x = [1.0, 2.0, 3.0, 100.0]
    y = [10.0, 20.0, 30.0, 31.0]
    assert spearman(x, y) == pytest.approx(1.0)
    # mid-ranks: ties in x handled symmetrically
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(spearman([1, 2, 3], [1, 1, 2]))


def test_krippendorff_matches_bruteforce_oracle():
    rng = np.random.default_rng(5)
    for _ in range(8):
        n = int(rng.integers(4, 40))
        a = rng.uniform(0, 100, n)
        b = a + rng.normal(0, 10, n)
        assert krippendorff_interval(a, b) == pytest.approx(
            krippendorff_oracle(a, b), abs=1e-10)


def test_krippendorff_perfect_agreement_is_one():
    a = np.array([10.0, 20.0, 30.0, 40.0])
    assert krippendorff_interval(a, a.copy()) == pytest.approx(1.0)


def test_krippendorff_degenerate_pool_raises():
    with pytest.raises(DomainError):
        krippendorff_interval([5.0, 5.0], [5.0, 5.0])


def test_level_bias_adjust():
    a = np.array([10.0, 20.0, 30.0])
    b = a + 7.0
    bias, b_adj = level_bias_adjust(a, b)
    assert bias == pytest.approx(7.0)
    assert np.allclose(b_adj, a)


def test_reliability_report_adjusts_alpha_for_level_bias():
    rng = np.random.default_rng(3)
    a = rng.uniform(20, 80, 50)
    b = a + 15.0 + rng.normal(0, 1.0, 50)  # strong agreement modulo a level shift
    rep = reliability_report(a, b)
    assert rep.level_bias == pytest.approx(15.0, abs=1.0)
    assert rep.krippendorff_alpha > 0.9
    raw_alpha = krippendorff_interval(a, b)
    assert rep.krippendorff_alpha > raw_alpha  # adjustment removed the shift
    unadjusted = reliability_report(a, b, adjust_level_bias=False)
    assert unadjusted.krippendorff_alpha == pytest.approx(raw_alpha)


def test_external_validation_inner_join_and_flags():
    ahc = {"O1": 1.0, "O2": 2.0, "O3": 3.0, "O4": 4.0}
    external = {
        "convergent": {"O1": 1.1, "O2": 2.2, "O3": 2.9, "O4": 4.4, "O9": 0.0},
        "tiny": {"O1": 1.0, "O9": 5.0},
    }
    rows = external_validation_report(ahc, external)
    by = {r.index_name: r for r in rows}
    assert by["convergent"].n_matched == 4
    assert by["convergent"].pearson_r > 0.95
    assert by["tiny"].flag == "insufficient overlap"
    assert by["tiny"].pearson_r is None
