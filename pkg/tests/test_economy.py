import math

import numpy as np
import pytest

from ahclab.economy import (EconomyParams, firm_output, generate_population,
                            marginal_product_check, phi, recover_one_seed,
                            recovery_harness)
from ahclab.errors import DomainError

HW = {"K_HW": 10.0, "sum_hP": 20.0, "kappa": 0.8, "K_Rob": 5.0}
SW = {"sum_hC": 15.0, "sum_hA": 12.0, "D_f": 2.0}
P = EconomyParams()


def test_phi_identities():
    assert phi(0.0, 3.0, 0.5) == 1.0  # exactly, no tolerance
    assert phi(2.0, 3.0, 0.5) == pytest.approx(1.0 + 2.0 * (1.0 - math.exp(-1.0)),
                                               abs=1e-15)
    with pytest.raises(DomainError):
        phi(-0.1, 3.0, 0.5)
    with pytest.raises(DomainError):
        phi(1.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        phi(1.0, 3.0, 0.0)


def test_phi_monotone_concave_bounded():
    grid = np.linspace(0.0, 50.0, 1000)
    vals = np.array([phi(d, 3.0, 0.5) for d in grid])
    assert np.all(np.diff(vals) > 0)            # strictly increasing
    assert np.all(np.diff(vals, 2) < 1e-12)     # concave
    assert np.all(vals < 3.0) and vals[0] == 1.0


def test_marginal_product_ratio_analytic():
    mp = marginal_product_check(P, HW, SW)
    d = SW["D_f"]
    assert mp.ratio == pytest.approx(phi(d, P.phi_bar, P.lam) * d, abs=1e-12)
    assert mp.dY_dhA / mp.dY_dhC == pytest.approx(mp.ratio, abs=1e-12)
    assert mp.premise_holds


def test_marginal_products_match_finite_differences():
    h = 1e-6
    for d_f in (0.5, 2.0, 8.0):
        sw = dict(SW, D_f=d_f)
        mp = marginal_product_check(P, HW, sw)
        up = firm_output(P, HW, dict(sw, sum_hA=sw["sum_hA"] + h))
        dn = firm_output(P, HW, dict(sw, sum_hA=sw["sum_hA"] - h))
        assert mp.dY_dhA == pytest.approx((up - dn) / (2 * h), rel=1e-6)
        up = firm_output(P, HW, dict(sw, sum_hC=sw["sum_hC"] + h))
        dn = firm_output(P, HW, dict(sw, sum_hC=sw["sum_hC"] - h))
        assert mp.dY_dhC == pytest.approx((up - dn) / (2 * h), rel=1e-6)


def test_premise_fails_at_zero_digital_stock():
    mp = marginal_product_check(P, HW, dict(SW, D_f=0.0))
    assert mp.ratio == 0.0
    assert not mp.premise_holds


def test_firm_output_edge_cases():
    assert firm_output(P, dict(HW, K_HW=0.0, sum_hP=0.0, K_Rob=0.0),
                       dict(SW, sum_hC=0.0, sum_hA=0.0)) == 0.0
    # essential complements: zero hardware kills output when sigma < 1
    assert firm_output(P, dict(HW, K_HW=0.0), SW) == 0.0
    with pytest.raises(DomainError):
        firm_output(P, dict(HW, K_HW=-1.0), SW)


def test_params_validation():
    with pytest.raises(DomainError):
        EconomyParams(phi_bar=1.0).validate()
    with pytest.raises(DomainError):
        EconomyParams(sigma_f=1.5).validate()
    with pytest.raises(DomainError):
        EconomyParams(formal_share=0.0).validate()
    with pytest.raises(DomainError):
        EconomyParams(n_workers=5, n_occupations=10).validate()
    with pytest.raises(DomainError):
        EconomyParams(true_beta={"alpha": 1.0}).validate()
    EconomyParams().validate()


def test_generation_deterministic_in_seed():
    p = EconomyParams(n_workers=500, n_occupations=10, n_sectors=5, seed=9)
    d1 = generate_population(p)
    d2 = generate_population(p)
    assert d1.workers == d2.workers
    assert d1.scores == d2.scores
    assert d1.table.equals(d2.table)
    d3 = generate_population(EconomyParams(n_workers=500, n_occupations=10,
                                           n_sectors=5, seed=10))
    assert d3.workers[0].log_income != d1.workers[0].log_income


def test_generated_population_shape():
    p = EconomyParams(n_workers=2000, n_occupations=15, n_sectors=6, seed=2)
    data = generate_population(p)
    assert len(data.workers) == 2000
    assert len(data.indices) == 15
    assert len(data.cells) == 6
    assert {w.sector_code for w in data.workers} <= {c.sector_code for c in data.cells}
    assert "capital_intensity" in data.table.columns
    assert data.truth["beta2_formal"] == 0.05
    assert data.truth["triple"] == pytest.approx(0.05)
    share_formal = np.mean([w.formal for w in data.workers])
    assert share_formal == pytest.approx(0.5, abs=0.05)


def test_zero_noise_exact_recovery():
    """With no noise, the wage equation is recovered to numerical precision."""
    from ahclab.robustness import INTERACTION, m4_spec, triple_interaction
    from ahclab.econometrics import fit_model

    p = EconomyParams(n_workers=4000, n_occupations=30, n_sectors=10,
                      noise_sd=0.0, seed=1)
    data = generate_population(p)
    fit = triple_interaction(data.table)
    tb = p.true_beta
    assert fit.coef("ahc_std") == pytest.approx(tb["beta1"], abs=1e-8)
    assert fit.coef("ahc_std:d_std") == pytest.approx(tb["beta2_informal"], abs=1e-8)
    assert fit.extras["triple_coefficient"] == pytest.approx(
        tb["beta2_formal"] - tb["beta2_informal"], abs=1e-8)
    assert fit.coef("sub_std:d_std") == pytest.approx(tb["beta3"], abs=1e-8)
    assert fit.coef("education_years") == pytest.approx(tb["educ"], abs=1e-8)
    formal_only = m4_spec(sample_filter="formal > 0.5")
    f = fit_model(data.table, formal_only)
    assert f.coef(INTERACTION) == pytest.approx(tb["beta2_formal"], abs=1e-8)


def test_missing_education_propagates():
    p = EconomyParams(n_workers=1000, n_occupations=10, n_sectors=5,
                      missing_education_rate=0.2, seed=4)
    data = generate_population(p)
    n_missing = sum(1 for w in data.workers if w.education_years is None)
    assert 100 < n_missing < 300
    assert all(w.experience is None for w in data.workers
               if w.education_years is None)


def test_heteroskedastic_mode_inflates_hc1_over_classical():
    from ahclab.econometrics import fit_model
    from ahclab.robustness import INTERACTION, m4_spec

    p = EconomyParams(n_workers=6000, n_occupations=30, n_sectors=10,
                      heteroskedastic=True, seed=6)
    data = generate_population(p)
    hc1 = fit_model(data.table, m4_spec(covariance="HC1"))
    cla = fit_model(data.table, m4_spec(covariance="classical"))
    assert hc1.coef(INTERACTION) == pytest.approx(cla.coef(INTERACTION), abs=1e-10)
    assert hc1.se(INTERACTION) != cla.se(INTERACTION)


def test_recover_one_seed_row():
    p = EconomyParams(n_workers=5000, n_occupations=30, n_sectors=10, seed=0)
    row = recover_one_seed(p, seed=42)
    assert row["seed"] == 42
    assert row["beta2_formal"] == pytest.approx(0.05, abs=0.03)
    assert isinstance(row["covers_formal"], bool)
    assert isinstance(row["sign_pattern"], bool)


def test_recovery_harness_summary_and_guards():
    p = EconomyParams(n_workers=3000, n_occupations=25, n_sectors=10, seed=100)
    with pytest.raises(DomainError):
        recovery_harness(p, n_seeds=5)
    rep = recovery_harness(p, n_seeds=10, jobs=2)
    assert rep.summary["n_seeds"] == 10
    assert abs(rep.summary["bias_formal"]) < 0.02
    assert 0.0 <= rep.summary["coverage_formal"] <= 1.0
    assert [r["seed"] for r in rep.rows] == list(range(100, 110))
    # parallel and serial harnesses agree row for row
    rep_serial = recovery_harness(p, n_seeds=10, jobs=1)
    assert rep.rows == rep_serial.rows
