"""Synthetic dual-economy generator: structural production function with an
amplification multiplier on augmentable human capital, and a worker-level
wage-data generator with known coefficients used for end-to-end parameter
recovery."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .domain import AUG_TYPES, TaskScore, WorkerRecord
from .errors import DomainError
from .indices import (CellIndicators, IndexConfig, attach_indices, compute_d_proxy,
                      compute_index)


def default_true_beta() -> dict:
    return {
        "alpha": 12.0,
        "beta1": 0.09,
        "beta2_formal": 0.05,
        "beta2_informal": 0.0,
        "beta3": -0.03,
        "educ": 0.08,
        "exper": 0.03,
        "exper2": -0.0004,
        "female": -0.15,
        "urban": 0.05,
        "formal": 0.35,
    }


@dataclass(frozen=True)
class EconomyParams:
    phi_bar: float = 3.0
    lam: float = 0.5
    sigma_f: float = 0.5
    ces_weight: float = 0.5          # hardware share in the outer CES
    hw_capital_share: float = 0.33   # capital share inside the hardware composite
    n_workers: int = 50_000
    n_occupations: int = 60
    n_sectors: int = 20
    formal_share: float = 0.5
    true_beta: dict = field(default_factory=default_true_beta)
    noise_sd: float = 0.4
    heteroskedastic: bool = False    # noise SD rising in adoption, to exercise HC1
    d_transform: str = "std"         # {std, log}
    informal_d_mode: str = "uniform"  # {uniform, zero}; used only under d_transform=log
    missing_education_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.phi_bar <= 1:
            raise DomainError("phi_bar must be > 1")
        if self.lam <= 0:
            raise DomainError("lambda must be > 0")
        if not 0 < self.sigma_f < 1:
            raise DomainError("sigma_f must lie in (0, 1)")
        if not 0 < self.formal_share < 1:
            raise DomainError("formal_share must lie in (0, 1)")
        if self.noise_sd < 0:
            raise DomainError("noise_sd must be >= 0")
        if self.n_occupations > self.n_workers:
            raise DomainError("n_occupations > n_workers is infeasible")
        if self.n_sectors < 1 or self.n_occupations < 2:
            raise DomainError("need >= 1 sector and >= 2 occupations")
        if self.d_transform not in ("std", "log"):
            raise DomainError(f"unknown d_transform {self.d_transform!r}")
        missing = set(default_true_beta()) - set(self.true_beta)
        if missing:
            raise DomainError(f"true_beta missing keys: {sorted(missing)}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["true_beta"] = dict(self.true_beta)
        return d


def phi(D: float, phi_bar: float, lam: float) -> float:
    """Amplification multiplier: 1 + (phi_bar - 1)(1 - exp(-lam * D)).

    Strictly increasing and concave, phi(0) = 1, bounded above by phi_bar.
    """
    if D < 0:
        raise DomainError(f"digital labor stock must be >= 0, got {D}")
    if phi_bar <= 1 or lam <= 0:
        raise DomainError("phi requires phi_bar > 1 and lam > 0")
    return 1.0 + (phi_bar - 1.0) * (1.0 - math.exp(-lam * D))


def _aggregates(params: EconomyParams, hardware_inputs: dict, software_inputs: dict):
    k_hw = hardware_inputs["K_HW"]
    labor = hardware_inputs["sum_hP"] + hardware_inputs["kappa"] * hardware_inputs["K_Rob"]
    if min(k_hw, labor, software_inputs["sum_hC"], software_inputs["sum_hA"],
           software_inputs["D_f"]) < 0:
        raise DomainError("all production inputs must be >= 0")
    a = params.hw_capital_share
    hardware = k_hw ** a * labor ** (1.0 - a)
    d_f = software_inputs["D_f"]
    software = software_inputs["sum_hC"] + phi(d_f, params.phi_bar, params.lam) \
        * software_inputs["sum_hA"] * d_f
    return hardware, software


def _ces(hw: float, sw: float, omega: float, sigma: float) -> float:
    if hw == 0.0 and sw == 0.0:
        return 0.0
    if abs(sigma - 1.0) < 1e-9:
        return hw ** omega * sw ** (1.0 - omega)
    rho = (sigma - 1.0) / sigma
    if rho < 0 and (hw == 0.0 or sw == 0.0):
        return 0.0  # essential complements: limit as either aggregate -> 0
    return (omega * hw ** rho + (1.0 - omega) * sw ** rho) ** (1.0 / rho)


def firm_output(params: EconomyParams, hardware_inputs: dict, software_inputs: dict) -> float:
    """CES output over a hardware composite (physical capital Cobb-Douglas
    with physical-labor-plus-robots) and a software aggregate (routine
    cognitive labor plus amplified augmentable labor)."""
    hw, sw = _aggregates(params, hardware_inputs, software_inputs)
    return _ces(hw, sw, params.ces_weight, params.sigma_f)


@dataclass
class MarginalProducts:
    dY_dhA: float
    dY_dhC: float
    ratio: float
    premise_holds: bool  # False when D_f = 0 and the amplification premise fails


def marginal_product_check(params: EconomyParams, hardware_inputs: dict,
                           software_inputs: dict) -> MarginalProducts:
    """Analytic marginal products of augmentable vs routine cognitive labor.

    Both derivatives share the software-aggregate factor, so their ratio is
    exactly phi(D_f) * D_f.
    """
    d_f = software_inputs["D_f"]
    hw, sw = _aggregates(params, hardware_inputs, software_inputs)
    omega, sigma = params.ces_weight, params.sigma_f
    rho = (sigma - 1.0) / sigma
    y = _ces(hw, sw, omega, sigma)
    if sw == 0.0 or y == 0.0:
        raise DomainError("marginal products undefined at zero software aggregate")
    f_s = (1.0 - omega) * sw ** (rho - 1.0) * y ** (1.0 - rho)
    amp = phi(d_f, params.phi_bar, params.lam) * d_f
    return MarginalProducts(dY_dhA=f_s * amp, dY_dhC=f_s, ratio=amp,
                            premise_holds=d_f > 0)


@dataclass
class SyntheticData:
    params: EconomyParams
    scores: list              # task-level TaskScore rows
    cell_indicators: list     # CellIndicators
    cells: list               # AdoptionCell with d_raw/d_std
    indices: list             # OccupationIndex
    workers: list             # WorkerRecord
    table: pd.DataFrame       # full analysis table, joined
    truth: dict


def generate_population(params: EconomyParams) -> SyntheticData:
    """Draw occupations, sectors, and workers; build indices and the adoption
    proxy through the same pipeline the real-data path uses; set log wages
    from the structural wage equation with params.true_beta. Deterministic
    in params.seed."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    tb = params.true_beta

    # Occupations with task-level scores.
    occ_codes = [f"O{i:04d}" for i in range(params.n_occupations)]
    scores: list[TaskScore] = []
    for i, occ in enumerate(occ_codes):
        n_tasks = int(rng.integers(3, 9))
        aug_center = float(np.clip(rng.normal(48.8, 11.0), 5.0, 95.0))
        sub_center = float(np.clip(rng.normal(41.0, 9.7), 5.0, 95.0))
        for k in range(n_tasks):
            scores.append(TaskScore(
                task_id=f"{occ}-T{k}",
                occupation_code=occ,
                augmentation=float(np.clip(rng.normal(aug_center, 5.0), 0.0, 100.0)),
                substitution=float(np.clip(rng.normal(sub_center, 5.0), 0.0, 100.0)),
                aug_type=AUG_TYPES[int(rng.integers(0, 7))],
                importance=float(rng.uniform(0.5, 5.0)),
            ))
    indices, _ = compute_index(scores, IndexConfig())

    # Sectors: latent adoption spread over (0, 1), with monotone indicators.
    sec_codes = [f"S{i:02d}" for i in range(params.n_sectors)]
    adoption = np.linspace(0.05, 0.95, params.n_sectors)
    rng.shuffle(adoption)
    cell_indicators = []
    for s, a in zip(sec_codes, adoption):
        cell_indicators.append(CellIndicators(
            sector_code=s, occgroup_code="",
            formality_rate=float(np.clip(0.1 + 0.8 * a + rng.normal(0, 0.01), 0, 1)),
            mean_education=float(6.0 + 10.0 * a + rng.normal(0, 0.1)),
            mean_income=float(5e5 * math.exp(1.5 * a + rng.normal(0, 0.02))),
            largefirm_share=float(np.clip(0.05 + 0.6 * a + rng.normal(0, 0.01), 0, 1)),
        ))
    cells = compute_d_proxy(cell_indicators)
    capital_intensity = {s: float(a + rng.normal(0, 0.05))
                         for s, a in zip(sec_codes, adoption)}

    # Workers.
    n = params.n_workers
    occ_idx = rng.integers(0, params.n_occupations, n)
    sec_idx = rng.integers(0, params.n_sectors, n)
    formal = rng.random(n) < params.formal_share
    female = rng.random(n) < 0.445
    urban = rng.random(n) < 0.885
    age = rng.integers(18, 66, n)
    educ = np.clip(np.round(rng.normal(11.0, 4.0, n) * 2) / 2, 0.0, 19.0)
    missing_educ = rng.random(n) < params.missing_education_rate
    exper = np.maximum(age - educ - 6.0, 0.0)
    weight = np.exp(rng.normal(0.0, 0.3, n))

    occ_map = {ix.occupation_code: ix for ix in indices}
    ahc = np.array([occ_map[occ_codes[i]].ahc_std for i in occ_idx])
    sub = np.array([occ_map[occ_codes[i]].sub_std for i in occ_idx])
    cell_map = {c.sector_code: c for c in cells}
    if params.d_transform == "std":
        d_t = np.array([cell_map[sec_codes[i]].d_std for i in sec_idx])
    else:
        d_raw = np.array([max(cell_map[sec_codes[i]].d_raw, 1e-3) for i in sec_idx])
        d_t = np.log(d_raw)
        if params.informal_d_mode == "uniform":
            informal_d = rng.uniform(1e-6, 0.02, n)
            d_t = np.where(formal, d_t, np.log(informal_d))

    beta2 = np.where(formal, tb["beta2_formal"], tb["beta2_informal"])
    noise_scale = params.noise_sd * (1.0 + 0.5 * (d_t - d_t.min()) / max(np.ptp(d_t), 1e-12)) \
        if params.heteroskedastic else params.noise_sd
    lnw = (tb["alpha"] + tb["beta1"] * ahc + beta2 * ahc * d_t + tb["beta3"] * sub * d_t
           + tb["educ"] * educ + tb["exper"] * exper + tb["exper2"] * exper ** 2
           + tb["female"] * female + tb["urban"] * urban + tb["formal"] * formal
           + noise_scale * rng.standard_normal(n))

    workers = []
    for i in range(n):
        e = None if missing_educ[i] else float(educ[i])
        workers.append(WorkerRecord(
            worker_id=f"W{i:07d}",
            log_income=float(lnw[i]),
            education_years=e,
            age=int(age[i]),
            experience=None if e is None else float(exper[i]),
            female=bool(female[i]),
            urban=bool(urban[i]),
            formal=bool(formal[i]),
            occupation_code=occ_codes[occ_idx[i]],
            sector_code=sec_codes[sec_idx[i]],
            sampling_weight=float(weight[i]),
        ))

    table, _ = attach_indices(workers, indices, cells)
    table["capital_intensity"] = table["sector_code"].map(capital_intensity)
    if params.d_transform == "log":
        # wage generation used firm-level D for informal workers in log mode;
        # the estimation-side regressor stays the sector-level transform
        table["d_gen"] = d_t

    truth = dict(tb)
    truth["triple"] = tb["beta2_formal"] - tb["beta2_informal"]
    truth["d_transform"] = params.d_transform
    return SyntheticData(params=params, scores=scores, cell_indicators=cell_indicators,
                         cells=cells, indices=indices, workers=workers, table=table,
                         truth=truth)


def _z(coef: float, se: float) -> float:
    return coef / se if se > 0 else math.inf * np.sign(coef)


def recover_one_seed(params: EconomyParams, seed: int, include_placebo: bool = False,
                     n_perm: int = 199) -> dict:
    """Generate one economy and run the estimation battery against the truth."""
    from .robustness import (FORMALITY_SPLIT, INTERACTION, heterogeneity, m4_spec,
                             placebo_permutation, triple_interaction)

    data = generate_population(replace(params, seed=seed))
    table = data.table
    truth = data.truth

    m4 = m4_spec()
    pooled = None
    formal_fit = informal_fit = None
    for row in heterogeneity(table, m4, FORMALITY_SPLIT):
        if row.fit is None:
            continue
        if float(row.group) > 0.5:
            formal_fit = row.fit
        else:
            informal_fit = row.fit
    from .econometrics import fit_model
    pooled = fit_model(table, m4)
    triple = triple_interaction(table)

    def ci_covers(fit, term, target):
        b, se = fit.coef(term), fit.se(term)
        return bool(abs(b - target) <= 1.959963984540054 * se)

    row = {
        "seed": seed,
        "beta2_pooled": pooled.coef(INTERACTION),
        "beta2_formal": formal_fit.coef(INTERACTION),
        "se_formal": formal_fit.se(INTERACTION),
        "beta2_informal": informal_fit.coef(INTERACTION),
        "se_informal": informal_fit.se(INTERACTION),
        "triple_coef": triple.extras["triple_coefficient"],
        "triple_se": triple.se(triple.extras["triple_term"]),
        "covers_formal": ci_covers(formal_fit, INTERACTION, truth["beta2_formal"]),
        "covers_informal": ci_covers(informal_fit, INTERACTION, truth["beta2_informal"]),
        "covers_triple": ci_covers(triple, triple.extras["triple_term"], truth["triple"]),
        # Sign pattern: formal significantly positive at 5%; informal judged
        # null at 1% so a true-zero informal effect rarely fails the pattern.
        "sign_pattern": bool(
            _z(formal_fit.coef(INTERACTION), formal_fit.se(INTERACTION)) > 1.959963984540054
            and abs(_z(informal_fit.coef(INTERACTION), informal_fit.se(INTERACTION))) < 2.5758293035489004
        ),
    }
    if include_placebo:
        placebo = placebo_permutation(table, m4, n_perm=n_perm, seed=seed + 1_000_003)
        row["placebo_p"] = placebo.p_value
    return row


@dataclass
class RecoveryReport:
    rows: list
    truth: dict
    summary: dict

    def to_dict(self) -> dict:
        return {"rows": self.rows, "truth": self.truth, "summary": self.summary}


def recovery_harness(params: EconomyParams, n_seeds: int, jobs: int = 1,
                     include_placebo: bool = False, n_perm: int = 199) -> RecoveryReport:
    """Repeat generation + estimation across seeds; report bias, CI coverage,
    and sign-recovery rates against the known coefficients."""
    params.validate()
    if n_seeds < 10:
        raise DomainError(f"n_seeds must be >= 10, got {n_seeds}")
    seeds = [params.seed + i for i in range(n_seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(recover_one_seed, params, s, include_placebo, n_perm)
                       for s in seeds]
            rows = [f.result() for f in futures]  # collected in submit order
    else:
        rows = [recover_one_seed(params, s, include_placebo, n_perm) for s in seeds]

    truth = dict(params.true_beta)
    truth["triple"] = params.true_beta["beta2_formal"] - params.true_beta["beta2_informal"]
    formal = np.array([r["beta2_formal"] for r in rows])
    ses = np.array([r["se_formal"] for r in rows])
    summary = {
        "n_seeds": n_seeds,
        "bias_formal": float(formal.mean() - truth["beta2_formal"]),
        "mean_se_formal": float(ses.mean()),
        "coverage_formal": float(np.mean([r["covers_formal"] for r in rows])),
        "coverage_informal": float(np.mean([r["covers_informal"] for r in rows])),
        "coverage_triple": float(np.mean([r["covers_triple"] for r in rows])),
        "sign_pattern_rate": float(np.mean([r["sign_pattern"] for r in rows])),
    }
    if include_placebo:
        pvals = np.array([r["placebo_p"] for r in rows])
        summary["placebo_share_above_0.1"] = float(np.mean(pvals > 0.1))
    return RecoveryReport(rows=rows, truth=truth, summary=summary)
