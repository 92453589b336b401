"""Identification and robustness battery: progressive specifications,
occupation-level placebo permutation, leave-one-sector-out jackknife,
subgroup heterogeneity, and the triple interaction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .domain import FitResult
from .econometrics import ModelSpec, build_design, fit_model, ols
from .errors import DomainError, NumericalError

AHC = "ahc_std"
SUB = "sub_std"
D = "d_std"
INTERACTION = f"{AHC}:{D}"

BASE_TERMS = ("education_years", "experience", "experience:experience")


def progressive_specs(covariance: str = "HC1", d_col: str = D,
                      weights_field: Optional[str] = None) -> list:
    """The M1..M6 specification ladder."""
    m1 = BASE_TERMS
    m2 = m1 + (AHC, SUB)
    m3 = m2 + (d_col, f"{AHC}:{d_col}", f"{SUB}:{d_col}")
    m4 = m3 + ("female", "urban")
    # The sector-level adoption main effect is absorbed exactly by sector
    # fixed effects; keeping it would make the demeaned design singular.
    m5 = tuple(t for t in m4 if t != d_col)
    common = dict(outcome="log_income", covariance=covariance, weights_field=weights_field)
    return [
        ModelSpec(name="M1", terms=m1, **common),
        ModelSpec(name="M2", terms=m2, **common),
        ModelSpec(name="M3", terms=m3, **common),
        ModelSpec(name="M4", terms=m4, **common),
        ModelSpec(name="M5", terms=m5, fixed_effects="sector_code", **common),
        ModelSpec(name="M6", terms=m4, sample_filter="formal > 0.5", **common),
    ]


def run_progressive(table: pd.DataFrame, covariance: str = "HC1", d_col: str = D,
                    weights_field: Optional[str] = None) -> list:
    return [fit_model(table, spec)
            for spec in progressive_specs(covariance, d_col, weights_field)]


def m4_spec(covariance: str = "HC1", d_col: str = D,
            sample_filter: Optional[str] = None,
            weights_field: Optional[str] = None) -> ModelSpec:
    specs = progressive_specs(covariance, d_col, weights_field)
    base = specs[3]
    return ModelSpec(name="M4" if sample_filter is None else f"M4[{sample_filter}]",
                     outcome=base.outcome, terms=base.terms,
                     covariance=covariance, sample_filter=sample_filter,
                     weights_field=weights_field)


@dataclass
class PlaceboResult:
    beta_original: float
    permuted_betas: np.ndarray
    p_value: float
    n_perm: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "beta_original": self.beta_original,
            "p_value": self.p_value,
            "n_perm": self.n_perm,
            "seed": self.seed,
            "permuted_betas": [float(b) for b in self.permuted_betas],
        }


def placebo_permutation(table: pd.DataFrame, spec: ModelSpec, n_perm: int, seed: int,
                        beta_term: str = INTERACTION,
                        permute_col: str = AHC) -> PlaceboResult:
    """Permute the augmentation index at the occupation level and refit.

    All workers in an occupation receive the same permuted value, preserving
    the cluster structure of the treatment. p_value is the share of permuted
    |beta| at least as large as the original. Reproducible from the seed and
    independent of any parallelism.
    """
    if n_perm < 99:
        raise DomainError(f"n_perm must be >= 99, got {n_perm}")
    if spec.fixed_effects is not None:
        raise DomainError("placebo permutation does not support fixed-effects specs")
    design = build_design(table, spec)
    if beta_term not in design.labels:
        raise DomainError(f"term {beta_term!r} not in spec")
    fit = ols(design.y, design.X, w=design.w, labels=design.labels,
              covariance=spec.covariance, spec_name=spec.name)
    beta_original = fit.coef(beta_term)

    # Rebuild only the columns that depend on the permuted variable.
    data = table.query(spec.sample_filter) if spec.sample_filter else table
    referenced = [spec.outcome] + spec.base_variables()
    if spec.weights_field:
        referenced.append(spec.weights_field)
    mask = np.ones(len(data), dtype=bool)
    for c in referenced:
        mask &= np.asarray(pd.notna(data[c]))
    data = data.loc[mask]
    occ = data["occupation_code"].to_numpy()
    occ_codes, occ_inverse = np.unique(occ, return_inverse=True)
    occ_values = np.array([data.loc[occ == c, permute_col].iloc[0] for c in occ_codes])

    dep_terms = [(i, t) for i, t in enumerate(design.labels)
                 if permute_col in t.split(":")]
    other_cols = {}
    for i, t in dep_terms:
        factors = [f for f in t.split(":") if f != permute_col]
        col = np.ones(len(data))
        for f in factors:
            col = col * data[f].to_numpy(dtype=float)
        # permute_col may appear multiple times in a term (e.g. squared)
        power = t.split(":").count(permute_col)
        other_cols[i] = (col, power)

    rng = np.random.default_rng(seed)
    X = design.X.copy()
    if design.w is not None:
        sw = np.sqrt(design.w)
        yt = design.y * sw
    else:
        sw = None
        yt = design.y
    b_idx = design.labels.index(beta_term)
    permuted = np.empty(n_perm)
    for p in range(n_perm):
        shuffled = occ_values[rng.permutation(len(occ_values))]
        xv = shuffled[occ_inverse]
        for i, (col, power) in other_cols.items():
            X[:, i] = col * xv ** power
        Xt = X * sw[:, None] if sw is not None else X
        beta, *_ = np.linalg.lstsq(Xt, yt, rcond=None)
        permuted[p] = beta[b_idx]

    p_value = float(np.mean(np.abs(permuted) >= abs(beta_original)))
    return PlaceboResult(beta_original=beta_original, permuted_betas=permuted,
                         p_value=p_value, n_perm=n_perm, seed=seed)


@dataclass
class JackknifeResult:
    full_beta: float
    per_sector: list  # (sector, beta, se)
    beta_range: tuple
    sign_changes: int
    max_deviation: float

    def to_dict(self) -> dict:
        return {
            "full_beta": self.full_beta,
            "per_sector": [{"sector": s, "beta": b, "se": se} for s, b, se in self.per_sector],
            "beta_range": list(self.beta_range),
            "sign_changes": self.sign_changes,
            "max_deviation": self.max_deviation,
        }


def jackknife_loso(table: pd.DataFrame, spec: ModelSpec, sector_field: str = "sector_code",
                   beta_term: str = INTERACTION) -> JackknifeResult:
    """Leave-one-sector-out refits of the spec, tracking the focal coefficient."""
    sectors = sorted(table[sector_field].dropna().unique())
    if len(sectors) < 2:
        raise DomainError("jackknife needs >= 2 sectors")
    full = fit_model(table, spec)
    full_beta = full.coef(beta_term)
    per_sector = []
    for s in sectors:
        sub = table[table[sector_field] != s]
        fit = fit_model(sub, spec)
        per_sector.append((s, fit.coef(beta_term), fit.se(beta_term)))
    betas = np.array([b for _, b, _ in per_sector])
    sign_changes = int(np.sum(np.sign(betas) != np.sign(full_beta)))
    return JackknifeResult(
        full_beta=full_beta,
        per_sector=per_sector,
        beta_range=(float(betas.min()), float(betas.max())),
        sign_changes=sign_changes,
        max_deviation=float(np.max(np.abs(betas - full_beta))),
    )


@dataclass(frozen=True)
class Split:
    """Subgroup definition: a categorical field or numeric bins over a field."""

    field: str
    bins: Optional[tuple] = None      # ((label, low, high_inclusive), ...)

    def groups(self, table: pd.DataFrame):
        if self.bins is None:
            for val in sorted(table[self.field].dropna().unique()):
                yield str(val), table[self.field] == val
        else:
            for label, lo, hi in self.bins:
                yield label, (table[self.field] >= lo) & (table[self.field] <= hi)


AGE_COHORTS = Split("age", bins=(("18-30", 18, 30), ("31-45", 31, 45), ("46-65", 46, 65)))
FORMALITY_SPLIT = Split("formal")
GENDER_SPLIT = Split("female")
SECTOR_SPLIT = Split("sector_code")


def education_split(cuts: Sequence[float] = (11.0, 16.0)) -> Split:
    lo_cut, hi_cut = cuts
    return Split("education_years", bins=(
        ("secondary", 0.0, lo_cut),
        ("technical", np.nextafter(lo_cut, np.inf), hi_cut),
        ("university", np.nextafter(hi_cut, np.inf), np.inf),
    ))


@dataclass
class SubgroupRow:
    group: str
    fit: Optional[FitResult]
    n: int
    flag: str = ""


def heterogeneity(table: pd.DataFrame, spec: ModelSpec, split: Split) -> list:
    """Refit the spec within each subgroup.

    Indices keep their full-sample standardization so coefficients are
    comparable across subgroups; a subgroup with too few rows is flagged
    instead of raising. Terms involving the split field are dropped from the
    subgroup spec (they are constant within a group).
    """
    terms = tuple(t for t in spec.terms if split.field not in t.split(":"))
    sub_spec = ModelSpec(name=spec.name, outcome=spec.outcome, terms=terms,
                         fixed_effects=spec.fixed_effects,
                         weights_field=spec.weights_field,
                         covariance=spec.covariance,
                         sample_filter=spec.sample_filter)
    rows = []
    for label, mask in split.groups(table):
        sub = table[mask]
        try:
            fit = fit_model(sub, sub_spec)
            rows.append(SubgroupRow(group=label, fit=fit, n=fit.n_obs))
        except DomainError as exc:
            rows.append(SubgroupRow(group=label, fit=None, n=int(mask.sum()),
                                    flag=f"insufficient n ({exc})"))
        except NumericalError as exc:
            rows.append(SubgroupRow(group=label, fit=None, n=int(mask.sum()),
                                    flag=f"not identified ({exc})"))
    return rows


TRIPLE = f"{AHC}:{D}:formal"


def triple_interaction(table: pd.DataFrame, covariance: str = "HC1",
                       d_col: str = D) -> FitResult:
    """Pooled model with all constituent mains and pairwise terms plus the
    augmentation x adoption x formality triple interaction."""
    terms = BASE_TERMS + (
        AHC, SUB, d_col, "formal",
        f"{AHC}:{d_col}", f"{AHC}:formal", f"{d_col}:formal", f"{SUB}:{d_col}",
        "female", "urban",
        f"{AHC}:{d_col}:formal",
    )
    spec = ModelSpec(name="triple", outcome="log_income", terms=terms,
                     covariance=covariance)
    fit = fit_model(table, spec)
    fit.extras["triple_term"] = f"{AHC}:{d_col}:formal"
    fit.extras["triple_coefficient"] = fit.coef(f"{AHC}:{d_col}:formal")
    return fit
