"""Design-matrix construction and the estimation engine: OLS with
HC1/classical covariance, WLS, 2SLS with first-stage F, quantile regression,
and the Oaxaca-Blinder decomposition.

Linear solves go through orthogonal factorizations (QR / least squares),
never an explicit normal-equations inverse of the design. p-values use the
normal approximation throughout; the sample sizes this package targets make
the t/z distinction irrelevant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
from scipy.optimize import linprog

from .domain import FitResult
from .errors import DomainError, NumericalError

CONDITION_WARNING_THRESHOLD = 1e12
WEAK_INSTRUMENT_F = 10.0
INTERCEPT = "const"


@dataclass(frozen=True)
class ModelSpec:
    """One regression specification over an analysis table.

    Each term is a base column name or a ':'-joined product of 2-3 base
    columns (e.g. "ahc_std:d_std"). sample_filter is a pandas query string.
    """

    name: str
    outcome: str
    terms: tuple
    fixed_effects: Optional[str] = None
    weights_field: Optional[str] = None
    covariance: str = "HC1"
    sample_filter: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(set(self.terms)) != len(self.terms):
            raise DomainError("duplicate term labels in spec")
        for t in self.terms:
            if not 1 <= len(t.split(":")) <= 3:
                raise DomainError(f"term {t!r} must be a product of 1-3 base variables")
        if self.covariance not in ("HC1", "classical"):
            raise DomainError(f"unknown covariance type {self.covariance!r}")

    def base_variables(self) -> list:
        seen = []
        for t in self.terms:
            for v in t.split(":"):
                if v not in seen:
                    seen.append(v)
        return seen


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    w: Optional[np.ndarray]
    labels: list
    n_dropped: int
    groups: Optional[np.ndarray] = None  # FE group codes, post-filter
    extra: dict = field(default_factory=dict)  # aligned extra columns, not in X


def build_design(df: pd.DataFrame, spec: ModelSpec,
                 extra_fields: Sequence[str] = ()) -> Design:
    """Assemble (y, X, w) for a spec: intercept first, product terms built
    row-wise, rows with any missing referenced field dropped and counted,
    fixed effects absorbed by within-group demeaning (intercept dropped)."""
    data = df.query(spec.sample_filter) if spec.sample_filter else df
    referenced = [spec.outcome] + spec.base_variables() + list(extra_fields)
    if spec.weights_field:
        referenced.append(spec.weights_field)
    if spec.fixed_effects:
        referenced.append(spec.fixed_effects)
    missing = [c for c in referenced if c not in data.columns]
    if missing:
        raise DomainError(f"columns missing from analysis table: {missing}")

    numeric = [c for c in referenced if c != spec.fixed_effects]
    mask = np.ones(len(data), dtype=bool)
    for c in numeric:
        mask &= np.asarray(pd.notna(data[c]))
    n_dropped = int((~mask).sum())
    data = data.loc[mask]

    y = data[spec.outcome].to_numpy(dtype=float)
    cols = []
    labels = []
    if spec.fixed_effects is None:
        cols.append(np.ones(len(data)))
        labels.append(INTERCEPT)
    for t in spec.terms:
        col = np.ones(len(data))
        for v in t.split(":"):
            col = col * data[v].to_numpy(dtype=float)
        cols.append(col)
        labels.append(t)
    X = np.column_stack(cols) if cols else np.empty((len(data), 0))

    w = None
    if spec.weights_field:
        w = data[spec.weights_field].to_numpy(dtype=float)
        if np.any(w <= 0):
            raise DomainError("weights must be strictly positive")

    groups = None
    if spec.fixed_effects is not None:
        groups = data[spec.fixed_effects].to_numpy()
        y, X = _within_demean(y, X, groups, w)

    if len(y) <= X.shape[1]:
        raise DomainError(f"n={len(y)} <= k={X.shape[1]} after filtering")
    extra = {c: data[c].to_numpy(dtype=float) for c in extra_fields}
    return Design(y=y, X=X, w=w, labels=labels, n_dropped=n_dropped, groups=groups,
                  extra=extra)


def _within_demean(y, X, groups, w=None):
    """Subtract (weighted) group means of y and every column of X."""
    codes, inverse = np.unique(groups, return_inverse=True)
    wv = np.ones(len(y)) if w is None else w
    wsum = np.bincount(inverse, weights=wv)
    ybar = np.bincount(inverse, weights=wv * y) / wsum
    y_out = y - ybar[inverse]
    X_out = np.empty_like(X)
    for j in range(X.shape[1]):
        xbar = np.bincount(inverse, weights=wv * X[:, j]) / wsum
        X_out[:, j] = X[:, j] - xbar[inverse]
    return y_out, X_out


def _qr_solve(X: np.ndarray, y: np.ndarray, labels: Sequence[str]):
    """Least squares via pivoted QR; raises naming a collinear column set."""
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    rank = int((diag > tol).sum())
    if rank < X.shape[1]:
        bad = sorted(labels[i] for i in piv[rank:])
        raise NumericalError(f"design matrix is rank deficient; collinear columns: {bad}")
    beta_piv = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty_like(beta_piv)
    beta[piv] = beta_piv
    # (X'X)^-1 from R: undo the pivot on both axes
    Rinv = scipy.linalg.solve_triangular(R, np.eye(R.shape[0]))
    xtx_inv_piv = Rinv @ Rinv.T
    xtx_inv = np.empty_like(xtx_inv_piv)
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_piv
    return beta, xtx_inv


def _normal_pvalues(coefs: np.ndarray, ses: np.ndarray) -> np.ndarray:
    p = np.empty_like(coefs)
    for i, (b, s) in enumerate(zip(coefs, ses)):
        if s == 0.0:
            p[i] = 1.0 if b == 0.0 else 0.0
        else:
            p[i] = math.erfc(abs(b / s) / math.sqrt(2.0))
    return p


def _covariance(X, e, xtx_inv, covariance):
    n, k = X.shape
    if covariance == "classical":
        sigma2 = float(e @ e) / max(n - k, 1)
        return sigma2 * xtx_inv
    Xe = X * e[:, None]
    meat = Xe.T @ Xe
    return (n / max(n - k, 1)) * xtx_inv @ meat @ xtx_inv


def ols(y: np.ndarray, X: np.ndarray, w: Optional[np.ndarray] = None,
        labels: Optional[Sequence[str]] = None, covariance: str = "HC1",
        spec_name: str = "ols") -> FitResult:
    """(Weighted) least squares with HC1 or classical covariance.

    WLS is estimated on the sqrt(w)-transformed model; the sandwich and R^2
    are the weighted analogues. A condition number above 1e12 attaches a
    warning to the result rather than failing.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise DomainError("y and X are not conformable")
    labels = list(labels) if labels is not None else [f"x{i}" for i in range(X.shape[1])]
    n, k = X.shape
    if n <= k:
        raise DomainError(f"n={n} <= k={k}")

    if w is not None:
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise DomainError("weights must be strictly positive")
        sw = np.sqrt(w)
        Xt, yt = X * sw[:, None], y * sw
    else:
        Xt, yt = X, y

    beta, xtx_inv = _qr_solve(Xt, yt, labels)
    e = yt - Xt @ beta
    V = _covariance(Xt, e, xtx_inv, covariance)
    ses = np.sqrt(np.maximum(np.diag(V), 0.0))

    wv = np.ones(n) if w is None else w
    resid = y - X @ beta
    rss = float(wv @ (resid ** 2))
    ybar = float(wv @ y / wv.sum())
    tss = float(wv @ ((y - ybar) ** 2))
    if tss > 0:
        r2 = max(0.0, min(1.0, 1.0 - rss / tss))
    else:
        r2 = 1.0 if rss <= 1e-30 else 0.0

    warnings = []
    cond = np.linalg.cond(Xt)
    if cond > CONDITION_WARNING_THRESHOLD:
        warnings.append(f"near-singular design: condition number {cond:.3e}")

    return FitResult(spec_name=spec_name, terms=labels, coefficients=beta,
                     std_errors=ses, p_values=_normal_pvalues(beta, ses),
                     r_squared=r2, n_obs=n, covariance_type=covariance,
                     weighted=w is not None, warnings=warnings)


def fit_model(df: pd.DataFrame, spec: ModelSpec) -> FitResult:
    """build_design + ols for one ModelSpec."""
    d = build_design(df, spec)
    fit = ols(d.y, d.X, w=d.w, labels=d.labels, covariance=spec.covariance,
              spec_name=spec.name)
    fit.extras["n_dropped_missing"] = d.n_dropped
    if spec.fixed_effects:
        fit.extras["fixed_effects"] = spec.fixed_effects
    return fit


def tsls(y: np.ndarray, X_exog: np.ndarray, x_endog: np.ndarray, Z: np.ndarray,
         exog_labels: Optional[Sequence[str]] = None, endog_label: str = "endog",
         covariance: str = "HC1", spec_name: str = "tsls") -> FitResult:
    """Two-stage least squares with a robust first-stage F on the excluded
    instruments. Standard errors use structural residuals (actual endogenous
    regressor), not the naive second-stage residuals."""
    y = np.asarray(y, dtype=float)
    X_exog = np.asarray(X_exog, dtype=float)
    x_endog = np.asarray(x_endog, dtype=float).ravel()
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n = len(y)
    if Z.shape[1] < 1:
        raise DomainError("at least one instrument required")

    exog_labels = list(exog_labels) if exog_labels is not None \
        else [f"x{i}" for i in range(X_exog.shape[1])]
    z_labels = [f"z{i}" for i in range(Z.shape[1])]

    # Stage 1: endogenous regressor on exogenous vars + instruments.
    W = np.column_stack([X_exog, Z])
    fs = ols(x_endog, W, labels=exog_labels + z_labels, covariance="HC1",
             spec_name=f"{spec_name}:first_stage")
    first_stage_f = _wald_f(fs, W, x_endog, n_restrictions=Z.shape[1])

    xhat = W @ fs.coefficients
    X2 = np.column_stack([X_exog, xhat])
    labels = exog_labels + [endog_label]
    beta, xtx_inv = _qr_solve(X2, y, labels)

    # Structural residuals evaluated at the actual endogenous column.
    X_struct = np.column_stack([X_exog, x_endog])
    e = y - X_struct @ beta
    V = _covariance(X2, e, xtx_inv, covariance)
    ses = np.sqrt(np.maximum(np.diag(V), 0.0))

    rss = float(e @ e)
    tss = float(((y - y.mean()) ** 2).sum())
    r2_raw = 1.0 - rss / tss if tss > 0 else 0.0

    warnings = []
    if first_stage_f < WEAK_INSTRUMENT_F:
        warnings.append(f"weak instrument: first-stage F = {first_stage_f:.3f} < 10")

    fit = FitResult(spec_name=spec_name, terms=labels, coefficients=beta,
                    std_errors=ses, p_values=_normal_pvalues(beta, ses),
                    r_squared=max(0.0, min(1.0, r2_raw)), n_obs=n,
                    covariance_type=covariance, weighted=False, warnings=warnings)
    fit.extras["first_stage_F"] = first_stage_f
    fit.extras["r_squared_raw"] = r2_raw
    return fit


def _wald_f(fs: FitResult, W: np.ndarray, x_endog: np.ndarray, n_restrictions: int) -> float:
    """Robust Wald F-test that the last n_restrictions coefficients are zero."""
    n, k = W.shape
    beta, xtx_inv = _qr_solve(W, x_endog, fs.terms)
    e = x_endog - W @ beta
    V = _covariance(W, e, xtx_inv, "HC1")
    sel = slice(k - n_restrictions, k)
    b = beta[sel]
    Vrr = V[sel, sel]
    try:
        stat = float(b @ np.linalg.solve(Vrr, b))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular restriction covariance in first-stage F: {exc}")
    return stat / n_restrictions


def check_loss(u: np.ndarray, tau: float) -> float:
    """Sum of the asymmetric absolute (check) loss."""
    u = np.asarray(u, dtype=float)
    return float(np.sum(u * (tau - (u < 0))))


def quantile_fit(y: np.ndarray, X: np.ndarray, tau: float, method: str = "auto",
                 max_iter: int = 300, tol: float = 1e-12) -> np.ndarray:
    """Minimize the check loss by IRLS on a smoothed objective with the
    smoothing parameter annealed toward zero; an exact LP solve (HiGHS) is
    the fallback and is also run on small problems to polish the solution.

    method: "irls", "lp", or "auto" (IRLS, plus LP polish when n <= 5000).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    n, k = X.shape

    candidates = []
    if method in ("irls", "auto"):
        candidates.append(_quantile_irls(y, X, tau, max_iter, tol))
    if method == "lp" or (method == "auto" and n <= 5000):
        candidates.append(_quantile_lp(y, X, tau))
    if not candidates:
        raise DomainError(f"unknown quantile method {method!r}")
    best = min(candidates, key=lambda b: check_loss(y - X @ b, tau))
    return best


def _quantile_irls(y, X, tau, max_iter, tol):
    beta, _ = _qr_solve(X, y, [f"x{i}" for i in range(X.shape[1])])
    scale = max(float(np.abs(y).mean()), 1.0)
    eps = 1e-2 * scale
    eps_floor = 1e-10 * scale
    prev_obj = check_loss(y - X @ beta, tau)
    for _ in range(max_iter):
        u = y - X @ beta
        asym = np.where(u >= 0, tau, 1.0 - tau)
        wts = asym / np.sqrt(u * u + eps * eps)
        sw = np.sqrt(wts)
        beta_new, _ = _qr_solve(X * sw[:, None], y * sw,
                                [f"x{i}" for i in range(X.shape[1])])
        obj = check_loss(y - X @ beta_new, tau)
        moved = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if eps <= eps_floor and moved < tol * scale and abs(prev_obj - obj) <= tol * (1 + abs(obj)):
            return beta
        prev_obj = obj
        eps = max(eps * 0.5, eps_floor)
    # Annealing exhausted max_iter; return the last iterate (callers on the
    # "auto" path still get the LP polish for small problems).
    return beta


def _quantile_lp(y, X, tau):
    """Exact LP formulation: min tau*1'u+ + (1-tau)*1'u- s.t. X b + u+ - u- = y."""
    n, k = X.shape
    c = np.concatenate([np.zeros(2 * k), np.full(n, tau), np.full(n, 1.0 - tau)])
    I = scipy.sparse.identity(n, format="csc")
    A = scipy.sparse.hstack([scipy.sparse.csc_matrix(X), scipy.sparse.csc_matrix(-X), I, -I],
                            format="csc")
    res = linprog(c, A_eq=A, b_eq=y, bounds=(0, None), method="highs")
    if not res.success:
        raise NumericalError(f"quantile LP failed: {res.message}; objective={res.fun}")
    return res.x[:k] - res.x[k:2 * k]


@dataclass
class OaxacaResult:
    """Two-fold decomposition of a mean-outcome gap (group A minus group B)."""

    reference: str
    gap: float
    explained: dict
    unexplained: dict
    explained_total: float
    unexplained_total: float
    n_a: int
    n_b: int

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "gap": self.gap,
            "explained": dict(self.explained),
            "unexplained": dict(self.unexplained),
            "explained_total": self.explained_total,
            "unexplained_total": self.unexplained_total,
            "n_a": self.n_a,
            "n_b": self.n_b,
        }


def oaxaca_blinder(records_a: pd.DataFrame, records_b: pd.DataFrame, spec: ModelSpec,
                   reference: str = "A") -> OaxacaResult:
    """Two-fold Oaxaca-Blinder decomposition.

    gap = (mean_A - mean_B)' beta* (explained, per covariate)
        + mean_A'(beta_A - beta*) + mean_B'(beta* - beta_B) (unexplained),
    with beta* chosen by `reference` in {A, B, pooled}. The two parts sum to
    the raw gap exactly.
    """
    if reference not in ("A", "B", "pooled"):
        raise DomainError(f"reference must be A, B, or pooled, got {reference!r}")
    if spec.fixed_effects:
        raise DomainError("oaxaca decomposition does not support fixed effects")
    da = build_design(records_a, spec)
    db = build_design(records_b, spec)
    if da.labels != db.labels:
        raise DomainError("groups produced different design columns")

    fit_a = ols(da.y, da.X, w=da.w, labels=da.labels, covariance=spec.covariance,
                spec_name=f"{spec.name}:A")
    fit_b = ols(db.y, db.X, w=db.w, labels=db.labels, covariance=spec.covariance,
                spec_name=f"{spec.name}:B")
    beta_a, beta_b = fit_a.coefficients, fit_b.coefficients
    if reference == "A":
        beta_star = beta_a
    elif reference == "B":
        beta_star = beta_b
    else:
        yp = np.concatenate([da.y, db.y])
        Xp = np.vstack([da.X, db.X])
        wp = None
        if da.w is not None and db.w is not None:
            wp = np.concatenate([da.w, db.w])
        beta_star = ols(yp, Xp, w=wp, labels=da.labels, covariance=spec.covariance,
                        spec_name=f"{spec.name}:pooled").coefficients

    wa = np.ones(len(da.y)) if da.w is None else da.w
    wb = np.ones(len(db.y)) if db.w is None else db.w
    mean_a = wa @ da.X / wa.sum()
    mean_b = wb @ db.X / wb.sum()
    ybar_a = float(wa @ da.y / wa.sum())
    ybar_b = float(wb @ db.y / wb.sum())

    explained = {lbl: float((ma - mb) * bs)
                 for lbl, ma, mb, bs in zip(da.labels, mean_a, mean_b, beta_star)}
    unexplained = {lbl: float(ma * (ba - bs) + mb * (bs - bb))
                   for lbl, ma, mb, ba, bb, bs in
                   zip(da.labels, mean_a, mean_b, beta_a, beta_b, beta_star)}
    return OaxacaResult(
        reference=reference,
        gap=ybar_a - ybar_b,
        explained=explained,
        unexplained=unexplained,
        explained_total=float(sum(explained.values())),
        unexplained_total=float(sum(unexplained.values())),
        n_a=len(da.y),
        n_b=len(db.y),
    )
