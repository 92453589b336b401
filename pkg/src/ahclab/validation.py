"""Correlation suite and two-rater reliability statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; requires n >= 3 and positive variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise DomainError("pearson needs equal-length sequences with n >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.dot(xc, xc))
    sy = np.sqrt(np.dot(yc, yc))
    if sx == 0 or sy == 0:
        raise DomainError("pearson undefined: zero variance")
    return float(np.dot(xc, yc) / (sx * sy))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with mid-ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise DomainError("spearman needs equal-length sequences with n >= 3")
    return pearson(rankdata(x), rankdata(y))


def krippendorff_interval(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-rater Krippendorff's alpha with interval distance (v - w)^2.

    alpha = 1 - D_o / D_e where D_o is the mean squared within-unit
    disagreement and D_e the expected squared disagreement over all pooled
    value pairs (coincidence-matrix formulation, paired design, no missing
    values).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise DomainError("krippendorff needs equal-length sequences with n >= 2")
    n = a.size
    d_o = float(np.mean((a - b) ** 2))
    pooled = np.concatenate([a, b])
    m = pooled.size
    # sum over ordered pairs i != j of (v_i - v_j)^2 = 2m*sum(v^2) - 2*(sum v)^2
    pair_sum = 2.0 * m * float(np.dot(pooled, pooled)) - 2.0 * float(pooled.sum()) ** 2
    d_e = pair_sum / (m * (m - 1))
    if d_e == 0:
        raise DomainError("all pooled values identical; alpha undefined")
    return 1.0 - d_o / d_e


def level_bias_adjust(a: Sequence[float], b: Sequence[float]):
    """Mean-shift adjustment: bias = mean(b) - mean(a), b_adjusted = b - bias.

    This is this artifact's interpretation of a systematic level-bias
    correction; only the location of rater B is moved.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError("level_bias_adjust needs equal-length sequences")
    bias = float(b.mean() - a.mean())
    return bias, b - bias


@dataclass
class ReliabilityReport:
    pearson_r: float
    spearman_rho: float
    krippendorff_alpha: float
    level_bias: float
    n_pairs: int

    def __post_init__(self):
        if abs(self.pearson_r) > 1 + 1e-12 or abs(self.spearman_rho) > 1 + 1e-12:
            raise DomainError("correlation outside [-1, 1]")
        if self.krippendorff_alpha > 1 + 1e-12:
            raise DomainError("alpha cannot exceed 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def reliability_report(a: Sequence[float], b: Sequence[float],
                       adjust_level_bias: bool = True) -> ReliabilityReport:
    """Full two-rater reliability battery; alpha optionally recomputed on the
    level-bias-adjusted pair."""
    bias, b_adj = level_bias_adjust(a, b)
    alpha = krippendorff_interval(a, b_adj if adjust_level_bias else np.asarray(b, float))
    return ReliabilityReport(
        pearson_r=pearson(a, b),
        spearman_rho=spearman(a, b),
        krippendorff_alpha=alpha,
        level_bias=bias,
        n_pairs=len(np.asarray(a)),
    )


@dataclass
class ExternalValidationRow:
    index_name: str
    n_matched: int
    pearson_r: float | None
    spearman_rho: float | None
    flag: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def external_validation_report(ahc: Mapping[str, float],
                               external: Mapping[str, Mapping[str, float]]):
    """Correlate the index with externally supplied occupation-score maps.

    Inner-joins each external index on occupation code; indices with fewer
    than 3 matches are flagged instead of raising.
    """
    rows = []
    for name in sorted(external):
        scores = external[name]
        matched = sorted(code for code in scores if code in ahc)
        if len(matched) < 3:
            rows.append(ExternalValidationRow(name, len(matched), None, None,
                                              flag="insufficient overlap"))
            continue
        x = [ahc[c] for c in matched]
        y = [scores[c] for c in matched]
        rows.append(ExternalValidationRow(name, len(matched),
                                          pearson(x, y), spearman(x, y)))
    return rows
