"""Occupation index construction, standardization, and the adoption proxy."""

from __future__ import annotations

import csv
import warnings as _warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .domain import AdoptionCell, OccupationIndex, TaskScore, WorkerRecord
from .errors import DomainError

D_PROXY_WEIGHTS = (0.30, 0.25, 0.20, 0.25)  # formality, education, income, large-firm


class IndexVariant(str, Enum):
    IMPORTANCE_WEIGHTED = "importance_weighted"
    RAW_UNWEIGHTED = "raw_unweighted"
    BINARY_MEDIAN = "binary_median"
    SUBSTITUTION_DISPLACEMENT = "substitution_displacement"


@dataclass(frozen=True)
class IndexConfig:
    variant: IndexVariant = IndexVariant.IMPORTANCE_WEIGHTED
    standardize: bool = True
    standardization_weights: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        if not isinstance(self.variant, IndexVariant):
            object.__setattr__(self, "variant", IndexVariant(self.variant))


def standardize(values: Sequence[float], weights: Optional[Sequence[float]] = None,
                name: str = "values") -> np.ndarray:
    """Weighted z-scores using population moments; uniform weights if absent."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise DomainError(f"standardize needs >= 2 values for {name!r}")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or np.any(w < 0) or w.sum() == 0:
        raise DomainError(f"bad standardization weights for {name!r}")
    mu = np.average(x, weights=w)
    var = np.average((x - mu) ** 2, weights=w)
    if var <= 0:
        raise DomainError(f"{name!r} is constant; standardization undefined")
    return (x - mu) / np.sqrt(var)


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    return float(np.dot(weights, values) / weights.sum())


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    cutoff = 0.5 * w.sum()
    return float(v[np.searchsorted(cum, cutoff)])


@dataclass
class IndexReport:
    n_occupations: int = 0
    skipped: list = field(default_factory=list)  # (occupation_code, reason)


def compute_index(scores: Iterable[TaskScore], config: IndexConfig = IndexConfig()):
    """Build per-occupation index values from task-level scores.

    The augmentation slot holds the configured variant; the substitution slot
    always holds the importance-weighted mean of substitution scores.
    Occupations with all-zero importance under a weighted variant are skipped
    and reported. Returns (indices, IndexReport).
    """
    groups: dict[str, list[TaskScore]] = {}
    for s in scores:
        groups.setdefault(s.occupation_code, []).append(s)

    report = IndexReport()
    weighted_ahc: dict[str, float] = {}
    rows: list[dict] = []
    for occ in sorted(groups):
        tasks = groups[occ]
        a = np.array([t.augmentation for t in tasks])
        s = np.array([t.substitution for t in tasks])
        w = np.array([t.importance for t in tasks])
        if w.sum() == 0 and config.variant != IndexVariant.RAW_UNWEIGHTED:
            report.skipped.append((occ, "all-zero importance"))
            continue
        if w.sum() > 0:
            weighted_ahc[occ] = _weighted_mean(a, w)
            sub_raw = _weighted_mean(s, w)
        else:
            sub_raw = float(s.mean())
        rows.append({"occ": occ, "a": a, "s": s, "w": w, "sub_raw": sub_raw,
                     "n_tasks": len(tasks)})

    if not rows:
        return [], report

    if config.variant == IndexVariant.BINARY_MEDIAN:
        occ_codes = [r["occ"] for r in rows]
        pop_w = np.array([
            (config.standardization_weights or {}).get(o, 1.0) for o in occ_codes])
        vals = np.array([weighted_ahc[o] for o in occ_codes])
        median = _weighted_median(vals, pop_w)

    ahc_vals = []
    for r in rows:
        if config.variant == IndexVariant.IMPORTANCE_WEIGHTED:
            ahc = weighted_ahc[r["occ"]]
        elif config.variant == IndexVariant.RAW_UNWEIGHTED:
            ahc = float(r["a"].mean())
        elif config.variant == IndexVariant.BINARY_MEDIAN:
            ahc = 1.0 if weighted_ahc[r["occ"]] >= median else 0.0
        else:  # substitution_displacement
            ahc = _weighted_mean(r["s"], r["w"])
        ahc_vals.append(ahc)

    sub_vals = [r["sub_raw"] for r in rows]
    if config.standardize and len(rows) >= 2:
        std_w = None
        if config.standardization_weights is not None:
            std_w = [config.standardization_weights.get(r["occ"], 0.0) for r in rows]
        ahc_std = standardize(ahc_vals, std_w, name="ahc")
        sub_std = standardize(sub_vals, std_w, name="sub")
    else:
        ahc_std = np.zeros(len(rows))
        sub_std = np.zeros(len(rows))

    indices = [
        OccupationIndex(occupation_code=r["occ"], ahc_raw=float(av), sub_raw=float(sv),
                        ahc_std=float(az), sub_std=float(sz), n_tasks=r["n_tasks"])
        for r, av, sv, az, sz in zip(rows, ahc_vals, sub_vals, ahc_std, sub_std)
    ]
    report.n_occupations = len(indices)
    return indices, report


@dataclass(frozen=True)
class CellIndicators:
    """Raw inputs for one sector x occupation-group adoption cell."""

    sector_code: str
    occgroup_code: str
    formality_rate: float
    mean_education: float
    mean_income: float
    largefirm_share: float


def compute_d_proxy(cells: Sequence[CellIndicators],
                    weights: Sequence[float] = D_PROXY_WEIGHTS) -> list[AdoptionCell]:
    """Fixed-weight convex combination of min-max-normalized indicators.

    A constant indicator contributes 0 to every cell and raises a warning,
    not an error.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError(f"d-proxy weights must be 4 nonnegative values summing to 1, got {weights}")
    if len(cells) < 2:
        raise DomainError("d-proxy needs >= 2 cells for min-max normalization")

    mat = np.array([[c.formality_rate, c.mean_education, c.mean_income, c.largefirm_share]
                    for c in cells], dtype=float)
    normed = np.zeros_like(mat)
    names = ["formality_rate", "mean_education", "mean_income", "largefirm_share"]
    for j in range(4):
        lo, hi = mat[:, j].min(), mat[:, j].max()
        if hi == lo:
            _warnings.warn(f"indicator {names[j]} is constant across cells; contributes 0")
            continue
        normed[:, j] = (mat[:, j] - lo) / (hi - lo)

    d_raw = normed @ w
    d_std = standardize(d_raw, name="d_raw") if len(cells) >= 2 else np.zeros(len(cells))
    return [
        AdoptionCell(sector_code=c.sector_code, occgroup_code=c.occgroup_code,
                     formality_rate=c.formality_rate, mean_education=c.mean_education,
                     mean_income=c.mean_income, largefirm_share=c.largefirm_share,
                     d_raw=float(dr), d_std=float(dz))
        for c, dr, dz in zip(cells, d_raw, d_std)
    ]


@dataclass
class JoinReport:
    n_workers: int = 0
    matched_index: int = 0
    matched_cell: int = 0
    unmatched_index: int = 0
    unmatched_cell: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def attach_indices(workers: Sequence[WorkerRecord],
                   indices: Sequence[OccupationIndex],
                   cells: Sequence[AdoptionCell],
                   occgroup_digits: int = 1):
    """Join workers to occupation indices and adoption cells.

    Left-total: the output has one row per worker; unmatched joins leave NaN
    in the index/adoption columns and are counted in the JoinReport. When
    every cell has an empty occgroup code the cell join degrades to
    sector-only. Returns (analysis DataFrame, JoinReport).
    """
    idx_map = {ix.occupation_code: ix for ix in indices}
    sector_only = all(c.occgroup_code == "" for c in cells) if cells else False
    cell_map = {}
    for c in cells:
        key = c.sector_code if sector_only else (c.sector_code, c.occgroup_code)
        cell_map[key] = c

    report = JoinReport(n_workers=len(workers))
    rows = []
    for wr in workers:
        occgroup = wr.occupation_code[:occgroup_digits]
        ix = idx_map.get(wr.occupation_code)
        key = wr.sector_code if sector_only else (wr.sector_code, occgroup)
        cell = cell_map.get(key)
        if ix is not None:
            report.matched_index += 1
        else:
            report.unmatched_index += 1
        if cell is not None:
            report.matched_cell += 1
        else:
            report.unmatched_cell += 1
        rows.append({
            "worker_id": wr.worker_id,
            "log_income": wr.log_income,
            "education_years": wr.education_years,
            "age": wr.age,
            "experience": wr.experience,
            "female": float(wr.female),
            "urban": float(wr.urban),
            "formal": float(wr.formal),
            "occupation_code": wr.occupation_code,
            "occgroup_code": occgroup,
            "sector_code": wr.sector_code,
            "sampling_weight": wr.sampling_weight,
            "ahc_raw": ix.ahc_raw if ix else np.nan,
            "sub_raw": ix.sub_raw if ix else np.nan,
            "ahc_std": ix.ahc_std if ix else np.nan,
            "sub_std": ix.sub_std if ix else np.nan,
            "d_raw": cell.d_raw if cell else np.nan,
            "d_std": cell.d_std if cell else np.nan,
        })
    df = pd.DataFrame(rows)
    df["education_years"] = df["education_years"].astype(float)
    df["experience"] = df["experience"].astype(float)
    df["d_log"] = np.where(df["d_raw"] > 0, np.log(df["d_raw"].where(df["d_raw"] > 0)), np.nan)
    return df, report


INDEX_CSV_COLUMNS = ["occupation_code", "n_tasks", "ahc_raw", "sub_raw", "ahc_std", "sub_std"]
CELL_CSV_COLUMNS = ["sector_code", "occgroup_code", "formality_rate", "mean_education",
                    "mean_income", "largefirm_share", "d_raw", "d_std"]


def write_indices_csv(indices: Sequence[OccupationIndex], sink: IO) -> None:
    writer = csv.writer(sink)
    writer.writerow(INDEX_CSV_COLUMNS)
    for ix in indices:
        writer.writerow([ix.occupation_code, ix.n_tasks, repr(ix.ahc_raw),
                         repr(ix.sub_raw), repr(ix.ahc_std), repr(ix.sub_std)])


def read_indices_csv(source: IO) -> list[OccupationIndex]:
    reader = csv.DictReader(source)
    return [OccupationIndex(occupation_code=r["occupation_code"], n_tasks=int(r["n_tasks"]),
                            ahc_raw=float(r["ahc_raw"]), sub_raw=float(r["sub_raw"]),
                            ahc_std=float(r["ahc_std"]), sub_std=float(r["sub_std"]))
            for r in reader]


def write_cells_csv(cells: Sequence[AdoptionCell], sink: IO) -> None:
    writer = csv.writer(sink)
    writer.writerow(CELL_CSV_COLUMNS)
    for c in cells:
        writer.writerow([c.sector_code, c.occgroup_code, repr(c.formality_rate),
                         repr(c.mean_education), repr(c.mean_income),
                         repr(c.largefirm_share), repr(c.d_raw), repr(c.d_std)])


INDICATOR_CSV_COLUMNS = ["sector_code", "occgroup_code", "formality_rate",
                         "mean_education", "mean_income", "largefirm_share"]


def write_cell_indicators_csv(cells: Sequence[CellIndicators], sink: IO) -> None:
    writer = csv.writer(sink)
    writer.writerow(INDICATOR_CSV_COLUMNS)
    for c in cells:
        writer.writerow([c.sector_code, c.occgroup_code, repr(c.formality_rate),
                         repr(c.mean_education), repr(c.mean_income),
                         repr(c.largefirm_share)])


def read_cell_indicators_csv(source: IO) -> list[CellIndicators]:
    reader = csv.DictReader(source)
    return [CellIndicators(sector_code=r["sector_code"], occgroup_code=r["occgroup_code"],
                           formality_rate=float(r["formality_rate"]),
                           mean_education=float(r["mean_education"]),
                           mean_income=float(r["mean_income"]),
                           largefirm_share=float(r["largefirm_share"]))
            for r in reader]


def read_cells_csv(source: IO) -> list[AdoptionCell]:
    reader = csv.DictReader(source)
    return [AdoptionCell(sector_code=r["sector_code"], occgroup_code=r["occgroup_code"],
                         formality_rate=float(r["formality_rate"]),
                         mean_education=float(r["mean_education"]),
                         mean_income=float(r["mean_income"]),
                         largefirm_share=float(r["largefirm_share"]),
                         d_raw=float(r["d_raw"]), d_std=float(r["d_std"]))
            for r in reader]
