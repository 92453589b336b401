"""Human- and machine-readable output: markdown regression tables,
significance stars, run manifests, and figure data files."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import IO, Optional, Sequence

import pandas as pd

from .domain import FitResult

__version__ = "0.1.0"

STAR_THRESHOLDS = ((0.01, "***"), (0.05, "**"), (0.10, "*"))


def stars(p_value: float) -> str:
    for threshold, mark in STAR_THRESHOLDS:
        if p_value < threshold:
            return mark
    return ""


def fits_to_markdown(fits: Sequence[FitResult], title: str = "") -> str:
    """Side-by-side regression table: coefficient with stars, SE in
    parentheses beneath, N and R-squared in the footer."""
    all_terms = []
    for fit in fits:
        for t in fit.terms:
            if t not in all_terms:
                all_terms.append(t)
    lines = []
    if title:
        lines.append(f"### {title}")
        lines.append("")
    header = "| term | " + " | ".join(f.spec_name for f in fits) + " |"
    sep = "|---" * (len(fits) + 1) + "|"
    lines.extend([header, sep])
    for term in all_terms:
        coefs, ses = [], []
        for fit in fits:
            if term in fit.terms:
                coefs.append(f"{fit.coef(term):+.4f}{stars(fit.pvalue(term))}")
                ses.append(f"({fit.se(term):.4f})")
            else:
                coefs.append("")
                ses.append("")
        lines.append(f"| {term} | " + " | ".join(coefs) + " |")
        lines.append("|  | " + " | ".join(ses) + " |")
    lines.append("| N | " + " | ".join(str(f.n_obs) for f in fits) + " |")
    lines.append("| R2 | " + " | ".join(f"{f.r_squared:.4f}" for f in fits) + " |")
    lines.append("")
    lines.append("SE in parentheses; *** p<0.01, ** p<0.05, * p<0.10.")
    return "\n".join(lines) + "\n"


def fits_to_csv(fits: Sequence[FitResult], sink: IO) -> None:
    writer = csv.writer(sink)
    writer.writerow(["spec_name", "term", "coefficient", "std_error", "p_value",
                     "n_obs", "r_squared", "covariance_type", "weighted"])
    for fit in fits:
        for i, term in enumerate(fit.terms):
            writer.writerow([fit.spec_name, term, repr(float(fit.coefficients[i])),
                             repr(float(fit.std_errors[i])), repr(float(fit.p_values[i])),
                             fit.n_obs, repr(float(fit.r_squared)),
                             fit.covariance_type, int(fit.weighted)])


def write_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, no timestamps."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, seed: Optional[int],
                   jobs: int, inputs: Sequence[str]) -> None:
    """Record everything needed to reproduce a run bit-exactly."""
    manifest = {
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "jobs": jobs,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs if p and Path(p).exists()},
    }
    write_json(manifest, Path(out_dir) / "manifest.json")


def sector_figure_data(table: pd.DataFrame) -> pd.DataFrame:
    """Employment-weighted mean augmentation index by sector (bar-chart data)."""
    df = table.dropna(subset=["ahc_raw"])
    grouped = df.groupby("sector_code").apply(
        lambda g: pd.Series({
            "mean_ahc": (g["ahc_raw"] * g["sampling_weight"]).sum() / g["sampling_weight"].sum(),
            "employment": g["sampling_weight"].sum(),
        }), include_groups=False)
    return grouped.reset_index().sort_values("mean_ahc", ascending=False)


def scatter_figure_data(table: pd.DataFrame) -> pd.DataFrame:
    """Occupation-level augmentation vs substitution scatter with employment
    bubble sizes."""
    df = table.dropna(subset=["ahc_raw", "sub_raw"])
    grouped = df.groupby("occupation_code").agg(
        ahc_raw=("ahc_raw", "first"),
        sub_raw=("sub_raw", "first"),
        employment=("sampling_weight", "sum"),
    )
    return grouped.reset_index()


def quantile_figure_data(taus: Sequence[float], coefs_by_term: dict) -> pd.DataFrame:
    """Long-form quantile coefficient curves: tau, term, coefficient."""
    rows = []
    for term, coefs in coefs_by_term.items():
        for tau, c in zip(taus, coefs):
            rows.append({"tau": tau, "term": term, "coefficient": c})
    return pd.DataFrame(rows)
