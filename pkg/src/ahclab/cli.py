"""Command-line pipeline: scoring, index construction, crosswalks,
validation, estimation, robustness batteries, simulation, and reporting.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error, 3 numerical
failure. Every run writes a manifest.json recording the config snapshot,
seed, and input content hashes; no subcommand writes outside --out.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click
import numpy as np
import pandas as pd

from . import config as config_mod
from . import crosswalk as cw
from . import economy, indices, reports, robustness, scoring, validation
from .domain import TaskScore, export_workers, ingest_workers
from .econometrics import ModelSpec, build_design, oaxaca_blinder, quantile_fit, tsls
from .errors import AhcError, ConfigError, DomainError, NumericalError


@dataclass
class RunContext:
    config: dict
    seed: Optional[int]
    out: Path
    quiet: bool
    jobs: int

    def echo(self, message: str) -> None:
        if not self.quiet:
            click.echo(message, err=True)

    def path(self, key: str, required: bool = False) -> Optional[Path]:
        value = self.config["paths"][key]
        if not value:
            if required:
                raise ConfigError([f"missing config key paths.{key}"])
            return None
        return Path(value)

    def manifest(self, command: str, inputs) -> None:
        reports.write_manifest(self.out, command, self.config, self.seed,
                               self.jobs, [str(p) for p in inputs if p])


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Path to an INI config file.")
@click.option("--seed", type=int, default=None, help="Random seed for seeded commands.")
@click.option("--out", type=click.Path(), default="out", help="Output directory.")
@click.option("--quiet", is_flag=True, help="Suppress progress output.")
@click.option("--jobs", type=int, default=None, help="Worker-pool size (default: CPU count).")
@click.pass_context
def cli(ctx, config_path, seed, out, quiet, jobs):
    """Occupation augmentation indices and the augmented wage-equation battery."""
    cfg = config_mod.load_config(config_path)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx.obj = RunContext(config=cfg, seed=seed, out=out_dir, quiet=quiet,
                         jobs=jobs if jobs is not None else (os.cpu_count() or 1))


def _build_backend(rc: RunContext) -> scoring.ScorerBackend:
    sc = rc.config["scoring"]
    if sc["backend"] == "mock":
        seed = rc.seed if rc.seed is not None else sc["seed"]
        return scoring.MockBackend(seed, target_mean=sc["target_mean"],
                                   target_sd=sc["target_sd"])
    if not sc["endpoint"]:
        raise ConfigError(["missing config key scoring.endpoint for http backend"])
    return scoring.HttpBackend(sc["endpoint"], sc["model"], auth_env=sc["auth_env"])


@cli.command()
@click.pass_obj
def score(rc: RunContext):
    """Score a task file through the configured backend."""
    tasks_path = rc.path("tasks", required=True)
    sc = rc.config["scoring"]
    template = scoring.DEFAULT_TEMPLATE
    if sc["template_path"]:
        template = Path(sc["template_path"]).read_text(encoding="utf-8")

    tasks = pd.read_csv(tasks_path, dtype=str)
    for col in ("task_id", "occupation_code", "statement"):
        if col not in tasks.columns:
            raise DomainError(f"tasks CSV missing column {col!r}")
    requests = [scoring.ScoreRequest.build(r.task_id, r.statement, template)
                for r in tasks.itertuples()]

    backend = _build_backend(rc)
    cache_path = rc.path("cache") or rc.out / "cache.jsonl"
    cache = scoring.JsonlCache(cache_path)
    rc.echo(f"scoring {len(requests)} tasks via {backend.name}")
    results, report = scoring.score_batch(
        requests, backend, cache, parallelism=rc.jobs,
        max_retries=sc["max_retries"])
    cache.compact()
    cache.close()

    rows = []
    for res, t in zip(results, tasks.itertuples()):
        if res.triple is None:
            continue
        importance = float(getattr(t, "importance", 1.0) or 1.0)
        rows.append(TaskScore(task_id=res.task_id, occupation_code=t.occupation_code,
                              augmentation=res.triple.augmentation,
                              substitution=res.triple.substitution,
                              aug_type=res.triple.aug_type, importance=importance))
    with open(rc.out / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        scoring.write_scores_csv(rows, fh)
    reports.write_json(report.to_dict(), rc.out / "score_report.json")
    rc.manifest("score", [tasks_path])
    rc.echo(f"wrote {len(rows)} scores ({len(report.failures)} failures)")


@cli.command("build-index")
@click.pass_obj
def build_index(rc: RunContext):
    """Construct occupation indices and the adoption-cell proxy."""
    scores_path = rc.path("scores", required=True)
    with open(scores_path, encoding="utf-8") as fh:
        scores = scoring.read_scores_csv(fh)
    cfg_i = rc.config["index"]
    idx_config = indices.IndexConfig(variant=cfg_i["variant"],
                                     standardize=cfg_i["standardize"])
    idx, report = indices.compute_index(scores, idx_config)
    out_dir = rc.out / "indices"
    out_dir.mkdir(exist_ok=True)
    with open(out_dir / "indices.csv", "w", newline="", encoding="utf-8") as fh:
        indices.write_indices_csv(idx, fh)
    inputs = [scores_path]
    cells_path = rc.path("cells")
    if cells_path:
        with open(cells_path, encoding="utf-8") as fh:
            indicators = indices.read_cell_indicators_csv(fh)
        cells = indices.compute_d_proxy(indicators, config_mod.d_proxy_weights(rc.config))
        with open(out_dir / "cells.csv", "w", newline="", encoding="utf-8") as fh:
            indices.write_cells_csv(cells, fh)
        inputs.append(cells_path)
    reports.write_json({"n_occupations": report.n_occupations,
                        "skipped": [{"occupation_code": o, "reason": r}
                                    for o, r in report.skipped]},
                       rc.out / "index_report.json")
    rc.manifest("build-index", inputs)
    rc.echo(f"built {report.n_occupations} occupation indices")


@cli.command("crosswalk")
@click.pass_obj
def crosswalk_cmd(rc: RunContext):
    """Chain two occupation-code mappings and report coverage."""
    ab_path = rc.path("crosswalk_ab", required=True)
    bc_path = rc.path("crosswalk_bc", required=True)
    with open(ab_path, encoding="utf-8") as fh:
        ab = cw.read_edges(fh)
    with open(bc_path, encoding="utf-8") as fh:
        bc = cw.read_edges(fh)
    result = cw.chain(ab, bc)
    with open(rc.out / "crosswalk.csv", "w", newline="", encoding="utf-8") as fh:
        cw.write_edges(result.edges, fh)
    inputs = [ab_path, bc_path]
    emp_path = rc.path("employment")
    coverage_payload = {"unmapped_sources": result.unmapped}
    if emp_path:
        emp = pd.read_csv(emp_path)
        employment = dict(zip(emp.iloc[:, 0].astype(str), emp.iloc[:, 1].astype(float)))
        coverage_payload.update(cw.coverage(result.edges, employment).to_dict())
        inputs.append(emp_path)
    reports.write_json(coverage_payload, rc.out / "coverage.json")
    rc.manifest("crosswalk", inputs)
    rc.echo(f"chained {len(result.edges)} edges; {len(result.unmapped)} unmapped sources")


@cli.command()
@click.pass_obj
def validate(rc: RunContext):
    """Inter-rater reliability between two score files, plus external-index
    convergent/discriminant correlations when external files are supplied."""
    a_path = rc.path("scores", required=True)
    b_path = rc.path("scores_b", required=True)
    with open(a_path, encoding="utf-8") as fh:
        a_scores = {s.task_id: s.augmentation for s in scoring.read_scores_csv(fh)}
    with open(b_path, encoding="utf-8") as fh:
        b_scores = {s.task_id: s.augmentation for s in scoring.read_scores_csv(fh)}
    shared = sorted(set(a_scores) & set(b_scores))
    if len(shared) < 3:
        raise DomainError(f"only {len(shared)} paired tasks between score files")
    rep = validation.reliability_report([a_scores[t] for t in shared],
                                        [b_scores[t] for t in shared])
    reports.write_json(rep.to_dict(), rc.out / "reliability.json")
    md = ["| statistic | value |", "|---|---|"]
    for key, value in rep.to_dict().items():
        md.append(f"| {key} | {value:.6g} |")
    inputs = [a_path, b_path]

    ext_dir = rc.path("external_dir")
    idx_path = rc.path("indices")
    if ext_dir and idx_path:
        with open(idx_path, encoding="utf-8") as fh:
            idx = {ix.occupation_code: ix.ahc_raw for ix in indices.read_indices_csv(fh)}
        external = {}
        for f in sorted(Path(ext_dir).glob("*.csv")):
            ext = pd.read_csv(f)
            external[f.stem] = dict(zip(ext.iloc[:, 0].astype(str),
                                        ext.iloc[:, 1].astype(float)))
            inputs.append(f)
        rows = validation.external_validation_report(idx, external)
        with open(rc.out / "external_validation.csv", "w", newline="",
                  encoding="utf-8") as fh:
            pd.DataFrame([r.to_dict() for r in rows]).to_csv(fh, index=False)
        md.append("")
        md.append("| external index | n matched | pearson | spearman | flag |")
        md.append("|---|---|---|---|---|")
        for r in rows:
            pr = "" if r.pearson_r is None else f"{r.pearson_r:+.4f}"
            sr = "" if r.spearman_rho is None else f"{r.spearman_rho:+.4f}"
            md.append(f"| {r.index_name} | {r.n_matched} | {pr} | {sr} | {r.flag} |")
    (rc.out / "validation.md").write_text("\n".join(md) + "\n", encoding="utf-8")
    inputs.append(idx_path)
    rc.manifest("validate", inputs)
    rc.echo(f"reliability over {rep.n_pairs} pairs: alpha={rep.krippendorff_alpha:.4f}")


def _load_analysis_table(rc: RunContext):
    """Workers + scores + cells -> joined analysis table (the real-data and
    simulated paths share this exact route)."""
    workers_path = rc.path("workers", required=True)
    scores_path = rc.path("scores", required=True)
    cells_path = rc.path("cells", required=True)
    with open(workers_path, encoding="utf-8") as fh:
        workers, ingest_report = ingest_workers(fh)
    with open(scores_path, encoding="utf-8") as fh:
        scores = scoring.read_scores_csv(fh)
    cfg_i = rc.config["index"]
    idx, _ = indices.compute_index(
        scores, indices.IndexConfig(variant=cfg_i["variant"],
                                    standardize=cfg_i["standardize"]))
    with open(cells_path, encoding="utf-8") as fh:
        indicators = indices.read_cell_indicators_csv(fh)
    cells = indices.compute_d_proxy(indicators, config_mod.d_proxy_weights(rc.config))
    table, join_report = indices.attach_indices(
        workers, idx, cells, occgroup_digits=cfg_i["occgroup_digits"])
    inputs = [workers_path, scores_path, cells_path]

    instrument_path = rc.path("instrument")
    if instrument_path:
        inst = pd.read_csv(instrument_path)
        table = table.merge(inst, on="sector_code", how="left")
        inputs.append(instrument_path)
    return table, {"ingestion": ingest_report.to_dict(), "join": join_report.to_dict()}, inputs


def _d_col(rc: RunContext) -> str:
    return "d_std" if rc.config["index"]["d_transform"] == "std" else "d_log"


def _weights_field(rc: RunContext) -> Optional[str]:
    return rc.config["models"]["weights_field"] or None


@cli.command()
@click.option("--battery", type=click.Choice(["progressive", "quantiles", "tsls", "oaxaca"]),
              default="progressive")
@click.pass_obj
def estimate(rc: RunContext, battery):
    """Estimate the wage-equation battery on an analysis table."""
    table, load_report, inputs = _load_analysis_table(rc)
    cov = rc.config["models"]["covariance"]
    d_col = _d_col(rc)
    fits_dir = rc.out / "fits"
    fits_dir.mkdir(exist_ok=True)
    reports.write_json(load_report, rc.out / "load_report.json")

    if battery == "progressive":
        fits = robustness.run_progressive(table, covariance=cov, d_col=d_col,
                                          weights_field=_weights_field(rc))
        reports.write_json([f.to_dict() for f in fits], fits_dir / "progressive.json")
        with open(fits_dir / "progressive.csv", "w", newline="", encoding="utf-8") as fh:
            reports.fits_to_csv(fits, fh)
        (fits_dir / "progressive.md").write_text(
            reports.fits_to_markdown(fits, "Progressive specifications"), encoding="utf-8")
    elif battery == "quantiles":
        taus = rc.config["models"]["quantile_taus"]
        spec = robustness.m4_spec(covariance=cov, d_col=d_col)
        design = build_design(table, spec)
        rows = []
        for tau in taus:
            rc.echo(f"quantile fit tau={tau}")
            beta = quantile_fit(design.y, design.X, tau)
            for lbl, b in zip(design.labels, beta):
                # quantile-fit covariance is deliberately not reported
                rows.append({"tau": tau, "term": lbl, "coefficient": float(b),
                             "std_error": ""})
        pd.DataFrame(rows).to_csv(fits_dir / "quantiles.csv", index=False)
    elif battery == "tsls":
        inst = rc.config["models"]["instrument"]
        if inst not in table.columns:
            raise DomainError(f"instrument column {inst!r} not in analysis table "
                              "(supply paths.instrument)")
        exog_spec = ModelSpec(name="tsls_exog", outcome="log_income",
                              terms=("education_years", "experience",
                                     "experience:experience", "ahc_std", "sub_std",
                                     "female", "urban"),
                              covariance=cov)
        design = build_design(table, exog_spec, extra_fields=[d_col, inst])
        fit = tsls(design.y, design.X, design.extra[d_col], design.extra[inst],
                   exog_labels=design.labels, endog_label=d_col, covariance=cov,
                   spec_name="tsls")
        reports.write_json(fit.to_dict(), fits_dir / "tsls.json")
        rc.echo(f"first-stage F = {fit.extras['first_stage_F']:.2f}")
    else:  # oaxaca
        spec = ModelSpec(name="oaxaca", outcome="log_income",
                         terms=("education_years", "experience", "experience:experience",
                                "ahc_std", "sub_std", d_col, f"ahc_std:{d_col}",
                                "female", "urban"),
                         covariance=cov)
        result = oaxaca_blinder(table[table["formal"] > 0.5],
                                table[table["formal"] <= 0.5], spec,
                                reference=rc.config["models"]["oaxaca_reference"])
        reports.write_json(result.to_dict(), fits_dir / "oaxaca.json")
    rc.manifest(f"estimate:{battery}", inputs)
    rc.echo(f"estimate battery {battery!r} complete")


@cli.command("robustness")
@click.option("--battery", type=click.Choice(["placebo", "jackknife", "heterogeneity",
                                              "triple", "all"]), default="all")
@click.option("--n-perm", type=int, default=199)
@click.pass_obj
def robustness_cmd(rc: RunContext, battery, n_perm):
    """Placebo permutation, jackknife, heterogeneity, and triple interaction."""
    table, _, inputs = _load_analysis_table(rc)
    cov = rc.config["models"]["covariance"]
    d_col = _d_col(rc)
    out_dir = rc.out / "robustness"
    out_dir.mkdir(exist_ok=True)
    spec = robustness.m4_spec(covariance=cov, d_col=d_col)
    term = f"ahc_std:{d_col}"

    if battery in ("placebo", "all"):
        seed = rc.seed if rc.seed is not None else 0
        result = robustness.placebo_permutation(table, spec, n_perm=n_perm,
                                                seed=seed, beta_term=term)
        reports.write_json(result.to_dict(), out_dir / "placebo.json")
        rc.echo(f"placebo p-value: {result.p_value:.4f}")
    if battery in ("jackknife", "all"):
        result = robustness.jackknife_loso(table, spec, beta_term=term)
        reports.write_json(result.to_dict(), out_dir / "jackknife.json")
        rc.echo(f"jackknife sign changes: {result.sign_changes}")
    if battery in ("heterogeneity", "all"):
        splits = {
            "formality": robustness.FORMALITY_SPLIT,
            "gender": robustness.GENDER_SPLIT,
            "age": robustness.AGE_COHORTS,
            "sector": robustness.SECTOR_SPLIT,
            "education": robustness.education_split(),
        }
        rows = []
        for split_name, split in splits.items():
            for row in robustness.heterogeneity(table, spec, split):
                entry = {"split": split_name, "group": row.group, "n": row.n,
                         "flag": row.flag}
                if row.fit is not None and term in row.fit.terms:
                    entry["beta2"] = row.fit.coef(term)
                    entry["se"] = row.fit.se(term)
                    entry["p_value"] = row.fit.pvalue(term)
                rows.append(entry)
        pd.DataFrame(rows).to_csv(out_dir / "heterogeneity.csv", index=False)
        md = ["| split | group | beta2 | p | N |", "|---|---|---|---|---|"]
        for r in rows:
            beta = f"{r.get('beta2', float('nan')):+.4f}" if "beta2" in r else r["flag"]
            p = f"{r.get('p_value', float('nan')):.3f}" if "p_value" in r else ""
            md.append(f"| {r['split']} | {r['group']} | {beta} | {p} | {r['n']} |")
        (out_dir / "heterogeneity.md").write_text("\n".join(md) + "\n", encoding="utf-8")
    if battery in ("triple", "all"):
        fit = robustness.triple_interaction(table, covariance=cov, d_col=d_col)
        reports.write_json(fit.to_dict(), out_dir / "triple.json")
        (out_dir / "triple.md").write_text(
            reports.fits_to_markdown([fit], "Triple interaction"), encoding="utf-8")
        rc.echo(f"triple coefficient: {fit.extras['triple_coefficient']:+.4f}")
    rc.manifest(f"robustness:{battery}", inputs)


@cli.command()
@click.option("--recover", "n_seeds", type=int, default=0,
              help="Also run the recovery harness over this many seeds.")
@click.option("--placebo/--no-placebo", "include_placebo", default=False,
              help="Include the placebo test in each recovery seed.")
@click.pass_obj
def simulate(rc: RunContext, n_seeds, include_placebo):
    """Generate a synthetic economy (and optionally run parameter recovery)."""
    seed = rc.seed if rc.seed is not None else 0
    params = config_mod.economy_params(rc.config, seed)
    rc.echo(f"generating population: n={params.n_workers}, seed={seed}")
    data = economy.generate_population(params)

    with open(rc.out / "workers.csv", "w", newline="", encoding="utf-8") as fh:
        export_workers(data.workers, fh)
    with open(rc.out / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        scoring.write_scores_csv(data.scores, fh)
    with open(rc.out / "cells.csv", "w", newline="", encoding="utf-8") as fh:
        indices.write_cell_indicators_csv(data.cell_indicators, fh)
    inst = (data.table[["sector_code", "capital_intensity"]]
            .drop_duplicates().sort_values("sector_code"))
    inst.to_csv(rc.out / "instrument.csv", index=False)
    reports.write_json(data.truth, rc.out / "truth.json")
    reports.write_json(params.to_dict(), rc.out / "params.json")

    if n_seeds:
        rc.echo(f"recovery harness: {n_seeds} seeds, jobs={rc.jobs}")
        report = economy.recovery_harness(params, n_seeds, jobs=rc.jobs,
                                          include_placebo=include_placebo)
        reports.write_json(report.to_dict(), rc.out / "recovery.json")
        rc.echo(f"recovery summary: {json.dumps(report.summary, sort_keys=True)}")
    rc.manifest("simulate", [])
    rc.echo("simulate complete")


@cli.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True,
              help="Directory of a completed simulate run (workers/scores/cells).")
@click.option("--svg", is_flag=True, help="Also render self-contained SVG figures.")
@click.pass_obj
def report(rc: RunContext, run_dir, svg):
    """Assemble the markdown report and per-figure plot-data CSVs."""
    run = Path(run_dir)
    rc.config["paths"]["workers"] = str(run / "workers.csv")
    rc.config["paths"]["scores"] = str(run / "scores.csv")
    rc.config["paths"]["cells"] = str(run / "cells.csv")
    if (run / "instrument.csv").exists():
        rc.config["paths"]["instrument"] = str(run / "instrument.csv")
    table, load_report, inputs = _load_analysis_table(rc)
    cov = rc.config["models"]["covariance"]
    d_col = _d_col(rc)

    fits = robustness.run_progressive(table, covariance=cov, d_col=d_col)
    md = [reports.fits_to_markdown(fits, "Progressive specifications")]

    fig_dir = rc.out / "figures"
    fig_dir.mkdir(exist_ok=True)
    sector = reports.sector_figure_data(table)
    sector.to_csv(fig_dir / "sector_ahc.csv", index=False)
    scatter = reports.scatter_figure_data(table)
    scatter.to_csv(fig_dir / "ahc_scatter.csv", index=False)

    taus = rc.config["models"]["quantile_taus"]
    spec = robustness.m4_spec(covariance=cov, d_col=d_col)
    design = build_design(table, spec)
    focus = ["ahc_std", f"ahc_std:{d_col}"]
    curves = {t: [] for t in focus}
    for tau in taus:
        beta = quantile_fit(design.y, design.X, tau)
        for t in focus:
            curves[t].append(float(beta[design.labels.index(t)]))
    qdf = reports.quantile_figure_data(taus, curves)
    qdf.to_csv(fig_dir / "quantile_curves.csv", index=False)

    md.append("### Quantile coefficient curves\n")
    md.append("| tau | " + " | ".join(focus) + " |")
    md.append("|---|" + "---|" * len(focus))
    for i, tau in enumerate(taus):
        md.append(f"| {tau} | " + " | ".join(f"{curves[t][i]:+.4f}" for t in focus) + " |")

    (rc.out / "report.md").write_text("\n".join(md) + "\n", encoding="utf-8")
    if svg:
        _render_svgs(fig_dir, sector, scatter, qdf)
    rc.manifest("report", inputs)
    rc.echo("report complete")


def _render_svgs(fig_dir: Path, sector, scatter, quantiles) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # Pinned hashsalt and suppressed date metadata keep repeated runs
    # hash-identical.
    matplotlib.rcParams["svg.hashsalt"] = "ahclab"
    meta = {"Date": None}
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(sector["sector_code"], sector["mean_ahc"])
    ax.set_ylabel("mean augmentation index")
    ax.tick_params(axis="x", rotation=90)
    fig.tight_layout()
    fig.savefig(fig_dir / "sector_ahc.svg", format="svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 5))
    ax.scatter(scatter["ahc_raw"], scatter["sub_raw"],
               s=20 * scatter["employment"] / scatter["employment"].max() * 10, alpha=0.5)
    ax.set_xlabel("augmentation index")
    ax.set_ylabel("substitution index")
    fig.tight_layout()
    fig.savefig(fig_dir / "ahc_scatter.svg", format="svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for term, grp in quantiles.groupby("term"):
        ax.plot(grp["tau"], grp["coefficient"], marker="o", label=term)
    ax.set_xlabel("tau")
    ax.set_ylabel("coefficient")
    ax.legend()
    fig.tight_layout()
    fig.savefig(fig_dir / "quantile_curves.svg", format="svg", metadata=meta)
    plt.close(fig)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.UsageError as exc:
        click.echo(exc.format_message(), err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.exceptions.Abort:
        return 1
    except ConfigError as exc:
        for problem in exc.problems:
            click.echo(f"config error: {problem}", err=True)
        return 1
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except np.linalg.LinAlgError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except AhcError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
