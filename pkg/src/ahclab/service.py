"""HTTP facade over the core library.

Every endpoint is a thin adapter: pydantic models validate the payload,
the core functions do the work, and domain errors map to 422 (validation)
or 500 (numerical failure). The service holds no state between requests.
"""

from __future__ import annotations

from typing import Dict, List, Literal, Optional

import pandas as pd
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import crosswalk as cw
from . import economy, indices, scoring, validation
from .econometrics import ModelSpec, build_design, fit_model, quantile_fit
from .errors import DomainError, NumericalError, ParseError
from .reports import __version__

MAX_SIMULATED_WORKERS = 20_000

app = FastAPI(title="ahclab", version=__version__)


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ParseError as exc:
        raise HTTPException(status_code=422, detail={"message": str(exc), "raw": exc.raw})
    except DomainError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except NumericalError as exc:
        raise HTTPException(status_code=500, detail=str(exc))


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


class ParseRequest(BaseModel):
    raw: str


class ScoreTripleModel(BaseModel):
    augmentation: float
    substitution: float
    aug_type: str


@app.post("/scores/parse", response_model=ScoreTripleModel)
def scores_parse(req: ParseRequest):
    t = _run(scoring.parse_response, req.raw)
    return ScoreTripleModel(augmentation=t.augmentation, substitution=t.substitution,
                            aug_type=t.aug_type.value)


class MockScoreRequest(BaseModel):
    seed: int = 42
    target_mean: Optional[float] = None
    target_sd: Optional[float] = None
    tasks: List[Dict[str, str]] = Field(
        ..., description="Each task needs task_id and statement keys.")


class MockScoreRow(BaseModel):
    task_id: str
    augmentation: Optional[float]
    substitution: Optional[float]
    aug_type: Optional[str]
    error: Optional[str] = None


@app.post("/scores/mock", response_model=List[MockScoreRow])
def scores_mock(req: MockScoreRequest):
    backend = scoring.MockBackend(req.seed, target_mean=req.target_mean,
                                  target_sd=req.target_sd)

    def build():
        return [scoring.ScoreRequest.build(t["task_id"], t["statement"])
                for t in req.tasks]

    requests = _run(build)
    results, report = _run(scoring.score_batch, requests, backend)
    failures = dict(report.failures)
    rows = []
    for r in results:
        if r.triple is None:
            rows.append(MockScoreRow(task_id=r.task_id, augmentation=None,
                                     substitution=None, aug_type=None,
                                     error=failures.get(r.task_id, "failed")))
        else:
            rows.append(MockScoreRow(task_id=r.task_id,
                                     augmentation=r.triple.augmentation,
                                     substitution=r.triple.substitution,
                                     aug_type=r.triple.aug_type.value))
    return rows


class TaskScoreModel(BaseModel):
    task_id: str
    occupation_code: str
    augmentation: float
    substitution: float
    aug_type: str
    importance: float = 1.0


class IndexComputeRequest(BaseModel):
    scores: List[TaskScoreModel]
    variant: Literal["importance_weighted", "raw_unweighted", "binary_median",
                     "substitution_displacement"] = "importance_weighted"
    standardize: bool = True


class OccupationIndexModel(BaseModel):
    occupation_code: str
    ahc_raw: float
    sub_raw: float
    ahc_std: float
    sub_std: float
    n_tasks: int


class IndexComputeResponse(BaseModel):
    indices: List[OccupationIndexModel]
    skipped: List[Dict[str, str]]


@app.post("/index/compute", response_model=IndexComputeResponse)
def index_compute(req: IndexComputeRequest):
    def build():
        from .domain import TaskScore
        scores = [TaskScore(**s.model_dump()) for s in req.scores]
        return indices.compute_index(
            scores, indices.IndexConfig(variant=req.variant, standardize=req.standardize))

    idx, report = _run(build)
    return IndexComputeResponse(
        indices=[OccupationIndexModel(**{f: getattr(ix, f) for f in
                                         OccupationIndexModel.model_fields}) for ix in idx],
        skipped=[{"occupation_code": o, "reason": r} for o, r in report.skipped])


class CellIndicatorsModel(BaseModel):
    sector_code: str
    occgroup_code: str = ""
    formality_rate: float
    mean_education: float
    mean_income: float
    largefirm_share: float


class DProxyRequest(BaseModel):
    cells: List[CellIndicatorsModel]
    weights: Optional[List[float]] = None


class AdoptionCellModel(CellIndicatorsModel):
    d_raw: float
    d_std: float


@app.post("/index/d-proxy", response_model=List[AdoptionCellModel])
def d_proxy(req: DProxyRequest):
    def build():
        cells = [indices.CellIndicators(**c.model_dump()) for c in req.cells]
        weights = tuple(req.weights) if req.weights else indices.D_PROXY_WEIGHTS
        return indices.compute_d_proxy(cells, weights)

    out = _run(build)
    return [AdoptionCellModel(**{f: getattr(c, f) for f in AdoptionCellModel.model_fields})
            for c in out]


class ReliabilityRequest(BaseModel):
    rater_a: List[float]
    rater_b: List[float]
    adjust_level_bias: bool = True


class ReliabilityResponse(BaseModel):
    pearson_r: float
    spearman_rho: float
    krippendorff_alpha: float
    level_bias: float
    n_pairs: int


@app.post("/validate/reliability", response_model=ReliabilityResponse)
def reliability(req: ReliabilityRequest):
    rep = _run(validation.reliability_report, req.rater_a, req.rater_b,
               adjust_level_bias=req.adjust_level_bias)
    return ReliabilityResponse(**rep.to_dict())


class EstimateRequest(BaseModel):
    rows: List[Dict[str, Optional[float]]] = Field(
        ..., description="Analysis rows keyed by column name; strings not allowed, "
                         "encode categoricals numerically or use fixed_effects_values.")
    fixed_effects_values: Optional[List[str]] = None
    outcome: str
    terms: List[str]
    covariance: Literal["HC1", "classical"] = "HC1"
    weights_field: Optional[str] = None
    name: str = "ols"


class FitResponse(BaseModel):
    spec_name: str
    terms: List[str]
    coefficients: List[float]
    std_errors: List[float]
    p_values: List[float]
    r_squared: float
    n_obs: int
    covariance_type: str
    weighted: bool
    warnings: List[str]
    extras: dict


def _frame(req: EstimateRequest) -> tuple[pd.DataFrame, Optional[str]]:
    df = pd.DataFrame(req.rows)
    fe = None
    if req.fixed_effects_values is not None:
        if len(req.fixed_effects_values) != len(df):
            raise DomainError("fixed_effects_values length does not match rows")
        df["_fe"] = req.fixed_effects_values
        fe = "_fe"
    return df, fe


@app.post("/estimate/ols", response_model=FitResponse)
def estimate_ols(req: EstimateRequest):
    def build():
        df, fe = _frame(req)
        spec = ModelSpec(name=req.name, outcome=req.outcome, terms=tuple(req.terms),
                         fixed_effects=fe, weights_field=req.weights_field,
                         covariance=req.covariance)
        return fit_model(df, spec)

    fit = _run(build)
    return FitResponse(**fit.to_dict())


class QuantileRequest(EstimateRequest):
    tau: float = 0.5


class QuantileResponse(BaseModel):
    tau: float
    terms: List[str]
    coefficients: List[float]
    n_obs: int


@app.post("/estimate/quantile", response_model=QuantileResponse)
def estimate_quantile(req: QuantileRequest):
    def build():
        df, fe = _frame(req)
        if fe is not None:
            raise DomainError("quantile endpoint does not support fixed effects")
        spec = ModelSpec(name=req.name, outcome=req.outcome, terms=tuple(req.terms),
                         covariance=req.covariance)
        design = build_design(df, spec)
        beta = quantile_fit(design.y, design.X, req.tau)
        return design, beta

    design, beta = _run(build)
    return QuantileResponse(tau=req.tau, terms=design.labels,
                            coefficients=[float(b) for b in beta], n_obs=len(design.y))


class EdgeModel(BaseModel):
    from_code: str
    to_code: str
    weight: float = 1.0


class ChainRequest(BaseModel):
    edges_ab: List[EdgeModel]
    edges_bc: List[EdgeModel]
    employment: Optional[Dict[str, float]] = None


class ChainResponse(BaseModel):
    edges: List[EdgeModel]
    unmapped: List[str]
    coverage: Optional[dict] = None


@app.post("/crosswalk/chain", response_model=ChainResponse)
def crosswalk_chain(req: ChainRequest):
    def build():
        ab = cw.normalize_edges(cw.CrosswalkEdge(e.from_code, e.to_code, e.weight)
                                for e in req.edges_ab)
        bc = cw.normalize_edges(cw.CrosswalkEdge(e.from_code, e.to_code, e.weight)
                                for e in req.edges_bc)
        result = cw.chain(ab, bc)
        cov = None
        if req.employment is not None:
            cov = cw.coverage(result.edges, req.employment).to_dict()
        return result, cov

    result, cov = _run(build)
    return ChainResponse(
        edges=[EdgeModel(from_code=e.from_code, to_code=e.to_code, weight=e.weight)
               for e in result.edges],
        unmapped=result.unmapped, coverage=cov)


class SimulateRequest(BaseModel):
    seed: int = 0
    n_workers: int = Field(2000, le=MAX_SIMULATED_WORKERS, ge=100)
    n_occupations: int = 30
    n_sectors: int = 10
    formal_share: float = 0.5
    noise_sd: float = 0.4


class SimulateResponse(BaseModel):
    truth: dict
    n_workers: int
    n_occupations: int
    n_sectors: int
    fit_m4: FitResponse


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest):
    def build():
        from .robustness import m4_spec
        params = economy.EconomyParams(
            n_workers=req.n_workers, n_occupations=req.n_occupations,
            n_sectors=req.n_sectors, formal_share=req.formal_share,
            noise_sd=req.noise_sd, seed=req.seed)
        data = economy.generate_population(params)
        return data, fit_model(data.table, m4_spec())

    data, fit = _run(build)
    return SimulateResponse(truth=data.truth, n_workers=len(data.workers),
                            n_occupations=len(data.indices),
                            n_sectors=data.params.n_sectors,
                            fit_m4=FitResponse(**fit.to_dict()))
