"""Shared value types and worker-microdata ingestion."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, SchemaError


class AugType(str, Enum):
    INFORMATION_SYNTHESIS = "information_synthesis"
    CREATIVE_AMPLIFICATION = "creative_amplification"
    COMMUNICATION_ENHANCEMENT = "communication_enhancement"
    DECISION_SUPPORT = "decision_support"
    QUALITY_ASSURANCE = "quality_assurance"
    NONE = "none"
    PURE_SUBSTITUTION = "pure_substitution"


AUG_TYPES = [t.value for t in AugType]


@dataclass(frozen=True)
class TaskScore:
    """One scored task statement."""

    task_id: str
    occupation_code: str
    augmentation: float
    substitution: float
    aug_type: AugType
    importance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.augmentation <= 100.0:
            raise DomainError(f"augmentation {self.augmentation} outside [0, 100]")
        if not 0.0 <= self.substitution <= 100.0:
            raise DomainError(f"substitution {self.substitution} outside [0, 100]")
        if self.importance < 0:
            raise DomainError(f"importance {self.importance} must be >= 0")
        if not isinstance(self.aug_type, AugType):
            object.__setattr__(self, "aug_type", AugType(self.aug_type))


@dataclass(frozen=True)
class OccupationIndex:
    """Per-occupation augmentation/substitution index values."""

    occupation_code: str
    ahc_raw: float
    sub_raw: float
    ahc_std: float
    sub_std: float
    n_tasks: int

    def __post_init__(self):
        if self.n_tasks < 1:
            raise DomainError("n_tasks must be >= 1")


@dataclass(frozen=True)
class WorkerRecord:
    """One microdata row; income is stored only in logs."""

    worker_id: str
    log_income: float
    education_years: Optional[float]
    age: int
    experience: Optional[float]
    female: bool
    urban: bool
    formal: bool
    occupation_code: str
    sector_code: str
    sampling_weight: float

    def __post_init__(self):
        if not math.isfinite(self.log_income):
            raise DomainError("log_income must be finite")
        if not 18 <= self.age <= 65:
            raise DomainError(f"age {self.age} outside [18, 65]")
        if self.education_years is not None and self.education_years < 0:
            raise DomainError("education_years must be >= 0")
        if self.sampling_weight <= 0:
            raise DomainError("sampling_weight must be > 0")


@dataclass(frozen=True)
class AdoptionCell:
    """Sector x occupation-group cell with the composite adoption proxy."""

    sector_code: str
    occgroup_code: str
    formality_rate: float
    mean_education: float
    mean_income: float
    largefirm_share: float
    d_raw: float
    d_std: float

    def __post_init__(self):
        if not 0.0 <= self.formality_rate <= 1.0:
            raise DomainError("formality_rate outside [0, 1]")
        if not 0.0 <= self.largefirm_share <= 1.0:
            raise DomainError("largefirm_share outside [0, 1]")
        if not -1e-9 <= self.d_raw <= 1.0 + 1e-9:
            raise DomainError("d_raw outside [0, 1]")


@dataclass
class FitResult:
    """Estimated coefficients and inference for one regression."""

    spec_name: str
    terms: list
    coefficients: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    r_squared: float
    n_obs: int
    covariance_type: str = "HC1"
    weighted: bool = False
    warnings: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.terms)
        if not (len(self.coefficients) == len(self.std_errors) == len(self.p_values) == k):
            raise DomainError("terms/coefficients/std_errors/p_values length mismatch")
        if np.any(np.asarray(self.std_errors) < 0):
            raise DomainError("std_errors must be >= 0")
        p = np.asarray(self.p_values)
        if np.any((p < 0) | (p > 1)):
            raise DomainError("p_values must lie in [0, 1]")

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def se(self, term: str) -> float:
        return float(self.std_errors[self.terms.index(term)])

    def pvalue(self, term: str) -> float:
        return float(self.p_values[self.terms.index(term)])

    def to_dict(self) -> dict:
        return {
            "spec_name": self.spec_name,
            "terms": list(self.terms),
            "coefficients": [float(v) for v in self.coefficients],
            "std_errors": [float(v) for v in self.std_errors],
            "p_values": [float(v) for v in self.p_values],
            "r_squared": float(self.r_squared),
            "n_obs": int(self.n_obs),
            "covariance_type": self.covariance_type,
            "weighted": self.weighted,
            "warnings": list(self.warnings),
            "extras": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                       for k, v in self.extras.items()},
        }


def derive_experience(age: int, education_years: Optional[float]) -> Optional[float]:
    """Potential experience: max(age - education - 6, 0); None when education missing."""
    if education_years is None:
        return None
    if age < 18:
        raise DomainError(f"age {age} below 18")
    return max(age - education_years - 6.0, 0.0)


# Logical field -> default CSV column name.
DEFAULT_WORKER_SCHEMA = {
    "worker_id": "worker_id",
    "income": "income",
    "age": "age",
    "education_years": "education_years",
    "female": "female",
    "urban": "urban",
    "formal": "formal",
    "occupation_code": "occupation_code",
    "sector_code": "sector_code",
    "sampling_weight": "sampling_weight",
}

_MANDATORY_FIELDS = [
    "income", "age", "female", "urban", "formal",
    "occupation_code", "sector_code", "sampling_weight",
]


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_kept: int = 0
    dropped_age: int = 0
    dropped_income: int = 0
    parse_errors: list = field(default_factory=list)
    income_summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "dropped_age": self.dropped_age,
            "dropped_income": self.dropped_income,
            "parse_errors": [{"line": ln, "message": msg} for ln, msg in self.parse_errors],
            "income_summary": self.income_summary,
        }


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ValueError(f"not a 0/1 indicator: {raw!r}")


def ingest_workers(source: IO, schema_config: Optional[dict] = None):
    """Read worker microdata from a CSV stream.

    Rows failing the sample restrictions (age outside [18, 65], nonpositive
    income) are dropped and counted; malformed rows are collected as row-level
    errors and skipped. Missing education is retained as None. Returns
    (records, IngestReport).
    """
    schema = dict(DEFAULT_WORKER_SCHEMA)
    if schema_config:
        schema.update(schema_config)

    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise SchemaError("empty CSV: no header row")
    for logical in _MANDATORY_FIELDS:
        if schema[logical] not in reader.fieldnames:
            raise SchemaError(
                f"mandatory column {schema[logical]!r} (field {logical!r}) missing from header")
    has_id = schema["worker_id"] in reader.fieldnames
    has_educ = schema["education_years"] in reader.fieldnames

    report = IngestReport()
    records: list[WorkerRecord] = []
    incomes: list[float] = []
    for lineno, row in enumerate(reader, start=2):
        report.rows_read += 1
        try:
            income = float(row[schema["income"]])
            age_f = float(row[schema["age"]])
            if age_f != int(age_f):
                raise ValueError(f"non-integer age {age_f}")
            age = int(age_f)
            if not 18 <= age <= 65:
                report.dropped_age += 1
                continue
            if income <= 0:
                report.dropped_income += 1
                continue
            educ = None
            if has_educ:
                raw_educ = (row[schema["education_years"]] or "").strip()
                if raw_educ:
                    educ = float(raw_educ)
            rec = WorkerRecord(
                worker_id=row[schema["worker_id"]] if has_id else f"row{lineno}",
                log_income=math.log(income),
                education_years=educ,
                age=age,
                experience=derive_experience(age, educ),
                female=_parse_bool(row[schema["female"]]),
                urban=_parse_bool(row[schema["urban"]]),
                formal=_parse_bool(row[schema["formal"]]),
                occupation_code=row[schema["occupation_code"]].strip(),
                sector_code=row[schema["sector_code"]].strip(),
                sampling_weight=float(row[schema["sampling_weight"]]),
            )
        except (ValueError, KeyError, TypeError, DomainError) as exc:
            report.parse_errors.append((lineno, str(exc)))
            continue
        records.append(rec)
        incomes.append(income)
        report.rows_kept += 1

    if incomes:
        arr = np.asarray(incomes)
        report.income_summary = {
            "mean": float(arr.mean()),
            "sd": float(arr.std()),
            "min": float(arr.min()),
            "max": float(arr.max()),
        }
    return records, report


def export_workers(records: Sequence[WorkerRecord], sink: IO) -> None:
    """Write records back to the ingestion CSV schema (round-trip safe)."""
    writer = csv.writer(sink)
    writer.writerow(list(DEFAULT_WORKER_SCHEMA.values()))
    for r in records:
        writer.writerow([
            r.worker_id,
            repr(math.exp(r.log_income)),
            r.age,
            "" if r.education_years is None else repr(r.education_years),
            int(r.female),
            int(r.urban),
            int(r.formal),
            r.occupation_code,
            r.sector_code,
            repr(r.sampling_weight),
        ])
