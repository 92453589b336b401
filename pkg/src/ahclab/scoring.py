"""Task-statement scoring: prompt rendering, response parsing, caching,
and pluggable scorer backends (deterministic mock + generic HTTP)."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Optional, Sequence

from .domain import AUG_TYPES, AugType, TaskScore
from .errors import DomainError, EnumError, ParseError, RangeError

# Non-canonical paraphrase of the scoring criteria; the original prompt used
# to produce any published score file is not distributed.
DEFAULT_TEMPLATE = """You are scoring a single occupational task statement.

Task statement: "{statement}"

Evaluate the statement on three criteria:
1. augmentation: a number from 0 to 100 for how much generative AI amplifies
   the productivity of a human performing this task as a complementary tool.
2. substitution: a number from 0 to 100 for how much AI can fully replace
   the human on this task.
3. aug_type: exactly one of information_synthesis, creative_amplification,
   communication_enhancement, decision_support, quality_assurance, none,
   pure_substitution.

Respond with a single JSON object with keys "augmentation", "substitution",
and "aug_type" and no other text.
"""


def render_prompt(statement: str, template: str = DEFAULT_TEMPLATE) -> str:
    """Interpolate a task statement into the scoring prompt.

    The statement is JSON-escaped so quotes/newlines cannot break the
    surrounding prompt structure; plain text passes through verbatim.
    """
    if not statement or not statement.strip():
        raise DomainError("task statement is empty")
    escaped = json.dumps(statement)[1:-1]
    return template.replace("{statement}", escaped)


@dataclass(frozen=True)
class ScoreTriple:
    augmentation: float
    substitution: float
    aug_type: AugType


def parse_response(raw: str) -> ScoreTriple:
    """Extract and validate the first JSON object embedded in a raw response."""
    obj = _first_json_object(raw)
    if obj is None:
        raise ParseError("no JSON object found in response", raw=raw)
    try:
        aug = float(obj["augmentation"])
        sub = float(obj["substitution"])
        aug_type = obj["aug_type"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed score object: {exc}", raw=raw)
    if not (0.0 <= aug <= 100.0 and 0.0 <= sub <= 100.0):
        raise RangeError(
            f"scores outside [0, 100]: augmentation={aug}, substitution={sub}", raw=raw)
    if aug_type not in AUG_TYPES:
        raise EnumError(f"unknown aug_type {aug_type!r}", raw=raw)
    return ScoreTriple(aug, sub, AugType(aug_type))


def _first_json_object(raw: str):
    """Scan for the first balanced {...} substring that parses as JSON."""
    decoder = json.JSONDecoder()
    idx = raw.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(raw[idx:])
        except json.JSONDecodeError:
            idx = raw.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = raw.find("{", idx + 1)
    return None


@dataclass(frozen=True)
class ScoreRequest:
    task_id: str
    statement: str
    prompt_text: str

    @classmethod
    def build(cls, task_id: str, statement: str, template: str = DEFAULT_TEMPLATE):
        return cls(task_id=task_id, statement=statement,
                   prompt_text=render_prompt(statement, template))


class ScorerBackend(ABC):
    """A scorer maps a rendered request to raw response text.

    Backends must be referentially transparent for identical request and
    configuration, or declare themselves nondeterministic, in which case
    caching is mandatory.
    """

    name: str
    deterministic: bool = True

    @abstractmethod
    def score(self, request: ScoreRequest) -> str:
        ...


class MockBackend(ScorerBackend):
    """Deterministic hash-based scorer used for tests and dry runs.

    Scores are a pure function of (seed, task_id). With target_mean/target_sd
    set, the uniform hash is pushed through the normal quantile function and
    clipped to [0, 100] so large batches match configured summary moments.
    """

    deterministic = True

    def __init__(self, seed: int, target_mean: Optional[float] = None,
                 target_sd: Optional[float] = None,
                 sub_mean: Optional[float] = None, sub_sd: Optional[float] = None):
        self.seed = int(seed)
        self.name = f"mock-{self.seed}"
        self.target_mean = target_mean
        self.target_sd = target_sd
        self.sub_mean = sub_mean
        self.sub_sd = sub_sd

    def _uniform(self, task_id: str, salt: str) -> float:
        digest = hashlib.sha256(f"{self.seed}|{salt}|{task_id}".encode()).digest()
        return (int.from_bytes(digest[:8], "big") + 0.5) / 2.0**64

    def _score_value(self, u: float, mean: Optional[float], sd: Optional[float]) -> float:
        if mean is None or sd is None:
            return round(u * 100.0, 4)
        z = _norm_ppf(u)
        return round(min(100.0, max(0.0, mean + sd * z)), 4)

    def score(self, request: ScoreRequest) -> str:
        aug = self._score_value(self._uniform(request.task_id, "aug"),
                                self.target_mean, self.target_sd)
        sub = self._score_value(self._uniform(request.task_id, "sub"),
                                self.sub_mean, self.sub_sd)
        type_idx = int(self._uniform(request.task_id, "type") * 7) % 7
        return json.dumps({
            "augmentation": aug,
            "substitution": sub,
            "aug_type": AUG_TYPES[type_idx],
        })


def _norm_ppf(p: float) -> float:
    """Standard normal quantile (Acklam rational approximation, ~1e-9)."""
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    plow, phigh = 0.02425, 1 - 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    if p > phigh:
        q = math.sqrt(-2 * math.log(1 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)


def mock_backend(seed: int, target_mean: Optional[float] = None,
                 target_sd: Optional[float] = None, **kwargs) -> MockBackend:
    return MockBackend(seed, target_mean=target_mean, target_sd=target_sd, **kwargs)


class HttpBackend(ScorerBackend):
    """Generic JSON-over-HTTP scorer: POST {model, prompt} to a configured
    endpoint with a bearer token read from a named environment variable."""

    deterministic = False

    def __init__(self, endpoint: str, model: str, auth_env: str = "SCORER_API_KEY",
                 timeout: float = 60.0, client=None):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.auth_env = auth_env
        self.timeout = timeout
        self.name = f"http-{model}"
        self._client = client or httpx.Client(timeout=timeout)

    def score(self, request: ScoreRequest) -> str:
        headers = {}
        token = os.environ.get(self.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = self._client.post(self.endpoint, headers=headers,
                                 json={"model": self.model, "prompt": request.prompt_text})
        resp.raise_for_status()
        return resp.text


class JsonlCache:
    """Append-only JSON-lines response cache keyed by request hash.

    Thread-safe: writes are serialized by a lock and flushed per entry.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[rec["key"]] = rec["raw"]
        self._fh = open(self.path, "a", encoding="utf-8")

    def get(self, key: str) -> Optional[str]:
        return self._entries.get(key)

    def put(self, key: str, raw: str) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = raw
            self._fh.write(json.dumps({"key": key, "raw": raw}) + "\n")
            self._fh.flush()

    def compact(self) -> None:
        """Rewrite the file with entries sorted by key.

        Parallel batches append in completion order; compaction makes the
        on-disk cache byte-deterministic for identical inputs.
        """
        with self._lock:
            self._fh.close()
            with open(self.path, "w", encoding="utf-8") as fh:
                for key in sorted(self._entries):
                    fh.write(json.dumps({"key": key, "raw": self._entries[key]}) + "\n")
            self._fh = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        self._fh.close()


def cache_key(backend_name: str, prompt_text: str) -> str:
    return hashlib.sha256(f"{backend_name}\n{prompt_text}".encode()).hexdigest()


@dataclass
class ScoreBatchReport:
    n_tasks: int = 0
    cache_hits: int = 0
    backend_calls: int = 0
    failures: list = field(default_factory=list)  # (task_id, message)

    def to_dict(self) -> dict:
        return {
            "n_tasks": self.n_tasks,
            "cache_hits": self.cache_hits,
            "backend_calls": self.backend_calls,
            "failures": [{"task_id": t, "message": m} for t, m in self.failures],
        }


@dataclass
class ScoredTask:
    task_id: str
    triple: Optional[ScoreTriple]  # None when the task failed


def score_batch(tasks: Sequence[ScoreRequest], backend: ScorerBackend,
                cache: Optional[JsonlCache] = None, parallelism: int = 1,
                max_retries: int = 3, backoff: float = 1.0,
                sleep: Callable[[float], None] = time.sleep):
    """Score a batch through a backend with caching and bounded retries.

    Output order matches input order regardless of completion order. A task
    that still fails after max_retries attempts is recorded in the report and
    the batch continues. Cache I/O failures propagate (fatal).
    """
    if parallelism < 1:
        raise DomainError("parallelism must be >= 1")
    if not backend.deterministic and cache is None:
        raise DomainError(f"backend {backend.name} is nondeterministic; a cache is mandatory")

    report = ScoreBatchReport(n_tasks=len(tasks))
    lock = threading.Lock()

    def run_one(req: ScoreRequest) -> ScoredTask:
        key = cache_key(backend.name, req.prompt_text)
        raw = cache.get(key) if cache is not None else None
        if raw is not None:
            with lock:
                report.cache_hits += 1
        else:
            last_exc = None
            for attempt in range(max_retries):
                try:
                    with lock:
                        report.backend_calls += 1
                    raw = backend.score(req)
                    break
                except ParseError:
                    raise
                except Exception as exc:  # transport failure: retry with backoff
                    last_exc = exc
                    if attempt < max_retries - 1:
                        sleep(backoff * 2 ** attempt)
            if raw is None:
                with lock:
                    report.failures.append((req.task_id, str(last_exc)))
                return ScoredTask(req.task_id, None)
            if cache is not None:
                cache.put(key, raw)
        try:
            triple = parse_response(raw)
        except ParseError as exc:
            with lock:
                report.failures.append((req.task_id, str(exc)))
            return ScoredTask(req.task_id, None)
        return ScoredTask(req.task_id, triple)

    if parallelism == 1 or len(tasks) <= 1:
        results = [run_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run_one, tasks))
    return results, report


SCORE_CSV_COLUMNS = ["task_id", "occupation_code", "augmentation", "substitution",
                     "aug_type", "importance"]


def write_scores_csv(scores: Sequence[TaskScore], sink: IO) -> None:
    writer = csv.writer(sink)
    writer.writerow(SCORE_CSV_COLUMNS)
    for s in scores:
        writer.writerow([s.task_id, s.occupation_code, repr(s.augmentation),
                         repr(s.substitution), s.aug_type.value, repr(s.importance)])


def read_scores_csv(source: IO) -> list[TaskScore]:
    reader = csv.DictReader(source)
    out = []
    for row in reader:
        out.append(TaskScore(
            task_id=row["task_id"],
            occupation_code=row["occupation_code"],
            augmentation=float(row["augmentation"]),
            substitution=float(row["substitution"]),
            aug_type=AugType(row["aug_type"]),
            importance=float(row["importance"]),
        ))
    return out
