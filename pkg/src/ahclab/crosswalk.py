"""Occupation-taxonomy crosswalk chaining and coverage."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional, Sequence

from .errors import DomainError, SchemaError

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class CrosswalkEdge:
    from_code: str
    to_code: str
    weight: float

    def __post_init__(self):
        if self.weight <= 0:
            raise DomainError(f"edge weight must be > 0, got {self.weight}")


def normalize_edges(edges: Iterable[CrosswalkEdge]) -> list[CrosswalkEdge]:
    """Merge duplicate (from, to) pairs and rescale each from_code to sum 1."""
    merged: dict[str, dict[str, float]] = {}
    for e in edges:
        merged.setdefault(e.from_code, {})
        merged[e.from_code][e.to_code] = merged[e.from_code].get(e.to_code, 0.0) + e.weight
    out = []
    for src in sorted(merged):
        total = sum(merged[src].values())
        for dst in sorted(merged[src]):
            out.append(CrosswalkEdge(src, dst, merged[src][dst] / total))
    return out


def check_normalized(edges: Sequence[CrosswalkEdge]) -> None:
    sums: dict[str, float] = {}
    for e in edges:
        sums[e.from_code] = sums.get(e.from_code, 0.0) + e.weight
    bad = {s: v for s, v in sums.items() if abs(v - 1.0) > NORMALIZATION_TOL}
    if bad:
        raise DomainError(f"edges not normalized for from_codes: {sorted(bad)}")


@dataclass
class ChainResult:
    edges: list
    unmapped: list = field(default_factory=list)  # a-codes with zero downstream mass


def chain(edges_ab: Sequence[CrosswalkEdge], edges_bc: Sequence[CrosswalkEdge]) -> ChainResult:
    """Compose two normalized mappings a->b and b->c into a->c.

    Path weights multiply and duplicate (a, c) pairs merge by summing; the
    output is renormalized per from_code so sources with only partial
    downstream coverage still sum to 1. Sources whose every b lacks outgoing
    edges are reported as unmapped, not raised.
    """
    check_normalized(edges_ab)
    check_normalized(edges_bc)
    bc: dict[str, list[CrosswalkEdge]] = {}
    for e in edges_bc:
        bc.setdefault(e.from_code, []).append(e)

    acc: dict[str, dict[str, float]] = {}
    sources = []
    for e in edges_ab:
        if e.from_code not in acc:
            acc[e.from_code] = {}
            sources.append(e.from_code)
        for nxt in bc.get(e.to_code, ()):
            key = nxt.to_code
            acc[e.from_code][key] = acc[e.from_code].get(key, 0.0) + e.weight * nxt.weight

    edges_out = []
    unmapped = []
    for src in sorted(sources):
        targets = acc[src]
        total = sum(targets.values())
        if total == 0.0:
            unmapped.append(src)
            continue
        for dst in sorted(targets):
            edges_out.append(CrosswalkEdge(src, dst, targets[dst] / total))
    return ChainResult(edges=edges_out, unmapped=unmapped)


@dataclass
class CoverageReport:
    covered_weight: float
    total_weight: float
    ratio: float
    unmapped_codes: list

    def to_dict(self) -> dict:
        return {
            "covered_weight": self.covered_weight,
            "total_weight": self.total_weight,
            "ratio": self.ratio,
            "unmapped_codes": list(self.unmapped_codes),
        }


def coverage(edges: Sequence[CrosswalkEdge], employment: Mapping[str, float]) -> CoverageReport:
    """Employment-weighted share of target codes reachable by at least one edge."""
    if any(w < 0 for w in employment.values()):
        raise DomainError("employment weights must be >= 0")
    total = float(sum(employment.values()))
    if total == 0.0:
        raise DomainError("all employment weights are zero")
    reachable = {e.to_code for e in edges}
    covered = sum(w for code, w in employment.items() if code in reachable)
    unmapped = sorted(code for code in employment if code not in reachable)
    return CoverageReport(covered_weight=float(covered), total_weight=total,
                          ratio=float(covered) / total, unmapped_codes=unmapped)


def read_edges(source: IO) -> list[CrosswalkEdge]:
    """Read a from_code,to_code[,weight] CSV; absent weights split uniformly."""
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise SchemaError("empty crosswalk CSV")
    for col in ("from_code", "to_code"):
        if col not in reader.fieldnames:
            raise SchemaError(f"crosswalk CSV missing column {col!r}")
    has_weight = "weight" in reader.fieldnames
    raw = []
    for row in reader:
        w = 1.0
        if has_weight and (row["weight"] or "").strip():
            w = float(row["weight"])
        raw.append(CrosswalkEdge(row["from_code"].strip(), row["to_code"].strip(), w))
    return normalize_edges(raw)


def write_edges(edges: Sequence[CrosswalkEdge], sink: IO) -> None:
    writer = csv.writer(sink)
    writer.writerow(["from_code", "to_code", "weight"])
    for e in edges:
        writer.writerow([e.from_code, e.to_code, repr(e.weight)])
