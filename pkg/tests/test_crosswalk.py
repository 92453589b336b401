import io

import pytest

from ahclab.crosswalk import (CrosswalkEdge, chain, check_normalized, coverage,
                              normalize_edges, read_edges, write_edges)
from ahclab.errors import DomainError, SchemaError


def E(a, b, w):
    return CrosswalkEdge(a, b, w)


def test_edge_weight_must_be_positive():
    with pytest.raises(DomainError):
        E("a", "b", 0.0)
    with pytest.raises(DomainError):
        E("a", "b", -0.5)


def test_normalize_merges_and_rescales():
    out = normalize_edges([E("a", "x", 2.0), E("a", "y", 1.0), E("a", "x", 1.0)])
    assert out == [E("a", "x", 0.75), E("a", "y", 0.25)]
    check_normalized(out)


def test_check_normalized_rejects_partial():
    with pytest.raises(DomainError):
        check_normalized([E("a", "x", 0.6)])


def test_chain_multiplies_and_renormalizes():
    ab = normalize_edges([E("a1", "b1", 0.7), E("a1", "b2", 0.3), E("a2", "b2", 1.0)])
    bc = normalize_edges([E("b1", "c1", 1.0), E("b2", "c1", 0.5), E("b2", "c2", 0.5)])
    res = chain(ab, bc)
    by_pair = {(e.from_code, e.to_code): e.weight for e in res.edges}
    assert by_pair[("a1", "c1")] == pytest.approx(0.7 + 0.3 * 0.5)
    assert by_pair[("a1", "c2")] == pytest.approx(0.15)
    assert by_pair[("a2", "c1")] == pytest.approx(0.5)
    assert res.unmapped == []
    check_normalized(res.edges)


def test_chain_renormalizes_partial_downstream():
    # half of a1's mass dies at b2 (no outgoing edges) -> renormalized
    ab = normalize_edges([E("a1", "b1", 0.5), E("a1", "b2", 0.5)])
    bc = normalize_edges([E("b1", "c1", 1.0)])
    res = chain(ab, bc)
    assert res.edges == [E("a1", "c1", 1.0)]


def test_chain_reports_unmapped_sources():
    ab = normalize_edges([E("a1", "b9", 1.0), E("a2", "b1", 1.0)])
    bc = normalize_edges([E("b1", "c1", 1.0)])
    res = chain(ab, bc)
    assert res.unmapped == ["a1"]
    assert [e.from_code for e in res.edges] == ["a2"]


def test_chain_requires_normalized_inputs():
    with pytest.raises(DomainError):
        chain([E("a", "b", 0.4)], [E("b", "c", 1.0)])


def test_coverage():
    edges = [E("a", "c1", 1.0)]
    rep = coverage(edges, {"c1": 100.0, "c2": 50.0, "c3": 50.0})
    assert rep.covered_weight == 100.0
    assert rep.total_weight == 200.0
    assert rep.ratio == pytest.approx(0.5)
    assert rep.unmapped_codes == ["c2", "c3"]


def test_coverage_all_zero_employment():
    with pytest.raises(DomainError):
        coverage([E("a", "c1", 1.0)], {"c1": 0.0, "c2": 0.0})
    with pytest.raises(DomainError):
        coverage([E("a", "c1", 1.0)], {"c1": -1.0})


def test_read_edges_without_weight_splits_uniformly():
    src = io.StringIO("from_code,to_code\nA,X\nA,Y\nB,X\n")
    out = read_edges(src)
    assert out == [E("A", "X", 0.5), E("A", "Y", 0.5), E("B", "X", 1.0)]


def test_read_edges_missing_column():
    with pytest.raises(SchemaError):
        read_edges(io.StringIO("source,target\nA,X\n"))
    with pytest.raises(SchemaError):
        read_edges(io.StringIO(""))


def test_write_read_roundtrip():
    edges = normalize_edges([E("a", "x", 1.0), E("a", "y", 3.0)])
    buf = io.StringIO()
    write_edges(edges, buf)
    buf.seek(0)
    assert read_edges(buf) == edges
