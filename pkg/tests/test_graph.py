import numpy as np
import pytest
from helpers import random_hin
from hypothesis import given, settings
from hypothesis import strategies as st

from hetfs.errors import (
    AmbiguousRelation,
    EndpointTypeMismatch,
    InvalidParameter,
    ParseError,
    SchemaMismatch,
    UnknownNode,
    UnknownRelation,
    UnknownType,
)
from hetfs.graph import (
    RelationType,
    Schema,
    enumerate_symmetric_metapaths,
    freeze_graph,
    neighbors,
    parse_metapath,
    parse_metapaths,
    structure_weight,
)


def names(g, idx):
    return [g.ids[i] for i in idx]


def test_g1_counts(g1):
    assert (g1.n, g1.m) == (6, 6)
    assert g1.m_by_relation == {"MA": 4, "MD": 2}
    assert [g1.count(t) for t in "MAD"] == [3, 2, 1]


def test_empty_edge_list():
    schema = Schema(["X"], [RelationType("XX", "X", "X")])
    g = freeze_graph(schema, [("x1", "X"), ("x2", "X"), ("x3", "X")], [])
    assert g.m == 0
    for step in schema.steps():
        assert g.degrees(step).tolist() == [0, 0, 0]


def test_duplicate_edge_counted_once(g1):
    schema = g1.schema
    nodes = [(x, g1.type_of(i)) for i, x in enumerate(g1.ids)]
    g = freeze_graph(schema, nodes, [("m1", "a1", "MA"), ("m1", "a1", "MA")])
    assert g.m == 1


def test_neighbors_and_structure_weight(g1):
    assert names(g1, neighbors(g1, "a1", "MA^-1")) == ["m1", "m2"]
    assert names(g1, neighbors(g1, "m3", "MD")) == []
    assert names(g1, neighbors(g1, "m2", "MA")) == ["a1", "a2"]
    assert structure_weight(g1, "a1", "MA^-1") == 2
    assert structure_weight(g1, "m3", "MD") == 0
    assert structure_weight(g1, "d1", "MD^-1") == 2


def test_neighbors_errors(g1):
    with pytest.raises(UnknownNode):
        neighbors(g1, "zz", "MA")
    with pytest.raises(UnknownRelation):
        neighbors(g1, "m1", "XY")


def test_freeze_errors_carry_line_numbers(g1):
    schema = g1.schema
    with pytest.raises(UnknownType) as exc:
        freeze_graph(schema, [("m1", "M", 2), ("q", "Q", 3)], [], source="nodes.tsv")
    assert "nodes.tsv:3" in str(exc.value)
    nodes = [("m1", "M"), ("a1", "A"), ("d1", "D")]
    with pytest.raises(UnknownNode) as exc:
        freeze_graph(schema, nodes, [("m1", "x9", "MA", 5)], edge_source="edges.tsv")
    assert "edges.tsv:5" in str(exc.value)
    with pytest.raises(EndpointTypeMismatch):
        freeze_graph(schema, nodes, [("m1", "d1", "MA", 2)])


def test_self_inverse_relation_is_symmetric():
    schema = Schema(["P"], [RelationType("co", "P", "P", inverse_name="co")])
    g = freeze_graph(schema, [("p1", "P"), ("p2", "P"), ("p3", "P")], [("p1", "p2", "co"), ("p2", "p1", "co")])
    assert g.m == 1
    assert names(g, neighbors(g, "p2", "co")) == ["p1"]
    assert names(g, neighbors(g, "p1", "co")) == ["p2"]


def test_declared_inverse_is_folded():
    schema = Schema(["M", "A"], [RelationType("acts", "M", "A", inverse_name="actedby"),
                                 RelationType("actedby", "A", "M")])
    g = freeze_graph(schema, [("m1", "M"), ("a1", "A"), ("a2", "A")],
                     [("m1", "a1", "acts"), ("a2", "m1", "actedby")])
    assert g.m == 2
    assert names(g, neighbors(g, "m1", "acts")) == ["a1", "a2"]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_transpose_consistency_and_degree_sums(seed):
    g = random_hin(seed, 40)
    for rel in g.schema.relations:
        fwd = g.schema.step(rel.name)
        inv = g.schema.inverse(fwd)
        a = g.adjacency(fwd).toarray()
        b = g.adjacency(inv).toarray()
        assert np.array_equal(a, b.T)
        assert g.degrees(fwd).sum() == g.degrees(inv).sum() == g.m_by_relation[rel.name]


# -- meta-paths ---------------------------------------------------------------------


def test_parse_short_form(g1):
    p = parse_metapath("MAM", g1.schema)
    assert p.types == ("M", "A", "M")
    assert [s.name for s in p.steps] == ["MA", "MA^-1"]
    assert p.length == 2 and p.symmetric


def test_parse_dblp_style():
    schema = Schema(["A", "P", "V"], [RelationType("AP", "A", "P"), RelationType("PV", "P", "V")])
    p = parse_metapath("APA", schema)
    assert p.symmetric and p.length == 2
    assert parse_metapath("APVPA", schema).length == 4


def test_parse_asymmetric(g1):
    # G1 has no A-D relation, so the asymmetric example uses A-M-D
    p = parse_metapath("AMD", g1.schema)
    assert not p.symmetric
    with pytest.raises(SchemaMismatch):
        parse_metapath("MAD", g1.schema)


def test_parse_ambiguous_and_bad_grammar():
    schema = Schema(["M", "A"], [RelationType("acts", "M", "A"), RelationType("directs", "M", "A")])
    with pytest.raises(AmbiguousRelation):
        parse_metapath("MAM", schema)
    p = parse_metapath("M-[acts]->A-[directs^-1]->M", schema)
    assert not p.symmetric
    with pytest.raises(ParseError):
        parse_metapath("M-[acts]->", schema)
    with pytest.raises(ParseError):
        parse_metapath("", schema)


def test_long_form_round_trip(g1):
    for text in ("MAM", "MDM", "MAMDM", "AMA", "DMAMD"):
        p = parse_metapath(text, g1.schema)
        assert parse_metapath(p.format(), g1.schema) == p


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_enumerated_paths_round_trip_and_reverse(seed):
    g = random_hin(seed, 40)
    for t in g.schema.node_types:
        for p in enumerate_symmetric_metapaths(g.schema, t, 4):
            assert parse_metapath(p.format(), g.schema) == p
            assert p.types == p.types[::-1]
            reversed_steps = tuple(g.schema.inverse(s) for s in reversed(p.steps))
            assert reversed_steps == p.steps


def test_enumerate_g1(g1):
    assert [p.short() for p in enumerate_symmetric_metapaths(g1.schema, "M", 2)] == ["MAM", "MDM"]
    assert [p.short() for p in enumerate_symmetric_metapaths(g1.schema, "D", 2)] == ["DMD"]
    four = [p.short() for p in enumerate_symmetric_metapaths(g1.schema, "M", 4)]
    assert four == ["MAM", "MDM", "MAMAM", "MDMDM"]


def test_enumerate_isolated_type_and_bad_length():
    schema = Schema(["M", "A", "X"], [RelationType("MA", "M", "A")])
    assert len(enumerate_symmetric_metapaths(schema, "X", 2)) == 0
    with pytest.raises(InvalidParameter):
        enumerate_symmetric_metapaths(schema, "M", 3)


def test_metapath_set_dedupes_and_requires_one_endpoint(g1):
    mps = parse_metapaths("MAM,MDM,MAM", g1.schema)
    assert len(mps) == 2 and mps.endpoint == "M"
    with pytest.raises(SchemaMismatch):
        parse_metapaths("MAM,AMA", g1.schema)
