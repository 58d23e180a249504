import json
import math

import numpy as np
import pytest
from helpers import all_metapaths, random_weight_model
from hypothesis import given, settings
from hypothesis import strategies as st

from hetfs.engine import (
    BoundedMinHeap,
    build_weight_model,
    canonical_step_factor,
    hetfs_bruteforce,
    hetfs_montecarlo,
    hetfs_single_source,
    metapath_free_query,
    select_topk,
    topk,
    unit_weight_model,
)
from hetfs.errors import (
    AsymmetricMetaPath,
    InvalidWalkCount,
    NotNeighbor,
    TypeMismatch,
    UnsupportedContentMode,
)
from hetfs.graph import (
    RelationType,
    Schema,
    freeze_graph,
    make_metapath,
    parse_metapath,
)
from hetfs.weights import compute_edge_contribution, override_contribution

G1_TITLES = {"title": {"m1": "terminator future", "m2": "terminator", "m3": "ship"}}


def dense_oracle(wm, path):
    """All-pairs score matrix for one meta-path by dense level recursion with the diagonal pinned."""
    g = wm.graph
    half = path.half
    mats = []
    for step in half:
        adj = g.adjacency(step).toarray()
        beta = g.degrees(g.schema.inverse(step))
        lo = g.type_range(step.dst)[0]
        w = np.zeros_like(adj, dtype=float)
        for x, x2 in zip(*np.nonzero(adj)):
            gx2 = lo + x2
            w[x, x2] = math.sqrt(wm.c * wm.mu(step)) * wm.chi[gx2] * wm.alpha[gx2] / beta[x2]
        mats.append(w)
    s = np.eye(mats[-1].shape[1])
    for w in reversed(mats):
        s = w @ s @ w.T
        np.fill_diagonal(s, 1.0)
    return s


def test_step_factor_examples(g1):
    unit = unit_weight_model(g1, c=0.8)
    assert canonical_step_factor(unit, "m1", "a1", "MA") == pytest.approx(math.sqrt(0.8) / 2)
    cg = override_contribution(compute_edge_contribution(g1), "MA", 0.0)
    assert canonical_step_factor(unit_weight_model(g1, contribution=cg), "m1", "a1", "MA") == 0.0
    wm = build_weight_model(g1, G1_TITLES)
    d1 = g1.index("d1")
    expect = math.sqrt(0.8 * wm.contribution.mu["MD"]) * wm.alpha[d1] * wm.chi[d1] / 2
    assert canonical_step_factor(wm, "m1", "d1", "MD") == pytest.approx(expect)
    with pytest.raises(NotNeighbor):
        canonical_step_factor(wm, "m3", "d1", "MD")


def test_g1_bruteforce(g1_real_mu):
    wm = g1_real_mu
    mu = wm.contribution.mu["MA"]
    assert hetfs_bruteforce(wm, "m1", "m2", "MAM") == pytest.approx(0.8 * mu / 4, abs=1e-15)
    assert hetfs_bruteforce(wm, "m1", "m3", "MAM") == 0.0
    for x in ("m1", "m2", "m3"):
        assert hetfs_bruteforce(wm, x, x, "MAM") == 1.0
    assert dense_oracle(wm, parse_metapath("MAM", wm.graph.schema))[0, 1] == pytest.approx(0.8 * mu / 4)


def test_g1_single_source(g1_real_mu):
    wm = g1_real_mu
    vec = hetfs_single_source(wm, "m1", "MAM")
    mu = wm.contribution.mu["MA"]
    assert vec["m1"] == 1.0
    assert vec["m2"] == pytest.approx(0.8 * mu / 4, abs=1e-15)
    assert vec["m3"] == 0.0
    both = hetfs_single_source(wm, "m1", "MAM,MDM").values
    split = hetfs_single_source(wm, "m1", "MAM").values + hetfs_single_source(wm, "m1", "MDM").values
    split[0] = 1.0
    assert both == pytest.approx(split, abs=1e-15)


def test_validation(g1_real_mu):
    wm = g1_real_mu
    with pytest.raises(TypeMismatch):
        hetfs_single_source(wm, "a1", "MAM")
    with pytest.raises(TypeMismatch):
        hetfs_bruteforce(wm, "m1", "a1", "MAM")
    with pytest.raises(AsymmetricMetaPath):
        hetfs_bruteforce(wm, "a1", "a2", "AMD")
    with pytest.raises(AsymmetricMetaPath):
        hetfs_single_source(wm, "a1", "AMD")


@pytest.mark.parametrize("seed", range(8))
def test_engines_agree_with_dense_oracle(seed):
    wm = random_weight_model(seed, 30)
    g = wm.graph
    for path in all_metapaths(g, 4):
        oracle = dense_oracle(wm, path)
        lo, hi = g.type_range(path.start)
        for u in range(lo, hi):
            vec = hetfs_single_source(wm, u, [path]).values
            assert vec == pytest.approx(oracle[u - lo], abs=1e-12)
            for v in range(lo, min(hi, lo + 5)):
                assert hetfs_bruteforce(wm, u, v, [path]) == pytest.approx(oracle[u - lo, v - lo], abs=1e-12)
        # symmetric by construction
        assert np.allclose(oracle, oracle.T, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_zero_contribution_cuts_tours_at_that_level(seed):
    wm = random_weight_model(seed, 30)
    g = wm.graph
    rel = g.schema.relations[0].name
    zeroed = wm.with_options(contribution=override_contribution(wm.contribution, rel, 0.0))
    checked = 0
    for path in all_metapaths(g, 4):
        levels = [j for j, s in enumerate(path.half) if s.relation == rel]
        if not levels:
            continue
        first = levels[0]
        lo, hi = g.type_range(path.start)
        for u in range(lo, hi):
            vec = hetfs_single_source(zeroed, u, [path]).values
            if first == 0:
                # every tour needs the zeroed hop: only the diagonal survives
                assert np.count_nonzero(vec) == 1 and vec[u - lo] == 1.0
            else:
                # surfers meeting before the zeroed hop still count
                cut = make_metapath(g.schema, path.half[:first] + tuple(
                    g.schema.inverse(s) for s in reversed(path.half[:first])))
                assert vec == pytest.approx(hetfs_single_source(wm, u, [cut]).values, abs=1e-15)
            checked += 1
    assert checked


@pytest.mark.parametrize("seed", range(5))
def test_argmax_invariance_length_two(seed):
    wm = random_weight_model(seed, 40)
    g = wm.graph
    scaled_mu = {r: 2.5 * m for r, m in wm.contribution.mu.items()}
    cg = type(wm.contribution)(g.schema, wm.contribution.rf, wm.contribution.irf, scaled_mu)
    scaled = wm.with_options(contribution=cg)
    for t in g.schema.node_types:
        paths = [p for p in all_metapaths(g, 2) if p.start == t]
        if not paths:
            continue
        lo, hi = g.type_range(t)
        for u in range(lo, hi):
            a = topk(wm, u, paths, k=10, epsilon=0.0)
            b = topk(scaled, u, paths, k=10, epsilon=0.0)
            assert a.nodes() == b.nodes()
            for (_, x), (_, y) in zip(a.items, b.items):
                assert y == pytest.approx(2.5 * x)


def test_ablation_flags(g1):
    wm = build_weight_model(g1, G1_TITLES)
    assert not np.all(wm.chi == 1.0)
    assert np.all(wm.with_options(unit_chi=True).chi == 1.0)
    assert np.all(wm.with_options(unit_alpha=True).alpha == 1.0)
    assert wm.with_options(unit_mu=True).mu("MA") == 1.0
    assert np.all(wm.with_options(content_mode="off").chi == 1.0)


def test_pair_mode(g1):
    wm = build_weight_model(g1, G1_TITLES, content_mode="pair")
    with pytest.raises(UnsupportedContentMode):
        hetfs_single_source(wm, "m1", "MAM")
    # a1 has no text, so relatedness at the meeting actor is neutral
    node = wm.with_options(content_mode="off")
    assert hetfs_bruteforce(wm, "m1", "m2", "MAM") == pytest.approx(hetfs_bruteforce(node, "m1", "m2", "MAM"))
    res = topk(wm, "m1", "MAM,MDM", k=5)
    assert res.nodes()[0] == "m2"
    # movie-movie relatedness enters when the tour meets on movies
    mid = hetfs_bruteforce(wm, "a1", "a2", "AMA")
    beta = 2 * 2  # m2 has two actors on each side
    alpha = wm.alpha[g1.index("m2")] ** 2
    rel = wm.relatedness(g1.index("m2"), g1.index("m2"))
    assert mid == pytest.approx(0.8 * wm.mu("MA") * alpha * rel / beta)


# -- Monte Carlo -------------------------------------------------------------------


def test_mc_basics(g1_real_mu):
    wm = g1_real_mu
    assert hetfs_montecarlo(wm, "m1", "m1", "MAM") == 1.0
    with pytest.raises(InvalidWalkCount):
        hetfs_montecarlo(wm, "m1", "m2", "MAM", walks=0)
    est = hetfs_montecarlo(wm, "m1", "m2", "MAM", walks=200_000, seed=1)
    assert est == pytest.approx(0.8 * wm.contribution.mu["MA"] / 4, rel=0.05)
    assert hetfs_montecarlo(wm, "m1", "m3", "MAM", walks=1000) == 0.0


def test_mc_worker_count_does_not_matter():
    wm = random_weight_model(3, 40)
    g = wm.graph
    path = all_metapaths(g, 4)[-1]
    lo, hi = g.type_range(path.start)
    one = hetfs_montecarlo(wm, lo, lo + 1, [path], walks=50_000, seed=9, workers=1)
    three = hetfs_montecarlo(wm, lo, lo + 1, [path], walks=50_000, seed=9, workers=3)
    assert one == three
    a = hetfs_montecarlo(wm, lo, "ALL", [path], walks=50_000, seed=9, workers=1).values
    b = hetfs_montecarlo(wm, lo, "ALL", [path], walks=50_000, seed=9, workers=4).values
    assert np.array_equal(a, b)


def test_mc_all_partners_close_to_exact():
    wm = random_weight_model(5, 40)
    g = wm.graph
    for path in all_metapaths(g, 4)[:6]:
        lo, _ = g.type_range(path.start)
        exact = hetfs_single_source(wm, lo, [path]).values
        est = hetfs_montecarlo(wm, lo, "ALL", [path], walks=200_000, seed=2).values
        assert est == pytest.approx(exact, abs=max(0.01, 0.05 * exact.max()))


def test_mc_pair_mode(g1):
    wm = build_weight_model(g1, G1_TITLES, content_mode="pair")
    exact = hetfs_bruteforce(wm, "a1", "a2", "AMA")
    est = hetfs_montecarlo(wm, "a1", "a2", "AMA", walks=200_000, seed=4)
    assert est == pytest.approx(exact, rel=0.05)
    with pytest.raises(UnsupportedContentMode):
        hetfs_montecarlo(wm, "a1", "ALL", "AMA")


# -- top-k ------------------------------------------------------------------------------


def test_topk_g1(g1_real_mu):
    wm = g1_real_mu
    res = topk(wm, "m1", "MAM,MDM", k=5)
    vec = hetfs_single_source(wm, "m1", "MAM,MDM").as_dict()
    del vec["m1"]
    expected = sorted((x for x in vec.items() if x[1] >= 5e-6), key=lambda kv: (-kv[1], kv[0]))
    assert res.items == expected
    assert res.nodes()[0] == "m2"
    assert len(topk(wm, "m1", "MAM,MDM", k=100, epsilon=0.0).items) == 2
    assert topk(wm, "m1", "MAM,MDM", k=5, epsilon=1.0).items == []
    mc = topk(wm, "m1", "MAM,MDM", k=5, engine="mc", walks=100_000)
    assert mc.nodes()[0] == "m2" and mc.engine == "montecarlo"


def test_topk_serialization(g1_real_mu):
    res = topk(g1_real_mu, "m1", "MAM,MDM", k=5)
    lines = res.to_tsv().splitlines()
    assert lines[0] == "rank\tnode_id\tscore"
    assert lines[1].startswith("1\tm2\t")
    assert lines[-1].startswith("# elapsed_ms\t")
    assert "elapsed" not in res.to_tsv(timing=False)
    data = json.loads(res.to_json())
    assert data["results"][0]["node_id"] == "m2"


def test_metapath_free(g1_real_mu):
    wm = g1_real_mu
    free = metapath_free_query(wm, "m1", max_len=2, k=5)
    listed = topk(wm, "m1", "MAM,MDM", k=5)
    assert free.items == listed.items
    s = hetfs_single_source(wm, "m1", "MAM")["m2"] + hetfs_single_source(wm, "m1", "MDM")["m2"]
    assert dict(free.items)["m2"] == pytest.approx(s)
    schema = Schema(["M", "A", "X"], [RelationType("MA", "M", "A")])
    g = freeze_graph(schema, [("m", "M"), ("a", "A"), ("x", "X")], [("m", "a", "MA")])
    assert metapath_free_query(unit_weight_model(g), "x", 2).items == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([0.0, 0.1, 0.2, 0.5, 0.7, 1.0]), min_size=1, max_size=40), st.integers(1, 12),
       st.floats(0, 0.6))
def test_select_topk_matches_full_sort(values, k, eps):
    vals = np.array(values)
    got = select_topk(vals, 100, None, k, eps)
    ranked = sorted(((100 + i, v) for i, v in enumerate(values) if v >= eps), key=lambda t: (-t[1], t[0]))
    assert got == ranked[:k]


def test_heap_ties_prefer_small_ids():
    heap = BoundedMinHeap(2)
    for node in (5, 3, 9, 1):
        heap.push(0.5, node)
    assert heap.items() == [(1, 0.5), (3, 0.5)]
