"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed together in the
pytest terminal summary under "acceptance criteria".
"""

import math
import os
import subprocess
import sys
import time

import networkx as nx
import numpy as np
import pytest
from conftest import acceptance
from helpers import all_metapaths, random_weight_model

from hetfs.baselines import SimRankConfig, pathsim, simrank_power
from hetfs.engine import (
    build_weight_model,
    hetfs_bruteforce,
    hetfs_montecarlo,
    hetfs_single_source,
    topk,
    unit_weight_model,
)
from hetfs.evaluation import (
    LabeledNodes,
    auc_score,
    classification_metrics,
    clustering_metrics,
    similarity_label_transfer,
)
from hetfs.graph import (
    RelationType,
    Schema,
    freeze_graph,
    make_metapath,
    parse_metapaths,
)
from hetfs.ingest import (
    dblp_like_spec,
    g1_bundle,
    generate_synthetic_hin,
    planted_partition_bundle,
)
from hetfs.weights import compute_edge_contribution

STATED_MU_MA = 0.12164


def test_criterion_1_engine_agreement():
    t0 = time.perf_counter()
    worst, pairs = 0.0, 0
    for seed in range(50):
        wm = random_weight_model(seed, 60)
        g = wm.graph
        for path in all_metapaths(g, 4):
            lo, hi = g.type_range(path.start)
            for u in range(lo, hi):
                vec = hetfs_single_source(wm, u, [path]).values
                for v in range(lo, hi):
                    worst = max(worst, abs(vec[v - lo] - hetfs_bruteforce(wm, u, v, [path])))
                    pairs += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60
    acceptance("1", ok, f"max |single-source - brute force| = {worst:.2e} over {pairs} pairs in {elapsed:.1f}s")
    assert ok


def _mc_trials():
    """40 (weight model, u, v, path) trials over G1 and 10 random HINs, exact score > 0."""
    g1 = g1_bundle().freeze()
    models = [unit_weight_model(g1, contribution=compute_edge_contribution(g1))]
    models += [random_weight_model(100 + s, 40) for s in range(10)]
    rng = np.random.default_rng(2024)
    trials = []
    for i in range(40):
        wm = models[i % len(models)]
        g = wm.graph
        while True:
            paths = all_metapaths(g, 4)
            path = paths[int(rng.integers(len(paths)))]
            lo, hi = g.type_range(path.start)
            u = int(rng.integers(lo, hi))
            vec = hetfs_single_source(wm, u, [path]).values
            vec[u - lo] = 0.0
            partners = np.flatnonzero(vec > 0)
            if len(partners):
                v = lo + int(rng.choice(partners))
                trials.append((wm, u, v, path, float(vec[v - lo])))
                break
    return trials


def test_criterion_2_montecarlo():
    t0 = time.perf_counter()
    hits = 0
    trials = _mc_trials()
    for seed, (wm, u, v, path, exact) in enumerate(trials):
        est = hetfs_montecarlo(wm, u, v, [path], walks=200_000, seed=seed)
        hits += abs(est - exact) <= max(0.01, 0.05 * exact)
    elapsed = time.perf_counter() - t0
    rate = hits / len(trials)
    ok = rate >= 0.95 and elapsed < 120
    acceptance("2", ok, f"{hits}/{len(trials)} trials within max(0.01, 5%) in {elapsed:.1f}s")
    assert ok


def test_criterion_3_simrank_reduction():
    worst = 0.0
    cases = 0
    for degree, n, seed in ((3, 20, 1), (3, 40, 2), (4, 20, 3), (4, 40, 4)):
        gx = nx.random_regular_graph(degree, n, seed=seed)
        schema = Schema(["X"], [RelationType("S", "X", "X", inverse_name="S")])
        g = freeze_graph(schema, [(f"x{i}", "X") for i in range(n)],
                         [(f"x{a}", f"x{b}", "S") for a, b in gx.edges()])
        wm = unit_weight_model(g, c=0.8)
        step = g.schema.step("S")
        for depth in range(1, 5):
            path = make_metapath(g.schema, [step] * (2 * depth))
            simrank = simrank_power(g, SimRankConfig(c=0.8, iterations=depth))
            for u in range(n):
                vec = hetfs_single_source(wm, u, [path]).values
                worst = max(worst, float(np.max(np.abs(vec - simrank[u]))))
                for v in range(n):
                    worst = max(worst, abs(hetfs_bruteforce(wm, u, v, [path]) - simrank[u, v]))
            cases += 1
    ok = worst <= 1e-9
    acceptance("3", ok, f"max |HetFS - SimRank| = {worst:.2e} over {cases} graph/depth cases")
    assert ok


def test_criterion_4_spot_values():
    g1 = g1_bundle().freeze()
    cg = compute_edge_contribution(g1)
    direct_ma = (4 / 6) * math.log(6 / 5)
    direct_md = (2 / 6) * math.log(6 / 3)
    wm = unit_weight_model(g1, c=0.8, contribution=cg)
    hetfs = hetfs_bruteforce(wm, "m1", "m2", "MAM")
    checks = {
        "mu_MA = (4/6) ln(6/5)": abs(cg.mu["MA"] - direct_ma) <= 1e-5,
        "mu_MD ~ 0.23105": abs(cg.mu["MD"] - 0.23105) <= 1e-5 and abs(cg.mu["MD"] - direct_md) <= 1e-12,
        "PathSim = 2/3": pathsim(g1, "m1", "m2", "MAM") == 2 / 3,
        "HetFS = 0.8 mu_MA / 4": abs(hetfs - 0.8 * cg.mu["MA"] / 4) <= 1e-9,
    }
    ok = all(checks.values())
    detail = "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items())
    acceptance("4", ok, f"{detail} (mu_MA={cg.mu['MA']:.7f}, mu_MD={cg.mu['MD']:.7f}, s={hetfs:.10f})")
    assert ok


@pytest.mark.xfail(strict=True, reason="0.12164 is not (4/6) ln(6/5) = 0.1215477; see decisions ledger")
def test_criterion_4_stated_mu_ma_constant():
    mu = compute_edge_contribution(g1_bundle().freeze()).mu["MA"]
    ok = abs(mu - STATED_MU_MA) <= 1e-5
    acceptance("4 (stated constant)", ok,
               f"mu_MA = {mu:.7f} vs stated {STATED_MU_MA} at tol 1e-5 (|diff| = {abs(mu - STATED_MU_MA):.1e})")
    assert ok


def _median_query_ms(scale: float, mp: str, queries: int = 60) -> tuple[int, float]:
    g = generate_synthetic_hin(dblp_like_spec(edge_scale=scale, seed=0)).freeze()
    wm = build_weight_model(g)
    mps = parse_metapaths(mp, g.schema)
    lo, hi = g.type_range(mps.endpoint)
    nodes = np.random.default_rng(7).integers(lo, hi, size=queries).tolist()
    topk(wm, nodes[0], mps, k=1000)  # first query builds the per-path caches
    times = []
    for u in nodes:
        t0 = time.perf_counter()
        topk(wm, u, mps, k=1000)
        times.append((time.perf_counter() - t0) * 1000.0)
    return g.m, float(np.median(times))


def test_criterion_5_latency():
    m1, base = _median_query_ms(1.0, "APTPA")
    m2, doubled = _median_query_ms(2.0, "APTPA")
    ratio = doubled / base
    ok = base <= 50.0 and ratio <= 2.5
    acceptance("5", ok, f"median APTPA top-1000 query {base:.2f} ms at m={m1}; {doubled:.2f} ms at m={m2} "
                        f"(ratio {ratio:.2f})")
    assert ok


def test_criterion_6_metric_sanity():
    truth = ["x", "x", "y", "y", "z"]
    checks = {
        "AUC separable = 1": auc_score([0.9, 0.8], [0.1, 0.2]) == 1.0,
        "AUC constant = 0.5": auc_score([0.3] * 4, [0.3] * 7) == 0.5,
        "NMI = ARI = 1": clustering_metrics(truth, truth) == {"nmi": 1.0, "ari": 1.0},
        "micro-F1 = 2/3": classification_metrics(["pos"] * 4, ["pos", "pos", None, None])["micro_f1"] == 2 / 3,
    }
    ok = all(checks.values())
    acceptance("6", ok, "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


def test_criterion_7_planted_partition():
    bundle = planted_partition_bundle(authors=200, blocks=2, seed=0)
    g = bundle.freeze()
    truth = dict(bundle.labels)
    wm = build_weight_model(g)
    pred = similarity_label_transfer(wm, LabeledNodes(truth), targets=sorted(truth), max_len=4)
    agreement = float(np.mean([pred[x] == truth[x] for x in truth]))
    ok = agreement >= 0.95
    acceptance("7", ok, f"label transfer recovers {agreement:.1%} of planted labels on {len(truth)} authors "
                        "(dataset tables excluded as not desk-reproducible)")
    assert ok


def _cli(*args, cwd, stdin=None):
    env = dict(os.environ, PYTHONHASHSEED="random")
    env = {k: v for k, v in env.items() if not k.startswith("HETFS_")}
    proc = subprocess.run([sys.executable, "-m", "hetfs.cli", *map(str, args)], cwd=cwd, env=env,
                          capture_output=True, text=True, input=stdin, check=False)
    return proc.returncode, "\n".join(ln for ln in proc.stdout.splitlines() if not ln.startswith("#"))


def _session(root):
    outputs = []
    co = root / "co"
    pl = root / "pl"
    g1 = root / "g1"
    steps = [
        ("synth", "g1", "--out", g1),
        ("synth", "planted", "--out", pl, "--seed", 3),
        ("synth", "custom", "--out", co, "--nodes", "A=80,P=100", "--relations", "AA:A:A:300,AP:A:P:250",
         "--seed", 5),
        ("ingest", "--data", g1), ("ingest", "--data", pl), ("ingest", "--data", co),
        ("precompute", "--data", g1), ("precompute", "--data", pl), ("precompute", "--data", co),
        ("query", "m1", "--mp", "MAM,MDM", "--data", g1),
        ("query", "m1", "--free", 2, "--json", "--data", g1),
        ("query", "a3", "--free", 4, "--engine", "mc", "--walks", 30000, "--seed", 11, "--data", pl),
        ("contribution", "--data", pl),
        ("eval", "cluster", "--data", pl),
        ("eval", "classify", "--data", pl, "--seed", 2),
        ("eval", "linkpred", "--relation", "AA", "--data", co, "--seed", 4, "--free", 2),
        ("eval", "linkpred", "--relation", "AA", "--data", co, "--random-scores", "--seed", 4),
    ]
    for args in steps:
        outputs.append(_cli(*args, cwd=root))
    outputs.append(_cli("repl", "--data", g1, cwd=root, stdin="m1 MAM\n\\k 2\nm2 2\nnobody MAM\n\\quit\n"))
    for name in ("schema.json", "nodes.tsv", "edges.tsv", "labels.tsv"):
        outputs.append((0, (pl / name).read_text()))
    return outputs


def test_criterion_8_reproducibility(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    first = _session(tmp_path / "a")
    second = _session(tmp_path / "b")
    # paths differ between the two roots; compare with the root stripped
    norm = lambda outs, root: [(c, o.replace(str(root), "ROOT")) for c, o in outs]
    first, second = norm(first, tmp_path / "a"), norm(second, tmp_path / "b")
    same = sum(a == b for a, b in zip(first, second))
    codes_ok = all(c == 0 for c, _ in first + second)
    ok = same == len(first) and codes_ok
    acceptance("8", ok, f"{same}/{len(first)} command outputs byte-identical across two runs "
                        f"(timing lines excluded), all exit codes 0: {codes_ok}")
    assert ok
