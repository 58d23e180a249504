"""
HetFS similarity under user-given symmetric meta-paths.

For one meta-path ``A0 -R1-> A1 ... -Rh-> Ah ... -> A0`` the score of
``(u, v)`` follows the recursion

    s(x, y) = 1                                   if x == y
    s(x, y) = 0                                   if level h is reached and x != y
    s(x, y) = sum over x' in N_R(x), y' in N_R(y) of
              c * mu_R * chi(x') chi(y') alpha(x') alpha(y') / (beta(x') beta(y')) * s(x', y')

where ``beta(x')`` counts the neighbours of ``x'`` back along ``R``. Scores of
several meta-paths add up. Three engines evaluate it:

* :func:`hetfs_bruteforce` runs the recursion pair by pair.
* :func:`hetfs_single_source` factorizes it into one forward sweep from the
  query node, one backward sweep, and a diagonal correction per level that
  accounts for surfers meeting before the middle of the path.
* :func:`hetfs_montecarlo` samples pairs of surfers.

Each side of a level contributes ``sqrt(c * mu_R) * chi * alpha / beta``; the
product of both sides is the summand above.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .content import ContentScoreTable, pairwise_relatedness, unit_content
from .errors import (
    AsymmetricMetaPath,
    InvalidParameter,
    InvalidWalkCount,
    NotNeighbor,
    TypeMismatch,
    UnsupportedContentMode,
)
from .graph import (
    Hin,
    MetaPath,
    MetaPathSet,
    Step,
    enumerate_symmetric_metapaths,
    parse_metapaths,
)
from .weights import (
    CentralityTable,
    ContributionGraph,
    compute_centrality,
    compute_edge_contribution,
    unit_centrality,
)

CONTENT_MODES = ("node", "pair", "off")
DEFAULT_C = 0.8
DEFAULT_EPSILON = 0.000005
CHUNK = 16384


@dataclass(eq=False)
class WeightModel:
    """Everything a query needs, precomputed once per graph."""

    graph: Hin
    content: ContentScoreTable
    centrality: CentralityTable
    contribution: ContributionGraph
    c: float = DEFAULT_C
    content_mode: str = "node"
    unit_chi: bool = False
    unit_alpha: bool = False
    unit_mu: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise InvalidParameter(f"decay c must lie in (0, 1), got {self.c}")
        if self.content_mode not in CONTENT_MODES:
            raise InvalidParameter(f"content mode must be one of {CONTENT_MODES}, got {self.content_mode!r}")
        n = self.graph.n
        if len(self.content.chi) != n or len(self.centrality.alpha) != n:
            raise InvalidParameter("weight tables were built for a different graph")
        if self.contribution.schema != self.graph.schema:
            raise InvalidParameter("contribution graph was built for a different schema")

    # -- factors ------------------------------------------------------------

    @property
    def chi(self) -> np.ndarray:
        """Per-node content factor entering a step (1 unless content mode is ``node``)."""
        if self.unit_chi or self.content_mode != "node":
            return np.ones(self.graph.n)
        return self.content.chi

    @property
    def alpha(self) -> np.ndarray:
        if self.unit_alpha:
            return np.ones(self.graph.n)
        return self.centrality.alpha

    @property
    def pairwise(self) -> bool:
        return self.content_mode == "pair" and not self.unit_chi

    def mu(self, step: Step | str) -> float:
        return 1.0 if self.unit_mu else self.contribution.of(step)

    def relatedness(self, u: int, v: int) -> float:
        return pairwise_relatedness(self.content, u, v) if self.pairwise else 1.0

    def node_weight(self, step: Step) -> np.ndarray:
        """chi * alpha / beta for every node of ``step.dst``, beta counted back along ``step``."""
        key = ("node_weight", step)
        if key not in self._cache:
            g = self.graph
            lo, hi = g.type_range(step.dst)
            beta = g.degrees(g.schema.inverse(step)).astype(float)
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(beta > 0, self.chi[lo:hi] * self.alpha[lo:hi] / beta, 0.0)
            self._cache[key] = w
        return self._cache[key]

    def step_matrix(self, step: Step) -> sp.csr_matrix:
        """Weighted adjacency: entry (x, x') is the per-side factor of the hop x -> x'."""
        key = ("step", step)
        if key not in self._cache:
            adj = self.graph.adjacency(step)
            scale = math.sqrt(self.c * self.mu(step))
            w = self.node_weight(step)
            mat = sp.csr_matrix((scale * w[adj.indices], adj.indices, adj.indptr), shape=adj.shape)
            self._cache[key] = mat
        return self._cache[key]

    def step_matrix_t(self, step: Step) -> sp.csr_matrix:
        key = ("step_t", step)
        if key not in self._cache:
            self._cache[key] = self.step_matrix(step).T.tocsr()
        return self._cache[key]

    def content_matrix(self):
        key = ("content_matrix",)
        if key not in self._cache:
            self._cache[key] = self.content.matrix()[0]
        return self._cache[key]

    def with_options(self, **changes) -> WeightModel:
        """Copy with some settings changed (caches are not shared)."""
        fields = dict(
            graph=self.graph, content=self.content, centrality=self.centrality,
            contribution=self.contribution, c=self.c, content_mode=self.content_mode,
            unit_chi=self.unit_chi, unit_alpha=self.unit_alpha, unit_mu=self.unit_mu,
        )
        fields.update(changes)
        return WeightModel(**fields)


def build_weight_model(
    g: Hin,
    corpora=None,
    c: float = DEFAULT_C,
    c_n: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 100,
    content_mode: str = "node",
    tokenizer=None,
    **flags,
) -> WeightModel:
    """Precompute content, centrality and contribution tables for ``g``."""
    from .content import build_models, content_scores, tokenize

    if corpora:
        content = content_scores(build_models(corpora, tokenizer or tokenize), g)
    else:
        content = unit_content(g)
    centrality = compute_centrality(g, c_n, tol, max_iter)
    contribution = compute_edge_contribution(g)
    return WeightModel(g, content, centrality, contribution, c=c, content_mode=content_mode, **flags)


def unit_weight_model(g: Hin, c: float = DEFAULT_C, contribution: ContributionGraph | None = None) -> WeightModel:
    """chi = alpha = 1; mu from ``contribution`` (forced to 1 when omitted)."""
    unit_mu = contribution is None
    if contribution is None:
        contribution = ContributionGraph(g.schema, {}, {}, {r.name: 1.0 for r in g.schema.relations})
    return WeightModel(g, unit_content(g), unit_centrality(g), contribution, c=c, content_mode="off",
                       unit_mu=unit_mu)


# -- validation -------------------------------------------------------------------


def as_metapath_set(wm: WeightModel, mps) -> MetaPathSet:
    if isinstance(mps, str):
        return parse_metapaths(mps, wm.graph.schema)
    if isinstance(mps, MetaPath):
        return MetaPathSet([mps])
    return MetaPathSet(mps)


def _check_paths(mps: MetaPathSet) -> None:
    if not mps:
        raise InvalidParameter("empty meta-path set")
    for p in mps:
        if not p.symmetric or p.length % 2:
            raise AsymmetricMetaPath(f"meta-path {p} is not symmetric with an even length")


def _check_node(g: Hin, node, mps: MetaPathSet) -> int:
    u = g.index(node)
    if g.type_of(u) != mps.endpoint:
        raise TypeMismatch(f"node {g.ids[u]} has type {g.type_of(u)}, meta-paths start at {mps.endpoint}")
    return u


# -- per-hop factor -------------------------------------------------------------------


def canonical_step_factor(wm: WeightModel, x, x2, step: Step | str) -> float:
    """sqrt(c * mu_R) * chi(x') * alpha(x') / beta(x'), for the hop x -> x' along R.

    In pairwise content mode chi is left out here; the pair engines multiply in
    the relatedness of the two nodes reached at that level instead.
    """
    g = wm.graph
    step = g.schema.step(step)
    x, x2 = g.index(x), g.index(x2)
    nbrs = g.neighbors(x, step)
    pos = np.searchsorted(nbrs, x2)
    if pos >= len(nbrs) or nbrs[pos] != x2:
        raise NotNeighbor(f"{g.ids[x2]} is not a {step.name}-neighbour of {g.ids[x]}")
    local = x2 - g.type_range(step.dst)[0]
    return math.sqrt(wm.c * wm.mu(step)) * float(wm.node_weight(step)[local])


# -- brute force ------------------------------------------------------------------------


def _neighbor_lists(wm: WeightModel, step: Step) -> list[list[int]]:
    key = ("nbrs", step)
    if key not in wm._cache:
        g = wm.graph
        adj = g.adjacency(step)
        lo = g.type_range(step.dst)[0]
        cols = (adj.indices.astype(np.int64) + lo).tolist()
        ptr = adj.indptr.tolist()
        wm._cache[key] = [cols[ptr[i]:ptr[i + 1]] for i in range(adj.shape[0])]
    return wm._cache[key]


def hetfs_bruteforce(wm: WeightModel, u, v, mps) -> float:
    """Pair score by direct recursion over neighbour pairs, level by level.

    Sub-scores ``s(x, y, level)`` are memoized on the weight model, so scoring
    many pairs under one meta-path reuses earlier work.
    """
    mps = as_metapath_set(wm, mps)
    _check_paths(mps)
    g = wm.graph
    u = _check_node(g, u, mps)
    v = _check_node(g, v, mps)
    if u == v:
        return 1.0
    chi, alpha, pairwise = wm.chi, wm.alpha, wm.pairwise

    total = 0.0
    for path in mps:
        half = path.half
        memo = wm._cache.setdefault(("brute", half), {})
        levels = []
        for step in half:
            inv = g.schema.inverse(step)
            beta = g.degrees(inv)
            lo = g.type_range(step.dst)[0]
            levels.append((step, wm.c * wm.mu(step), _neighbor_lists(wm, step),
                           g.type_range(step.src)[0], lo, beta))

        def rec(x, y, level, half=half, memo=memo, levels=levels):
            if x == y:
                return 1.0
            if level == len(half):
                return 0.0
            key = (x, y, level) if x < y else (y, x, level)
            hit = memo.get(key)
            if hit is not None:
                return hit
            step, coef, nbrs, src_lo, dst_lo, beta = levels[level]
            acc = 0.0
            if coef != 0.0:
                for x2 in nbrs[x - src_lo]:
                    for y2 in nbrs[y - src_lo]:
                        content = wm.relatedness(x2, y2) if pairwise else chi[x2] * chi[y2]
                        acc += (coef * content * alpha[x2] * alpha[y2]
                                / (beta[x2 - dst_lo] * beta[y2 - dst_lo])) * rec(x2, y2, level + 1, half, memo, levels)
            memo[key] = acc
            return acc

        total += rec(u, v, 0)
    return total


# -- exact single source --------------------------------------------------------------------


def _diagonal_corrections(wm: WeightModel, half: tuple[Step, ...]) -> list[np.ndarray]:
    """Per level j (1..h) the vector 1 - (self-score of a node at level j before pinning).

    Level h gets all ones. Cached per relation sequence.
    """
    key = ("diag", half)
    if key in wm._cache:
        return wm._cache[key]
    g = wm.graph
    h = len(half)
    d: list[np.ndarray | None] = [None] * (h + 1)
    d[h] = np.ones(g.count(half[-1].dst))
    for j in range(h - 1, 0, -1):
        q = wm.step_matrix(half[j])
        acc = q.multiply(q) @ d[j + 1]
        for k in range(j + 2, h + 1):
            q = q @ wm.step_matrix(half[k - 1])
            acc = acc + q.multiply(q) @ d[k]
        d[j] = 1.0 - np.asarray(acc).ravel()
    wm._cache[key] = d
    return d


def _single_path_vector(wm: WeightModel, u_local: int, path: MetaPath) -> np.ndarray:
    half = path.half
    h = len(half)
    d = _diagonal_corrections(wm, half)
    first = wm.step_matrix(half[0])
    r = [None] * (h + 1)
    row = np.zeros(first.shape[1])
    lo, hi = first.indptr[u_local], first.indptr[u_local + 1]
    row[first.indices[lo:hi]] = first.data[lo:hi]
    r[1] = row
    for j in range(2, h + 1):
        r[j] = wm.step_matrix_t(half[j - 1]) @ r[j - 1]
    z = r[h] * d[h]
    for j in range(h, 0, -1):
        z = wm.step_matrix(half[j - 1]) @ z
        if j - 1 >= 1:
            z = z + r[j - 1] * d[j - 1]
    return z


@dataclass
class ScoreVector:
    """Scores of every node of one type against a query node."""

    graph: Hin
    node_type: str
    values: np.ndarray

    def __getitem__(self, node) -> float:
        u = self.graph.index(node)
        lo, hi = self.graph.type_range(self.node_type)
        if not lo <= u < hi:
            raise TypeMismatch(f"{self.graph.ids[u]} is not of type {self.node_type}")
        return float(self.values[u - lo])

    def as_dict(self) -> dict[str, float]:
        lo, _ = self.graph.type_range(self.node_type)
        return {self.graph.ids[lo + i]: float(s) for i, s in enumerate(self.values)}


def hetfs_single_source(wm: WeightModel, u, mps) -> ScoreVector:
    """Scores of ``u`` against every node of its type, exactly equal to the brute force."""
    mps = as_metapath_set(wm, mps)
    _check_paths(mps)
    if wm.pairwise:
        raise UnsupportedContentMode("pairwise content mode does not factorize; use the brute-force "
                                     "or Monte-Carlo engine")
    g = wm.graph
    u = _check_node(g, u, mps)
    lo, _ = g.type_range(mps.endpoint)
    total = np.zeros(g.count(mps.endpoint))
    for path in mps:
        total += _single_path_vector(wm, u - lo, path)
    total[u - lo] = 1.0
    return ScoreVector(g, mps.endpoint, total)


# -- Monte Carlo ------------------------------------------------------------------------------


def _rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *stream])
    return np.random.Generator(np.random.Philox(ss))


def _chunks(walks: int) -> list[tuple[int, int]]:
    return [(i, min(CHUNK, walks - i * CHUNK)) for i in range((walks + CHUNK - 1) // CHUNK)]


def _uniform_step(adj: sp.csr_matrix, pos: np.ndarray, rng: np.random.Generator):
    start = adj.indptr[pos]
    deg = adj.indptr[pos + 1] - start
    pick = np.floor(rng.random(len(pos)) * np.maximum(deg, 1)).astype(np.int64)
    nxt = adj.indices[np.minimum(start + pick, max(len(adj.indices) - 1, 0))] if len(adj.indices) else pos * 0
    return nxt.astype(np.int64), deg


def _pair_chunk(wm, half, u_local, v_local, size, rng) -> float:
    g = wm.graph
    x = np.full(size, u_local, dtype=np.int64)
    y = np.full(size, v_local, dtype=np.int64)
    w = np.ones(size)
    live = np.ones(size, dtype=bool)
    total = 0.0
    cmat = wm.content_matrix() if wm.pairwise else None
    for step in half:
        if not live.any():
            break
        adj = g.adjacency(step)
        coef = wm.c * wm.mu(step)
        x, dx = _uniform_step(adj, x, rng)
        y, dy = _uniform_step(adj, y, rng)
        live &= (dx > 0) & (dy > 0)
        if wm.pairwise:
            # per-node weight excludes content in pair mode; relatedness supplies it
            nw = wm.node_weight(step)
            off = g.type_range(step.dst)[0]
            gx, gy = x + off, y + off
            rel = np.asarray(cmat[gx].multiply(cmat[gy]).sum(axis=1)).ravel()
            has = wm.content.has_content
            rel = np.where(has[gx] & has[gy], rel, 1.0)
            w = w * coef * nw[x] * nw[y] * rel * dx * dy
        else:
            nw = wm.node_weight(step)
            w = w * coef * nw[x] * nw[y] * dx * dy
        met = live & (x == y)
        total += float(w[met].sum())
        live &= ~met
    return total


def _single_chunk(wm, half, u_local, size, rng) -> list[np.ndarray]:
    """Importance-weighted visit mass per level for one batch of single-sided walks."""
    g = wm.graph
    x = np.full(size, u_local, dtype=np.int64)
    w = np.ones(size)
    out = []
    for step in half:
        adj = g.adjacency(step)
        scale = math.sqrt(wm.c * wm.mu(step))
        x, dx = _uniform_step(adj, x, rng)
        w = np.where(dx > 0, w * scale * wm.node_weight(step)[x] * dx, 0.0)
        out.append(np.bincount(x, weights=w, minlength=adj.shape[1]))
    return out


def hetfs_montecarlo(wm: WeightModel, u, v, mps, walks: int = 200_000, seed: int = 0, workers: int = 1):
    """Random-surfer estimate of the HetFS score.

    With a concrete ``v`` two surfers start at ``u`` and ``v`` and stop at their
    first meeting; each pick is uniform among the current node's neighbours and
    the tour weight is divided by the pick probability. With ``v="ALL"`` walks
    leave ``u`` only and the sampled visit mass is swept back to every partner,
    returning a :class:`ScoreVector`.

    Walks are split into fixed-size chunks, each with its own counter-based
    stream derived from ``(seed, path, chunk)``, so the result does not depend
    on ``workers``.
    """
    if not isinstance(walks, (int, np.integer)) or walks < 1:
        raise InvalidWalkCount(f"walks must be a positive integer, got {walks!r}")
    mps = as_metapath_set(wm, mps)
    _check_paths(mps)
    g = wm.graph
    u = _check_node(g, u, mps)
    lo, _ = g.type_range(mps.endpoint)
    chunks = _chunks(int(walks))

    def run(jobs):
        if workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda job: job(), jobs))
        return [job() for job in jobs]

    if isinstance(v, str) and v == "ALL":
        if wm.pairwise:
            raise UnsupportedContentMode("the all-partners estimator needs per-node content mode")
        total = np.zeros(g.count(mps.endpoint))
        for p_idx, path in enumerate(mps):
            half = path.half
            jobs = [lambda i=i, n=n, half=half, p=p_idx: _single_chunk(wm, half, u - lo, n, _rng(seed, p, i))
                    for i, n in chunks]
            parts = run(jobs)
            r = [None] + [sum(part[j] for part in parts) / walks for j in range(len(half))]
            d = _diagonal_corrections(wm, half)
            h = len(half)
            z = r[h] * d[h]
            for j in range(h, 0, -1):
                z = wm.step_matrix(half[j - 1]) @ z
                if j - 1 >= 1:
                    z = z + r[j - 1] * d[j - 1]
            total += z
        total[u - lo] = 1.0
        return ScoreVector(g, mps.endpoint, total)

    v = _check_node(g, v, mps)
    if u == v:
        return 1.0
    estimate = 0.0
    for p_idx, path in enumerate(mps):
        half = path.half
        jobs = [lambda i=i, n=n, half=half, p=p_idx: _pair_chunk(wm, half, u - lo, v - lo, n, _rng(seed, p, i))
                for i, n in chunks]
        estimate += math.fsum(run(jobs)) / walks
    return estimate


# -- top-k ----------------------------------------------------------------------------------------


class BoundedMinHeap:
    """Keeps the ``k`` best (score, node) pairs; ties favour the smaller node id."""

    def __init__(self, k: int):
        if k < 1:
            raise InvalidParameter(f"k must be >= 1, got {k}")
        self.k = k
        self._heap: list[tuple[float, int]] = []

    def push(self, score: float, node: int) -> None:
        # heap root is the worst kept item: lowest score, then highest id
        item = (score, -node)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, item)
        elif item > self._heap[0]:
            heapq.heapreplace(self._heap, item)

    def __len__(self):
        return len(self._heap)

    def items(self) -> list[tuple[int, float]]:
        return [(-neg, s) for s, neg in sorted(self._heap, key=lambda t: (-t[0], -t[1]))]


@dataclass
class TopKResult:
    query: str
    metapaths: str
    items: list[tuple[str, float]]
    engine: str
    elapsed_ms: float

    def nodes(self) -> list[str]:
        return [n for n, _ in self.items]

    def to_tsv(self, timing: bool = True) -> str:
        lines = ["rank\tnode_id\tscore"]
        lines += [f"{i}\t{n}\t{s!r}" for i, (n, s) in enumerate(self.items, 1)]
        if timing:
            lines.append(f"# elapsed_ms\t{self.elapsed_ms:.3f}")
        return "\n".join(lines) + "\n"

    def to_json(self, timing: bool = True) -> str:
        data = {
            "query": self.query,
            "metapaths": self.metapaths,
            "engine": self.engine,
            "results": [{"rank": i, "node_id": n, "score": s} for i, (n, s) in enumerate(self.items, 1)],
        }
        if timing:
            data["elapsed_ms"] = round(self.elapsed_ms, 3)
        return json.dumps(data, indent=2)


def select_topk(values: np.ndarray, offset: int, exclude: int | None, k: int, epsilon: float) -> list[tuple[int, float]]:
    """Top ``k`` (global id, score) with score >= epsilon, ties broken by ascending id."""
    heap = BoundedMinHeap(k)
    cand = np.flatnonzero(values >= epsilon)
    if exclude is not None:
        cand = cand[cand != exclude - offset]
    if len(cand) > 4 * k:
        # cheap prefilter; everything tied with the k-th best survives
        kth = np.partition(values[cand], len(cand) - k)[len(cand) - k]
        cand = cand[values[cand] >= kth]
    for i, s in zip(cand.tolist(), values[cand].tolist()):
        heap.push(s, i + offset)
    return heap.items()


def topk(
    wm: WeightModel,
    u,
    mps,
    k: int = 1000,
    engine: str = "exact",
    epsilon: float = DEFAULT_EPSILON,
    walks: int = 200_000,
    seed: int = 0,
    workers: int = 1,
) -> TopKResult:
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    mps = as_metapath_set(wm, mps)
    g = wm.graph
    t0 = time.perf_counter()
    if engine == "exact" and wm.pairwise:
        # pairwise content does not factorize: score every partner by recursion
        _check_paths(mps)
        uid = _check_node(g, u, mps)
        lo, hi = g.type_range(mps.endpoint)
        vals = np.array([hetfs_bruteforce(wm, uid, x, mps) for x in range(lo, hi)])
        scores = ScoreVector(g, mps.endpoint, vals)
    elif engine == "exact":
        scores = hetfs_single_source(wm, u, mps)
    elif engine in ("montecarlo", "mc"):
        scores = hetfs_montecarlo(wm, u, "ALL", mps, walks=walks, seed=seed, workers=workers)
        engine = "montecarlo"
    else:
        raise InvalidParameter(f"unknown engine {engine!r}")
    uid = g.index(u)
    lo, _ = g.type_range(scores.node_type)
    best = select_topk(scores.values, lo, uid, k, epsilon)
    elapsed = (time.perf_counter() - t0) * 1000.0
    items = [(g.ids[i], s) for i, s in best]
    return TopKResult(g.ids[uid], str(mps), items, engine, elapsed)


def metapath_free_query(wm: WeightModel, u, max_len: int = 2, k: int = 1000, **kwargs) -> TopKResult:
    """Top-k over every symmetric meta-path of ``u``'s type up to ``max_len``."""
    g = wm.graph
    uid = g.index(u)
    mps = enumerate_symmetric_metapaths(g.schema, g.type_of(uid), max_len)
    if not mps:
        return TopKResult(g.ids[uid], "", [], kwargs.get("engine", "exact"), 0.0)
    return topk(wm, uid, mps, k=k, **kwargs)
