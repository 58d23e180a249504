"""SimRank (power method and random surfers) and PathSim, for comparison runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AsymmetricMetaPath, InvalidParameter, InvalidWalkCount, TypeMismatch
from .graph import Hin, MetaPath, enumerate_symmetric_metapaths, parse_metapath


@dataclass(frozen=True)
class SimRankConfig:
    c: float = 0.8
    iterations: int = 10
    tol: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise InvalidParameter(f"c must lie in (0, 1), got {self.c}")
        if self.iterations < 0:
            raise InvalidParameter("iterations must be non-negative")


def merged_adjacency(g: Hin) -> sp.csr_matrix:
    """Untyped, undirected 0/1 adjacency over global ids."""
    rows, cols = [], []
    for rel in g.schema.relations:
        for a, b in g.edges(rel.name):
            rows += [a, b]
            cols += [b, a]
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(g.n, g.n))
    adj.data[:] = 1.0
    adj.sum_duplicates()
    adj.data[:] = 1.0
    return adj


def simrank_power(g: Hin, cfg: SimRankConfig | None = None) -> np.ndarray:
    """All-pairs SimRank by fixed-point iteration from the identity, diagonal pinned at 1."""
    cfg = cfg or SimRankConfig()
    adj = merged_adjacency(g)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    walk = sp.diags(inv) @ adj  # row-normalized
    s = np.eye(g.n)
    for _ in range(cfg.iterations):
        nxt = cfg.c * (walk @ (walk @ s).T).T
        np.fill_diagonal(nxt, 1.0)
        delta = np.max(np.abs(nxt - s)) if g.n else 0.0
        s = nxt
        if cfg.tol and delta <= cfg.tol:
            break
    return s


def simrank_montecarlo(g: Hin, u, v, walks: int = 100_000, seed: int = 0,
                       cfg: SimRankConfig | None = None) -> float:
    """Mean of c**steps at the first meeting of two reverse random walks (0 if none)."""
    if not isinstance(walks, (int, np.integer)) or walks < 1:
        raise InvalidWalkCount(f"walks must be a positive integer, got {walks!r}")
    cfg = cfg or SimRankConfig()
    u, v = g.index(u), g.index(v)
    if u == v:
        return 1.0
    adj = merged_adjacency(g)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & (2**64 - 1), 7])))
    x = np.full(walks, u, dtype=np.int64)
    y = np.full(walks, v, dtype=np.int64)
    live = np.ones(walks, dtype=bool)
    total = 0.0
    for step in range(1, cfg.iterations + 1):
        for pos in (x, y):
            start = adj.indptr[pos]
            deg = adj.indptr[pos + 1] - start
            live &= deg > 0
            pick = np.floor(rng.random(walks) * np.maximum(deg, 1)).astype(np.int64)
            idx = np.minimum(start + pick, max(adj.nnz - 1, 0))
            pos[:] = adj.indices[idx] if adj.nnz else pos
        met = live & (x == y)
        total += met.sum() * cfg.c ** step
        live &= ~met
        if not live.any():
            break
    return float(total / walks)


# -- PathSim ---------------------------------------------------------------------------


def _path_counts(g: Hin, x: int, path: MetaPath) -> np.ndarray:
    """Number of instances of ``path`` from ``x`` to each node of the end type."""
    lo = g.type_range(path.start)[0]
    vec = np.zeros(g.count(path.start), dtype=np.int64)
    vec[x - lo] = 1
    for step in path.steps:
        vec = g.adjacency(step).T @ vec
    return vec


def _check(g: Hin, path: MetaPath, *nodes):
    if not path.symmetric:
        raise AsymmetricMetaPath(f"PathSim needs a symmetric meta-path, got {path}")
    out = []
    for x in nodes:
        i = g.index(x)
        if g.type_of(i) != path.start:
            raise TypeMismatch(f"{g.ids[i]} is not of type {path.start}")
        out.append(i)
    return out


def pathsim(g: Hin, u, v, path) -> float:
    """2 p(u,v) / (p(u,u) + p(v,v)) with p counting meta-path instances."""
    if isinstance(path, str):
        path = parse_metapath(path, g.schema)
    u, v = _check(g, path, u, v)
    lo = g.type_range(path.start)[0]
    cu = _path_counts(g, u, path)
    cv = _path_counts(g, v, path)
    denom = cu[u - lo] + cv[v - lo]
    if denom == 0:
        return 0.0
    return 2.0 * cu[v - lo] / denom


def pathsim_single_source(g: Hin, u, path) -> np.ndarray:
    """PathSim of ``u`` against every node of its type (local order)."""
    if isinstance(path, str):
        path = parse_metapath(path, g.schema)
    (u,) = _check(g, path, u)
    lo = g.type_range(path.start)[0]
    half = path.steps[: path.length // 2]
    # p(x, x) for every x equals the squared norm of its half-path count vector
    m = None
    for step in half:
        a = g.adjacency(step).astype(np.int64)
        m = a if m is None else m @ a
    diag = np.asarray(m.multiply(m).sum(axis=1)).ravel()
    row = _path_counts(g, u, path)
    denom = diag[u - lo] + diag
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, 2.0 * row / denom, 0.0)


def pathsim_free(g: Hin, u, max_len: int = 2) -> np.ndarray:
    """Sum of per-path PathSim over every enumerated symmetric meta-path."""
    u = g.index(u)
    paths = enumerate_symmetric_metapaths(g.schema, g.type_of(u), max_len)
    total = np.zeros(g.count(g.type_of(u)))
    for p in paths:
        total += pathsim_single_source(g, u, p)
    return total
