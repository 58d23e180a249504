"""
Node centrality and edge contribution.

Centrality is a PageRank-style fixed point over every relation and its
inverse. A node splits its centrality evenly across the relations it takes
part in and, within one relation, evenly across its neighbours there. Nodes
with no edges at all hand their mass to every node of their own type. The
result is rescaled so that each node type averages 1.

Edge contribution weighs a relation by how often it occurs (RF, share of all
edges) and by how selective it is (IRF, log of all nodes over the nodes it
touches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraph, FormatError, InvalidParameter, NegativeValue
from .graph import Hin, Schema, Step


@dataclass
class CentralityTable:
    alpha: np.ndarray
    c_n: float
    iterations: int
    residual: float
    converged: bool
    raw: np.ndarray  # fixed point before per-type rescaling
    history: list[float] = field(default_factory=list)

    def __getitem__(self, u: int) -> float:
        return float(self.alpha[u])


def _type_blocks(g: Hin):
    return [g.type_range(t) for t in g.schema.node_types]


def centrality_operator(g: Hin) -> tuple[sp.csr_matrix, np.ndarray]:
    """Column-stochastic spread matrix over global ids, plus the dangling mask."""
    rows, cols, vals = [], [], []
    active = np.zeros(g.n, dtype=np.int64)
    steps = g.schema.steps()
    for step in steps:
        lo = g.type_range(step.src)[0]
        active[lo:lo + g.count(step.src)] += g.degrees(step) > 0
    for step in steps:
        adj = g.adjacency(step).tocoo()
        if not adj.nnz:
            continue
        lo_s = g.type_range(step.src)[0]
        lo_d = g.type_range(step.dst)[0]
        deg = g.degrees(step)
        src = adj.row.astype(np.int64) + lo_s
        rows.append(adj.col.astype(np.int64) + lo_d)
        cols.append(src)
        vals.append(1.0 / (deg[adj.row] * active[src]))
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.empty(0, dtype=np.int64)
        v = np.empty(0)
    spread = sp.csr_matrix((v, (r, c)), shape=(g.n, g.n))
    return spread, active == 0


def centrality_step(g: Hin, alpha: np.ndarray, c_n: float, operator=None) -> np.ndarray:
    spread, dangling = operator if operator is not None else centrality_operator(g)
    nxt = spread @ alpha
    for lo, hi in _type_blocks(g):
        if hi > lo:
            nxt[lo:hi] += alpha[lo:hi][dangling[lo:hi]].sum() / (hi - lo)
    return (1.0 - c_n) + c_n * nxt


def normalize_per_type(g: Hin, values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    for lo, hi in _type_blocks(g):
        if hi > lo:
            mean = out[lo:hi].mean()
            out[lo:hi] = out[lo:hi] / mean if mean > 0 else 1.0
    return out


def compute_centrality(g: Hin, c_n: float = 0.85, tol: float = 1e-8, max_iter: int = 100) -> CentralityTable:
    if not 0.0 < c_n < 1.0:
        raise InvalidParameter(f"c_n must lie in (0, 1), got {c_n}")
    if max_iter < 1:
        raise InvalidParameter("max_iter must be positive")
    op = centrality_operator(g)
    alpha = np.ones(g.n)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = centrality_step(g, alpha, c_n, op)
        res = float(np.max(np.abs(nxt - alpha))) if g.n else 0.0
        history.append(res)
        alpha = nxt
        if res <= tol:
            converged = True
            break
    return CentralityTable(normalize_per_type(g, alpha), c_n, it, history[-1] if history else 0.0,
                           converged, alpha, history)


def unit_centrality(g: Hin) -> CentralityTable:
    return CentralityTable(np.ones(g.n), 0.0, 0, 0.0, True, np.ones(g.n))


# -- edge contribution ----------------------------------------------------------


@dataclass(frozen=True)
class ContributionGraph:
    schema: Schema
    rf: dict[str, float]
    irf: dict[str, float]
    mu: dict[str, float]

    def __post_init__(self):
        for name in self.mu:
            self.schema.relation(name)

    def of(self, step: Step | str) -> float:
        """mu of a relation; an inverse shares its forward relation's value."""
        return self.mu[self.schema.step(step).relation]

    def forced_unit(self) -> ContributionGraph:
        return replace(self, mu={r: 1.0 for r in self.mu})


def compute_edge_contribution(g: Hin) -> ContributionGraph:
    """mu_R = (m_R / m) * ln(n / n_R)."""
    if g.m == 0:
        raise EmptyGraph("edge contribution needs at least one edge")
    rf, irf, mu = {}, {}, {}
    for rel in g.schema.relations:
        fwd = g.schema.step(rel.name)
        touched = np.zeros(g.n, dtype=bool)
        lo = g.type_range(rel.src)[0]
        touched[lo:lo + g.count(rel.src)] |= g.degrees(fwd) > 0
        lo = g.type_range(rel.dst)[0]
        touched[lo:lo + g.count(rel.dst)] |= np.diff(g.adjacency(fwd).tocsc().indptr) > 0
        n_r = int(touched.sum())
        rf[rel.name] = g.m_by_relation[rel.name] / g.m
        irf[rel.name] = math.log(g.n / n_r) if n_r else 0.0
        mu[rel.name] = rf[rel.name] * irf[rel.name]
    return ContributionGraph(g.schema, rf, irf, mu)


def override_contribution(cg: ContributionGraph, relation: str, value: float) -> ContributionGraph:
    """Copy of ``cg`` with one relation's mu replaced; RF and IRF stay for provenance."""
    name = cg.schema.step(relation).relation
    if value < 0:
        raise NegativeValue(f"edge contribution must be non-negative, got {value}")
    mu = dict(cg.mu)
    mu[name] = float(value)
    return replace(cg, mu=mu)


def _dot_id(name: str) -> str:
    if name.isidentifier():
        return name
    return '"' + name.replace('"', '\\"') + '"'


def export_contribution_graph(cg: ContributionGraph) -> str:
    """DOT rendering: one node per node type, one labelled edge per relation."""
    lines = ["digraph contribution {"]
    for t in cg.schema.node_types:
        lines.append(f"  {_dot_id(t)};")
    for rel in cg.schema.relations:
        extra = ", dir=none" if rel.self_inverse else ""
        lines.append(
            f'  {_dot_id(rel.src)} -> {_dot_id(rel.dst)} [label="{cg.mu[rel.name]:.2f}", relation={_dot_id(rel.name)}{extra}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- persistence ------------------------------------------------------------------


def write_centrality(path, g: Hin, table: CentralityTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node_id\talpha\n")
        fh.writelines(f"{nid}\t{a!r}\n" for nid, a in zip(g.ids, table.alpha.tolist()))


def read_centrality(path, g: Hin) -> CentralityTable:
    alpha = np.ones(g.n)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["node_id", "alpha"]:
            raise FormatError("expected header node_id\\talpha", str(path), 1)
        for line_no, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise FormatError("expected 2 fields", str(path), line_no)
            alpha[g.index(parts[0])] = float(parts[1])
    return CentralityTable(alpha, float("nan"), 0, float("nan"), True, alpha.copy())


def write_contribution(path, cg: ContributionGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("relation\trf\tirf\tmu\n")
        for rel in cg.schema.relations:
            r = rel.name
            fh.write(f"{r}\t{cg.rf[r]!r}\t{cg.irf[r]!r}\t{cg.mu[r]!r}\n")


def read_contribution(path, schema: Schema) -> ContributionGraph:
    rf, irf, mu = {}, {}, {}
    with open(Path(path), encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["relation", "rf", "irf", "mu"]:
            raise FormatError("expected header relation\\trf\\tirf\\tmu", str(path), 1)
        for line_no, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise FormatError("expected 4 fields", str(path), line_no)
            name = parts[0]
            rf[name], irf[name], mu[name] = (float(x) for x in parts[1:])
    return ContributionGraph(schema, rf, irf, mu)
