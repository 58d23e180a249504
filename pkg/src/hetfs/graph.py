"""
Typed graph storage and meta-paths.

A :class:`Schema` declares node types and directed relation types. Every
relation gets an implicit inverse, so a meta-path may walk a relation in
either direction. :func:`freeze_graph` turns node and edge records into an
immutable :class:`Hin` that stores one CSR adjacency per relation and one per
inverse, indexed by *local* node positions inside each node type.

Global node ids are dense integers. Nodes of one type occupy a contiguous
block, types appear in schema order, and within a type nodes keep their input
order. The external (string) id of node ``i`` is ``g.ids[i]``.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    AmbiguousRelation,
    EndpointTypeMismatch,
    FormatError,
    InvalidParameter,
    ParseError,
    SchemaMismatch,
    UnknownNode,
    UnknownRelation,
    UnknownType,
)

INVERSE_SUFFIX = "^-1"


@dataclass(frozen=True)
class RelationType:
    name: str
    src: str
    dst: str
    inverse_name: str = ""

    def __post_init__(self):
        if not self.inverse_name:
            object.__setattr__(self, "inverse_name", self.name + INVERSE_SUFFIX)

    @property
    def self_inverse(self) -> bool:
        """True for undirected same-type relations (co-author, friend-of)."""
        return self.inverse_name == self.name


@dataclass(frozen=True)
class Step:
    """One relation traversed forward or backward."""

    relation: str
    inverse: bool
    src: str
    dst: str
    name: str

    def __str__(self):
        return self.name


class Schema:
    """Node types plus relation types, with lookup of steps by name."""

    def __init__(self, node_types: Sequence[str], relations: Sequence[RelationType]):
        types = list(node_types)
        if len(set(types)) != len(types):
            raise FormatError(f"duplicate node type in {types}")
        self.node_types: tuple[str, ...] = tuple(types)
        self._type_index = {t: i for i, t in enumerate(types)}

        forward: list[RelationType] = []
        self._by_name: dict[str, RelationType] = {}
        self._steps: dict[str, Step] = {}
        self._inverse_of: dict[Step, Step] = {}
        for rel in relations:
            for t in (rel.src, rel.dst):
                if t not in self._type_index:
                    raise UnknownType(f"relation {rel.name!r} names undeclared node type {t!r}")
            if rel.self_inverse and rel.src != rel.dst:
                raise FormatError(f"relation {rel.name!r} is its own inverse but joins {rel.src} and {rel.dst}")
            if rel.name in self._steps:
                # A relation declared as the inverse of an earlier one is folded into it.
                existing = self._steps[rel.name]
                if not existing.inverse or existing.src != rel.src or existing.dst != rel.dst:
                    raise FormatError(f"relation name {rel.name!r} declared twice")
                partner = self._relation(existing.relation)
                if rel.inverse_name not in (partner.name, rel.name + INVERSE_SUFFIX):
                    raise FormatError(f"relation {rel.name!r} disagrees with its declared inverse {partner.name!r}")
                continue
            if rel.inverse_name in self._steps:
                raise FormatError(f"inverse name {rel.inverse_name!r} of {rel.name!r} already in use")
            forward.append(rel)
            self._by_name[rel.name] = rel
            fwd = Step(rel.name, False, rel.src, rel.dst, rel.name)
            self._steps[rel.name] = fwd
            if rel.self_inverse:
                self._inverse_of[fwd] = fwd
            else:
                bwd = Step(rel.name, True, rel.dst, rel.src, rel.inverse_name)
                self._steps[rel.inverse_name] = bwd
                self._inverse_of[fwd] = bwd
                self._inverse_of[bwd] = fwd
        self.relations: tuple[RelationType, ...] = tuple(forward)

    # -- lookup ---------------------------------------------------------------

    def _relation(self, name: str) -> RelationType:
        return self._by_name[name]

    def relation(self, name: str) -> RelationType:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownRelation(f"unknown relation {name!r}") from None

    def step(self, name: str | Step) -> Step:
        """Resolve a relation or inverse-relation name to a :class:`Step`."""
        if isinstance(name, Step):
            return name
        try:
            return self._steps[name]
        except KeyError:
            raise UnknownRelation(f"unknown relation {name!r}") from None

    def inverse(self, step: Step) -> Step:
        return self._inverse_of[step]

    def forward(self, step: Step) -> Step:
        """The forward-direction step of the same relation."""
        return self._steps[step.relation]

    def has_type(self, t: str) -> bool:
        return t in self._type_index

    def check_type(self, t: str) -> None:
        if t not in self._type_index:
            raise UnknownType(f"unknown node type {t!r}")

    def type_index(self, t: str) -> int:
        self.check_type(t)
        return self._type_index[t]

    def steps(self) -> list[Step]:
        """All steps, forward then inverse, in declaration order."""
        out = []
        for rel in self.relations:
            fwd = self._steps[rel.name]
            out.append(fwd)
            if not rel.self_inverse:
                out.append(self._inverse_of[fwd])
        return out

    def steps_from(self, t: str) -> list[Step]:
        return [s for s in self.steps() if s.src == t]

    def steps_between(self, a: str, b: str) -> list[Step]:
        return [s for s in self.steps() if s.src == a and s.dst == b]

    # -- serialization --------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> Schema:
        try:
            types = data["node_types"]
            rels = [
                RelationType(r["name"], r["src"], r["dst"], r.get("inverse_name") or "")
                for r in data.get("relations", [])
            ]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed schema: missing {exc}") from None
        return cls(types, rels)

    def to_dict(self) -> dict:
        return {
            "node_types": list(self.node_types),
            "relations": [
                {"name": r.name, "src": r.src, "dst": r.dst, "inverse_name": r.inverse_name}
                for r in self.relations
            ],
        }

    def __eq__(self, other):
        return isinstance(other, Schema) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.node_types, self.relations))

    def __repr__(self):
        return f"Schema(node_types={list(self.node_types)}, relations={[r.name for r in self.relations]})"


class Hin:
    """Immutable heterogeneous information network.

    Build with :func:`freeze_graph`; never construct directly.
    """

    def __init__(self, schema, ids, type_ranges, adjacency, m_by_relation):
        self.schema: Schema = schema
        self.ids: tuple[str, ...] = tuple(ids)
        self._index = {x: i for i, x in enumerate(self.ids)}
        self._type_ranges: dict[str, tuple[int, int]] = dict(type_ranges)
        self._adj: dict[Step, sp.csr_matrix] = adjacency
        self.m_by_relation: dict[str, int] = dict(m_by_relation)
        self._type_of = np.empty(len(self.ids), dtype=np.int32)
        for t, (lo, hi) in self._type_ranges.items():
            self._type_of[lo:hi] = schema.type_index(t)
        for mat in adjacency.values():
            mat.data.setflags(write=False)
            mat.indices.setflags(write=False)
            mat.indptr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def m(self) -> int:
        return sum(self.m_by_relation.values())

    def count(self, t: str) -> int:
        lo, hi = self.type_range(t)
        return hi - lo

    def type_range(self, t: str) -> tuple[int, int]:
        self.schema.check_type(t)
        return self._type_ranges[t]

    def nodes_of_type(self, t: str) -> range:
        return range(*self.type_range(t))

    def index(self, node: int | str | np.integer) -> int:
        """Global id of ``node``; accepts a global id or an external id string."""
        if isinstance(node, (int, np.integer)) and not isinstance(node, bool):
            if 0 <= node < self.n:
                return int(node)
            raise UnknownNode(f"node index {node} out of range")
        try:
            return self._index[node]
        except (KeyError, TypeError):
            raise UnknownNode(f"unknown node {node!r}") from None

    def type_of(self, node) -> str:
        return self.schema.node_types[self._type_of[self.index(node)]]

    def local(self, node) -> int:
        u = self.index(node)
        return u - self._type_ranges[self.type_of(u)][0]

    def adjacency(self, step: Step | str) -> sp.csr_matrix:
        """CSR adjacency of a step, rows local to ``step.src``, columns local to ``step.dst``."""
        return self._adj[self.schema.step(step)]

    def degrees(self, step: Step | str) -> np.ndarray:
        """Per-node degree along ``step`` for every node of the step's source type."""
        return np.diff(self.adjacency(step).indptr)

    def neighbors(self, node, step: Step | str) -> np.ndarray:
        """N_R(u) as ascending global ids."""
        step = self.schema.step(step)
        u = self.index(node)
        if self.type_of(u) != step.src:
            return np.empty(0, dtype=np.int64)
        adj = self._adj[step]
        row = u - self._type_ranges[step.src][0]
        local = adj.indices[adj.indptr[row]:adj.indptr[row + 1]]
        return local.astype(np.int64) + self._type_ranges[step.dst][0]

    def structure_weight(self, node, step: Step | str) -> int:
        """beta_R(u) = |N_R(u)|."""
        return len(self.neighbors(node, step))

    def edges(self, relation: str) -> Iterator[tuple[int, int]]:
        """Forward edges of a relation as global id pairs (each undirected pair once)."""
        rel = self.schema.relation(relation)
        adj = self._adj[self.schema.step(relation)].tocoo()
        lo_s = self._type_ranges[rel.src][0]
        lo_d = self._type_ranges[rel.dst][0]
        for r, c in zip(adj.row.tolist(), adj.col.tolist()):
            if rel.self_inverse and c < r:
                continue
            yield r + lo_s, c + lo_d

    def __repr__(self):
        return f"Hin(n={self.n}, m={self.m}, types={list(self.schema.node_types)})"


def _record(rec, width):
    if len(rec) == width + 1:
        return tuple(rec[:width]), rec[width]
    if len(rec) != width:
        raise FormatError(f"expected {width} fields, got {len(rec)}")
    return tuple(rec), None


def freeze_graph(
    schema: Schema,
    nodes: Iterable[Sequence],
    edges: Iterable[Sequence],
    source: str | None = None,
    edge_source: str | None = None,
) -> Hin:
    """Build an immutable :class:`Hin`.

    ``nodes`` yields ``(id, type)`` records, ``edges`` yields
    ``(src, dst, relation)`` records. Either may carry a trailing line number
    that is reported in errors. Duplicate edges collapse to one; an edge given
    under an inverse relation name is stored reversed.
    """
    per_type: dict[str, list[str]] = {t: [] for t in schema.node_types}
    seen: dict[str, str] = {}
    for i, rec in enumerate(nodes, 1):
        (nid, ntype), line = _record(rec, 2)
        line = line if line is not None else i
        if not schema.has_type(ntype):
            raise UnknownType(f"node {nid!r} has unknown type {ntype!r}", source, line)
        if nid in seen:
            raise FormatError(f"duplicate node id {nid!r}", source, line)
        seen[nid] = ntype
        per_type[ntype].append(nid)

    ids: list[str] = []
    ranges: dict[str, tuple[int, int]] = {}
    for t in schema.node_types:
        ranges[t] = (len(ids), len(ids) + len(per_type[t]))
        ids.extend(per_type[t])
    index = {x: i for i, x in enumerate(ids)}

    rows: dict[str, list[int]] = {r.name: [] for r in schema.relations}
    cols: dict[str, list[int]] = {r.name: [] for r in schema.relations}
    for i, rec in enumerate(edges, 1):
        (s, d, rname), line = _record(rec, 3)
        line = line if line is not None else i
        try:
            step = schema.step(rname)
        except UnknownRelation:
            raise UnknownRelation(f"edge ({s}, {d}) has unknown relation {rname!r}", edge_source, line) from None
        for x in (s, d):
            if x not in index:
                raise UnknownNode(f"edge ({s}, {d}) references unknown node {x!r}", edge_source, line)
        if seen[s] != step.src or seen[d] != step.dst:
            raise EndpointTypeMismatch(
                f"edge ({s}, {d}) of relation {rname!r} joins {seen[s]}->{seen[d]}, "
                f"expected {step.src}->{step.dst}",
                edge_source,
                line,
            )
        if step.inverse:
            s, d = d, s
        rel = schema.relation(step.relation)
        ls = index[s] - ranges[rel.src][0]
        ld = index[d] - ranges[rel.dst][0]
        if rel.self_inverse and ld < ls:
            ls, ld = ld, ls
        rows[rel.name].append(ls)
        cols[rel.name].append(ld)

    adjacency: dict[Step, sp.csr_matrix] = {}
    m_by_relation: dict[str, int] = {}
    for rel in schema.relations:
        ns = ranges[rel.src][1] - ranges[rel.src][0]
        nd = ranges[rel.dst][1] - ranges[rel.dst][0]
        r = np.asarray(rows[rel.name], dtype=np.int64)
        c = np.asarray(cols[rel.name], dtype=np.int64)
        if len(r):
            key = np.unique(r * max(nd, 1) + c)
            r, c = key // max(nd, 1), key % max(nd, 1)
        m_by_relation[rel.name] = len(r)
        if rel.self_inverse:
            off = r != c
            r, c = np.concatenate([r, c[off]]), np.concatenate([c, r[off]])
        mat = sp.csr_matrix((np.ones(len(r), dtype=np.int64), (r, c)), shape=(ns, nd))
        mat.sort_indices()
        fwd = schema.step(rel.name)
        adjacency[fwd] = mat
        if not rel.self_inverse:
            inv = mat.T.tocsr()
            inv.sort_indices()
            adjacency[schema.inverse(fwd)] = inv
    return Hin(schema, ids, ranges, adjacency, m_by_relation)


def neighbors(g: Hin, u, step) -> list:
    """N_R(u) as ascending global ids."""
    return g.neighbors(u, step).tolist()


def structure_weight(g: Hin, u, step) -> int:
    return g.structure_weight(u, step)


# -- meta-paths -----------------------------------------------------------------


@dataclass(frozen=True)
class MetaPath:
    types: tuple[str, ...]
    steps: tuple[Step, ...]
    symmetric: bool = field(compare=False)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def start(self) -> str:
        return self.types[0]

    @property
    def half(self) -> tuple[Step, ...]:
        """Steps walked by each surfer before the meeting node."""
        return self.steps[: self.length // 2]

    def format(self) -> str:
        """Long form ``A-[R1]->B-[R2]->C``."""
        parts = [self.types[0]]
        for step, t in zip(self.steps, self.types[1:]):
            parts.append(f"-[{step.name}]->{t}")
        return "".join(parts)

    def short(self) -> str:
        return "".join(self.types)

    def __str__(self):
        return self.format()


def make_metapath(schema: Schema, steps: Sequence[Step]) -> MetaPath:
    steps = tuple(schema.step(s) for s in steps)
    if not steps:
        raise ParseError("a meta-path needs at least one relation")
    for a, b in zip(steps, steps[1:]):
        if a.dst != b.src:
            raise SchemaMismatch(f"{a.name} ends at {a.dst} but {b.name} starts at {b.src}")
    types = (steps[0].src,) + tuple(s.dst for s in steps)
    l = len(steps)
    symmetric = types == types[::-1] and all(steps[i] == schema.inverse(steps[l - 1 - i]) for i in range(l))
    return MetaPath(types, steps, symmetric)


_LONG_TOKEN = re.compile(r"-\[([^\]]+)\]->")


def _resolve_type_token(token: str, schema: Schema) -> str:
    if schema.has_type(token):
        return token
    hits = [t for t in schema.node_types if t[:1].upper() == token.upper()]
    if len(hits) == 1:
        return hits[0]
    if not hits:
        raise SchemaMismatch(f"no node type abbreviated {token!r}")
    raise ParseError(f"abbreviation {token!r} matches several node types {hits}")


def parse_metapath(text: str, schema: Schema) -> MetaPath:
    """Parse ``"MAM"`` (short form) or ``"M-[MA]->A-[MA^-1]->M"`` (long form)."""
    s = text.strip()
    if not s:
        raise ParseError("empty meta-path")
    if "-[" in s or "]->" in s:
        pieces = _LONG_TOKEN.split(s)
        # split yields type, rel, type, rel, ..., type
        if len(pieces) < 3 or len(pieces) % 2 == 0:
            raise ParseError(f"cannot parse meta-path {text!r}")
        types = [p.strip() for p in pieces[0::2]]
        rels = [p.strip() for p in pieces[1::2]]
        if any(not t or "-" in t or "[" in t for t in types):
            raise ParseError(f"cannot parse meta-path {text!r}")
        steps = []
        for a, r, b in zip(types, rels, types[1:]):
            schema.check_type(a)
            schema.check_type(b)
            step = schema.step(r)
            if step.src != a or step.dst != b:
                raise SchemaMismatch(f"relation {r!r} joins {step.src}->{step.dst}, not {a}->{b}")
            steps.append(step)
        return make_metapath(schema, steps)

    if not re.fullmatch(r"\w+", s):
        raise ParseError(f"cannot parse meta-path {text!r}")
    if len(s) < 2:
        raise ParseError(f"meta-path {text!r} needs at least two node types")
    types = [_resolve_type_token(ch, schema) for ch in s]
    steps = []
    for a, b in zip(types, types[1:]):
        options = schema.steps_between(a, b)
        if not options:
            raise SchemaMismatch(f"no relation connects {a} to {b}")
        if len(options) > 1:
            names = ", ".join(o.name for o in options)
            raise AmbiguousRelation(f"{a}->{b} is ambiguous ({names}); use the long form")
        steps.append(options[0])
    return make_metapath(schema, steps)


class MetaPathSet(tuple):
    """Deduplicated meta-paths sharing one endpoint type."""

    def __new__(cls, paths: Iterable[MetaPath] = ()):
        out: list[MetaPath] = []
        for p in paths:
            if p not in out:
                out.append(p)
        starts = {p.start for p in out}
        if len(starts) > 1:
            raise SchemaMismatch(f"meta-paths start at different node types {sorted(starts)}")
        return super().__new__(cls, out)

    @property
    def endpoint(self) -> str | None:
        return self[0].start if self else None

    def __str__(self):
        return ",".join(p.format() for p in self)


def parse_metapaths(text: str, schema: Schema) -> MetaPathSet:
    """Comma-separated meta-paths."""
    parts = [p for p in (x.strip() for x in text.split(",")) if p]
    if not parts:
        raise ParseError("no meta-path given")
    return MetaPathSet(parse_metapath(p, schema) for p in parts)


def enumerate_symmetric_metapaths(schema: Schema, endpoint: str, max_len: int) -> MetaPathSet:
    """Every even-length symmetric meta-path from ``endpoint`` back to it, up to ``max_len``.

    Ordered by length, then by the schema's declaration order of the steps.
    An endpoint type without relations yields an empty set.
    """
    schema.check_type(endpoint)
    if max_len < 2 or max_len % 2:
        raise InvalidParameter(f"max_len must be even and >= 2, got {max_len}")
    found: list[MetaPath] = []
    frontier: list[tuple[Step, ...]] = [()]
    for _ in range(max_len // 2):
        grown = []
        for half in frontier:
            at = half[-1].dst if half else endpoint
            for step in schema.steps_from(at):
                grown.append(half + (step,))
        for half in grown:
            mirror = tuple(schema.inverse(s) for s in reversed(half))
            found.append(make_metapath(schema, half + mirror))
        frontier = grown
    return MetaPathSet(found)
