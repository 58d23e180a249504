"""
Loading datasets from disk and generating synthetic ones.

On-disk layout (one directory per dataset)::

    schema.json   {"node_types": [...], "relations": [{"name", "src", "dst", "inverse_name"?}]}
    nodes.tsv     id  type
    edges.tsv     src dst relation [time]
    text.tsv      id  field text        (optional; \\t \\n \\\\ escaped)
    labels.tsv    id  label             (optional)

All TSV files are UTF-8 with a header row.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, HetfsError, InfeasibleSpec, UnknownNode
from .graph import Hin, Schema, freeze_graph


class IoError(HetfsError, OSError):
    pass


@dataclass
class DatasetPaths:
    schema: Path
    nodes: Path
    edges: Path
    text: Path | None = None
    labels: Path | None = None

    @classmethod
    def from_dir(cls, root) -> DatasetPaths:
        root = Path(root)
        text = root / "text.tsv"
        labels = root / "labels.tsv"
        return cls(
            root / "schema.json",
            root / "nodes.tsv",
            root / "edges.tsv",
            text if text.exists() else None,
            labels if labels.exists() else None,
        )


@dataclass
class Dataset:
    """A frozen graph plus everything that rode along with it."""

    graph: Hin
    corpora: dict[str, dict[str, str]] = field(default_factory=dict)
    # (relation, src id, dst id, time) for edges.tsv rows carrying a time column
    edge_times: list[tuple[str, str, str, float]] = field(default_factory=list)
    labels: dict[str, str] | None = None

    def __iter__(self):
        # allows ``graph, corpora = load_dataset(...)``
        return iter((self.graph, self.corpora))


def unescape(text: str) -> str:
    out = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"t": "\t", "n": "\n", "\\": "\\", "r": "\r"}.get(nxt, "\\" + nxt))
    return "".join(out)


def escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _read_tsv(path: Path, required: Sequence[str]):
    """Yield (line number, row dict) for each data row."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing header row", str(path), 1)
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"missing column(s) {missing}", str(path), 1)
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, got {len(row)}", str(path), line)
            yield line, dict(zip(header, row))


def load_schema(path) -> Schema:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    return Schema.from_dict(data)


def load_dataset(paths) -> Dataset:
    """Load a dataset directory (or :class:`DatasetPaths`) into a frozen graph."""
    if not isinstance(paths, DatasetPaths):
        paths = DatasetPaths.from_dir(paths)
    schema = load_schema(paths.schema)

    nodes = [(r["id"], r["type"], line) for line, r in _read_tsv(paths.nodes, ("id", "type"))]
    edge_rows = []
    times = []
    for line, r in _read_tsv(paths.edges, ("src", "dst", "relation")):
        edge_rows.append((r["src"], r["dst"], r["relation"], line))
        if r.get("time", "") != "":
            try:
                t = float(r["time"])
            except ValueError:
                raise FormatError(f"bad time value {r['time']!r}", str(paths.edges), line) from None
            times.append((r["relation"], r["src"], r["dst"], t))
    g = freeze_graph(schema, nodes, edge_rows, source=str(paths.nodes), edge_source=str(paths.edges))

    # store edge times in forward orientation
    oriented = []
    for rel, s, d, t in times:
        step = schema.step(rel)
        if step.inverse:
            s, d = d, s
        oriented.append((step.relation, s, d, t))

    corpora: dict[str, dict[str, str]] = {}
    if paths.text is not None:
        for line, r in _read_tsv(paths.text, ("id", "field", "text")):
            nid, fname = r["id"], r["field"]
            try:
                g.index(nid)
            except UnknownNode:
                raise UnknownNode(f"text row references unknown node {nid!r}", str(paths.text), line) from None
            docs = corpora.setdefault(fname, {})
            if nid in docs:
                raise FormatError(f"duplicate text for ({nid}, {fname})", str(paths.text), line)
            docs[nid] = unescape(r["text"])

    labels = None
    if paths.labels is not None:
        labels = load_labels(paths.labels, g)
    return Dataset(g, corpora, oriented, labels)


def load_labels(path, g: Hin) -> dict[str, str]:
    labels = {}
    for line, r in _read_tsv(Path(path), ("id", "label")):
        try:
            g.index(r["id"])
        except UnknownNode:
            raise UnknownNode(f"label row references unknown node {r['id']!r}", str(path), line) from None
        labels[r["id"]] = r["label"]
    return labels


# -- bundles --------------------------------------------------------------------


@dataclass
class DatasetBundle:
    """In-memory tables in the on-disk format, ready to :meth:`write`."""

    schema: dict
    nodes: list[tuple[str, str]]
    edges: list[tuple]  # (src, dst, relation) or (src, dst, relation, time)
    text: list[tuple[str, str, str]] = field(default_factory=list)
    labels: list[tuple[str, str]] = field(default_factory=list)

    def write(self, root) -> DatasetPaths:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "schema.json", "w", encoding="utf-8") as fh:
            json.dump(self.schema, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_tsv(root / "nodes.tsv", ("id", "type"), self.nodes)
        timed = any(len(e) > 3 for e in self.edges)
        if timed:
            rows = [e if len(e) > 3 else (*e, "") for e in self.edges]
            _write_tsv(root / "edges.tsv", ("src", "dst", "relation", "time"), rows)
        else:
            _write_tsv(root / "edges.tsv", ("src", "dst", "relation"), self.edges)
        for name, header, rows in (("text.tsv", ("id", "field", "text"), self.text),
                                   ("labels.tsv", ("id", "label"), self.labels)):
            path = root / name
            if rows:
                if name == "text.tsv":
                    rows = [(i, f, escape(t)) for i, f, t in rows]
                _write_tsv(path, header, rows)
            elif path.exists():
                path.unlink()
        return DatasetPaths.from_dir(root)

    def freeze(self) -> Hin:
        return freeze_graph(Schema.from_dict(self.schema), self.nodes, [e[:3] for e in self.edges])

    def corpora(self) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {}
        for nid, fname, text in self.text:
            out.setdefault(fname, {})[nid] = text
        return out


def _write_tsv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        fh.writelines("\t".join(_cell(x) for x in row) + "\n" for row in rows)


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


# -- synthetic graphs -------------------------------------------------------------


@dataclass
class SynthSpec:
    """Recipe for :func:`generate_synthetic_hin`.

    ``relations`` holds ``(name, src type, dst type, edge count)``. ``skew`` in
    [0, 1] moves endpoint choice from uniform (0) to a Zipf-like power law (1).
    ``text`` maps a node type to ``(field name, words per document)``.
    """

    node_counts: Mapping[str, int]
    relations: Sequence[tuple[str, str, str, int]]
    skew: float = 0.0
    seed: int = 0
    text: Mapping[str, tuple[str, int]] = field(default_factory=dict)
    vocabulary: int = 500


def _endpoint_weights(count: int, skew: float, rng: np.random.Generator) -> np.ndarray:
    ranks = rng.permutation(count) + 1.0
    w = ranks ** (-skew)
    return w / w.sum()


def _sample_pairs(rng, n_src, n_dst, k, w_src, w_dst, no_loops):
    capacity = n_src * n_dst - (min(n_src, n_dst) if no_loops else 0)
    if k > capacity:
        raise InfeasibleSpec(f"{k} edges requested but only {capacity} distinct pairs exist")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if capacity <= 4 * k and n_src * n_dst <= 20_000_000:
        codes = np.arange(n_src * n_dst, dtype=np.int64)
        p = np.outer(w_src, w_dst).ravel()
        if no_loops:
            p[codes // n_dst == codes % n_dst] = 0.0
        # keep every pair reachable so that the draw always succeeds
        p = p + 1e-12 * (p > 0) if no_loops else p + 1e-12
        p /= p.sum()
        return np.sort(rng.choice(codes, size=k, replace=False, p=p))
    chosen = np.empty(0, dtype=np.int64)
    while len(chosen) < k:
        want = int((k - len(chosen)) * 1.2) + 16
        s = rng.choice(n_src, size=want, p=w_src)
        d = rng.choice(n_dst, size=want, p=w_dst)
        if no_loops:
            keep = s != d
            s, d = s[keep], d[keep]
        batch = s.astype(np.int64) * n_dst + d
        merged = np.concatenate([chosen, batch])
        _, first = np.unique(merged, return_index=True)
        chosen = merged[np.sort(first)][:k]
    return np.sort(chosen)


def generate_synthetic_hin(spec: SynthSpec) -> DatasetBundle:
    """Reproducible random HIN; the same spec always yields identical tables."""
    for t, c in spec.node_counts.items():
        if c <= 0:
            raise InfeasibleSpec(f"node count for {t!r} must be positive")
    if not 0.0 <= spec.skew <= 2.0:
        raise InfeasibleSpec(f"skew must lie in [0, 2], got {spec.skew}")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed & (2**64 - 1)))
    types = list(spec.node_counts)
    names = {t: [f"{t.lower()}{i}" for i in range(spec.node_counts[t])] for t in types}
    nodes = [(x, t) for t in types for x in names[t]]
    schema = {
        "node_types": types,
        "relations": [{"name": r, "src": s, "dst": d} for r, s, d, _ in spec.relations],
    }
    Schema.from_dict(schema)  # validate early
    edges = []
    for rname, s, d, k in spec.relations:
        ns, nd = spec.node_counts[s], spec.node_counts[d]
        if k < 0:
            raise InfeasibleSpec(f"negative edge count for {rname!r}")
        ws = _endpoint_weights(ns, spec.skew, rng)
        wd = ws if s == d else _endpoint_weights(nd, spec.skew, rng)
        codes = _sample_pairs(rng, ns, nd, k, ws, wd, no_loops=(s == d))
        src_names, dst_names = names[s], names[d]
        for c in codes.tolist():
            edges.append((src_names[c // nd], dst_names[c % nd], rname))
    text = []
    if spec.text:
        vocab = [f"w{i:04d}" for i in range(spec.vocabulary)]
        zipf = 1.0 / np.arange(1, spec.vocabulary + 1)
        zipf /= zipf.sum()
        for t, (fname, length) in spec.text.items():
            for x in names[t]:
                words = rng.choice(spec.vocabulary, size=length, p=zipf)
                text.append((x, fname, " ".join(vocab[w] for w in words)))
    return DatasetBundle(schema, nodes, edges, text)


# -- presets used by tests, the CLI and the benchmarks ---------------------------------


def g1_bundle() -> DatasetBundle:
    """The small movie fixture: three movies, two actors, one director."""
    return DatasetBundle(
        {
            "node_types": ["M", "A", "D"],
            "relations": [{"name": "MA", "src": "M", "dst": "A"}, {"name": "MD", "src": "M", "dst": "D"}],
        },
        [("m1", "M"), ("m2", "M"), ("m3", "M"), ("a1", "A"), ("a2", "A"), ("d1", "D")],
        [("m1", "a1", "MA"), ("m2", "a1", "MA"), ("m2", "a2", "MA"), ("m3", "a2", "MA"),
         ("m1", "d1", "MD"), ("m2", "d1", "MD")],
    )


# Node and edge counts of the academic dataset, used to size desk-scale benchmarks.
DBLP_NODES = {"A": 28645, "P": 21044, "T": 22551, "V": 18}
DBLP_EDGES = [("AP", "A", "P", 69311), ("PP", "P", "P", 34238), ("PT", "P", "T", 171774), ("PV", "P", "V", 21044)]


def dblp_like_spec(edge_scale: float = 1.0, seed: int = 0, skew: float = 0.5) -> SynthSpec:
    rels = [(r, s, d, int(round(k * edge_scale))) for r, s, d, k in DBLP_EDGES]
    return SynthSpec(DBLP_NODES, rels, skew=skew, seed=seed)


def planted_partition_bundle(
    authors: int = 200,
    blocks: int = 2,
    papers_per_author: float = 3.0,
    authors_per_paper: int = 3,
    venues_per_block: int = 2,
    mixing: float = 0.1,
    seed: int = 0,
) -> DatasetBundle:
    """Author-paper-venue graph whose authors fall into ``blocks`` planted groups.

    Each paper belongs to one block. Every author slot and the venue are drawn
    from that block, except with probability ``mixing`` from anywhere. Authors
    are labelled ``b0``, ``b1``, ... by block.
    """
    if authors < blocks or blocks < 1:
        raise InfeasibleSpec("need at least one author per block")
    if not 0.0 <= mixing <= 1.0:
        raise InfeasibleSpec(f"mixing must lie in [0, 1], got {mixing}")
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), 31]))
    block_of = np.arange(authors) % blocks
    members = [np.flatnonzero(block_of == b) for b in range(blocks)]
    n_venues = blocks * venues_per_block
    n_papers = int(round(authors * papers_per_author))
    edges = set()
    pv = []
    for p in range(n_papers):
        b = p % blocks
        chosen = set()
        while len(chosen) < min(authors_per_paper, authors):
            pool = np.arange(authors) if rng.random() < mixing else members[b]
            chosen.add(int(rng.choice(pool)))
        edges.update((f"a{a}", f"p{p}", "AP") for a in chosen)
        vb = int(rng.integers(blocks)) if rng.random() < mixing else b
        pv.append((f"p{p}", f"v{vb * venues_per_block + int(rng.integers(venues_per_block))}", "PV"))
    nodes = ([(f"a{i}", "A") for i in range(authors)] + [(f"p{i}", "P") for i in range(n_papers)]
             + [(f"v{i}", "V") for i in range(n_venues)])
    schema = {
        "node_types": ["A", "P", "V"],
        "relations": [{"name": "AP", "src": "A", "dst": "P"}, {"name": "PV", "src": "P", "dst": "V"}],
    }
    labels = [(f"a{i}", f"b{block_of[i]}") for i in range(authors)]
    return DatasetBundle(schema, nodes, sorted(edges, key=lambda e: (int(e[1][1:]), int(e[0][1:]))) + pv,
                         labels=labels)


__all__ = [
    "Dataset",
    "DatasetBundle",
    "DatasetPaths",
    "IoError",
    "SynthSpec",
    "dblp_like_spec",
    "g1_bundle",
    "generate_synthetic_hin",
    "load_dataset",
    "load_labels",
    "load_schema",
    "planted_partition_bundle",
]
