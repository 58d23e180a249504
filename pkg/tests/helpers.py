"""Graph builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from hetfs.engine import build_weight_model
from hetfs.graph import enumerate_symmetric_metapaths
from hetfs.ingest import SynthSpec, generate_synthetic_hin


def random_spec(seed: int, max_nodes: int = 60) -> SynthSpec:
    """2-4 node types, 2-4 relations, at most ``max_nodes`` nodes."""
    rng = np.random.default_rng(seed)
    n_types = int(rng.integers(2, 5))
    names = "ABCD"[:n_types]
    budget = max_nodes
    counts = {}
    for i, t in enumerate(names):
        left = n_types - i - 1
        c = int(rng.integers(2, min(15, budget - 2 * left) + 1))
        counts[t] = c
        budget -= c
    n_rel = int(rng.integers(2, 5))
    rels = []
    pairs = set()
    # a spanning chain first so every type takes part
    for a, b in zip(names, names[1:]):
        pairs.add((a, b))
    while len(pairs) < n_rel:
        a, b = rng.choice(list(names), size=2)
        pairs.add((str(a), str(b)))
    for i, (a, b) in enumerate(sorted(pairs)[:max(n_rel, n_types - 1)]):
        cap = counts[a] * counts[b] - (counts[a] if a == b else 0)
        big = max(counts[a], counts[b])
        k = int(rng.integers(min(cap, big), min(cap, 3 * big) + 1))
        rels.append((f"R{i}{a}{b}", a, b, k))
    return SynthSpec(counts, rels, skew=float(rng.uniform(0, 1)), seed=seed)


def random_hin(seed: int, max_nodes: int = 60):
    return generate_synthetic_hin(random_spec(seed, max_nodes)).freeze()


def random_weight_model(seed: int, max_nodes: int = 60, text: bool = True):
    g = random_hin(seed, max_nodes)
    corpora = None
    if text:
        rng = np.random.default_rng(seed + 1000)
        t = g.schema.node_types[0]
        words = ["graph", "walk", "movie", "actor", "paper", "venue", "similarity", "network"]
        corpora = {"title": {g.ids[i]: " ".join(rng.choice(words, size=3)) for i in g.nodes_of_type(t)
                             if rng.random() < 0.7}}
    return build_weight_model(g, corpora)


def all_metapaths(g, max_len: int = 4):
    out = []
    for t in g.schema.node_types:
        for p in enumerate_symmetric_metapaths(g.schema, t, max_len):
            out.append(p)
    return out
