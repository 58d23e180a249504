"""
Downstream tasks: link prediction, clustering and classification by label transfer.

Link prediction scores candidate partners of each query node by similarity in
a graph that holds only the training links. Clustering and classification
assign a node the label whose labelled nodes it is most similar to.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .engine import WeightModel, as_metapath_set, hetfs_single_source
from .errors import EmptyInput, EmptyTestSet, InvalidParameter
from .graph import Hin, enumerate_symmetric_metapaths, freeze_graph, parse_metapath
from .ingest import Dataset

UNLABELED = "unlabeled"


# -- metrics ------------------------------------------------------------------


def auc_score(positive: Sequence[float], negative: Sequence[float]) -> float:
    """P(random positive outranks random negative), ties counting one half."""
    pos = np.asarray(positive, dtype=float)
    neg = np.asarray(negative, dtype=float)
    if not len(pos) or not len(neg):
        raise EmptyInput("AUC needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def reciprocal_rank(scores: Mapping, positives) -> float:
    """1 / rank of the best-ranked positive; ranking by score, then by key."""
    order = sorted(scores, key=lambda x: (-scores[x], x))
    for i, x in enumerate(order, 1):
        if x in positives:
            return 1.0 / i
    return 0.0


def _as_lists(pred, truth):
    if isinstance(pred, Mapping) and isinstance(truth, Mapping):
        if set(pred) != set(truth):
            raise InvalidParameter("prediction and truth cover different nodes")
        keys = sorted(truth)
        return [pred[k] for k in keys], [truth[k] for k in keys]
    pred, truth = list(pred), list(truth)
    if len(pred) != len(truth):
        raise InvalidParameter("prediction and truth differ in length")
    return pred, truth


def clustering_metrics(pred, truth) -> dict[str, float]:
    """NMI (arithmetic-mean normalization) and ARI."""
    p, t = _as_lists(pred, truth)
    if not t:
        raise EmptyInput("no nodes to compare")
    p = [str(x) for x in p]
    t = [str(x) for x in t]
    return {
        "nmi": float(normalized_mutual_info_score(t, p, average_method="arithmetic")),
        "ari": float(adjusted_rand_score(t, p)),
    }


def _label_set(x) -> frozenset:
    if x is None or x == UNLABELED:
        return frozenset()
    if isinstance(x, str):
        return frozenset([x])
    return frozenset(x)


def classification_metrics(pred, truth) -> dict[str, float]:
    """Micro and macro F1 over label indicators.

    Each node carries one label, a collection of labels, or nothing
    (``None`` / ``"unlabeled"``). Labels absent from both sides do not enter
    the macro average.
    """
    p, t = _as_lists(pred, truth)
    if not t:
        raise EmptyInput("no nodes to compare")
    p = [_label_set(x) for x in p]
    t = [_label_set(x) for x in t]
    classes = sorted(set().union(*p, *t))
    if not classes:
        return {"micro_f1": 1.0, "macro_f1": 1.0}
    tp = np.array([sum(c in a and c in b for a, b in zip(p, t)) for c in classes], dtype=float)
    fp = np.array([sum(c in a and c not in b for a, b in zip(p, t)) for c in classes], dtype=float)
    fn = np.array([sum(c not in a and c in b for a, b in zip(p, t)) for c in classes], dtype=float)
    # every listed class occurs somewhere, so no denominator is zero
    per_class = 2 * tp / (2 * tp + fp + fn)
    return {
        "micro_f1": float(2 * tp.sum() / (2 * tp.sum() + fp.sum() + fn.sum())),
        "macro_f1": float(per_class.mean()),
    }


# -- link prediction ------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    relation: str
    mode: str = "random"  # "random" or "time"
    ratio: float = 0.7
    seed: int = 0
    ts: float | None = None

    def __post_init__(self):
        if self.mode not in ("random", "time"):
            raise InvalidParameter(f"split mode must be 'random' or 'time', got {self.mode!r}")
        if self.mode == "random" and not 0.0 < self.ratio < 1.0:
            raise InvalidParameter(f"ratio must lie in (0, 1), got {self.ratio}")
        if self.mode == "time" and self.ts is None:
            raise InvalidParameter("time split needs a cut-off ts")


def _pair(rel, a, b):
    return (a, b) if not rel.self_inverse or a <= b else (b, a)


def split_edges(dataset: Dataset, split: SplitSpec) -> tuple[Hin, list[tuple[str, str]]]:
    """Training graph (all other relations intact) plus the new test links."""
    g = dataset.graph
    schema = g.schema
    rel = schema.relation(split.relation)
    if rel.src != rel.dst:
        raise InvalidParameter(f"link prediction needs a same-type relation, {rel.name} joins {rel.src}->{rel.dst}")
    ids = g.ids
    target = sorted({_pair(rel, ids[a], ids[b]) for a, b in g.edges(rel.name)})
    if split.mode == "random":
        rng = np.random.default_rng(split.seed)
        order = rng.permutation(len(target))
        cut = int(round(split.ratio * len(target)))
        train = {target[i] for i in order[:cut]}
        test = [target[i] for i in sorted(order[cut:])]
    else:
        stamped = [(s, d, t) for r, s, d, t in dataset.edge_times if r == rel.name]
        if not stamped:
            raise InvalidParameter(f"relation {rel.name} has no edge times for a time split")
        first_seen: dict[tuple[str, str], float] = {}
        for s, d, t in stamped:
            key = _pair(rel, s, d)
            first_seen[key] = min(t, first_seen.get(key, t))
        train = {p for p in target if first_seen.get(p, -np.inf) < split.ts}
        test = sorted(p for p in target if p not in train)
    test = [p for p in dict.fromkeys(test) if p not in train and p[0] != p[1]]

    nodes = [(x, g.type_of(i)) for i, x in enumerate(ids)]
    edges = []
    for r in schema.relations:
        for a, b in g.edges(r.name):
            if r.name == rel.name and _pair(rel, ids[a], ids[b]) not in train:
                continue
            edges.append((ids[a], ids[b], r.name))
    return freeze_graph(schema, nodes, edges), test


def link_prediction_eval(
    wm: WeightModel,
    split: SplitSpec,
    test_pairs: Sequence[tuple[str, str]],
    k: int = 100,
    metapaths=None,
    max_len: int = 2,
    negatives_per_positive: int = 100,
    full_candidates_limit: int = 10_000,
    random_scores: bool = False,
    seed: int = 0,
) -> dict:
    """AUC, MRR and top-k F1 of similarity-ranked link candidates.

    ``wm`` must be built on the training graph. For each query node the
    candidates are all nodes of its type except itself and its training
    partners. AUC pools every query's positives against all negatives while
    the candidate count stays within ``full_candidates_limit``; above it each
    positive is matched with ``negatives_per_positive`` uniform negatives.
    """
    g = wm.graph
    rel = g.schema.relation(split.relation)
    if not test_pairs:
        raise EmptyTestSet("no new links in the test split")
    train_partners: dict[int, set[int]] = defaultdict(set)
    for a, b in g.edges(rel.name):
        train_partners[a].add(b)
        train_partners[b].add(a)
    positives: dict[int, set[int]] = defaultdict(set)
    for s, d in test_pairs:
        a, b = g.index(s), g.index(d)
        positives[a].add(b)
        if rel.self_inverse:
            positives[b].add(a)
    if metapaths is None:
        mps = enumerate_symmetric_metapaths(g.schema, rel.src, max_len)
    else:
        mps = as_metapath_set(wm, metapaths)
    lo, hi = g.type_range(rel.src)
    rng = np.random.default_rng(seed)
    queries = sorted(positives)
    n_candidates = sum(hi - lo - 1 - len(train_partners[u]) for u in queries)
    sample = n_candidates > full_candidates_limit

    pos_scores, neg_scores, rr, f1s = [], [], [], []
    for u in queries:
        if random_scores:
            scores = rng.random(hi - lo)
        else:
            scores = hetfs_single_source(wm, u, mps).values
        cand = np.array([x for x in range(lo, hi) if x != u and x not in train_partners[u]], dtype=np.int64)
        assert not any(x in train_partners[u] for x in cand.tolist()), "test candidate leaked from training"
        pos = positives[u] - train_partners[u]
        if not pos or not len(cand):
            continue
        is_pos = np.isin(cand, list(pos))
        cs = scores[cand - lo]
        pos_scores.extend(cs[is_pos].tolist())
        neg_pool = cs[~is_pos]
        if sample and len(neg_pool):
            take = rng.choice(len(neg_pool), size=min(len(neg_pool), negatives_per_positive * int(is_pos.sum())),
                              replace=False)
            neg_pool = neg_pool[np.sort(take)]
        neg_scores.extend(neg_pool.tolist())
        ranked = sorted(zip((-cs).tolist(), cand.tolist()))
        rr.append(reciprocal_rank({x: -s for s, x in ranked}, pos))
        top = {x for _, x in ranked[:k]}
        hit = len(top & pos)
        prec = hit / len(top) if top else 0.0
        rec = hit / len(pos)
        f1s.append(2 * prec * rec / (prec + rec) if hit else 0.0)
    if not pos_scores:
        raise EmptyTestSet("no test link has a scorable query node")
    return {
        "auc": auc_score(pos_scores, neg_scores),
        "mrr": float(np.mean(rr)),
        "f1_at_k": float(np.mean(f1s)),
        "k": k,
        "queries": len(rr),
        "positives": len(pos_scores),
        "negatives": len(neg_scores),
    }


# -- label transfer ------------------------------------------------------------------


@dataclass
class LabeledNodes:
    labels: dict[str, str]
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.vocabulary:
            self.vocabulary = tuple(sorted(set(self.labels.values())))
        stray = set(self.labels.values()) - set(self.vocabulary)
        if stray:
            raise InvalidParameter(f"labels {sorted(stray)} are not in the vocabulary")


def labels_from_anchor(g: Hin, path, anchor_labels: Mapping[str, str], vocabulary=()) -> LabeledNodes:
    """Label each start node by the label it reaches most often along ``path``.

    With ``path`` = ``A-P-V`` and venue labels this tags every author with the
    research area of the venues it publishes at most.
    """
    if isinstance(path, str):
        path = parse_metapath(path, g.schema)
    end_lo = g.type_range(path.types[-1])[0]
    vocab = tuple(vocabulary) or tuple(sorted(set(anchor_labels.values())))
    label_of = {g.index(k) - end_lo: v for k, v in anchor_labels.items()}
    mat = None
    for step in path.steps:
        a = g.adjacency(step).astype(np.int64)
        mat = a if mat is None else mat @ a
    mat = mat.tocsr()
    lo = g.type_range(path.start)[0]
    out = {}
    for row in range(mat.shape[0]):
        votes: Counter = Counter()
        for col, cnt in zip(mat.indices[mat.indptr[row]:mat.indptr[row + 1]].tolist(),
                            mat.data[mat.indptr[row]:mat.indptr[row + 1]].tolist()):
            if col in label_of:
                votes[label_of[col]] += cnt
        if votes:
            best = max(votes.values())
            out[g.ids[lo + row]] = next(lab for lab in vocab if votes.get(lab) == best)
    return LabeledNodes(out, vocab)


def similarity_label_transfer(
    wm: WeightModel,
    labels: LabeledNodes,
    targets: Sequence[str] | None = None,
    max_len: int = 2,
    metapaths=None,
) -> dict[str, str]:
    """Give each target the label with the largest summed similarity to its labelled nodes.

    Targets with no similarity to any labelled node get ``"unlabeled"``.
    """
    g = wm.graph
    if not labels.labels:
        raise InvalidParameter("no labelled nodes")
    types = {g.type_of(x) for x in labels.labels}
    if len(types) != 1:
        raise InvalidParameter(f"labelled nodes span several types {sorted(types)}")
    (ntype,) = types
    if metapaths is None:
        mps = enumerate_symmetric_metapaths(g.schema, ntype, max_len)
    else:
        mps = as_metapath_set(wm, metapaths)
    lo, hi = g.type_range(ntype)
    if targets is None:
        targets = [g.ids[i] for i in range(lo, hi) if g.ids[i] not in labels.labels]
    vocab_index = {lab: i for i, lab in enumerate(labels.vocabulary)}
    members = defaultdict(list)
    for x, lab in labels.labels.items():
        members[vocab_index[lab]].append(g.index(x) - lo)
    out = {}
    for t in targets:
        u = g.index(t)
        if not mps:
            out[t] = UNLABELED
            continue
        s = hetfs_single_source(wm, u, mps).values.copy()
        s[u - lo] = 0.0  # a node is no evidence for itself
        acc = np.zeros(len(labels.vocabulary))
        for i, idx in members.items():
            acc[i] = s[idx].sum()
        out[t] = labels.vocabulary[int(np.argmax(acc))] if acc.max() > 0 else UNLABELED
    return out
