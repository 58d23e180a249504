"""
Content scores from node text.

Each text field (title, abstract, ...) is its own corpus. A node's content
score is the sum over its fields of the Euclidean norm of its tf-idf vector,
rescaled so that nodes of one type that carry content average 1. Nodes without
content score exactly 1, which makes them neutral in a product.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from .errors import EmptyCorpus
from .graph import Hin

DEFAULT_STOPWORDS = frozenset(ENGLISH_STOP_WORDS)

_SPLIT = re.compile(r"[^0-9a-z]+")


def load_stopwords(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


def suffix_stem(token: str) -> str:
    """Crude plural/verb-suffix stripper; stands in for a lemmatizer."""
    for suf, rep in (("ies", "y"), ("sses", "ss"), ("ing", ""), ("ed", ""), ("es", "e"), ("s", "")):
        if token.endswith(suf) and len(token) - len(suf) >= 3:
            return token[: len(token) - len(suf)] + rep
    return token


@dataclass(frozen=True)
class Tokenizer:
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    stem: Callable[[str], str] | None = None
    min_length: int = 2

    def __call__(self, text: str) -> list[str]:
        out = []
        for tok in _SPLIT.split(text.lower()):
            if len(tok) < self.min_length or tok in self.stopwords:
                continue
            out.append(self.stem(tok) if self.stem else tok)
        return out


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stop words and 1-char tokens."""
    return Tokenizer()(text)


@dataclass
class TfIdfModel:
    df: dict[str, int]
    n_docs: int
    vectors: dict[str, dict[str, float]]

    def idf(self, term: str) -> float:
        return math.log(self.n_docs / self.df[term])

    def vector(self, doc: str) -> dict[str, float]:
        return self.vectors.get(doc, {})


def build_tfidf(corpus: Mapping[str, str] | Mapping[str, list[str]], tokenizer=tokenize) -> TfIdfModel:
    """tf-idf with raw counts and idf = ln(D / df); zero weights are dropped.

    ``corpus`` maps a document key to raw text or to a pre-tokenized list.
    """
    if not corpus:
        raise EmptyCorpus("cannot build tf-idf from an empty corpus")
    counts = {}
    for key, doc in corpus.items():
        toks = tokenizer(doc) if isinstance(doc, str) else list(doc)
        counts[key] = Counter(toks)
    df: Counter = Counter()
    for c in counts.values():
        df.update(c.keys())
    n_docs = len(counts)
    idf = {t: math.log(n_docs / d) for t, d in df.items()}
    vectors = {}
    for key, c in counts.items():
        vectors[key] = {t: tf * idf[t] for t, tf in sorted(c.items()) if idf[t] > 0.0}
    return TfIdfModel(dict(sorted(df.items())), n_docs, vectors)


@dataclass
class ContentScoreTable:
    chi: np.ndarray  # per global node id
    has_content: np.ndarray  # bool per global node id
    vectors: dict[int, dict[tuple[str, str], float]] = field(default_factory=dict)

    def __getitem__(self, u: int) -> float:
        return float(self.chi[u])

    def matrix(self) -> tuple[sp.csr_matrix, dict]:
        """Node-by-(field, term) sparse matrix of the tf-idf vectors."""
        terms = sorted({k for v in self.vectors.values() for k in v})
        col = {k: i for i, k in enumerate(terms)}
        rows, cols, vals = [], [], []
        for u, vec in self.vectors.items():
            for k, w in vec.items():
                rows.append(u)
                cols.append(col[k])
                vals.append(w)
        m = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.chi), max(len(terms), 1)))
        return m, col


def unit_content(g: Hin) -> ContentScoreTable:
    return ContentScoreTable(np.ones(g.n), np.zeros(g.n, dtype=bool))


def build_models(corpora: Mapping[str, Mapping[str, str]], tokenizer=tokenize) -> dict[str, TfIdfModel]:
    return {f: build_tfidf(docs, tokenizer) for f, docs in sorted(corpora.items()) if docs}


def content_scores(models: Mapping[str, TfIdfModel], g: Hin) -> ContentScoreTable:
    """Per-node content score, mean-normalized to 1 within each node type."""
    raw = np.zeros(g.n)
    has = np.zeros(g.n, dtype=bool)
    vectors: dict[int, dict[tuple[str, str], float]] = {}
    for fname, model in sorted(models.items()):
        for key, vec in model.vectors.items():
            u = g.index(key)
            has[u] = True
            raw[u] += math.sqrt(sum(w * w for w in vec.values()))
            if vec:
                dst = vectors.setdefault(u, {})
                for t, w in vec.items():
                    dst[(fname, t)] = w
    chi = np.ones(g.n)
    for t in g.schema.node_types:
        lo, hi = g.type_range(t)
        mask = has[lo:hi]
        if not mask.any():
            continue
        mean = raw[lo:hi][mask].mean()
        block = chi[lo:hi]
        # identical (or idf-free) content carries no information: stay neutral
        block[mask] = raw[lo:hi][mask] / mean if mean > 0 else 1.0
    return ContentScoreTable(chi, has, vectors)


def pairwise_relatedness(table: ContentScoreTable, u: int, v: int) -> float:
    """Dot product of two nodes' tf-idf vectors summed over fields; 1 if either has no content."""
    if not (table.has_content[u] and table.has_content[v]):
        return 1.0
    a = table.vectors.get(u, {})
    b = table.vectors.get(v, {})
    if len(b) < len(a):
        a, b = b, a
    return float(sum(w * b[k] for k, w in a.items() if k in b))


def corpus_from_pairs(rows: Iterable[tuple[str, str, str]]) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for nid, fname, text in rows:
        out.setdefault(fname, {})[nid] = text
    return out
