"""
Command-line front end: ingest -> precompute -> query / repl / eval.

Settings come from built-in defaults, then a flat ``key = value`` config
file, then ``HETFS_<KEY>`` environment variables, then command-line flags.
Lines starting with ``#`` on stdout carry timings and are the only output
that varies between identical runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import pickle
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .content import ContentScoreTable, build_models, content_scores, unit_content
from .engine import (
    CONTENT_MODES,
    DEFAULT_C,
    DEFAULT_EPSILON,
    WeightModel,
    metapath_free_query,
    topk,
)
from .errors import HetfsError, InvalidParameter
from .evaluation import (
    LabeledNodes,
    SplitSpec,
    classification_metrics,
    clustering_metrics,
    labels_from_anchor,
    link_prediction_eval,
    similarity_label_transfer,
    split_edges,
)
from .ingest import (
    Dataset,
    SynthSpec,
    dblp_like_spec,
    g1_bundle,
    generate_synthetic_hin,
    load_dataset,
    planted_partition_bundle,
)
from .weights import (
    compute_centrality,
    compute_edge_contribution,
    export_contribution_graph,
    override_contribution,
    read_centrality,
    read_contribution,
    write_centrality,
    write_contribution,
)

ENV_PREFIX = "HETFS_"
SNAPSHOT = "snapshot.pkl"


@dataclass
class ProjectConfig:
    data: str = "."
    store: str = ""  # defaults to <data>/.hetfs
    c: float = DEFAULT_C
    c_n: float = 0.85
    content_mode: str = "node"
    tol: float = 1e-8
    max_iter: int = 100
    epsilon: float = DEFAULT_EPSILON
    k: int = 10
    seed: int = 0
    engine: str = "exact"
    walks: int = 200_000
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise InvalidParameter(f"c must lie in (0, 1), got {self.c}")
        if not 0.0 < self.c_n < 1.0:
            raise InvalidParameter(f"c_n must lie in (0, 1), got {self.c_n}")
        if self.content_mode not in CONTENT_MODES:
            raise InvalidParameter(f"content_mode must be one of {CONTENT_MODES}")
        if self.engine not in ("exact", "mc"):
            raise InvalidParameter("engine must be exact or mc")
        if self.k < 1 or self.max_iter < 1 or self.walks < 1 or self.workers < 1:
            raise InvalidParameter("k, max_iter, walks and workers must be positive")
        if self.tol <= 0 or self.epsilon < 0:
            raise InvalidParameter("tol must be positive and epsilon non-negative")

    @property
    def store_dir(self) -> Path:
        return Path(self.store) if self.store else Path(self.data) / ".hetfs"


def _coerce(name: str, raw):
    kind = {f.name: f.type for f in fields(ProjectConfig)}[name]
    try:
        if kind in ("float", float):
            return float(raw)
        if kind in ("int", int):
            return int(raw)
    except ValueError:
        raise InvalidParameter(f"config key {name!r} expects a number, got {raw!r}") from None
    return str(raw)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    known = {f.name for f in fields(ProjectConfig)}
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameter(f"{source}:{no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise InvalidParameter(f"{source}:{no}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, env=None, overrides=None) -> ProjectConfig:
    values: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidParameter(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(path)))
        # relative paths in a config file are relative to the file
        for key in ("data", "store"):
            if key in values and values[key] and not Path(values[key]).is_absolute():
                values[key] = str(Path(path).parent / values[key])
    env = os.environ if env is None else env
    known = {f.name for f in fields(ProjectConfig)}
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key not in known:
            raise InvalidParameter(f"unknown config key {key!r} in environment variable {name}")
        values[key] = _coerce(key, raw)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ProjectConfig(**values)


# -- store ------------------------------------------------------------------------------


def _write_snapshot(dataset: Dataset, store: Path) -> str:
    store.mkdir(parents=True, exist_ok=True)
    blob = pickle.dumps(
        {"graph": dataset.graph, "corpora": dataset.corpora, "edge_times": dataset.edge_times,
         "labels": dataset.labels},
        protocol=4,
    )
    (store / SNAPSHOT).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def _read_snapshot(store: Path) -> Dataset:
    path = store / SNAPSHOT
    if not path.exists():
        raise HetfsError(f"no snapshot at {path}; run `hetfs ingest` first")
    with open(path, "rb") as fh:
        data = pickle.load(fh)
    return Dataset(data["graph"], data["corpora"], data["edge_times"], data["labels"])


def _load_model(cfg: ProjectConfig, dataset: Dataset | None = None) -> WeightModel:
    store = cfg.store_dir
    dataset = dataset or _read_snapshot(store)
    g = dataset.graph
    if not (store / "alpha.tsv").exists():
        raise HetfsError(f"no precomputed tables in {store}; run `hetfs precompute` first")
    centrality = read_centrality(store / "alpha.tsv", g)
    contribution = read_contribution(store / "contribution.tsv", g.schema)
    with open(store / "content.pkl", "rb") as fh:
        content: ContentScoreTable = pickle.load(fh)
    return WeightModel(g, content, centrality, contribution, c=cfg.c, content_mode=cfg.content_mode)


def _counts_line(g) -> str:
    nodes = " ".join(f"{t}={g.count(t)}" for t in g.schema.node_types)
    edges = " ".join(f"{r.name}={g.m_by_relation[r.name]}" for r in g.schema.relations)
    return f"nodes: {nodes}; edges: {edges}"


# -- commands ----------------------------------------------------------------------------


def cmd_ingest(cfg: ProjectConfig, args) -> int:
    dataset = load_dataset(cfg.data)
    digest = _write_snapshot(dataset, cfg.store_dir)
    print(_counts_line(dataset.graph))
    fields_ = sorted(dataset.corpora)
    print(f"text fields: {','.join(fields_) if fields_ else '-'}")
    print(f"labels: {len(dataset.labels) if dataset.labels else 0}")
    print(f"snapshot: {digest}")
    return 0


def cmd_precompute(cfg: ProjectConfig, args) -> int:
    store = cfg.store_dir
    dataset = _read_snapshot(store)
    g = dataset.graph
    contribution = compute_edge_contribution(g)
    centrality = compute_centrality(g, cfg.c_n, cfg.tol, cfg.max_iter)
    content = content_scores(build_models(dataset.corpora), g) if dataset.corpora else unit_content(g)
    write_centrality(store / "alpha.tsv", g, centrality)
    write_contribution(store / "contribution.tsv", contribution)
    with open(store / "chi.tsv", "w", encoding="utf-8") as fh:
        fh.write("node_id\tchi\n")
        fh.writelines(f"{nid}\t{x!r}\n" for nid, x in zip(g.ids, content.chi.tolist()))
    with open(store / "content.pkl", "wb") as fh:
        pickle.dump(content, fh, protocol=4)
    for r in g.schema.relations:
        if contribution.mu[r.name] == 0.0:
            print(f"warning: μ=0 for {r.name}", file=sys.stderr)
    state = "converged" if centrality.converged else "not converged"
    print(f"centrality: {centrality.iterations} iterations, residual {centrality.residual:.3e} ({state})")
    print("contribution: " + " ".join(f"{r}={m:.5f}" for r, m in contribution.mu.items()))
    print(f"content: {int(content.has_content.sum())} nodes with text")
    if args.figure:
        from .plotting import plot_convergence

        plot_convergence(centrality.history, args.figure)
    return 0


def _run_query(wm: WeightModel, cfg: ProjectConfig, node: str, mp: str | None, free: int | None, k: int):
    opts = dict(k=k, engine=cfg.engine, epsilon=cfg.epsilon, walks=cfg.walks, seed=cfg.seed, workers=cfg.workers)
    if free is not None:
        return metapath_free_query(wm, node, max_len=free, **opts)
    if not mp:
        raise InvalidParameter("give meta-paths (--mp) or a length bound (--free L)")
    return topk(wm, node, mp, **opts)


def _emit(result, as_json: bool, out=None) -> None:
    out = out or sys.stdout
    if as_json:
        data = json.loads(result.to_json(timing=False))
        out.write(json.dumps(data, indent=2) + "\n")
        out.write(f"# elapsed_ms\t{result.elapsed_ms:.3f}\n")
    else:
        out.write(result.to_tsv(timing=True))


def cmd_query(cfg: ProjectConfig, args) -> int:
    wm = _load_model(cfg)
    result = _run_query(wm, cfg, args.node, args.mp, args.free, cfg.k)
    _emit(result, args.json)
    if args.figure:
        from .plotting import plot_topk

        plot_topk(result, args.figure)
    return 0


REPL_HELP = """\
<node> <metapaths>    rank partners of <node>, e.g. `m1 MAM,MDM`
<node> <L>            meta-path-free query up to length L, e.g. `m1 2`
\\k <n>                set the number of results
\\mode node|pair|off   set the content mode
\\engine exact|mc      set the engine
\\help                 show this text
\\quit                 leave"""


def cmd_repl(cfg: ProjectConfig, args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    out = stdout or sys.stdout
    wm = None
    k = cfg.k
    interactive = stdin.isatty()
    while True:
        if interactive:
            out.write("hetfs> ")
            out.flush()
        line = stdin.readline()
        if not line:
            break
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            parts = line.split()
            if parts[0].startswith("\\"):
                cmd, rest = parts[0], parts[1:]
                if cmd == "\\quit":
                    break
                if cmd == "\\help":
                    out.write(REPL_HELP + "\n")
                elif cmd == "\\k" and len(rest) == 1:
                    k = int(rest[0])
                    if k < 1:
                        raise InvalidParameter("k must be >= 1")
                    out.write(f"k = {k}\n")
                elif cmd == "\\mode" and len(rest) == 1:
                    cfg = dataclasses.replace(cfg, content_mode=rest[0])
                    if wm is not None:
                        wm = wm.with_options(content_mode=rest[0])
                    out.write(f"mode = {rest[0]}\n")
                elif cmd == "\\engine" and len(rest) == 1:
                    cfg = dataclasses.replace(cfg, engine=rest[0])
                    out.write(f"engine = {rest[0]}\n")
                else:
                    out.write(f"error: unknown directive {line!r}; try \\help\n")
                continue
            if len(parts) != 2:
                raise InvalidParameter("expected `<node> <metapaths>` or `<node> <L>`")
            load_ms = 0.0
            if wm is None:
                t0 = time.perf_counter()
                wm = _load_model(cfg)
                load_ms = (time.perf_counter() - t0) * 1000.0
            node, spec = parts
            free = int(spec) if spec.isdigit() else None
            result = _run_query(wm, cfg, node, None if free is not None else spec, free, k)
            _emit(result, args.json, out)
            out.write(f"# load_ms\t{load_ms:.3f}\n")
        except (HetfsError, ValueError) as exc:
            out.write(f"error: {type(exc).__name__}: {exc}\n")
        out.flush()
    return 0


def _eval_paths(args) -> dict:
    if args.mp:
        return {"metapaths": args.mp}
    return {"max_len": args.free}


def cmd_eval(cfg: ProjectConfig, args) -> int:
    dataset = _read_snapshot(cfg.store_dir)
    g = dataset.graph

    def model(graph):
        from .engine import build_weight_model

        return build_weight_model(graph, dataset.corpora or None, c=cfg.c, c_n=cfg.c_n, tol=cfg.tol,
                                  max_iter=cfg.max_iter, content_mode=cfg.content_mode)

    if args.task == "linkpred":
        if not args.relation:
            raise InvalidParameter("linkpred needs --relation")
        split = SplitSpec(args.relation, mode=args.split, ratio=args.ratio, seed=cfg.seed, ts=args.ts)
        train, test = split_edges(dataset, split)
        report = link_prediction_eval(model(train), split, test, k=cfg.k, random_scores=args.random_scores,
                                      seed=cfg.seed, **_eval_paths(args))
    else:
        if args.anchor:
            anchor = dict(dataset.labels or {})
            labels = labels_from_anchor(g, args.anchor, anchor)
        else:
            if not dataset.labels:
                raise InvalidParameter("dataset has no labels.tsv")
            labels = LabeledNodes(dict(dataset.labels))
        wm = model(g)
        truth = labels.labels
        ids = sorted(truth, key=g.index)
        if args.task == "cluster":
            # every labelled node is assigned from all the others
            pred = similarity_label_transfer(wm, labels, targets=ids, **_eval_paths(args))
            report = clustering_metrics(pred, truth)
        else:
            rng = np.random.default_rng(cfg.seed)
            n_train = max(1, int(round(args.train_ratio * len(ids))))
            picked = set(rng.choice(len(ids), size=n_train, replace=False).tolist())
            train = {ids[i]: truth[ids[i]] for i in sorted(picked)}
            test = [ids[i] for i in range(len(ids)) if i not in picked]
            if not test:
                raise InvalidParameter("no test nodes left; lower --train-ratio")
            pred = similarity_label_transfer(wm, LabeledNodes(train, labels.vocabulary), targets=test,
                                             **_eval_paths(args))
            report = classification_metrics(pred, {t: truth[t] for t in test})
            report["train"], report["test"] = len(train), len(test)
        report["nodes"] = len(ids)
    report = {"task": args.task, **report}
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.figure:
        from .plotting import plot_metrics

        plot_metrics(report, args.figure, title=args.task)
    return 0


def cmd_contribution(cfg: ProjectConfig, args) -> int:
    store = cfg.store_dir
    dataset = _read_snapshot(store)
    path = store / "contribution.tsv"
    cg = read_contribution(path, dataset.graph.schema) if path.exists() else compute_edge_contribution(dataset.graph)
    for item in args.set or []:
        name, _, value = item.partition("=")
        try:
            cg = override_contribution(cg, name, float(value))
        except ValueError:
            raise InvalidParameter(f"--set expects RELATION=VALUE, got {item!r}") from None
    sys.stdout.write(export_contribution_graph(cg))
    if args.figure:
        from .plotting import plot_contribution

        plot_contribution(cg, args.figure)
    return 0


def _parse_counts(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        name, _, n = part.partition("=")
        out[name.strip()] = int(n)
    return out


def _parse_relations(text: str):
    out = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 4:
            raise InvalidParameter(f"relation {part!r} must read NAME:SRC:DST:COUNT")
        out.append((bits[0], bits[1], bits[2], int(bits[3])))
    return out


def cmd_synth(cfg: ProjectConfig, args) -> int:
    if args.preset == "g1":
        bundle = g1_bundle()
    elif args.preset == "planted":
        bundle = planted_partition_bundle(seed=cfg.seed)
    elif args.preset == "dblp":
        bundle = generate_synthetic_hin(dblp_like_spec(edge_scale=args.scale, seed=cfg.seed))
    else:
        if not (args.nodes and args.relations):
            raise InvalidParameter("custom synth needs --nodes and --relations")
        bundle = generate_synthetic_hin(SynthSpec(_parse_counts(args.nodes), _parse_relations(args.relations),
                                                  skew=args.skew, seed=cfg.seed))
    paths = bundle.write(args.out)
    g = bundle.freeze()
    print(_counts_line(g))
    print(f"written: {paths.schema.parent}")
    return 0


def cmd_bench(cfg: ProjectConfig, args) -> int:
    from .engine import build_weight_model, hetfs_single_source
    from .graph import parse_metapaths

    rows = []
    for scale in args.scales:
        g = generate_synthetic_hin(dblp_like_spec(edge_scale=scale, seed=cfg.seed)).freeze()
        wm = build_weight_model(g, c=cfg.c, c_n=cfg.c_n, tol=cfg.tol, max_iter=cfg.max_iter)
        mps = parse_metapaths(args.mp, g.schema)
        lo, hi = g.type_range(mps.endpoint)
        rng = np.random.default_rng(cfg.seed)
        queries = rng.integers(lo, hi, size=args.queries)
        hetfs_single_source(wm, int(queries[0]), mps)  # warm caches
        times = []
        for q in queries.tolist():
            t0 = time.perf_counter()
            hetfs_single_source(wm, q, mps)
            times.append((time.perf_counter() - t0) * 1000.0)
        rows.append((g.m, float(np.median(times))))
        print(f"edges\t{g.m}")
        print(f"# median_ms\t{rows[-1][1]:.3f}")
    if args.figure:
        from .plotting import plot_latency

        plot_latency([m for m, _ in rows], [t for _, t in rows], args.figure)
    return 0


# -- argument parsing ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--data", help="dataset directory")
    common.add_argument("--store", help="directory for the snapshot and precomputed tables")
    common.add_argument("--seed", type=int)
    common.add_argument("--figure", help="also render a figure to this file")

    query_opts = argparse.ArgumentParser(add_help=False)
    query_opts.add_argument("-k", type=int, dest="k")
    query_opts.add_argument("--engine", choices=("exact", "mc"))
    query_opts.add_argument("--walks", type=int)
    query_opts.add_argument("--workers", type=int)
    query_opts.add_argument("--epsilon", type=float)
    query_opts.add_argument("--c", type=float, dest="c", help="decay factor")
    query_opts.add_argument("--content-mode", choices=CONTENT_MODES, dest="content_mode")
    query_opts.add_argument("--json", action="store_true")

    p = argparse.ArgumentParser(prog="hetfs", description="Meta-path similarity search on heterogeneous graphs.")
    p.add_argument("--version", action="version", version=f"hetfs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common], help="load a dataset directory into a snapshot")

    pc = sub.add_parser("precompute", parents=[common], help="compute centrality, contribution and content tables")
    pc.add_argument("--c-n", type=float, dest="c_n")
    pc.add_argument("--tol", type=float)
    pc.add_argument("--max-iter", type=int, dest="max_iter")

    q = sub.add_parser("query", parents=[common, query_opts], help="rank similar nodes")
    q.add_argument("node")
    group = q.add_mutually_exclusive_group(required=True)
    group.add_argument("--mp", help="comma-separated meta-paths, e.g. MAM,MDM")
    group.add_argument("--free", type=int, metavar="L", help="use every symmetric meta-path up to length L")

    sub.add_parser("repl", parents=[common, query_opts], help="interactive query shell")

    ev = sub.add_parser("eval", parents=[common, query_opts], help="downstream task metrics")
    ev.add_argument("task", choices=("linkpred", "cluster", "classify"))
    paths = ev.add_mutually_exclusive_group()
    paths.add_argument("--mp")
    paths.add_argument("--free", type=int, metavar="L", default=4)
    ev.add_argument("--relation", help="linkpred: same-type relation to predict")
    ev.add_argument("--split", choices=("random", "time"), default="random")
    ev.add_argument("--ratio", type=float, default=0.7, help="linkpred: training share of links")
    ev.add_argument("--ts", type=float, help="linkpred: time cut-off for --split time")
    ev.add_argument("--random-scores", action="store_true", help="linkpred: score with noise (null model)")
    ev.add_argument("--train-ratio", type=float, default=0.1, help="classify: share of labelled nodes kept")
    ev.add_argument("--anchor", help="derive labels along this meta-path from labels of its end nodes")
    ev.add_argument("--c-n", type=float, dest="c_n")

    ct = sub.add_parser("contribution", parents=[common], help="print the contribution graph as DOT")
    ct.add_argument("--set", action="append", metavar="R=VALUE", help="override one relation's weight")

    sy = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    sy.add_argument("preset", choices=("g1", "planted", "dblp", "custom"))
    sy.add_argument("--out", required=True)
    sy.add_argument("--scale", type=float, default=1.0, help="dblp: edge count multiplier")
    sy.add_argument("--nodes", help="custom: TYPE=COUNT,...")
    sy.add_argument("--relations", help="custom: NAME:SRC:DST:COUNT,...")
    sy.add_argument("--skew", type=float, default=0.0)

    bn = sub.add_parser("bench", parents=[common], help="single-source latency on DBLP-sized synthetic graphs")
    bn.add_argument("--scales", type=lambda s: [float(x) for x in s.split(",")], default=[1.0, 2.0])
    bn.add_argument("--mp", default="APVPA")
    bn.add_argument("--queries", type=int, default=20)
    return p


COMMANDS = {
    "ingest": cmd_ingest,
    "precompute": cmd_precompute,
    "query": cmd_query,
    "repl": cmd_repl,
    "eval": cmd_eval,
    "contribution": cmd_contribution,
    "synth": cmd_synth,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    keys = {f.name for f in fields(ProjectConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in keys}
    try:
        cfg = load_config(args.config, overrides=overrides)
        return COMMANDS[args.command](cfg, args)
    except HetfsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
