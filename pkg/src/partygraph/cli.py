"""Command-line entry point: file-in, file-out stages of the prediction pipelines."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    VersionMismatch,
    EmbeddingMatrix,
    load_embedding,
    load_graph,
    read_embedding_tsv,
    save_embedding,
    save_graph,
    write_edgelist,
    write_embedding_tsv,
)
from .evaluation import (
    CANADA_COALITIONS,
    ENDPOINT_OF,
    ExperimentPlan,
    cost_plan,
    evaluate,
    group_labels,
    rate_table,
    result_row,
    run_experiment,
    write_results,
)
from .fusion import (
    ForestConfig,
    forest_predict,
    forest_train,
    fuse,
    logistic_predict,
    logistic_train,
)
from .gcn import GcnConfig, train
from .graph import binarize, build_bipartite, build_direct, project, row_normalize, top_active, union_graphs
from .labels import ABSTAIN, load_labels, predict, read_predictions, save_labels, write_predictions
from .pipelines import gcn_pipeline, lp_pipeline
from .polarization import modularity, noise_sweep, write_curve
from .propagation import PropagationConfig, majority_vote_oracle, propagate
from .records import FormatError, SignalKind, UserRegistry, ingest_records, write_jsonl
from .synth import SbmConfig, multi_signal_generate
from .weak_labels import KeywordRule, canada_rule, seed_from_profiles, us_rule

CONFIG_SECTIONS = {
    "propagation": PropagationConfig,
    "gcn": GcnConfig,
    "forest": ForestConfig,
    "experiment": ExperimentPlan,
    "sbm": SbmConfig,
}


class CliError(Exception):
    """Reported as a single ``error: <kind>: <message>`` line."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message.replace("\n", " "))


def stage_seed(master: int, stage: str) -> int:
    """Named per-stage stream derived from the master seed."""
    ss = np.random.SeedSequence([master, zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------- config


def load_run_config(path: str | None) -> dict:
    """Validate a run config; every section field must exist on its dataclass."""
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise CliError("missing-input", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError("format", f"{path}: invalid JSON ({exc.msg})") from None
    allowed = set(CONFIG_SECTIONS) | {"seed", "rates"}
    for key, val in cfg.items():
        if key not in allowed:
            raise CliError("config", f"unknown config section {key!r}")
        if key in CONFIG_SECTIONS:
            fields = {f.name for f in dataclasses.fields(CONFIG_SECTIONS[key])}
            bad = sorted(set(val) - fields)
            if bad:
                raise CliError("config", f"invalid config field {key}.{bad[0]}")
    return cfg


def section(cfg: dict, name: str, **overrides):
    """Dataclass for one config section; explicit CLI values win over the file."""
    values = dict(cfg.get(name, {}))
    values.update({k: v for k, v in overrides.items() if v is not None})
    cls = CONFIG_SECTIONS[name]
    try:
        for k, v in list(values.items()):
            if isinstance(v, list):
                values[k] = tuple(v)
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise CliError("config", f"{name}: {exc}") from None


def master_seed(args, cfg) -> int:
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.get("seed")
    if seed is None:
        raise CliError("usage", f"{args.command} is stochastic and needs --seed")
    return int(seed)


# ---------------------------------------------------------------- io helpers


def _require(path: str) -> str:
    if path != "-" and not Path(path).exists():
        raise CliError("missing-input", f"input file not found: {path}")
    return path


def _read_lines(paths):
    for p in paths:
        _require(p)
        if p == "-":
            yield from sys.stdin
        else:
            with open(p, encoding="utf-8") as fh:
                yield from fh


def _load_graph(path):
    return load_graph(_require(path))


def _labels(path, classes=None):
    return load_labels(_require(path), classes=classes)


def _classes_arg(args):
    return tuple(args.classes.split(",")) if getattr(args, "classes", None) else None


def _emit(args, result: dict, text: str) -> None:
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(text)


# ---------------------------------------------------------------- commands


def cmd_ingest(args, cfg):
    store, reg = ingest_records(_read_lines(args.input))
    if args.out:
        write_jsonl(store.records(), args.out)
    counts = {k.value: len(store.records(k)) for k in sorted(store.kinds(), key=lambda k: k.value)}
    _emit(args, {"records": len(store), "users": len(reg), "per_kind": counts},
          f"{len(store)} records, {len(reg)} users; " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def _registry_with_users(reg: UserRegistry, users_file: str | None) -> UserRegistry:
    if users_file:
        with open(_require(users_file), newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                reg.add(row["user"])
    return reg


def cmd_build_graph(args, cfg):
    store, reg = ingest_records(_read_lines(args.input))
    reg = _registry_with_users(reg, args.users)
    graphs = []
    for kind in args.kind:
        kind = SignalKind.parse(kind)
        if args.bipartite or not kind.user_target:
            if not args.bipartite:
                raise CliError("usage", f"{kind.value} targets are not users; pass --bipartite")
            graphs.append(build_bipartite(store, reg, kind, binary=args.binary))
        else:
            graphs.append(build_direct(store, reg, kind, binary=args.binary))
    g = graphs[0] if len(graphs) == 1 else union_graphs(graphs)
    save_graph(g, args.out)
    if args.edgelist:
        write_edgelist(g, args.edgelist)
    _emit(args, {"nodes": g.n, "edges": g.nnz, "signal": g.signal, "kind": g.kind},
          f"{g.signal}: {g.n} nodes, {g.nnz} edges ({g.kind})")


def cmd_project(args, cfg):
    g = project(_load_graph(args.graph), threads=args.threads)
    if args.normalize == "row":
        g = row_normalize(g)
    if args.binary:
        g = binarize(g)
    save_graph(g, args.out)
    _emit(args, {"nodes": g.n, "edges": g.nnz}, f"projected: {g.n} nodes, {g.nnz} edges")


def _prop_config(args, cfg):
    return section(cfg, "propagation", iterations=args.iterations, alpha=args.alpha,
                   graph_mode=args.graph_mode, clamp_seeds=False if args.no_clamp else None)


def cmd_propagate(args, cfg):
    g = _load_graph(args.graph)
    seeds = _labels(args.seeds, _classes_arg(args))
    pc = _prop_config(args, cfg)
    dist = propagate(g, seeds, pc, threads=args.threads)
    write_predictions(dist, args.out, args.abstain_threshold)
    pred = predict(dist, args.abstain_threshold)
    reached = int((pred != ABSTAIN).sum())
    _emit(args, {"nodes": len(pred), "reached": reached}, f"{reached}/{len(pred)} nodes labeled")


def cmd_majority_vote(args, cfg):
    g = _load_graph(args.graph)
    seeds = _labels(args.seeds, _classes_arg(args))
    mode = args.graph_mode or cfg.get("propagation", {}).get("graph_mode", "direct-symmetrized")
    votes = majority_vote_oracle(g, seeds, mode)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "predicted_label", "score", "abstained"])
        for uid, v in zip(g.node_ids, votes):
            w.writerow([uid, "" if v == ABSTAIN else seeds.classes.names[v], "", int(v == ABSTAIN)])
    reached = int((votes != ABSTAIN).sum())
    _emit(args, {"nodes": len(votes), "reached": reached}, f"{reached}/{len(votes)} nodes labeled")


def _activity_filter(args, g, seeds):
    if not args.activity:
        return seeds
    store, reg = ingest_records(_read_lines([args.activity]))
    kinds = [k for k in g.signal.split("+") if k]
    counts: dict[str, int] = {}
    for k in kinds:
        for u, c in store.activity(k).items():
            counts[u] = counts.get(u, 0) + c
    reg = UserRegistry(g.node_ids)
    keep = top_active({u: counts.get(u, 0) for u in seeds if u in reg}, reg, args.top_fraction)
    return seeds.subset(keep)


def cmd_train_gcn(args, cfg):
    g = _load_graph(args.graph)
    seed = master_seed(args, cfg)
    gc = section(cfg, "gcn", epochs=args.epochs, hidden_dim=args.hidden_dim, learning_rate=args.lr,
                 layers=args.layers, graph_mode=args.graph_mode,
                 supervised=False if args.unsupervised else None, seed=stage_seed(seed, "gcn"))
    seeds = None
    if args.seeds:
        seeds = _activity_filter(args, g, _labels(args.seeds, _classes_arg(args)))
        seeds = seeds.subset(u for u in seeds if u in set(g.node_ids))
    elif gc.supervised:
        raise CliError("usage", "supervised training needs --seeds (or pass --unsupervised)")
    res = train(g, seeds, gc)
    emb = res.embedding
    if args.signal:
        emb = EmbeddingMatrix(emb.vectors, emb.node_ids, args.signal, emb.config_hash)
    write_embedding_tsv(emb, args.out)
    if args.binary_out:
        save_embedding(emb, args.binary_out)
    if args.log:
        res.write_log(args.log)
    last = res.log[-1] if res.log else (0, float("nan"), float("nan"))
    _emit(args, {"nodes": emb.vectors.shape[0], "dim": emb.dim, "final_loss_link": last[1],
                 "final_loss_cls": last[2]},
          f"embeddings {emb.vectors.shape[0]}x{emb.dim}; final loss link={last[1]:.4f} cls={last[2]:.4f}")


def _read_embedding(path, node_ids=None):
    _require(path)
    if path.endswith(".tsv"):
        return read_embedding_tsv(path, node_ids)
    return load_embedding(path)


def cmd_fuse(args, cfg):
    embs = [_read_embedding(p) for p in args.embeddings]
    if args.users:
        with open(_require(args.users), newline="", encoding="utf-8") as fh:
            users = [row["user"] for row in csv.DictReader(fh)]
    else:
        seen, users = set(), []
        for e in embs:
            for u in e.node_ids:
                if u not in seen:
                    seen.add(u)
                    users.append(u)
    try:
        feats = fuse(embs, users)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    fused = EmbeddingMatrix(feats.matrix, feats.node_ids, "+".join(feats.signals))
    write_embedding_tsv(fused, args.out)
    if args.mask_out:
        with open(args.mask_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user"] + list(feats.signals))
            for uid, row in zip(feats.node_ids, feats.mask):
                w.writerow([uid] + [int(x) for x in row])
    _emit(args, {"users": len(users), "dim": fused.dim, "signals": list(feats.signals)},
          f"fused {len(users)} users x {fused.dim} dims from {', '.join(feats.signals)}")


def cmd_classify(args, cfg):
    seed = master_seed(args, cfg)
    feats = _read_embedding(args.features)
    labels = _labels(args.train_labels, _classes_arg(args))
    index = {u: i for i, u in enumerate(feats.node_ids)}
    train_users = [u for u in labels if u in index]
    x = feats.vectors[[index[u] for u in train_users]]
    y = np.array([labels.label_of(u) for u in train_users], dtype=np.int64)
    try:
        if args.model == "forest":
            fc = section(cfg, "forest", trees=args.trees, seed=stage_seed(seed, "forest"))
            model = forest_train(x, y, labels.classes, fc, threads=args.threads)
            if args.save_model:
                model.save(args.save_model)
            dist = forest_predict(model, feats.vectors, feats.node_ids)
        else:
            model = logistic_train(x, y, labels.classes)
            dist = logistic_predict(model, feats.vectors, feats.node_ids)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    write_predictions(dist, args.out)
    _emit(args, {"trained_on": len(train_users), "predicted": len(feats.node_ids)},
          f"{args.model}: trained on {len(train_users)} users, predicted {len(feats.node_ids)}")


def cmd_weak_label(args, cfg):
    if args.rules:
        rule = KeywordRule.from_json(_require(args.rules))
    else:
        rule = canada_rule() if args.preset == "canada" else us_rule()
    labels, counts = seed_from_profiles(_require(args.profiles), rule)
    save_labels(labels, args.out)
    _emit(args, {"counts": counts}, ", ".join(f"{k}={v}" for k, v in counts.items()))


def _grouping(args):
    if args.group_preset == "canada":
        return CANADA_COALITIONS
    if args.group:
        with open(_require(args.group), encoding="utf-8") as fh:
            return json.load(fh)
    return None


def cmd_evaluate(args, cfg):
    gold = _labels(args.gold, _classes_arg(args))
    if args.plan or "experiment" in cfg:
        return _evaluate_plan(args, cfg, gold)
    if not args.predictions:
        raise CliError("usage", "evaluate needs --predictions or --plan")
    preds = read_predictions(_require(args.predictions))
    exclude = set(_labels(args.exclude)) if args.exclude else set()
    users = [u for u in gold if u not in exclude]
    try:
        pred = np.array([ABSTAIN if preds.get(u) is None else gold.classes.index(preds[u]) for u in users],
                        dtype=np.int64)
    except KeyError as exc:
        raise CliError("input", str(exc.args[0])) from None
    g = np.array([gold.label_of(u) for u in users], dtype=np.int64)
    classes = gold.classes
    mapping = _grouping(args)
    if mapping is not None:
        pred, coarse = group_labels(pred, classes, mapping)
        g, _ = group_labels(g, classes, mapping)
        classes = coarse
    try:
        m = evaluate(pred, g, len(classes), exclude_abstain=args.exclude_abstain)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    out = m.as_dict()
    out["coverage"] = m.coverage
    out["classes"] = list(classes.names)
    _emit(args, out, f"accuracy {m.accuracy:.4f}  f1_macro {m.f1_macro:.4f}  "
                     f"f1_weighted {m.f1_weighted:.4f}  coverage {m.coverage:.1f}%  n={m.total}")


def _evaluate_plan(args, cfg, gold):
    seed = master_seed(args, cfg)
    if args.plan:
        try:
            plan = ExperimentPlan.from_json(_require(args.plan))
        except (TypeError, ValueError) as exc:
            raise CliError("config", str(exc)) from None
    else:
        plan = section(cfg, "experiment")
    plan = dataclasses.replace(plan, seed=stage_seed(seed, "split"))
    if not args.graph:
        raise CliError("usage", "--plan needs --graph")
    graphs = [_load_graph(p) for p in args.graph]
    train_pool = _labels(args.train_labels, gold.classes.names) if args.train_labels else None
    if plan.method == "lp":
        g = graphs[0] if len(graphs) == 1 else union_graphs(graphs)
        pipe = lp_pipeline(g, section(cfg, "propagation"), threads=args.threads)
    elif plan.method == "gcn":
        gc = section(cfg, "gcn", seed=stage_seed(seed, "gcn"))
        fc = section(cfg, "forest", seed=stage_seed(seed, "forest"))
        pipe = gcn_pipeline({g.signal: g for g in graphs}, gc, fc, threads=args.threads)
    else:
        raise CliError("config", f"unknown method {plan.method!r} (lp, gcn)")
    try:
        res = run_experiment(plan, gold, pipe, train_pool=train_pool, threads=args.threads)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    signal = "+".join(g.signal for g in graphs)
    row = result_row(plan.method, signal, res, include_runtime=args.timing)
    if args.results:
        write_results([row], args.results)
    acc, sd = res.accuracy
    _emit(args, {k: v for k, v in row.items()},
          f"{plan.method} {signal}: accuracy {acc:.4f} +- {sd:.4f} over {plan.repetitions} runs")


def cmd_cost_plan(args, cfg):
    table = rate_table(cfg.get("rates"))
    if args.endpoint not in table:
        raise CliError("usage", f"unknown endpoint {args.endpoint!r} ({', '.join(table)})")
    rate = table[args.endpoint]
    if args.counts:
        counts = []
        with open(_require(args.counts), newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                counts.append(int(row["count"]))
    elif args.input:
        store, reg = ingest_records(_read_lines([args.input]))
        kinds = [SignalKind.parse(k) for k in args.kind] or [
            k for k, ep in ENDPOINT_OF.items() if ep == args.endpoint]
        per_user: dict[str, int] = {}
        for k in kinds:
            for u, c in store.activity(k).items():
                per_user[u] = per_user.get(u, 0) + c
        counts = [per_user.get(u, 0) for u in reg]
    else:
        raise CliError("usage", "cost-plan needs --counts or --input")
    try:
        plan = cost_plan(counts, rate)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    _emit(args, {"endpoint": args.endpoint, "users_per_window": plan.users_per_window, "sd": plan.sd,
                 "mean_requests": plan.mean_requests, "users": plan.n_users,
                 "items_per_window": rate.total_per_window},
          f"{plan.users_per_window:.1f} +- {plan.sd:.1f} users/window "
          f"({rate.total_per_window} items/window on {args.endpoint})")


def cmd_polarization(args, cfg):
    g = _load_graph(args.graph)
    labels = _labels(args.labels, _classes_arg(args))
    part = np.array([labels.label_of(u) if u in labels else ABSTAIN for u in g.node_ids], dtype=np.int64)
    if args.predictions:
        preds = read_predictions(_require(args.predictions))
        part = np.array([ABSTAIN if preds.get(u) is None else labels.classes.index(preds[u])
                         for u in g.node_ids], dtype=np.int64)
    try:
        q = modularity(g, part)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    result = {"modularity": q}
    if args.sweep or args.points:
        seed = master_seed(args, cfg)
        fractions = ([float(x) for x in args.sweep.split(",")] if args.sweep
                     else list(np.linspace(0.0, 0.5, args.points)))
        pts = noise_sweep(g, part, fractions, trials=args.trials, n_classes=len(labels.classes),
                          seed=stage_seed(seed, "sweep"), threads=args.threads)
        if args.out:
            write_curve(pts, args.out)
        result["curve"] = [dataclasses.asdict(p) for p in pts]
    _emit(args, result, f"modularity {q:.6f}")


def cmd_synth(args, cfg):
    seed = master_seed(args, cfg)
    overrides = {
        "block_sizes": tuple(int(b) for b in args.blocks.split(",")) if args.blocks else None,
        "p_in": args.p_in, "p_out": args.p_out, "seed_fraction": args.seed_fraction,
        "politician_fraction": args.politician_fraction, "politician_density": args.politician_density,
        "class_names": tuple(args.classes.split(",")) if args.classes else None,
        "seed": stage_seed(seed, "synth"),
    }
    sbm = section(cfg, "sbm", **overrides)
    signals = {}
    for spec in args.signal or [sbm.signal]:
        parts = spec.split(":")
        if len(parts) == 3:
            signals[parts[0]] = (float(parts[1]), float(parts[2]))
        elif len(parts) == 1:
            signals[parts[0]] = (sbm.p_in, sbm.p_out)
        else:
            raise CliError("usage", f"--signal must be kind or kind:p_in:p_out, got {spec!r}")
    try:
        data = multi_signal_generate(sbm, signals)
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(data.store.records(), out / "interactions.jsonl")
    save_labels(data.gold, out / "gold.csv")
    save_labels(data.seeds, out / "seeds.csv")
    with open(out / "users.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user"])
        for u in data.registry:
            w.writerow([u])
    _emit(args, {"users": sbm.n, "records": len(data.records), "seeds": len(data.seeds)},
          f"{sbm.n} users, {len(data.records)} interactions, {len(data.seeds)} seeds -> {out}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="partygraph", description="Party affiliation inference from interaction graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="print results as JSON on stdout")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--config", help="run config JSON (sections: propagation, gcn, forest, experiment, "
                                         "sbm, rates, seed)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=fn)
        return sp

    s = cmd("ingest", cmd_ingest, "merge interaction JSONL files into one canonical JSONL store")
    s.add_argument("--input", nargs="+", required=True, help="interaction JSONL file(s); '-' for stdin")
    s.add_argument("--out", help="write the merged, sorted store here")

    s = cmd("build-graph", cmd_build_graph, "build a direct (or bipartite) graph per signal kind")
    s.add_argument("--input", nargs="+", required=True, help="interaction JSONL file(s); '-' for stdin")
    s.add_argument("--kind", nargs="+", required=True, help="signal kind(s); several kinds are unioned")
    s.add_argument("--users", help="CSV with a 'user' column; adds users without interactions")
    s.add_argument("--bipartite", action="store_true", help="target-by-user incidence graph")
    s.add_argument("--binary", action="store_true", help="clip interaction counts to 0/1")
    s.add_argument("--edgelist", help="also export src<TAB>dst<TAB>weight")
    s.add_argument("--out", required=True, help="graph artifact path")

    s = cmd("project", cmd_project, "co-activity projection A^T A with zero diagonal")
    s.add_argument("--graph", required=True, help="direct or bipartite graph artifact")
    s.add_argument("--normalize", choices=["raw", "row"], default="raw", help="weight variant")
    s.add_argument("--binary", action="store_true", help="clip projected weights to 0/1")
    s.add_argument("--out", required=True, help="projected graph artifact path")

    def lp_flags(s):
        s.add_argument("--graph", required=True, help="graph artifact")
        s.add_argument("--seeds", required=True, help="seed label CSV")
        s.add_argument("--classes", help="comma-separated class order (default: sorted names)")
        s.add_argument("--graph-mode", choices=["direct-symmetrized", "projected"], default=None,
                       help="operator to propagate on")
        s.add_argument("--out", required=True, help="predictions CSV")

    s = cmd("propagate", cmd_propagate, "semi-supervised label propagation")
    lp_flags(s)
    s.add_argument("--iterations", type=int, help="propagation iterations (default 2)")
    s.add_argument("--alpha", type=float, help="update rate in (0, 1] (default 0.5)")
    s.add_argument("--no-clamp", action="store_true", help="do not re-clamp seeds each iteration")
    s.add_argument("--abstain-threshold", type=float, default=0.0, help="abstain when max score <= this")

    s = cmd("majority-vote", cmd_majority_vote, "weighted majority of seeded neighbors (reference output)")
    lp_flags(s)

    s = cmd("train-gcn", cmd_train_gcn, "train the semi-supervised GCN and write embeddings")
    s.add_argument("--graph", required=True, help="graph artifact")
    s.add_argument("--seeds", help="training label CSV")
    s.add_argument("--classes", help="comma-separated class order")
    s.add_argument("--seed", type=int, help="master RNG seed")
    s.add_argument("--epochs", type=int, help="training epochs (default 1000)")
    s.add_argument("--hidden-dim", type=int, help="embedding size (default 100)")
    s.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    s.add_argument("--layers", type=int, choices=[1, 2], help="GCN layers (default 1)")
    s.add_argument("--graph-mode", choices=["projected", "direct-symmetrized"], help="default projected")
    s.add_argument("--unsupervised", action="store_true", help="link prediction only")
    s.add_argument("--activity", help="interaction JSONL used for the top-activity training filter")
    s.add_argument("--top-fraction", type=float, default=0.5, help="training activity filter fraction")
    s.add_argument("--signal", help="signal name written to the embedding header")
    s.add_argument("--log", help="training log CSV epoch,loss_link,loss_cls")
    s.add_argument("--binary-out", help="also save the versioned binary embedding")
    s.add_argument("--out", required=True, help="embedding TSV")

    s = cmd("fuse", cmd_fuse, "concatenate per-signal embeddings (zero-filled where missing)")
    s.add_argument("--embeddings", nargs="+", required=True, help="embedding TSV or binary files, in order")
    s.add_argument("--users", help="CSV with a 'user' column fixing the row set")
    s.add_argument("--mask-out", help="per-user signal presence CSV")
    s.add_argument("--out", required=True, help="fused embedding TSV")

    s = cmd("classify", cmd_classify, "train a final classifier on features and predict every row")
    s.add_argument("--features", required=True, help="embedding TSV or binary")
    s.add_argument("--train-labels", required=True, help="training label CSV")
    s.add_argument("--classes", help="comma-separated class order")
    s.add_argument("--model", choices=["forest", "logistic"], default="forest", help="classifier")
    s.add_argument("--trees", type=int, help="forest size (default 100)")
    s.add_argument("--seed", type=int, help="master RNG seed")
    s.add_argument("--save-model", help="versioned binary model file")
    s.add_argument("--out", required=True, help="predictions CSV")

    s = cmd("weak-label", cmd_weak_label, "keyword-rule seed labels from profile descriptions")
    s.add_argument("--profiles", required=True, help="CSV user,description")
    s.add_argument("--rules", help="rule JSON {class: [keywords]}")
    s.add_argument("--preset", choices=["us", "canada"], default="us", help="built-in keyword lists")
    s.add_argument("--out", required=True, help="label CSV")

    s = cmd("evaluate", cmd_evaluate, "score predictions, or run a repeated-split experiment plan")
    s.add_argument("--gold", required=True, help="gold label CSV")
    s.add_argument("--classes", help="comma-separated class order")
    s.add_argument("--predictions", help="predictions CSV")
    s.add_argument("--exclude", help="label CSV of users to leave out (e.g. training seeds)")
    s.add_argument("--exclude-abstain", action="store_true", help="drop abstentions instead of counting them wrong")
    s.add_argument("--group", help="JSON mapping class -> group")
    s.add_argument("--group-preset", choices=["canada"], help="built-in grouping (left/right coalitions)")
    s.add_argument("--plan", help="experiment plan JSON")
    s.add_argument("--graph", nargs="+", help="graph artifact(s) for --plan")
    s.add_argument("--train-labels", help="training label pool for --plan (default: gold)")
    s.add_argument("--seed", type=int, help="master RNG seed (needed with --plan)")
    s.add_argument("--results", help="results CSV for --plan")
    s.add_argument("--timing", action="store_true", help="record wall-clock runtime in the results")

    s = cmd("cost-plan", cmd_cost_plan, "users retrievable per rate-limit window")
    s.add_argument("--endpoint", required=True, help="tweets, likes or relations")
    s.add_argument("--counts", help="CSV user,count")
    s.add_argument("--input", help="interaction JSONL to count items from")
    s.add_argument("--kind", nargs="*", default=[], help="signal kinds counted from --input")

    s = cmd("polarization", cmd_polarization, "modularity of a labeling and its label-noise sweep")
    s.add_argument("--graph", required=True, help="graph artifact")
    s.add_argument("--labels", required=True, help="label CSV defining communities")
    s.add_argument("--classes", help="comma-separated class order")
    s.add_argument("--predictions", help="use predicted labels instead of --labels")
    s.add_argument("--sweep", help="comma-separated swap fractions")
    s.add_argument("--points", type=int, help="evenly spaced swap fractions on [0, 0.5]")
    s.add_argument("--trials", type=int, default=20, help="trials per swap fraction")
    s.add_argument("--seed", type=int, help="master RNG seed (needed for sweeps)")
    s.add_argument("--out", help="curve CSV swap_fraction,sim_accuracy,q_mean,q_sd")

    s = cmd("synth", cmd_synth, "stochastic block model fixture as interaction JSONL and label CSVs")
    s.add_argument("--seed", type=int, help="master RNG seed")
    s.add_argument("--blocks", help="comma-separated block sizes (default 1000,1000)")
    s.add_argument("--p-in", type=float, help="within-block edge probability")
    s.add_argument("--p-out", type=float, help="cross-block edge probability")
    s.add_argument("--seed-fraction", type=float, help="fraction of each class emitted as seeds")
    s.add_argument("--politician-fraction", type=float, help="fraction of users typed politician")
    s.add_argument("--politician-density", type=float, help="edge probability multiplier at politicians")
    s.add_argument("--classes", help="comma-separated class names, one per block")
    s.add_argument("--signal", action="append", help="kind or kind:p_in:p_out (repeatable)")
    s.add_argument("--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_run_config(args.config)
        args.func(args, cfg)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 2 if exc.kind == "usage" else 1
    except FormatError as exc:
        kind = "version-mismatch" if isinstance(exc, VersionMismatch) else "format"
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return 1
    except (KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else repr(exc)
        print(f"error: input: {str(msg).splitlines()[0]}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
