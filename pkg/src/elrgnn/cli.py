"""Command-line driver: attack, train, eval and sweep.

Results go to stdout as JSON, logs go to stderr. The exit code is 0 only
when every requested unit of work completed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import attacks as Att
from . import dataio as io
from . import graph as G
from .estimator import VARIANTS, TrainConfig, ablation_variant, fit
from .gnn import accuracy

logger = logging.getLogger("elrgnn")

SWEEP_COLUMNS = ("method", "rate", "mean_acc", "std_acc", "mean_train_s", "mean_total_s", "n_runs", "n_failed")


class UsageError(Exception):
    pass


@dataclass
class RunRecord:
    command: str
    config: dict
    seed: int
    preprocess_s: float
    train_s: float
    total_s: float
    train_acc: float
    val_acc: float
    test_acc: float
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.preprocess_s, self.train_s, self.total_s) < 0:
            raise ValueError("times must be non-negative")
        if self.total_s < self.train_s:
            raise ValueError("total time cannot be less than training time")


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    sys.stdout.flush()


def _part_accuracy(probs, labels, ids):
    ids = np.asarray(ids)
    if len(ids) == 0:
        return float("nan")
    return accuracy(probs, labels, ids)


# -- attack ---------------------------------------------------------------

def cmd_attack(args) -> int:
    A = io.load_graph(args.graph, args.n)
    spec = Att.AttackSpec(args.kind, args.rate, args.seed)
    labels = None
    if args.kind == "dice":
        if args.labels is None:
            raise UsageError("--kind dice needs --labels")
        labels = io.load_labels(args.labels, args.n)
    perturbed = Att.attack(A, spec, labels)
    out = Path(args.out)
    io.save_graph(perturbed, out)
    report = {**Att.perturbation_report(A, perturbed), "kind": args.kind,
              "requested_rate": args.rate, "seed": args.seed, "budget": spec.budget(A), "output": str(out)}
    report_path = Path(args.report) if args.report else out.with_name(out.name + ".report.json")
    io.write_json(report, report_path)
    report["report"] = str(report_path)
    _emit(report)
    return 0


# -- train / eval ---------------------------------------------------------

def config_from_args(args) -> TrainConfig:
    cfg = TrainConfig(
        d=args.d, epsilon=args.epsilon, lambda_sim=args.lambda_sim, lambda_fr=args.lambda_fr,
        epochs=args.epochs, gnn_lr=args.gnn_lr, gnn_weight_decay=args.weight_decay,
        u_lr=args.u_lr, momentum=args.momentum, hidden=args.hidden, seed=args.seed,
        ce_mode="sum" if args.ce_sum else "mean", select_best_val=args.select == "best",
        sim_target=args.sim_target, normalize_features=not args.raw_features,
    )
    if args.variant != "none":
        cfg = ablation_variant(cfg, args.variant)
    return cfg


def _load(manifest, edges=None):
    graph, split, m = io.load_dataset(manifest)
    if edges is not None:
        graph = graph.with_adjacency(io.load_graph(edges, m.n_nodes))
    return graph, split, m


def train_once(method: str, graph: G.SparseGraph, split: G.NodeSplit, cfg: TrainConfig, command: str = "train"):
    problems = cfg.problems(graph.n_nodes)
    if problems:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))
    t0 = time.monotonic()
    trained = fit(method, graph, split, cfg)
    total = time.monotonic() - t0
    probs = trained.predict(graph.feature_matrix())
    record = RunRecord(
        command=command,
        config={"method": method, **dataclasses.asdict(cfg)},
        seed=cfg.seed,
        preprocess_s=trained.preprocess_s,
        train_s=min(trained.train_s, total),
        total_s=total,
        train_acc=_part_accuracy(probs, graph.labels, split.train),
        val_acc=_part_accuracy(probs, graph.labels, split.val),
        test_acc=_part_accuracy(probs, graph.labels, split.test),
    )
    return trained, record


def cmd_train(args) -> int:
    graph, split, _ = _load(args.manifest, args.edges)
    cfg = config_from_args(args)
    trained, record = train_once(args.method, graph, split, cfg)
    out = Path(args.out)
    edges_hash = io.sha256(args.edges) if args.edges else None
    io.save_checkpoint(trained, graph, out / "checkpoint", extra={"edges_sha256": edges_hash})
    record.outputs = {"checkpoint": str(out / "checkpoint"), "record": str(out / "run.json")}
    io.write_json(dataclasses.asdict(record), out / "run.json")
    _emit(dataclasses.asdict(record))
    return 0


def cmd_eval(args) -> int:
    graph, split, _ = _load(args.manifest, args.edges)
    ckpt = io.load_checkpoint(args.checkpoint)
    ids = split.part(args.split_part)
    if len(ids) == 0 or np.all(graph.labels[ids] == G.UNLABELED):
        raise UsageError(f"split part {args.split_part!r} has no labeled nodes")
    ids = ids[graph.labels[ids] != G.UNLABELED]
    trained = ckpt.trained_model(graph)
    acc = trained.evaluate(graph, ids)
    _emit({"checkpoint": str(args.checkpoint), "part": args.split_part, "n": int(len(ids)), "accuracy": acc})
    return 0


# -- sweep ----------------------------------------------------------------

def _parse_list(text: str, cast):
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def summarize(runs: list[dict], methods, rates) -> list[dict]:
    """One row per (method, rate); std uses the population convention (ddof=0)."""
    rows = []
    for method in methods:
        for rate in rates:
            cell = [r for r in runs if r["method"] == method and r["rate"] == rate]
            ok = [r for r in cell if r.get("error") is None]
            if ok:
                acc = np.array([r["test_acc"] for r in ok])
                row = {"mean_acc": float(acc.mean()), "std_acc": float(acc.std()),
                       "mean_train_s": float(np.mean([r["train_s"] for r in ok])),
                       "mean_total_s": float(np.mean([r["total_s"] for r in ok]))}
            else:
                row = dict.fromkeys(("mean_acc", "std_acc", "mean_train_s", "mean_total_s"), float("nan"))
            rows.append({"method": method, "rate": rate, **row, "n_runs": len(ok), "n_failed": len(cell) - len(ok)})
    return rows


def cmd_sweep(args) -> int:
    graph, split, _ = _load(args.manifest, args.edges)
    methods = _parse_list(args.methods, str)
    rates = _parse_list(args.rates, float)
    seeds = _parse_list(args.seeds, int)
    for m in methods:
        if m not in ("elr", "gcn", "gcn-svd"):
            raise UsageError(f"unknown method {m!r}")
    base = config_from_args(args)
    problems = base.problems(graph.n_nodes)
    if problems:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))
    out = Path(args.out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    runs = []
    for method in methods:
        for rate in rates:
            for seed in seeds:
                run = {"method": method, "rate": rate, "seed": seed, "kind": args.kind, "error": None}
                try:
                    A = Att.attack(graph.adjacency, Att.AttackSpec(args.kind, rate, seed), graph.labels)
                    cfg = dataclasses.replace(base, seed=seed)
                    _, record = train_once(method, graph.with_adjacency(A), split, cfg, command="sweep")
                    run.update(test_acc=record.test_acc, val_acc=record.val_acc, train_acc=record.train_acc,
                               preprocess_s=record.preprocess_s, train_s=record.train_s,
                               total_s=record.total_s, config=record.config)
                except Exception as exc:  # one failed cell must not stop the sweep
                    logger.error("cell %s rate=%g seed=%d failed: %s", method, rate, seed, exc)
                    run["error"] = f"{type(exc).__name__}: {exc}"
                io.write_json(run, out / "runs" / f"{method}_rate{rate:g}_seed{seed}.json")
                runs.append(run)
    rows = summarize(runs, methods, rates)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    n_failed = sum(r["error"] is not None for r in runs)
    _emit({"summary": str(out / "summary.csv"), "rows": rows, "n_failed": n_failed})
    return 0 if n_failed == 0 else 1


# -- parser ---------------------------------------------------------------

def _train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--manifest", required=True)
    p.add_argument("--edges", help="edge list replacing the manifest's (e.g. an attacked graph)")
    p.add_argument("--d", type=int, default=d.d)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--lambda-sim", type=float, default=d.lambda_sim)
    p.add_argument("--lambda-fr", type=float, default=d.lambda_fr)
    p.add_argument("--u-lr", type=float, default=d.u_lr)
    p.add_argument("--gnn-lr", type=float, default=d.gnn_lr)
    p.add_argument("--weight-decay", type=float, default=d.gnn_weight_decay)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--variant", choices=VARIANTS, default="none")
    p.add_argument("--select", choices=("best", "final"), default="best")
    p.add_argument("--ce-sum", action="store_true", help="sum the cross-entropy instead of averaging")
    p.add_argument("--sim-target", choices=("normalized", "pruned"), default=d.sim_target)
    p.add_argument("--raw-features", action="store_true", help="skip row normalization of features")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elrgnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="perturb an edge list")
    p.add_argument("--graph", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--kind", choices=Att.KINDS, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", help="label file, required for dice")
    p.add_argument("--report", help="report path (default: <out>.report.json)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    p.add_argument("--method", choices=("elr", "gcn", "gcn-svd"), default="elr")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--edges")
    p.add_argument("--split-part", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="attack + train + evaluate over methods, rates and seeds")
    p.add_argument("--methods", default="gcn,gcn-svd,elr")
    p.add_argument("--rates", default="0,0.05,0.1,0.15,0.2,0.25")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--kind", choices=Att.KINDS, default="random")
    _train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
    )
    threads = os.environ.get("ELR_THREADS", "1")
    try:
        n_threads = max(1, int(threads))
    except ValueError:
        logger.warning("ignoring ELR_THREADS=%r", threads)
        n_threads = 1
    try:
        with threadpool_limits(n_threads):
            return args.func(args)
    except (UsageError, ValueError, FloatingPointError, OSError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
