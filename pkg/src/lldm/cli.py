"""Command-line front end: ``lldm <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure. Every command writes a JSON echo of its arguments
next to its outputs; ``argv`` in the echo re-runs the command.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import KINDS, DynamicsSpec, random_config, simulate
from .encoding import gen_global_dataset, gen_subgraph_dataset, load_dataset, save_dataset
from .evaluation import (XI_GRID, ExperimentConfig, accuracy, baseline_accuracy, deviance_residuals,
                         run_subgraph_experiment, select_xi, split, write_json, write_metrics_json,
                         write_residuals_csv)
from .factorization import SmfConfig
from .graph import NwsParams, generate_nws, graph_stats, is_connected, load_edge_list, save_edge_list
from .model import (load_model, predict_global, predict_prob, save_model, train_lldm_nmf, train_lldm_smf,
                    train_lldm_t)
from .sampling import SamplingError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _echo(path: Path, args, argv) -> None:
    cfg = {key: value for key, value in vars(args).items() if key != "func"}
    write_json({"argv": list(argv), "args": cfg, "version": __version__}, path)


def _spec(args) -> DynamicsSpec:
    return DynamicsSpec(args.dynamics, args.kappa)


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def cmd_gen_graph(args, argv) -> int:
    out = Path(args.output)
    if args.kind == "nws":
        g = generate_nws(NwsParams(args.nodes, args.neighbors, args.shortcut_p, args.seed))
    else:
        if not args.input:
            raise UsageError("gen-graph load needs --input")
        g = load_edge_list(_require_file(args.input, "edge list"))
    save_edge_list(g, out)
    stats = graph_stats(g)
    write_json(stats, out.with_name(out.name + ".stats.json"))
    _echo(out.with_name(out.name + ".config.json"), args, argv)
    print(json.dumps(stats))
    return EXIT_OK


def cmd_gen_data(args, argv) -> int:
    spec = _spec(args)
    graphs = [load_edge_list(_require_file(p, "graph")) for p in args.graph]
    for p, g in zip(args.graph, graphs):
        if not is_connected(g):
            raise ValueError(f"graph {p} is not connected")
    if args.mode == "subgraph":
        if len(graphs) != 1:
            raise UsageError("subgraph mode takes exactly one --graph")
        ds = gen_subgraph_dataset(graphs[0], args.k, args.count, spec, args.t_horizon, args.t_observed,
                                  seed=args.seed, balance=args.balance, threads=args.threads,
                                  parent_name=Path(args.graph[0]).name)
        table = None
    else:
        from .encoding import DEFAULT_HORIZONS
        th, to = DEFAULT_HORIZONS[spec.kind]
        ds, table = gen_global_dataset(graphs, args.k, args.count, spec,
                                       args.t_horizon or th, args.t_observed or to, seed=args.seed,
                                       balance=args.balance, parent_name=Path(args.graph[0]).name)
    out = Path(args.output)
    save_dataset(ds, out)
    if table is not None:
        write_json(table, out / "parents.json")
    _echo(out / "config.json", args, argv)
    pos = int(ds.labels.sum())
    print(json.dumps({"count": len(ds), "positive": pos, "negative": len(ds) - pos}))
    return EXIT_OK


def cmd_train(args, argv) -> int:
    ds = load_dataset(_require_file(args.data, "dataset"))
    cfg = SmfConfig(rank=args.rank, xi=args.xi, iters=args.iters, inner_iters=args.inner_iters,
                    ridge=args.ridge, fit_intercept=args.intercept, seed=args.seed)
    info = {"method": args.method}
    if args.method == "smf" and args.xi_grid:
        model, xi, scores = select_xi(ds, args.rank, XI_GRID, cfg, seed=args.seed)
        info.update(xi=xi, validation_accuracy={str(key): v for key, v in scores.items()})
    elif args.method == "smf":
        model = train_lldm_smf(ds, args.rank, args.xi, cfg)
        info["xi"] = args.xi
    elif args.method == "nmf":
        model = train_lldm_nmf(ds, args.rank, cfg)
    else:
        model = train_lldm_t(ds, args.rank, cfg)
    out = Path(args.output)
    save_model(model, out)
    info["train_accuracy"] = accuracy(model, ds).accuracy
    write_json(info, out / "training.json")
    _echo(out / "config.json", args, argv)
    print(json.dumps(info))
    return EXIT_OK


def cmd_predict(args, argv) -> int:
    model = load_model(_require_file(args.model, "model"))
    out = Path(args.output)
    if args.scope == "local":
        if not args.data:
            raise UsageError("predict local needs --data")
        ds = load_dataset(_require_file(args.data, "dataset"))
        p = np.atleast_1d(predict_prob(model, ds.cats))
        result = {"probabilities": p.tolist(), "labels": (p > 0.5).astype(int).tolist()}
    else:
        if not args.graph:
            raise UsageError("predict global needs --graph")
        g = load_edge_list(_require_file(args.graph, "graph"))
        rng = np.random.default_rng(args.seed)
        x0 = random_config(model.spec, g.node_count, rng)
        traj = simulate(g, x0, model.spec, model.T - 1)
        pred = predict_global(model, g, traj, model.k, args.n_samples, rng)
        result = {"final": pred.final, "trace": pred.trace.tolist(), "samples_used": pred.samples_used,
                  "probabilities": pred.probs.tolist()}
    write_json(result, out)
    _echo(out.with_name(out.name + ".config.json"), args, argv)
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    model = load_model(_require_file(args.model, "model"))
    ds = load_dataset(_require_file(args.data, "dataset"))
    if args.split != "all":
        train, test = split(ds, args.train_frac, args.seed)
        ds = train if args.split == "train" else test
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    m = accuracy(model, ds)
    write_metrics_json(m, out / "metrics.json", args.seed)
    write_residuals_csv(deviance_residuals(model, ds), out / "residuals.csv")
    if args.baseline:
        if ds.observed is None:
            raise ValueError("dataset has no observed configurations for the baseline")
        b = baseline_accuracy(ds.observed, ds.labels, ds.spec, np.random.default_rng(args.seed))
        write_metrics_json(b, out / "baseline_metrics.json", args.seed)
    _echo(out / "config.json", args, argv)
    print(json.dumps(m.to_dict(args.seed)))
    return EXIT_OK


def cmd_export_filters(args, argv) -> int:
    model = load_model(_require_file(args.model, "model"))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(model.rank - 1))
    for r, f in enumerate(model.filters):
        d = out / f"filter_{r:0{width}d}"
        d.mkdir(exist_ok=True)
        for t in range(model.T):
            np.savetxt(d / f"t{t:03d}.csv", f[:, :, t], delimiter=",", fmt="%.9g")
    order = sorted(range(model.rank), key=lambda r: (-model.beta[r], r))
    write_json([{"filter": f"filter_{r:0{width}d}", "index": r, "beta": float(model.beta[r])} for r in order],
               out / "beta.json")
    _echo(out / "config.json", args, argv)
    return EXIT_OK


def cmd_experiment(args, argv) -> int:
    cfg = ExperimentConfig(dynamics=args.dynamics, kappa=args.kappa, k=args.k, count=args.count,
                           seeds=tuple(args.seeds), rank=args.rank, iters=args.iters,
                           with_logreg=args.logreg, threads=args.threads)
    result = run_subgraph_experiment(cfg, log=lambda row: print(json.dumps(row), file=sys.stderr))
    out = Path(args.output)
    write_json(result, out)
    _echo(out.with_name(out.name + ".config.json"), args, argv)
    print(json.dumps(result["summary"]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lldm", description="Latent linear dynamics models for synchronization prediction.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    def dyn(sp, required=True):
        sp.add_argument("--dynamics", choices=KINDS, required=required, default=None if required else "fca")
        sp.add_argument("--kappa", type=int)

    s = sub.add_parser("gen-graph", help="generate or normalize a graph")
    s.add_argument("kind", choices=("nws", "load"))
    s.add_argument("--nodes", type=int, default=300)
    s.add_argument("--neighbors", type=int, default=12)
    s.add_argument("--shortcut-p", type=float, default=0.4)
    s.add_argument("--input")
    s.add_argument("-o", "--output", required=True)
    common(s)
    s.set_defaults(func=cmd_gen_graph)

    s = sub.add_parser("gen-data", help="simulate dynamics and build a CAT dataset")
    s.add_argument("--graph", action="append", required=True, help="edge list (repeat for global mode)")
    dyn(s)
    s.add_argument("--mode", choices=("subgraph", "global"), default="subgraph")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--count", type=int, default=2000, help="examples (global mode: paths per parent)")
    s.add_argument("--t-horizon", type=int)
    s.add_argument("--t-observed", type=int)
    s.add_argument("--balance", action="store_true")
    s.add_argument("-o", "--output", required=True)
    common(s)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="fit an LLDM")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=("smf", "nmf", "nmf-distill"), default="smf")
    s.add_argument("--rank", type=int, default=8)
    s.add_argument("--xi", type=float, default=0.5)
    s.add_argument("--xi-grid", action="store_true", help=f"select xi from {XI_GRID} on a validation split")
    s.add_argument("--iters", type=int, default=250)
    s.add_argument("--inner-iters", type=int, default=20)
    s.add_argument("--ridge", type=float, default=1e-6)
    s.add_argument("--intercept", action="store_true")
    s.add_argument("-o", "--output", required=True)
    common(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="local (per CAT) or global (per graph) prediction")
    s.add_argument("scope", choices=("local", "global"))
    s.add_argument("--model", required=True)
    s.add_argument("--data")
    s.add_argument("--graph")
    s.add_argument("--n-samples", type=int, default=50)
    s.add_argument("-o", "--output", required=True)
    common(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="metrics.json and residuals.csv for a model on a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=("all", "train", "test"), default="all")
    s.add_argument("--train-frac", type=float, default=0.8)
    s.add_argument("--baseline", action="store_true", help="also score the concentration baseline")
    s.add_argument("-o", "--output", required=True)
    common(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export-filters", help="write filters as CSV slices plus beta.json")
    s.add_argument("--model", required=True)
    s.add_argument("-o", "--output", required=True)
    common(s, seed=False)
    s.set_defaults(func=cmd_export_filters)

    s = sub.add_parser("experiment", help="multi-seed subgraph-level comparison")
    dyn(s, required=False)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--count", type=int, default=2000)
    s.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    s.add_argument("--rank", type=int, default=8)
    s.add_argument("--iters", type=int, default=250)
    s.add_argument("--logreg", action="store_true")
    s.add_argument("-o", "--output", required=True)
    common(s, seed=False)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args, argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return EXIT_OK if not e.code else EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as e:
        print(f"lldm: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, SamplingError, FileNotFoundError, KeyError, RuntimeError, OSError) as e:
        print(f"lldm: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
