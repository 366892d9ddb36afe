"""Command-line entry point.

Usage:
    memsim list
    memsim run --config cfg.json [--seed N] [--out DIR]
    memsim run <experiment> [--seed N] [--out DIR]
    memsim cs recover [--n N --m M --k K --iters I --noise-profile ideal|noisy]
    memsim dnn train|infer [--config cfg.json] [--data DIR]
    memsim snn correlation [--n-per-synapse N]
    memsim psnn train [--encoder rate|grf]
    memsim reservoir [--task narma10 --nodes N --rho R --node-kind tanh|volatile]

Every subcommand requires a seed (flag or config; never wall clock).
Exit codes: 0 success, 1 module error, 2 usage error. MEMSIM_THREADS
caps numerical-library parallelism.
"""

import argparse
import json
import os
import sys

from . import harness
from .harness import ConfigError, ExperimentConfig


def _apply_thread_cap():
    cap = os.environ.get("MEMSIM_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _build_parser():
    parser = argparse.ArgumentParser(prog="memsim",
                                     description="memristive in-memory computing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="print the experiment registry")

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="experiment seed")
        p.add_argument("--out", help="output directory")

    p_run = sub.add_parser("run", help="run a registered experiment")
    p_run.add_argument("experiment", nargs="?", help="registry name (or use --config)")
    common(p_run)

    p_cs = sub.add_parser("cs", help="compressed sensing")
    cs_sub = p_cs.add_subparsers(dest="subcommand", required=True)
    p_rec = cs_sub.add_parser("recover")
    common(p_rec)
    p_rec.add_argument("--n", type=int, default=256)
    p_rec.add_argument("--m", type=int, default=128)
    p_rec.add_argument("--k", type=int, default=10)
    p_rec.add_argument("--iters", type=int, default=50)
    p_rec.add_argument("--noise-profile", choices=["ideal", "noisy"], default="ideal")

    p_dnn = sub.add_parser("dnn", help="mixed-precision training")
    dnn_sub = p_dnn.add_subparsers(dest="subcommand", required=True)
    for name in ("train", "infer"):
        p = dnn_sub.add_parser(name)
        common(p)
        p.add_argument("--data", help="MNIST IDX directory (default: bundled digits)")

    p_snn = sub.add_parser("snn", help="spiking networks")
    snn_sub = p_snn.add_subparsers(dest="subcommand", required=True)
    p_corr = snn_sub.add_parser("correlation")
    common(p_corr)
    p_corr.add_argument("--n-per-synapse", type=int, default=7)

    p_psnn = sub.add_parser("psnn", help="probabilistic spiking networks")
    psnn_sub = p_psnn.add_subparsers(dest="subcommand", required=True)
    p_pt = psnn_sub.add_parser("train")
    common(p_pt)
    p_pt.add_argument("--task", choices=["target-raster", "classify"],
                      default="classify")
    p_pt.add_argument("--encoder", choices=["rate", "grf", "both"], default="both")

    p_res = sub.add_parser("reservoir", help="reservoir computing")
    common(p_res)
    p_res.add_argument("--task", choices=["narma10"], default="narma10")
    p_res.add_argument("--nodes", type=int, default=200)
    p_res.add_argument("--rho", type=float, default=0.9)
    p_res.add_argument("--node-kind", choices=["tanh", "volatile"], default="tanh")

    return parser


def _make_config(args, experiment, blocks=None):
    if args.config:
        cfg = harness.load_config(args.config)
        if cfg.experiment != experiment and experiment is not None:
            cfg = ExperimentConfig(experiment=experiment, seed=cfg.seed,
                                   device=cfg.device, output_dir=cfg.output_dir,
                                   blocks=cfg.blocks)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.output_dir = args.out
        if blocks:
            for key, vals in blocks.items():
                merged = dict(cfg.blocks.get(key, {}))
                merged.update(vals)
                cfg.blocks[key] = merged
        return cfg
    if args.seed is None:
        raise ConfigError("a seed is required (use --seed or a config file)")
    return ExperimentConfig(experiment=experiment, seed=args.seed,
                            output_dir=args.out or ".", blocks=blocks or {})


def _dispatch(args):
    if args.command == "list":
        for name, (_, description) in sorted(harness.REGISTRY.items()):
            print(f"{name:28s} {description}")
        return 0

    if args.command == "run":
        if args.config is None and not args.experiment:
            raise ConfigError("specify an experiment name or --config")
        if args.experiment and args.experiment not in harness.REGISTRY:
            raise ConfigError(f"unknown experiment {args.experiment!r}; "
                              f"valid: {sorted(harness.REGISTRY)}")
        cfg = _make_config(args, args.experiment or None)
        records = harness.run_experiment(cfg)
    elif args.command == "cs":
        noisy = args.noise_profile == "noisy"
        blocks = {"cs": {"n": args.n, "m": args.m, "k": args.k, "iters": args.iters,
                         "prog_noise_rel": 0.1 if noisy else 0.0}}
        cfg = _make_config(args, "fig4_cs_recovery", blocks)
        records = harness.run_experiment(cfg)
    elif args.command == "dnn":
        experiment = ("fig7_mnist_mixed_precision" if args.subcommand == "train"
                      else "fig6_drift_inference")
        blocks = {"dnn": {"data_dir": args.data}} if args.data else {}
        cfg = _make_config(args, experiment, blocks)
        records = harness.run_experiment(cfg)
    elif args.command == "snn":
        blocks = {"snn": {"n_per_synapse": args.n_per_synapse}}
        cfg = _make_config(args, "fig9_correlation", blocks)
        records = harness.run_experiment(cfg)
    elif args.command == "psnn":
        cfg = _make_config(args, "fig11_encoding")
        records = harness.run_experiment(cfg)
    elif args.command == "reservoir":
        kind = "volatile_device" if args.node_kind == "volatile" else "tanh"
        blocks = {"reservoir": {"n_nodes": args.nodes, "rho": args.rho,
                                "node_kind": kind}}
        cfg = _make_config(args, "fig14_reservoir", blocks)
        records = harness.run_experiment(cfg)
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {args.command!r}")

    for record in records:
        print(json.dumps({"experiment": record.experiment, "seed": record.seed,
                          "metrics": record.metrics}, sort_keys=True))
    return 0


def main(argv=None):
    _apply_thread_cap()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
