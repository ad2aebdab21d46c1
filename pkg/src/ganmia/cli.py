"""Command-line entry points.

Subcommands compose the pipeline: ``gen-data`` -> ``train-target`` ->
``attack`` -> ``evaluate`` equals ``run`` for the same config and seed.
Exit codes: 0 success, 2 validation error (bad config, unknown attack,
missing file), 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bitmatrix import load_csv
from .experiment import (
    default_config,
    diagnose,
    evaluate_output_dir,
    load_config,
    load_split,
    run_dir,
    run_experiment,
    save_config,
    stage_attack,
    stage_gen_data,
    stage_train_target,
)
from .generators import load_target

OUTPUT_DIR_ENV = "GANMIA_OUTPUT_DIR"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ganmia",
        description="Membership-inference attack harness for generative models "
        "on binary tabular data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="experiment config JSON (default: desk profile)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help=f"output directory (or ${OUTPUT_DIR_ENV})")
        p.add_argument("--run", type=int, default=1, help="run index (default 1)")

    for name, descr in (
        ("gen-data", "sample the data pool and write dataset/split/candidate files"),
        ("train-target", "train or build the target generator for one run"),
        ("attack", "score candidates with every configured attack"),
        ("evaluate", "aggregate persisted scores into the results report"),
        ("diagnose", "memorization, MRE gap, kernel test, PCA convergence"),
        ("run", "full pipeline over all configured runs"),
    ):
        p = sub.add_parser(name, help=descr)
        add_common(p)
        if name == "attack":
            p.add_argument("--candidates", help="candidate rows CSV (0/1 matrix)")
            p.add_argument("--labels", help="one 0/1 membership label per line")
        if name == "diagnose":
            p.add_argument("--samples", type=int, default=10_000)
    p = sub.add_parser("init-config", help="write the desk-scale default config")
    p.add_argument("path", help="where to write the config JSON")
    return parser


def _load_config(args):
    if args.config is None:
        config = default_config()
    else:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.master_seed = args.seed
    out = getattr(args, "out", None) or os.environ.get(OUTPUT_DIR_ENV)
    if out:
        config.output_dir = out
    return config


def _cmd_gen_data(args) -> int:
    config = _load_config(args)
    stage_gen_data(config, args.run, config.output_dir)
    print(f"wrote run {args.run} data under {run_dir(config.output_dir, args.run)}")
    return 0


def _cmd_train_target(args) -> int:
    config = _load_config(args)
    rdir = run_dir(config.output_dir, args.run)
    _, split = load_split(config, rdir)
    stage_train_target(config, args.run, config.output_dir, split)
    print(f"wrote target artifacts under {rdir}")
    return 0


def _cmd_attack(args) -> int:
    config = _load_config(args)
    rdir = run_dir(config.output_dir, args.run)
    _, split = load_split(config, rdir)
    target = load_target(os.path.join(rdir, "target"))
    candidates = labels = None
    if args.candidates:
        candidates = load_csv(args.candidates)
        if not args.labels:
            raise ValueError("--candidates requires --labels")
        with open(args.labels) as handle:
            labels = np.array([int(line.strip()) for line in handle if line.strip()])
    scores = stage_attack(
        config, args.run, config.output_dir, target, split, candidates, labels
    )
    print(f"scored {len(scores)} attacks into {rdir}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _load_config(args)
    evaluate_output_dir(config, config.output_dir)
    print(f"wrote report under {config.output_dir}")
    return 0


def _cmd_diagnose(args) -> int:
    config = _load_config(args)
    results = diagnose(config, config.output_dir, run_index=args.run, total_samples=args.samples)
    print(json.dumps(results, indent=2))
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args)
    report = run_experiment(config)
    failed = report.metadata.get("failures", [])
    print(
        f"completed {report.metadata['n_runs_completed']}/{config.n_runs} runs, "
        f"{len(report.attacks)} attacks -> {config.output_dir}"
    )
    if failed:
        print(f"failures: {json.dumps(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_init_config(args) -> int:
    save_config(default_config(), args.path)
    print(f"wrote {args.path}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-target": _cmd_train_target,
    "attack": _cmd_attack,
    "evaluate": _cmd_evaluate,
    "diagnose": _cmd_diagnose,
    "run": _cmd_run,
    "init-config": _cmd_init_config,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
