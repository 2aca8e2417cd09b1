"""Command line interface.

Verbs: train, compare, eval-policy, gen-workload, bench-inference. Options can
also come from a line-oriented config file (`key value` per line, # comments);
command-line flags win over file values. Exit codes: 0 success, 2 bad
configuration or input, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from . import experiment
from .experiment import ExperimentConfig, VARIANTS
from .rl import TrainConfig
from .simcore import SimConfig
from .taskmodel import WorkloadError


class ConfigError(ValueError):
    pass


_CONFIG_KEYS = {
    "taskset": str,
    "variant": str,
    "seed": int,
    "out": str,
    "episodes": int,
    "cores": int,
    "interval": float,
    "threshold": float,
    "runs": int,
    "decisions": int,
    "weights": str,
    "governors": str,
    "n": int,
}


def _load_config_file(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'key value'")
            key, value = parts
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dvfslab",
        description="Simulated DVFS governor lab: train and compare frequency policies "
        "for periodic multi-task workloads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="config file; flags override its values")
        p.add_argument("--taskset", help="three|five|eight, random:<n>, or a workload file")
        p.add_argument("--variant", choices=sorted(VARIANTS), help="policy variant")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--out", help="output directory (default out)")
        p.add_argument("--cores", type=int, help="number of cores (default 4)")
        p.add_argument("--interval", type=float, help="decision interval seconds (default 0.05)")
        p.add_argument("--threshold", type=float, help="acceptable exceed rate (default 0.05)")

    p_train = sub.add_parser("train", help="train a policy and write weights plus curves")
    common(p_train)
    p_train.add_argument("--episodes", type=int, help="training episodes (default 500)")

    p_cmp = sub.add_parser("compare", help="compare a trained policy with the baselines")
    common(p_cmp)
    p_cmp.add_argument("--weights", help="trained weight file (default <out>/weights.bin)")
    p_cmp.add_argument("--runs", type=int, help="evaluation episodes per governor (default 20)")
    p_cmp.add_argument(
        "--governors", help="comma-separated baseline list (default all four)"
    )

    p_gen = sub.add_parser("gen-workload", help="generate a random workload file")
    common(p_gen)
    p_gen.add_argument("--n", type=int, help="number of tasks (required)")
    p_gen.add_argument("--workload-out", help="output file (default <out>/workload.txt)")

    p_eval = sub.add_parser("eval-policy", help="trace one greedy episode of a trained policy")
    common(p_eval)
    p_eval.add_argument("--weights", help="trained weight file (default <out>/weights.bin)")

    p_bench = sub.add_parser("bench-inference", help="measure per-decision inference latency")
    common(p_bench)
    p_bench.add_argument("--weights", help="trained weight file (default <out>/weights.bin)")
    p_bench.add_argument("--decisions", type=int, help="decisions to time (default 10000)")
    return parser


def _merged(args: argparse.Namespace) -> dict:
    values = _load_config_file(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values.setdefault("taskset", "three")
    values.setdefault("variant", "pro")
    values.setdefault("seed", 0)
    values.setdefault("out", "out")
    values.setdefault("cores", 4)
    values.setdefault("interval", 0.05)
    values.setdefault("threshold", 0.05)
    return values


def _experiment_config(values: dict) -> ExperimentConfig:
    sim = SimConfig(num_cores=values["cores"], decision_interval=values["interval"])
    train_kwargs = {"ddl_threshold": values["threshold"]}
    if "episodes" in values:
        train_kwargs["episodes"] = values["episodes"]
    return ExperimentConfig(
        taskset_source=values["taskset"],
        variant=values["variant"],
        sim=sim,
        train=TrainConfig(**train_kwargs),
        out_dir=values["out"],
        seed=values["seed"],
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        values = _merged(args)
        config = _experiment_config(values)
        if args.command == "train":
            paths = experiment.cmd_train(config)
            print(f"weights: {paths['weights']}")
            print(f"reward curve: {paths['reward_csv']} (+ {paths['reward_png']})")
            print(f"execution times: {paths['exet_csv']} (+ {paths['exet_png']})")
        elif args.command == "compare":
            weights = values.get("weights") or f"{values['out']}/weights.bin"
            governors = (
                [g.strip() for g in values["governors"].split(",") if g.strip()]
                if values.get("governors")
                else []
            )
            report, paths = experiment.cmd_compare(
                config, governors, weights, runs=values.get("runs", 20)
            )
            print(experiment.format_report(report))
            print(f"report: {paths['csv']} (+ {paths['png']})")
        elif args.command == "gen-workload":
            if values.get("n") is None:
                raise ConfigError("gen-workload requires --n")
            out_path = getattr(args, "workload_out", None) or f"{values['out']}/workload.txt"
            os.makedirs(values["out"], exist_ok=True)
            spec = experiment.cmd_gen_workload(
                values["n"], values["seed"], out_path, cores=values["cores"]
            )
            print(f"wrote {spec.n_tasks}-task workload to {out_path}")
        elif args.command == "eval-policy":
            weights = values.get("weights") or f"{values['out']}/weights.bin"
            taskset = experiment.resolve_taskset(
                values["taskset"], values["seed"], values["cores"]
            )
            result = experiment.cmd_eval_policy(
                weights, taskset, config.sim, values["out"], values["threshold"]
            )
            print(f"trace: {result.csv_path} ({result.decisions} decisions, + {result.png_path})")
            print(result.summary_line)
        elif args.command == "bench-inference":
            weights = values.get("weights") or f"{values['out']}/weights.bin"
            taskset = experiment.resolve_taskset(
                values["taskset"], values["seed"], values["cores"]
            )
            report = experiment.cmd_bench_inference(
                weights, taskset, config.sim, decisions=values.get("decisions", 10_000)
            )
            print(experiment.format_bench(report))
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
