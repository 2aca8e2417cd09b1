"""Experiment harness behind the CLI: training, governor comparison, workload
generation, policy traces and inference benchmarking, with CSV and PNG output.
"""
from __future__ import annotations

import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import plots
from .encoders import (
    EncoderConfig,
    initial_tegm_state,
    initial_tem_state,
    tegm_update,
    tem_update,
)
from .governors import GOVERNOR_KINDS, BaselineGovernor, GovernorKind
from .network import (
    NetworkError,
    QNetworkParams,
    build_descriptor,
    load_weights,
    q_forward,
    save_weights,
)
from .rl import TrainConfig, encode_inputs, export_episode_log, run_rl_episode, train
from .simcore import PeriodObservation, SimConfig, new_simulation, run_episode
from .taskmodel import (
    BUILTIN_NAMES,
    DEFAULT_BENCHMARKS,
    TaskSetSpec,
    WorkloadError,
    builtin_taskset,
    generate_random_taskset,
    load_taskset,
    save_taskset,
)

# Method variants: encoder kind and MLP width.
VARIANTS = {
    "pro": ("tegm", 30),
    "prom": ("tem", 30),
    "prol": ("tegm", 60),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a command needs: workload, variant, platform, training, output."""

    taskset_source: str = "three"
    variant: str = "pro"
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise WorkloadError(
                f"unknown variant {self.variant!r}; choose one of {', '.join(VARIANTS)}"
            )


def resolve_taskset(source: str, seed: int, cores: int) -> TaskSetSpec:
    """Builtin name, 'random:<n>', or a workload file path."""
    if source in BUILTIN_NAMES:
        return builtin_taskset(source, cores=cores)
    if source.startswith("random:"):
        try:
            n = int(source.split(":", 1)[1])
        except ValueError:
            raise WorkloadError(f"bad random taskset spec {source!r}; use random:<n>") from None
        return generate_random_taskset(DEFAULT_BENCHMARKS, n, seed, cores=cores)
    if not os.path.exists(source):
        raise WorkloadError(
            f"unknown taskset {source!r}: not a builtin ({', '.join(BUILTIN_NAMES)}), "
            f"not random:<n>, and no such file"
        )
    return load_taskset(source)


def encoder_config_for(taskset: TaskSetSpec, sim: SimConfig) -> EncoderConfig:
    return EncoderConfig(
        n_tasks=taskset.n_tasks,
        rl_freqs=tuple(sim.rl_freqs),
        t_norm=taskset.hyperperiod_T,
    )


def _write_csv(path: str, schema: str, header: str, rows: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dvfslab {schema}\n{header}\n")
        for row in rows:
            fh.write(row + "\n")


def cmd_train(config: ExperimentConfig) -> dict[str, str]:
    """Train a policy and write weights, reward and execution-time curves."""
    os.makedirs(config.out_dir, exist_ok=True)
    probe = os.path.join(config.out_dir, ".writable")
    try:
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {config.out_dir!r} is not writable: {exc}") from exc
    taskset = resolve_taskset(config.taskset_source, config.seed, config.sim.num_cores)
    variant_kind, hidden = VARIANTS[config.variant]
    if variant_kind == "tem" and taskset.n_tasks > 5:
        print(
            f"warning: variant {config.variant} uses a flat MLP whose input grows "
            f"with the task count; it is a poor fit for sets this large "
            f"({taskset.n_tasks} tasks). Consider pro or prol.",
            file=sys.stderr,
        )
    result = train(
        taskset,
        config.sim,
        config.train,
        variant=variant_kind,
        mlp_hidden=hidden,
        seed=config.seed,
    )
    paths = {
        "weights": os.path.join(config.out_dir, "weights.bin"),
        "reward_csv": os.path.join(config.out_dir, "reward_curve.csv"),
        "exet_csv": os.path.join(config.out_dir, "exet_curve.csv"),
        "reward_png": os.path.join(config.out_dir, "reward_curve.png"),
        "exet_png": os.path.join(config.out_dir, "exet_curve.png"),
    }
    save_weights(result.params, paths["weights"])
    _write_csv(
        paths["reward_csv"],
        "reward-curve v1",
        "training_idx,mean_reward,stderr",
        [
            f"{idx + 1},{mean:.12g},{stderr:.12g}"
            for idx, (mean, stderr) in enumerate(result.reward_curve)
        ],
    )
    _write_csv(
        paths["exet_csv"],
        "exet-curve v1",
        "training_idx," + ",".join(f"exet_task_{t.id}" for t in taskset.tasks),
        [
            f"{idx + 1}," + ",".join(f"{v:.12g}" for v in row)
            for idx, row in enumerate(result.eval_exets)
        ],
    )
    plots.save_reward_curve(result.reward_curve, paths["reward_png"])
    plots.save_exet_curves(result.eval_exets, taskset, paths["exet_png"])
    return paths


@dataclass(frozen=True)
class GovernorRow:
    name: str
    power: float  # simulated average watts over the evaluation episodes
    normalized_power: float  # 1.0 is the max-frequency policy
    exet_means: tuple[float, ...]
    miss_buckets: tuple[float, float, float, float]  # % in 0-2.5, 2.5-5, >5, none


@dataclass(frozen=True)
class ComparisonReport:
    taskset: str
    runs: int
    rows: tuple[GovernorRow, ...]


def _miss_bucket(exet: float, ddl: float) -> int:
    if exet <= ddl:
        return 3
    overshoot = (exet - ddl) / ddl
    if overshoot <= 0.025:
        return 0
    if overshoot <= 0.05:
        return 1
    return 2


def check_weights_match(
    params: QNetworkParams, taskset: TaskSetSpec, enc_cfg: EncoderConfig
) -> str:
    """Return the variant name for the weight file, or raise if the network's
    input arity cannot serve this task set."""
    for name, (kind, hidden) in VARIANTS.items():
        if params.desc.variant == kind and params.desc.mlp_hidden == hidden:
            variant = name
            break
    else:
        variant = params.desc.variant
    expected = build_descriptor(params.desc.variant, enc_cfg, params.desc.mlp_hidden)
    if expected.mlp_in != params.desc.mlp_in:
        raise NetworkError(
            f"weight file does not match the task set: expected mlp_in "
            f"{expected.mlp_in} for {taskset.n_tasks} tasks, found {params.desc.mlp_in}"
        )
    return variant


def evaluate_governor(
    name: str,
    taskset: TaskSetSpec,
    sim_cfg: SimConfig,
    runs: int,
    params: Optional[QNetworkParams] = None,
    enc_cfg: Optional[EncoderConfig] = None,
    ddl_threshold: float = 0.05,
) -> GovernorRow:
    """Average power, per-task execution times and miss buckets over N episodes."""
    powers = []
    exets = np.zeros(taskset.n_tasks)
    buckets = np.zeros(4)
    for run_idx in range(runs):
        if params is not None:
            result = run_rl_episode(
                taskset, sim_cfg, enc_cfg, params, 0.0, ddl_threshold
            )
            summary = result.summary
        else:
            governor = BaselineGovernor(GovernorKind(kind=name), sim_cfg.freq_table)
            summary, _ = run_episode(taskset, sim_cfg, governor, seed=run_idx)
        powers.append(summary.energy / summary.total_time)
        exets += np.array(summary.exet)
        for i, task in enumerate(taskset.tasks):
            buckets[_miss_bucket(summary.exet[i], task.relative_deadline)] += 1
    exets /= runs
    buckets = buckets / buckets.sum() * 100.0
    return GovernorRow(
        name=name,
        power=float(np.mean(powers)),
        normalized_power=0.0,  # filled in by the caller
        exet_means=tuple(float(v) for v in exets),
        miss_buckets=tuple(float(b) for b in buckets),
    )


def cmd_compare(
    config: ExperimentConfig,
    governors: Sequence[str],
    weights_path: str,
    runs: int = 20,
) -> tuple[ComparisonReport, dict[str, str]]:
    """Pit the trained policy against the baseline governors."""
    os.makedirs(config.out_dir, exist_ok=True)
    taskset = resolve_taskset(config.taskset_source, config.seed, config.sim.num_cores)
    enc_cfg = encoder_config_for(taskset, config.sim)
    params = load_weights(weights_path)
    rl_name = check_weights_match(params, taskset, enc_cfg)
    names = list(governors) if governors else list(GOVERNOR_KINDS)
    for name in names:
        if name not in GOVERNOR_KINDS:
            raise WorkloadError(f"unknown governor {name!r}")
    if "performance" not in names:
        names.insert(0, "performance")
    rows = [
        evaluate_governor(name, taskset, config.sim, runs)
        for name in names
    ]
    rows.append(
        evaluate_governor(
            rl_name,
            taskset,
            config.sim,
            runs,
            params=params,
            enc_cfg=enc_cfg,
            ddl_threshold=config.train.ddl_threshold,
        )
    )
    perf_power = next(r.power for r in rows if r.name == "performance")
    rows = [
        GovernorRow(
            name=r.name,
            power=r.power,
            normalized_power=r.power / perf_power,
            exet_means=r.exet_means,
            miss_buckets=r.miss_buckets,
        )
        for r in rows
    ]
    report = ComparisonReport(taskset=taskset.name, runs=runs, rows=tuple(rows))
    csv_path = os.path.join(config.out_dir, "comparison.csv")
    png_path = os.path.join(config.out_dir, "normalized_power.png")
    header = (
        "governor,power_watts,normalized_power,miss_0_2.5_pct,miss_2.5_5_pct,"
        "miss_over_5_pct,no_miss_pct," + ",".join(f"exet_task_{t.id}" for t in taskset.tasks)
    )
    _write_csv(
        csv_path,
        "comparison v1",
        header,
        [
            f"{r.name},{r.power:.12g},{r.normalized_power:.12g},"
            + ",".join(f"{b:.12g}" for b in r.miss_buckets)
            + ","
            + ",".join(f"{v:.12g}" for v in r.exet_means)
            for r in rows
        ],
    )
    plots.save_power_comparison(
        [r.name for r in rows], [r.normalized_power for r in rows], png_path
    )
    return report, {"csv": csv_path, "png": png_path}


def format_report(report: ComparisonReport) -> str:
    lines = [
        f"task set {report.taskset}: {report.runs} evaluation episodes per governor",
        f"{'governor':<14}{'power[W]':>10}{'norm':>8}{'no-miss%':>10}"
        f"{'0-2.5%':>8}{'2.5-5%':>8}{'>5%':>8}",
    ]
    for r in report.rows:
        b = r.miss_buckets
        lines.append(
            f"{r.name:<14}{r.power:>10.4f}{r.normalized_power:>8.3f}"
            f"{b[3]:>10.2f}{b[0]:>8.2f}{b[1]:>8.2f}{b[2]:>8.2f}"
        )
    return "\n".join(lines)


def cmd_gen_workload(n: int, seed: int, out_path: str, cores: int = 4) -> TaskSetSpec:
    spec = generate_random_taskset(DEFAULT_BENCHMARKS, n, seed, cores=cores)
    save_taskset(spec, out_path)
    return spec


@dataclass(frozen=True)
class BenchReport:
    mean_ms: float
    p99_ms: float
    count: int


def cmd_bench_inference(
    weights_path: str,
    taskset: TaskSetSpec,
    sim_cfg: SimConfig,
    decisions: int = 10_000,
) -> BenchReport:
    """Wall-clock cost of one decision: encoder update plus one full Q-value
    evaluation per candidate frequency, measured over greedy episodes."""
    params = load_weights(weights_path)
    enc_cfg = encoder_config_for(taskset, sim_cfg)
    check_weights_match(params, taskset, enc_cfg)
    variant = params.desc.variant
    samples = np.empty(decisions)
    count = 0
    while count < decisions:
        sim = new_simulation(taskset, sim_cfg)
        state = initial_tegm_state(enc_cfg) if variant == "tegm" else initial_tem_state(enc_cfg)
        obs: Optional[PeriodObservation] = None
        while not sim.done and not sim.capped and count < decisions:
            t0 = time.perf_counter()
            if obs is not None:
                if variant == "tegm":
                    state = tegm_update(state, obs.labels, obs, enc_cfg)
                else:
                    state = tem_update(state, obs.labels, obs, enc_cfg)
            qs = [
                q_forward(params, encode_inputs(params, state, action, enc_cfg))
                for action in enc_cfg.rl_freqs
            ]
            samples[count] = time.perf_counter() - t0
            count += 1
            action = enc_cfg.rl_freqs[int(np.argmax(qs))]
            obs = sim.step_period(action)
    return BenchReport(
        mean_ms=float(np.mean(samples) * 1e3),
        p99_ms=float(np.percentile(samples, 99) * 1e3),
        count=decisions,
    )


def format_bench(report: BenchReport) -> str:
    return (
        f"decisions: {report.count}\n"
        f"mean per-decision latency: {report.mean_ms:.3g} ms\n"
        f"p99 per-decision latency: {report.p99_ms:.3g} ms"
    )


@dataclass(frozen=True)
class PolicyTraceResult:
    csv_path: str
    png_path: str
    log_path: str
    decisions: int
    summary_line: str


def cmd_eval_policy(
    weights_path: str,
    taskset: TaskSetSpec,
    sim_cfg: SimConfig,
    out_dir: str,
    ddl_threshold: float = 0.05,
) -> PolicyTraceResult:
    """One greedy episode: per-period trace CSV, a figure, and a window summary."""
    os.makedirs(out_dir, exist_ok=True)
    params = load_weights(weights_path)
    enc_cfg = encoder_config_for(taskset, sim_cfg)
    check_weights_match(params, taskset, enc_cfg)
    result = run_rl_episode(
        taskset, sim_cfg, enc_cfg, params, 0.0, ddl_threshold
    )
    trace = result.observations
    csv_path = os.path.join(out_dir, "policy_trace.csv")
    header = "clock,freq,util_max,util_avg," + ",".join(
        f"label_{i}" for i in range(1, taskset.n_tasks + 1)
    )
    _write_csv(
        csv_path,
        "policy-trace v1",
        header,
        [
            f"{o.wall_clock_end:.9f},{o.freq:.0f},{o.util_max:.6f},{o.util_avg:.6f},"
            + ",".join(str(l) for l in o.labels)
            for o in trace
        ],
    )
    png_path = os.path.join(out_dir, "policy_trace.png")
    plots.save_policy_trace(trace, taskset, sim_cfg.f_max, png_path)
    log_path = os.path.join(out_dir, "episode_log.csv")
    export_episode_log(result.transitions, log_path)
    low = enc_cfg.rl_freqs[0]
    first_low = last_low = windows = 0
    for i in range(taskset.n_tasks):
        in_progress = [k for k, o in enumerate(trace) if o.labels[i] == 1]
        if not in_progress:
            done = [k for k, o in enumerate(trace) if o.labels[i] == 2]
            if not done:
                continue
            in_progress = [done[0]]
        windows += 1
        first_low += trace[in_progress[0]].freq == low
        last_low += trace[in_progress[-1]].freq == low
    summary_line = (
        f"low frequency chosen at window start for {first_low}/{windows} tasks, "
        f"at window end for {last_low}/{windows} tasks"
    )
    return PolicyTraceResult(
        csv_path=csv_path,
        png_path=png_path,
        log_path=log_path,
        decisions=len(trace),
        summary_line=summary_line,
    )
