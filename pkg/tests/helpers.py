"""Shared test utilities: observation builders, constant governors, and an
independent transliteration of the episode reward rule used as an oracle."""
from __future__ import annotations

import numpy as np

from dvfslab.simcore import EpisodeSummary, PeriodObservation
from dvfslab.taskmodel import BenchmarkProfile, TaskSetSpec, TaskSpec


def make_obs(
    freq=0.9e9, util_max=1.0, util_avg=0.25, duration=0.05, labels=(1,), clock_end=0.05
) -> PeriodObservation:
    return PeriodObservation(
        freq=freq,
        util_max=util_max,
        util_avg=util_avg,
        duration=duration,
        labels=tuple(labels),
        wall_clock_end=clock_end,
    )


def constant_governor(freq: float):
    return lambda obs: freq


def simple_taskset(deadlines, starts=None, work_seconds=None, cores=4) -> TaskSetSpec:
    """Tasks with work given as seconds at 1.5 GHz."""
    n = len(deadlines)
    starts = starts or [0.0] * n
    work_seconds = work_seconds or [0.1] * n
    tasks = tuple(
        TaskSpec(
            id=i + 1,
            profile=BenchmarkProfile(f"t{i + 1}", work_seconds[i] * 1.5e9),
            start_offset=starts[i],
            relative_deadline=deadlines[i],
        )
        for i in range(n)
    )
    return TaskSetSpec(tasks=tasks, name="test", cores=cores)


def numeric_gradients(params, batch, targets, eps=1e-5):
    """Central finite differences of the batch loss for every parameter."""
    from dvfslab.network import param_items, q_forward_batch

    y = np.asarray(targets, dtype=np.float64)

    def loss():
        q, _ = q_forward_batch(params, batch)
        return float(np.mean(0.5 * (q - y) ** 2))

    out = {}
    for name, arr in param_items(params):
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up = loss()
            arr[idx] = orig - eps
            down = loss()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out[name] = g
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for name, g in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(g), np.abs(n)), 1e-6)
        worst = max(worst, float(np.max(np.abs(g - n) / denom)))
    return worst


def relu_kink_margin(params, batch) -> float:
    """Smallest |preactivation| any hidden ReLU sees on this batch.

    Central differences are only a valid derivative oracle away from the
    activation kinks; instances are required to clear this margin by a wide
    multiple of the step size."""
    from dvfslab.network import q_forward_batch

    _, (_, mlp_cache) = q_forward_batch(params, batch)
    _, pre = mlp_cache
    if not pre:
        return float("inf")
    return min(float(np.min(np.abs(z))) for z in pre)


def kink_free_params(desc, batch, base_seed, margin=1e-3):
    """First seed at or after base_seed whose init keeps the batch clear of
    every ReLU kink, so the finite-difference comparison is well posed."""
    from dvfslab.network import init_params

    for seed in range(base_seed, base_seed + 200):
        params = init_params(desc, seed)
        if relu_kink_margin(params, batch) > margin:
            return params, seed
    raise AssertionError("no kink-free initialization found near the base seed")


def reward_oracle(
    summary: EpisodeSummary, rl_freqs, taskset: TaskSetSpec, threshold: float
) -> float:
    """Line-by-line re-derivation of the terminal reward rule, kept independent
    of the library implementation.

    Steps: per-frequency time share weighted by the inverted normalized cubic
    cost, averaged with the utilization term; on misses, the exceed rate
    1 - mean(ddl/exet over all tasks, missing ones contributing) zeroes the
    reward past the threshold, otherwise scales the halved reward (capped so a
    missing episode never beats the miss-free value)."""
    total = summary.total_time
    f_sorted = sorted(rl_freqs)
    f_min_c = f_sorted[0] ** 3
    f_max_c = f_sorted[-1] ** 3
    r_freq = 0.0
    for f in f_sorted:
        x = summary.time_at_freq.get(f, 0.0) / total
        r_freq = r_freq + (1.0 - (f**3 - f_min_c) / (f_max_c - f_min_c)) * x
    r_util = summary.avg_utilization
    r = r_freq / 2.0 + r_util / 2.0
    exceeded = [i for i, miss in enumerate(summary.missed) if miss]
    if exceeded:
        e_r = 0.0
        for i in exceeded:
            e_r += taskset.tasks[i].relative_deadline / summary.exet[i]
        e_r = e_r / len(taskset.tasks)
        if (1.0 - e_r) > threshold:
            r = 0.0
        else:
            scaled = (r / 2.0) * e_r * 10.0
            r = r / 2.0 if scaled > r / 2.0 else scaled
    return r


def random_summary(rng: np.random.Generator, rl_freqs):
    """A random internally consistent episode summary plus its task set."""
    n = int(rng.integers(1, 9))
    deadlines = rng.uniform(0.2, 1.0, n)
    baselines = deadlines * rng.uniform(0.3, 0.9, n)
    taskset = simple_taskset(list(deadlines), work_seconds=list(baselines))
    exet = []
    missed = []
    for i in range(n):
        if rng.random() < 0.4:
            e = float(deadlines[i] * rng.uniform(1.0 + 1e-6, 2.5))
            missed.append(True)
        else:
            e = float(deadlines[i] * rng.uniform(0.4, 1.0))
            missed.append(False)
        exet.append(e)
    total = float(max(exet) + rng.uniform(0.0, 0.5))
    share_low = float(rng.uniform(0.0, 1.0))
    time_at_freq = {
        rl_freqs[0]: share_low * total,
        rl_freqs[1]: (1.0 - share_low) * total,
    }
    summary = EpisodeSummary(
        exet=tuple(exet),
        finish=tuple(e for e in exet),
        missed=tuple(missed),
        total_time=total,
        time_at_freq=time_at_freq,
        avg_utilization=float(rng.uniform(0.0, 1.0)),
        energy=float(rng.uniform(0.1, 5.0)),
    )
    return summary, taskset
