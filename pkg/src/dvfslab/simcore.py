"""Discrete-time multi-core CPU simulator with globally shared DVFS.

Time advances in governor decision periods. Within a period the scheduler is
event-driven: released, unfinished tasks are placed on cores FIFO by release
time (ties by task id), run until they finish or the period ends, and freed
cores are immediately handed to queued tasks (work conserving). One execution
of a task set is one episode.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .taskmodel import TaskSetSpec

# Sub-nanosecond slack for comparing event timestamps.
EPS_TIME = 1e-9
# Residual cycles below this count as task completion.
EPS_CYCLES = 1e-3


class SimConfigError(ValueError):
    """Invalid simulator configuration."""


@dataclass(frozen=True)
class SimConfig:
    """Platform model: cores, frequency table, decision interval, power curve."""

    num_cores: int = 4
    decision_interval: float = 0.05
    freq_table: tuple[float, ...] = (0.3e9, 0.6e9, 0.9e9, 1.2e9, 1.5e9)
    rl_freqs: tuple[float, ...] = (0.9e9, 1.5e9)
    power_static: float = 0.5  # watts
    power_dyn_coeff: float = 1.5  # watts at f_max
    episode_cap: Optional[float] = None  # seconds; None means 2 * hyperperiod

    def __post_init__(self) -> None:
        if self.num_cores < 1:
            raise SimConfigError(f"num_cores must be >= 1, got {self.num_cores}")
        if not (self.decision_interval > 0):
            raise SimConfigError(
                f"decision_interval must be > 0, got {self.decision_interval}"
            )
        if not self.freq_table or any(f <= 0 for f in self.freq_table):
            raise SimConfigError("freq_table must be non-empty and positive")
        if list(self.freq_table) != sorted(self.freq_table):
            raise SimConfigError("freq_table must be ascending")
        if len(set(self.freq_table)) != len(self.freq_table):
            raise SimConfigError("freq_table entries must be distinct")
        if len(self.rl_freqs) != 2:
            raise SimConfigError("rl_freqs must contain exactly two frequencies")
        if not set(self.rl_freqs) <= set(self.freq_table):
            raise SimConfigError("rl_freqs must be a subset of freq_table")
        if tuple(self.rl_freqs) != tuple(sorted(self.rl_freqs)):
            raise SimConfigError("rl_freqs must be ascending")
        if self.episode_cap is not None and not (self.episode_cap > 0):
            raise SimConfigError("episode_cap must be > 0 when given")

    @property
    def f_max(self) -> float:
        return self.freq_table[-1]

    @property
    def f_min(self) -> float:
        return self.freq_table[0]


@dataclass(frozen=True)
class PeriodObservation:
    """What the governor sees after one decision period."""

    freq: float
    util_max: float
    util_avg: float
    duration: float
    labels: tuple[int, ...]  # per task: 0 not started, 1 in progress, 2 done
    wall_clock_end: float


@dataclass(frozen=True)
class EpisodeSummary:
    """Per-task and whole-episode accounting for one task set execution."""

    exet: tuple[float, ...]  # finish - release, per task
    finish: tuple[float, ...]
    missed: tuple[bool, ...]
    total_time: float  # first release to completion of all (or the cap)
    time_at_freq: dict[float, float]
    avg_utilization: float
    energy: float

    @property
    def any_missed(self) -> bool:
        return any(self.missed)


def power(freq: float, config: SimConfig) -> float:
    """Static power plus a cubic dynamic term normalized at f_max."""
    if not (freq > 0):
        raise SimConfigError(f"power() needs freq > 0, got {freq}")
    ratio = freq / config.f_max
    return config.power_static + config.power_dyn_coeff * ratio**3


class SimState:
    """Mutable state of one episode. Confine each instance to one thread."""

    def __init__(self, taskset: TaskSetSpec, config: SimConfig, seed: int = 0):
        self.taskset = taskset
        self.config = config
        self.seed = seed  # reserved for stochastic platform effects
        self.start_clock = min(t.start_offset for t in taskset.tasks)
        self.clock = self.start_clock
        cap = config.episode_cap if config.episode_cap is not None else 2.0 * taskset.hyperperiod_T
        self.end_clock = self.start_clock + cap
        self.remaining = [t.profile.work for t in taskset.tasks]
        self.finish_time: list[Optional[float]] = [None] * taskset.n_tasks
        self.core_task: list[Optional[int]] = [None] * config.num_cores
        self.energy = 0.0
        self.time_at_freq: dict[float, float] = {}
        self.util_weighted = 0.0  # sum of util_avg * duration
        self.elapsed = 0.0

    @property
    def done(self) -> bool:
        return all(f is not None for f in self.finish_time)

    @property
    def capped(self) -> bool:
        return self.clock >= self.end_clock - EPS_TIME

    def _ready_unassigned(self, now: float) -> list[int]:
        assigned = set(t for t in self.core_task if t is not None)
        ready = [
            i
            for i in range(self.taskset.n_tasks)
            if self.finish_time[i] is None
            and self.taskset.tasks[i].start_offset <= now + EPS_TIME
            and i not in assigned
        ]
        ready.sort(key=lambda i: (self.taskset.tasks[i].start_offset, self.taskset.tasks[i].id))
        return ready

    def step_period(self, freq: float) -> PeriodObservation:
        """Run one decision period at the given frequency and observe it."""
        if freq not in self.config.freq_table:
            raise SimConfigError(f"frequency {freq} is not in the table")
        if self.done:
            raise SimConfigError("episode already finished")
        if self.capped:
            raise SimConfigError("episode cap already reached")
        t0 = self.clock
        t_end = min(t0 + self.config.decision_interval, self.end_clock)
        busy = [0.0] * self.config.num_cores
        now = t0
        while True:
            for i in self._ready_unassigned(now):
                try:
                    core = self.core_task.index(None)
                except ValueError:
                    break
                self.core_task[core] = i
            running = [(c, t) for c, t in enumerate(self.core_task) if t is not None]
            t_next = t_end
            for _, i in running:
                rate = freq * self.taskset.tasks[i].profile.duty
                t_next = min(t_next, now + self.remaining[i] / rate)
            for i in range(self.taskset.n_tasks):
                s = self.taskset.tasks[i].start_offset
                if self.finish_time[i] is None and now + EPS_TIME < s < t_end - EPS_TIME:
                    t_next = min(t_next, s)
            dt = t_next - now
            for core, i in running:
                task = self.taskset.tasks[i]
                self.remaining[i] -= freq * task.profile.duty * dt
                busy[core] += dt * task.profile.duty
                if self.remaining[i] <= EPS_CYCLES:
                    self.remaining[i] = 0.0
                    self.finish_time[i] = t_next
                    self.core_task[core] = None
            now = t_next
            if self.done or now >= t_end - EPS_TIME:
                break
        duration = now - t0
        self.clock = now
        util = [min(1.0, b / duration) for b in busy]
        util_max = max(util)
        util_avg = sum(util) / len(util)
        self.energy += power(freq, self.config) * duration
        self.time_at_freq[freq] = self.time_at_freq.get(freq, 0.0) + duration
        self.util_weighted += util_avg * duration
        self.elapsed += duration
        labels = tuple(self._label(i, now) for i in range(self.taskset.n_tasks))
        return PeriodObservation(
            freq=freq,
            util_max=util_max,
            util_avg=util_avg,
            duration=duration,
            labels=labels,
            wall_clock_end=now,
        )

    def _label(self, i: int, at: float) -> int:
        fin = self.finish_time[i]
        if fin is not None and fin <= at + EPS_TIME:
            return 2
        if self.taskset.tasks[i].start_offset < at - EPS_TIME:
            return 1
        return 0

    def current_labels(self) -> tuple[int, ...]:
        return tuple(self._label(i, self.clock) for i in range(self.taskset.n_tasks))

    def summary(self) -> EpisodeSummary:
        exet, finish, missed = [], [], []
        for i, task in enumerate(self.taskset.tasks):
            fin = self.finish_time[i]
            if fin is None:
                fin = self.end_clock
                miss = True
            else:
                miss = fin - task.start_offset > task.relative_deadline
            finish.append(fin)
            exet.append(fin - task.start_offset)
            missed.append(miss)
        return EpisodeSummary(
            exet=tuple(exet),
            finish=tuple(finish),
            missed=tuple(missed),
            total_time=self.elapsed,
            time_at_freq=dict(self.time_at_freq),
            avg_utilization=(self.util_weighted / self.elapsed) if self.elapsed > 0 else 0.0,
            energy=self.energy,
        )


def new_simulation(taskset: TaskSetSpec, config: SimConfig, seed: int = 0) -> SimState:
    return SimState(taskset, config, seed)


Governor = Callable[[Optional[PeriodObservation]], float]


def run_episode(
    taskset: TaskSetSpec,
    config: SimConfig,
    governor: Governor,
    record: bool = False,
    seed: int = 0,
) -> tuple[EpisodeSummary, Optional[list[PeriodObservation]]]:
    """Drive one episode: ask the governor for a frequency each period, feeding
    it the previous period's observation (None on the first call)."""
    sim = new_simulation(taskset, config, seed)
    obs: Optional[PeriodObservation] = None
    trace: list[PeriodObservation] = []
    while not sim.done and not sim.capped:
        freq = governor(obs)
        obs = sim.step_period(freq)
        if record:
            trace.append(obs)
    return sim.summary(), (trace if record else None)


def write_trace_csv(
    observations: Sequence[PeriodObservation], path: str, time_column: str = "clock_end"
) -> None:
    """Per-period trace: clock, frequency, utilization and task labels."""
    n_tasks = len(observations[0].labels) if observations else 0
    header = [time_column, "freq", "util_max", "util_avg"]
    header += [f"label_{i}" for i in range(1, n_tasks + 1)]
    lines = ["# dvfslab episode-trace v1", ",".join(header)]
    for o in observations:
        row = [
            f"{o.wall_clock_end:.9f}",
            f"{o.freq:.0f}",
            f"{o.util_max:.6f}",
            f"{o.util_avg:.6f}",
        ] + [str(l) for l in o.labels]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
