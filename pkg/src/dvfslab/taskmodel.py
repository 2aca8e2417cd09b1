"""Periodic task sets: benchmark profiles, fixed workloads, random generation, file I/O.

A task set is one period of a soft real-time workload: every task has a start
offset and a relative deadline, and the hyperperiod T is the latest absolute
deadline. Work is expressed in CPU cycles so execution time scales with the
simulated clock frequency.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

# Reference max frequency used to calibrate builtin work values and as the
# default when deriving baseline times for generated workloads.
DEFAULT_F_MAX = 1.5e9

# Start offsets from the random generator are quantized to this grid.
START_QUANTUM = 0.1


class WorkloadError(ValueError):
    """Invalid task set: bad field value, broken invariant, or unparsable file."""


@dataclass(frozen=True)
class BenchmarkProfile:
    """A synthetic compute kernel: total demand in cycles and core occupancy."""

    name: str
    work: float  # cycles
    duty: float = 1.0  # fraction of one core consumed while running

    def __post_init__(self) -> None:
        if not self.name:
            raise WorkloadError("benchmark name must be non-empty")
        if not (self.work > 0):
            raise WorkloadError(f"benchmark {self.name!r}: work must be > 0, got {self.work}")
        if not (0.0 < self.duty <= 1.0):
            raise WorkloadError(f"benchmark {self.name!r}: duty must be in (0,1], got {self.duty}")


@dataclass(frozen=True)
class TaskSpec:
    """One task instance inside a set: profile plus release and deadline timing."""

    id: int
    profile: BenchmarkProfile
    start_offset: float  # seconds from period begin
    relative_deadline: float  # seconds from start_offset

    def __post_init__(self) -> None:
        if self.start_offset < 0:
            raise WorkloadError(f"task {self.id}: start_offset must be >= 0")
        if not (self.relative_deadline > 0):
            raise WorkloadError(f"task {self.id}: relative_deadline must be > 0")

    @property
    def absolute_deadline(self) -> float:
        return self.start_offset + self.relative_deadline


@dataclass(frozen=True)
class TaskSetSpec:
    """An ordered task list with its hyperperiod (the latest absolute deadline)."""

    tasks: tuple[TaskSpec, ...]
    name: str = "taskset"
    cores: int = 4
    hyperperiod_T: float = field(default=0.0)

    def __post_init__(self) -> None:
        if not self.tasks:
            raise WorkloadError("task set must contain at least one task")
        if self.cores < 1:
            raise WorkloadError(f"cores must be >= 1, got {self.cores}")
        t_max = max(t.absolute_deadline for t in self.tasks)
        if self.hyperperiod_T == 0.0:
            object.__setattr__(self, "hyperperiod_T", t_max)
        for t in self.tasks:
            if t.absolute_deadline > self.hyperperiod_T * (1 + 1e-12):
                raise WorkloadError(
                    f"task {t.id}: absolute deadline {t.absolute_deadline:.6g} "
                    f"exceeds hyperperiod {self.hyperperiod_T:.6g}"
                )
        if abs(t_max - self.hyperperiod_T) > 1e-9 * max(1.0, t_max):
            raise WorkloadError(
                f"hyperperiod {self.hyperperiod_T:.6g} does not equal the latest "
                f"absolute deadline {t_max:.6g}"
            )

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)


def baseline_time(profile: BenchmarkProfile, f_max: float) -> float:
    """Minimum execution time of a profile: one core at the maximum frequency."""
    if not (f_max > 0):
        raise WorkloadError(f"f_max must be > 0, got {f_max}")
    return profile.work / f_max


# Builtin workloads. Work values are calibrated so that execution at the
# reference max frequency (one core per task) reproduces the target
# max-frequency execution times below.
_BUILTIN_TIMING = {
    "three": {
        "starts": (0.0, 0.3, 0.7),
        "deadlines": (0.3, 0.4, 0.5),
        "exec_at_fmax": (0.138, 0.139, 0.139),
        "bench": ("mul", "mul", "mul"),
    },
    "five": {
        "starts": (0.0, 0.0, 0.0, 0.0, 1.0),
        "deadlines": (0.3, 0.5, 0.8, 1.0, 0.3),
        "exec_at_fmax": (0.100, 0.167, 0.307, 0.372, 0.086),
        "bench": ("jpeg", "qsort", "fft", "typeset", "jpeg"),
    },
    "eight": {
        "starts": (0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0),
        "deadlines": (0.3, 0.5, 0.8, 1.0, 0.3, 0.5, 0.8, 1.0),
        "exec_at_fmax": (0.100, 0.167, 0.304, 0.371, 0.095, 0.167, 0.303, 0.371),
        "bench": ("jpeg", "qsort", "fft", "typeset", "jpeg", "qsort", "fft", "typeset"),
    },
}

BUILTIN_NAMES = tuple(_BUILTIN_TIMING)


def builtin_taskset(name: str, cores: int = 4) -> TaskSetSpec:
    """Return one of the fixed workloads: 'three', 'five' or 'eight'."""
    try:
        timing = _BUILTIN_TIMING[name]
    except KeyError:
        raise WorkloadError(
            f"unknown builtin task set {name!r}; choose one of {', '.join(BUILTIN_NAMES)}"
        ) from None
    tasks = []
    for i, (start, ddl, exet, bench) in enumerate(
        zip(timing["starts"], timing["deadlines"], timing["exec_at_fmax"], timing["bench"]),
        start=1,
    ):
        profile = BenchmarkProfile(name=bench, work=exet * DEFAULT_F_MAX, duty=1.0)
        tasks.append(TaskSpec(id=i, profile=profile, start_offset=start, relative_deadline=ddl))
    return TaskSetSpec(tasks=tuple(tasks), name=name, cores=cores)


# Default benchmark list for the random generator. All duty 1.0: the deadline
# rule below spans (baseline, 2 * baseline) and a duty below 1 would make the
# tight end unreachable even at max frequency.
DEFAULT_BENCHMARKS = (
    BenchmarkProfile("spin", 0.12 * DEFAULT_F_MAX),
    BenchmarkProfile("sort", 0.08 * DEFAULT_F_MAX),
    BenchmarkProfile("fft", 0.20 * DEFAULT_F_MAX),
    BenchmarkProfile("filter", 0.15 * DEFAULT_F_MAX),
    BenchmarkProfile("encode", 0.30 * DEFAULT_F_MAX),
    BenchmarkProfile("hash", 0.10 * DEFAULT_F_MAX),
)


def generate_random_taskset(
    benchmarks: Sequence[BenchmarkProfile],
    n: int,
    seed: int,
    f_max: float = DEFAULT_F_MAX,
    cores: int = 4,
    name: str = "random",
) -> TaskSetSpec:
    """Draw n tasks: random benchmark, quantized random start, deadline in
    (baseline, 2 * baseline). Pure function of (benchmarks, n, seed)."""
    if n < 1:
        raise WorkloadError(f"task count must be >= 1, got {n}")
    if not benchmarks:
        raise WorkloadError("benchmark list must be non-empty")
    rng = np.random.default_rng(seed)
    picks = [benchmarks[int(rng.integers(len(benchmarks)))] for _ in range(n)]
    start_span = sum(baseline_time(b, f_max) for b in picks)
    tasks = []
    for i, bench in enumerate(picks, start=1):
        raw_start = float(rng.uniform(0.0, start_span))
        start = round(raw_start / START_QUANTUM) * START_QUANTUM
        base = baseline_time(bench, f_max)
        ddl = float(rng.uniform(base, 2.0 * base))
        tasks.append(TaskSpec(id=i, profile=bench, start_offset=start, relative_deadline=ddl))
    return TaskSetSpec(tasks=tuple(tasks), name=name, cores=cores)


def save_taskset(spec: TaskSetSpec, path: str) -> None:
    """Write the line-oriented workload format. Benchmark display names are not
    persisted; loading assigns placeholder names."""
    lines = [f"taskset {spec.name} cores={spec.cores}"]
    for t in spec.tasks:
        lines.append(
            f"task {t.id} work={t.profile.work:.17g} duty={t.profile.duty:.17g} "
            f"start={t.start_offset:.17g} ddl={t.relative_deadline:.17g}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_taskset(path: str) -> TaskSetSpec:
    """Parse a workload file; errors carry the offending line number."""
    name = None
    cores = 4
    tasks: list[TaskSpec] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if fields[0] == "taskset":
                if len(fields) < 2:
                    raise WorkloadError(f"{path}:{lineno}: taskset header needs a name")
                name = fields[1]
                for token in fields[2:]:
                    key, _, value = token.partition("=")
                    if key == "cores":
                        cores = _parse_int(value, path, lineno, "cores")
                    else:
                        raise WorkloadError(f"{path}:{lineno}: unknown header field {key!r}")
            elif fields[0] == "task":
                if name is None:
                    raise WorkloadError(f"{path}:{lineno}: task line before taskset header")
                if len(fields) < 2:
                    raise WorkloadError(f"{path}:{lineno}: task line needs an id")
                tid = _parse_int(fields[1], path, lineno, "task id")
                kv = {}
                for token in fields[2:]:
                    key, sep, value = token.partition("=")
                    if not sep:
                        raise WorkloadError(f"{path}:{lineno}: expected key=value, got {token!r}")
                    kv[key] = _parse_float(value, path, lineno, key)
                missing = {"work", "duty", "start", "ddl"} - kv.keys()
                if missing:
                    raise WorkloadError(
                        f"{path}:{lineno}: task {tid} missing fields: {', '.join(sorted(missing))}"
                    )
                try:
                    profile = BenchmarkProfile(name=f"task{tid}", work=kv["work"], duty=kv["duty"])
                    tasks.append(
                        TaskSpec(
                            id=tid,
                            profile=profile,
                            start_offset=kv["start"],
                            relative_deadline=kv["ddl"],
                        )
                    )
                except WorkloadError as exc:
                    raise WorkloadError(f"{path}:{lineno}: {exc}") from None
            else:
                raise WorkloadError(f"{path}:{lineno}: unknown directive {fields[0]!r}")
    if name is None:
        raise WorkloadError(f"{path}: missing taskset header")
    if not tasks:
        raise WorkloadError(f"{path}: task set is empty")
    return TaskSetSpec(tasks=tuple(tasks), name=name, cores=cores)


def with_cores(spec: TaskSetSpec, cores: int) -> TaskSetSpec:
    return replace(spec, cores=cores)


def _parse_int(text: str, path: str, lineno: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise WorkloadError(f"{path}:{lineno}: {what} must be an integer, got {text!r}") from None


def _parse_float(text: str, path: str, lineno: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise WorkloadError(f"{path}:{lineno}: {what} must be a number, got {text!r}") from None
