"""Temporal state encoders that turn period observations into RL states.

Two encodings are provided. The recurrent-friendly one keeps an ordered
history of per-period (frequency x load-interval) activity records plus
per-task start/finish timestamps; the flat one accumulates per-task active
time in each (frequency x load-interval) cell. Both carry the instantaneous
utilization pair, the accumulated utilized time and the consumed time.

All states are immutable; updates return new states and are pure functions of
their inputs.
"""
from __future__ import annotations

import bisect
import hashlib
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .simcore import PeriodObservation

UNSET = -1.0  # sentinel timestamp for start/finish not yet observed


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    """Shared encoder geometry: load intervals, task count, actions, time scale."""

    n_tasks: int
    rl_freqs: tuple[float, ...]
    t_norm: float  # seconds; the task set's hyperperiod
    load_boundaries: tuple[float, ...] = (60.0,)  # percent cut points, ascending

    def __post_init__(self) -> None:
        if self.n_tasks < 1:
            raise EncoderError("n_tasks must be >= 1")
        if len(self.rl_freqs) < 2 or tuple(self.rl_freqs) != tuple(sorted(set(self.rl_freqs))):
            raise EncoderError("rl_freqs must be >= 2 ascending distinct frequencies")
        if not (self.t_norm > 0):
            raise EncoderError("t_norm must be > 0")
        if not self.load_boundaries:
            raise EncoderError("load_boundaries must be non-empty")
        if list(self.load_boundaries) != sorted(set(self.load_boundaries)):
            raise EncoderError("load_boundaries must be strictly ascending")
        if self.load_boundaries[0] <= 0 or self.load_boundaries[-1] >= 100:
            raise EncoderError("load_boundaries must lie strictly inside (0, 100)")

    @property
    def n_intervals(self) -> int:
        return len(self.load_boundaries) + 1

    @property
    def n_combos(self) -> int:
        return len(self.rl_freqs) * self.n_intervals

    def interval_index(self, util_max: float) -> int:
        # Right-closed on cut points: a load exactly on a boundary maps down.
        return bisect.bisect_left(self.load_boundaries, util_max * 100.0)

    def combo_index(self, freq: float, util_max: float) -> int:
        try:
            f_idx = self.rl_freqs.index(freq)
        except ValueError:
            raise EncoderError(f"frequency {freq} is not an RL candidate") from None
        return f_idx * self.n_intervals + self.interval_index(util_max)


@dataclass(frozen=True)
class TegmState:
    """History-of-records state for the recurrent network."""

    p1_history: tuple[tuple[float, ...], ...]
    p2: tuple[tuple[float, float], ...]  # (start, finish) per task, UNSET until seen
    i: tuple[float, float]  # (util_max, util_avg) of the latest period
    u: float  # accumulated utilized time, seconds
    c: float  # consumed time since episode start, seconds


@dataclass(frozen=True)
class TemState:
    """Accumulated per-task activity state for the flat network."""

    p: tuple[tuple[float, ...], ...]  # n_tasks x n_combos active seconds
    i: tuple[float, float]
    u: float
    c: float
    labels: tuple[int, ...]  # last seen labels, kept to reject regressions


EncodedState = Union[TegmState, TemState]


def initial_tegm_state(cfg: EncoderConfig) -> TegmState:
    return TegmState(
        p1_history=(),
        p2=tuple((UNSET, UNSET) for _ in range(cfg.n_tasks)),
        i=(0.0, 0.0),
        u=0.0,
        c=0.0,
    )


def initial_tem_state(cfg: EncoderConfig) -> TemState:
    return TemState(
        p=tuple((0.0,) * cfg.n_combos for _ in range(cfg.n_tasks)),
        i=(0.0, 0.0),
        u=0.0,
        c=0.0,
        labels=(0,) * cfg.n_tasks,
    )


def _check_labels(labels: Sequence[int], cfg: EncoderConfig) -> None:
    if len(labels) != cfg.n_tasks:
        raise EncoderError(f"expected {cfg.n_tasks} labels, got {len(labels)}")
    for i, lab in enumerate(labels):
        if lab not in (0, 1, 2):
            raise EncoderError(f"task {i}: label must be 0, 1 or 2, got {lab}")


def tegm_update(
    prev: TegmState, labels: Sequence[int], obs: PeriodObservation, cfg: EncoderConfig
) -> TegmState:
    """Append the period's activity record and latch task timestamps."""
    _check_labels(labels, cfg)
    record = [0.0] * cfg.n_combos
    record[cfg.combo_index(obs.freq, obs.util_max)] = obs.duration
    p2 = []
    for idx, lab in enumerate(labels):
        start, finish = prev.p2[idx]
        if lab == 0 and (start != UNSET or finish != UNSET):
            raise EncoderError(f"task {idx}: label regressed to 0")
        if lab == 1 and finish != UNSET:
            raise EncoderError(f"task {idx}: label regressed from 2 to 1")
        if lab == 1 and start == UNSET:
            start = prev.c
        elif lab == 2 and finish == UNSET:
            finish = prev.c
        p2.append((start, finish))
    return TegmState(
        p1_history=prev.p1_history + (tuple(record),),
        p2=tuple(p2),
        i=(obs.util_max, obs.util_avg),
        u=prev.u + obs.duration * obs.util_avg,
        c=prev.c + obs.duration,
    )


def tem_update(
    prev: TemState, labels: Sequence[int], obs: PeriodObservation, cfg: EncoderConfig
) -> TemState:
    """Accumulate the period's duration into each in-progress task's cell."""
    _check_labels(labels, cfg)
    for idx, lab in enumerate(labels):
        if lab < prev.labels[idx]:
            raise EncoderError(
                f"task {idx}: label regressed from {prev.labels[idx]} to {lab}"
            )
    combo = cfg.combo_index(obs.freq, obs.util_max)
    rows = []
    for idx, row in enumerate(prev.p):
        if labels[idx] == 1:
            row = row[:combo] + (row[combo] + obs.duration,) + row[combo + 1 :]
        rows.append(row)
    return TemState(
        p=tuple(rows),
        i=(obs.util_max, obs.util_avg),
        u=prev.u + obs.duration * obs.util_avg,
        c=prev.c + obs.duration,
        labels=tuple(labels),
    )


def tegm_tail_length(cfg: EncoderConfig) -> int:
    return 2 * cfg.n_tasks + 5


def tem_input_length(cfg: EncoderConfig) -> int:
    return cfg.n_tasks * cfg.n_combos + 5


def tegm_network_inputs(
    state: TegmState, action_freq: float, cfg: EncoderConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Map a state and a candidate action onto (step sequence, tail vector).

    Each history record becomes the pair (combo index / (C-1), duration / T).
    The tail is the timestamp array (normalized, sentinel preserved), the
    utilization pair, normalized utilized and consumed time, and the action.
    """
    f_ref = cfg.rl_freqs[-1]
    denom = cfg.n_combos - 1
    seq = np.empty((len(state.p1_history), 2), dtype=np.float64)
    for k, record in enumerate(state.p1_history):
        combo = next(idx for idx, v in enumerate(record) if v != 0.0)
        seq[k, 0] = combo / denom
        seq[k, 1] = record[combo] / cfg.t_norm
    tail = np.empty(tegm_tail_length(cfg), dtype=np.float64)
    pos = 0
    for start, finish in state.p2:
        tail[pos] = start if start == UNSET else start / cfg.t_norm
        tail[pos + 1] = finish if finish == UNSET else finish / cfg.t_norm
        pos += 2
    tail[pos : pos + 2] = state.i
    tail[pos + 2] = state.u / cfg.t_norm
    tail[pos + 3] = state.c / cfg.t_norm
    tail[pos + 4] = action_freq / f_ref
    return seq, tail


def tem_network_inputs(
    state: TemState, action_freq: float, cfg: EncoderConfig
) -> np.ndarray:
    """Flatten the accumulated activity plus the shared scalars and the action."""
    f_ref = cfg.rl_freqs[-1]
    vec = np.empty(tem_input_length(cfg), dtype=np.float64)
    pos = 0
    for row in state.p:
        for v in row:
            vec[pos] = v / cfg.t_norm
            pos += 1
    vec[pos : pos + 2] = state.i
    vec[pos + 2] = state.u / cfg.t_norm
    vec[pos + 3] = state.c / cfg.t_norm
    vec[pos + 4] = action_freq / f_ref
    return vec


def state_digest(state: EncodedState) -> str:
    """Short stable digest of a state, for episode debug logs."""
    h = hashlib.sha256()
    if isinstance(state, TegmState):
        h.update(b"tegm")
        for record in state.p1_history:
            h.update(struct.pack(f"<{len(record)}d", *record))
        for pair in state.p2:
            h.update(struct.pack("<2d", *pair))
    else:
        h.update(b"tem")
        for row in state.p:
            h.update(struct.pack(f"<{len(row)}d", *row))
    h.update(struct.pack("<4d", state.i[0], state.i[1], state.u, state.c))
    return h.hexdigest()[:16]
