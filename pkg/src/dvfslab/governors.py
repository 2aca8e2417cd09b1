"""Baseline frequency policies modeled on the Linux cpufreq governors.

These are behavioral approximations driven by the previous period's maximum
utilization, not ports of kernel code. Thresholds are configurable; defaults
follow common cpufreq documentation values.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional, Sequence

from .simcore import PeriodObservation

GOVERNOR_KINDS = ("performance", "conservative", "ondemand", "schedutil")


class GovernorError(ValueError):
    pass


@dataclass(frozen=True)
class GovernorKind:
    """Which baseline policy to run, plus its tuning knobs."""

    kind: str
    up_threshold: float = 0.8
    down_threshold: float = 0.2
    step: int = 1  # conservative: table indices per adjustment
    margin: float = 1.25  # schedutil: headroom factor

    def __post_init__(self) -> None:
        if self.kind not in GOVERNOR_KINDS:
            raise GovernorError(
                f"unknown governor {self.kind!r}; choose one of {', '.join(GOVERNOR_KINDS)}"
            )
        if not (0.0 < self.down_threshold < self.up_threshold <= 1.0):
            raise GovernorError(
                "thresholds must satisfy 0 < down_threshold < up_threshold <= 1"
            )
        if self.step < 1:
            raise GovernorError("step must be >= 1")
        if self.margin <= 0:
            raise GovernorError("margin must be > 0")


def _lowest_at_least(table: Sequence[float], target: float) -> float:
    idx = bisect.bisect_left(table, target)
    return table[min(idx, len(table) - 1)]


def decide(
    kind: GovernorKind,
    previous: PeriodObservation,
    current_freq: float,
    table: Sequence[float],
) -> float:
    """Pick the next frequency from the previous period's utilization."""
    if current_freq not in table:
        raise GovernorError(f"current frequency {current_freq} is not in the table")
    util = min(1.0, max(0.0, previous.util_max))
    if kind.kind == "performance":
        return table[-1]
    if kind.kind == "ondemand":
        if util > kind.up_threshold:
            return table[-1]
        return _lowest_at_least(table, current_freq * util / kind.up_threshold)
    if kind.kind == "conservative":
        idx = table.index(current_freq)
        if util > kind.up_threshold:
            idx += kind.step
        elif util < kind.down_threshold:
            idx -= kind.step
        return table[max(0, min(idx, len(table) - 1))]
    # schedutil
    return _lowest_at_least(table, kind.margin * table[-1] * util)


class BaselineGovernor:
    """Stateful per-episode wrapper around decide().

    Performance starts (and stays) at the table maximum; the adaptive policies
    start an episode from the table minimum.
    """

    def __init__(self, kind: GovernorKind, table: Sequence[float]):
        self.kind = kind
        self.table = tuple(table)
        self.current = self.table[-1] if kind.kind == "performance" else self.table[0]

    def __call__(self, previous: Optional[PeriodObservation]) -> float:
        if previous is not None:
            self.current = decide(self.kind, previous, self.current, self.table)
        return self.current
