"""State recorder and the two progress-anomaly detectors."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .reasoning import Pixel

COUNT_WINDOW = 4
TRAJ_WINDOW = 8

TAIL_CONSECUTIVE = "tail-consecutive"
DISJOINT_WINDOWS = "disjoint-windows"
COUNT_RULES = (TAIL_CONSECUTIVE, DISJOINT_WINDOWS)

Trajectory = tuple[Pixel, ...]


@dataclass
class StateRecorder:
    """Recent predicted counts (last 4 steps) and planned trajectories (last 8 steps), oldest first."""

    counts: deque = field(default_factory=lambda: deque(maxlen=COUNT_WINDOW))
    trajectories: deque = field(default_factory=lambda: deque(maxlen=TRAJ_WINDOW))

    def to_json(self) -> dict:
        return {
            "counts": list(self.counts),
            "trajectories": [[list(p) for p in traj] for traj in self.trajectories],
        }


@dataclass(frozen=True)
class AnomalyVerdict:
    count_anomaly: bool
    stagnation: bool

    @property
    def any(self) -> bool:
        return self.count_anomaly or self.stagnation


def push_step(rec: StateRecorder, count: int, traj: Sequence[Pixel]) -> StateRecorder:
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    rec.counts.append(count)
    rec.trajectories.append(tuple(tuple(p) for p in traj))
    return rec


def detect_count_anomaly(rec: StateRecorder, rule: str = TAIL_CONSECUTIVE) -> bool:
    """True when the remaining count has risen in both of the two most recent comparisons.

    ``tail-consecutive`` compares the last three entries (c1 < c2 < c3);
    ``disjoint-windows`` splits the queue into two pairs and needs a rise in each.
    """
    if len(rec.counts) < COUNT_WINDOW:
        return False
    c0, c1, c2, c3 = rec.counts
    if rule == TAIL_CONSECUTIVE:
        return c2 > c1 and c3 > c2
    if rule == DISJOINT_WINDOWS:
        return c1 > c0 and c3 > c2
    raise ValueError(f"unknown count rule {rule!r}; expected one of {COUNT_RULES}")


def detect_stagnation(rec: StateRecorder) -> bool:
    if len(rec.trajectories) < TRAJ_WINDOW:
        return False
    first = rec.trajectories[0]
    return all(traj == first for traj in rec.trajectories)


def verdict(rec: StateRecorder, rule: str = TAIL_CONSECUTIVE) -> AnomalyVerdict:
    return AnomalyVerdict(detect_count_anomaly(rec, rule), detect_stagnation(rec))


def reset(rec: StateRecorder) -> StateRecorder:
    rec.counts.clear()
    rec.trajectories.clear()
    return rec
