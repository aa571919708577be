"""Normal/Rewinding instruction substitution driven by the progress monitor.

Each call to :func:`supervise_step` consumes the record the policy produced
this step and returns the instruction to issue on the next step.  When an
anomaly fires in Normal mode the supervisor issues the rewind instruction for
exactly ``rewind_steps`` policy steps, ignoring the records produced during
those steps, then clears the recorder and hands the original instruction back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import monitor
from .curation import REWIND_INSTRUCTION
from .monitor import StateRecorder
from .reasoning import ReasoningRecord

NORMAL = "normal"
REWINDING = "rewind"

# event names in the supervisor log
COUNT_ANOMALY = "count_anomaly"
STAGNATION = "stagnation"
REWIND_START = "rewind_start"
REWIND_END = "rewind_end"


@dataclass(frozen=True)
class SupervisorConfig:
    rewind_steps: int = 3
    rewind_instruction: str = REWIND_INSTRUCTION
    count_rule: str = monitor.TAIL_CONSECUTIVE

    def __post_init__(self):
        if self.rewind_steps < 0:
            raise ValueError("rewind_steps must be >= 0")
        if self.count_rule not in monitor.COUNT_RULES:
            raise ValueError(f"unknown count rule {self.count_rule!r}")


@dataclass(frozen=True)
class InstructionDecision:
    instruction: str
    rewinding: bool


@dataclass
class SupervisorState:
    original_instruction: str
    mode: str = NORMAL
    remaining: int = 0  # rewind steps still to run while mode == REWINDING
    recorder: StateRecorder = field(default_factory=StateRecorder)
    event_log: list[tuple[int, str]] = field(default_factory=list)
    step: int = 0
    last_anomaly: Optional[str] = None  # anomaly seen on the latest step, for episode logs


def new_state(instruction: str) -> SupervisorState:
    return SupervisorState(original_instruction=instruction)


def supervise_step(
    state: SupervisorState, record: ReasoningRecord, cfg: SupervisorConfig
) -> tuple[SupervisorState, InstructionDecision]:
    step = state.step
    state.step += 1
    state.last_anomaly = None
    rewind = InstructionDecision(cfg.rewind_instruction, True)
    original = InstructionDecision(state.original_instruction, False)

    if state.mode == REWINDING:
        # this record came from a rewind step; monitoring is suspended
        state.remaining -= 1
        if state.remaining > 0:
            return state, rewind
        monitor.reset(state.recorder)
        state.mode = NORMAL
        state.event_log.append((step, REWIND_END))
        return state, original

    monitor.push_step(state.recorder, record.remaining_count, record.trajectory)
    found = monitor.verdict(state.recorder, cfg.count_rule)
    if found.count_anomaly:
        state.event_log.append((step, COUNT_ANOMALY))
    if found.stagnation:
        state.event_log.append((step, STAGNATION))
    if found.any:
        state.last_anomaly = "count" if found.count_anomaly else "stagnation"
    if not found.any or cfg.rewind_steps == 0:
        return state, original

    state.mode = REWINDING
    state.remaining = cfg.rewind_steps
    state.event_log.append((step, REWIND_START))
    return state, rewind


def drain_log(state: SupervisorState) -> list[tuple[int, str]]:
    events = list(state.event_log)
    state.event_log.clear()
    return events
