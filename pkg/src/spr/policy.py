"""Scripted planning policy with ground-truth perception.

The policy reads the full simulator observation, lists the remaining
subtasks (grasp then place for every unplaced object, place only for a held
one), plans a straight line of waypoints to the first of them, and steps
toward it.  Under the rewind instruction it heads back to the start pose with
the gripper open.  Corruptions make it misbehave on purpose so the monitor
has something to catch.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional, Union

from .curation import REWIND_INSTRUCTION, discretize_coord
from .reasoning import MAX_WAYPOINTS, ReasoningRecord, bin_action
from .simworld import Observation, Vec, dist, object_placed
from .trace import GripperState

OPEN_CMD = -1.0
CLOSE_CMD = 1.0


@dataclass(frozen=True)
class FreezePlanAfter:
    """From policy step ``step + 1`` on, re-emit the previous trajectory verbatim.

    The freeze lifts for good the first time the policy is told to rewind.
    """

    step: int


@dataclass(frozen=True)
class CountNoise:
    prob: float
    seed: int = 0


Corruption = Optional[Union[FreezePlanAfter, CountNoise]]


@dataclass(frozen=True)
class PolicyConfig:
    corruption: Corruption = None
    waypoint_count: int = 5
    approach_gain: float = 1.0

    def __post_init__(self):
        if not 1 <= self.waypoint_count <= MAX_WAYPOINTS:
            raise ValueError(f"waypoint_count must lie in [1, {MAX_WAYPOINTS}]")
        if not 0 < self.approach_gain <= 1:
            raise ValueError("approach_gain must lie in (0, 1]")


@dataclass
class PolicyState:
    last_record: Optional[ReasoningRecord] = None
    rng: Optional[random.Random] = None
    step: int = 0
    freeze_lifted: bool = False


@dataclass(frozen=True)
class Subtask:
    kind: str  # "grasp" | "place" | "return"
    object_id: Optional[str]
    target: Vec
    radius: float
    semantic: str


def new_policy_state(cfg: PolicyConfig) -> PolicyState:
    seed = cfg.corruption.seed if isinstance(cfg.corruption, CountNoise) else 0
    return PolicyState(rng=random.Random(seed))


def remaining_subtasks(obs: Observation) -> list[Subtask]:
    """Ground-truth subtask list: the held object's placement first, then objects in scene order."""
    recs = {r.id: r for r in obs.receptacles}
    ordered = sorted(obs.objects, key=lambda o: o[0] != obs.held)
    out = []
    for oid, pos, target in ordered:
        if object_placed(obs, oid, pos, target):
            continue
        rec = recs[target]
        if oid != obs.held:
            out.append(Subtask("grasp", oid, pos, obs.grasp_radius, f"grasp the {oid}"))
        out.append(Subtask("place", oid, rec.pos, rec.radius, f"place the {oid} in the {target}"))
    return out


def line_waypoints(start: Vec, goal: Vec, k: int, workspace: Vec) -> tuple[tuple[int, int], ...]:
    pts = []
    for j in range(1, k + 1):
        f = j / k
        p = (start[0] + f * (goal[0] - start[0]), start[1] + f * (goal[1] - start[1]))
        pts.append(discretize_coord(p, workspace))
    return tuple(pts)


def step_toward(pos: Vec, goal: Vec, scale: float, gain: float, gripper_cmd: float) -> tuple[float, ...]:
    """Largest action in [-1, 1]^2 along the line to ``goal`` that does not overshoot it."""
    dx, dy = (goal[0] - pos[0]) / scale, (goal[1] - pos[1]) / scale
    reach = max(abs(dx), abs(dy))
    shrink = gain / reach if reach > gain else 1.0
    return (dx * shrink, dy * shrink, 0.0, 0.0, 0.0, 0.0, gripper_cmd)


def _forward_action(obs: Observation, sub: Subtask, gain: float) -> tuple[float, ...]:
    here = obs.gripper_pos
    if sub.kind == "grasp":
        if dist(here, sub.target) <= obs.grasp_radius:
            # at the object: close if open, otherwise reopen for another try
            cmd = CLOSE_CMD if obs.gripper_state is GripperState.OPEN else OPEN_CMD
            return (0.0,) * 6 + (cmd,)
        return step_toward(here, sub.target, obs.action_scale, gain, OPEN_CMD)
    # place: keep closed while carrying, open once over the receptacle
    if dist(here, sub.target) <= sub.radius:
        return (0.0,) * 6 + (OPEN_CMD,)
    return step_toward(here, sub.target, obs.action_scale, gain, CLOSE_CMD)


def _record(obs: Observation, subs: list[Subtask], k: int, action: tuple[float, ...]) -> ReasoningRecord:
    goal = subs[0].target if subs else obs.gripper_pos
    return ReasoningRecord(
        remaining_count=len(subs),
        subtasks=tuple((s.semantic, discretize_coord(s.target, obs.workspace)) for s in subs),
        trajectory=line_waypoints(obs.gripper_pos, goal, k, obs.workspace),
        action=bin_action(action),
    )


def plan_step(
    obs: Observation, instruction: str, cfg: PolicyConfig, st: PolicyState
) -> tuple[ReasoningRecord, tuple[float, ...], PolicyState]:
    if instruction == REWIND_INSTRUCTION:
        home = obs.initial_gripper_pos
        subs = [Subtask("return", None, home, 0.0, REWIND_INSTRUCTION)]
        action = step_toward(obs.gripper_pos, home, obs.action_scale, cfg.approach_gain, OPEN_CMD)
        record = _record(obs, subs, cfg.waypoint_count, action)
        st.freeze_lifted = True
    else:
        subs = remaining_subtasks(obs)
        if subs:
            action = _forward_action(obs, subs[0], cfg.approach_gain)
        else:
            action = (0.0,) * 6 + (OPEN_CMD,)
        record = _record(obs, subs, cfg.waypoint_count, action)
        record = _corrupt(record, cfg, st)

    st.last_record = record
    st.step += 1
    return record, action, st


def _corrupt(record: ReasoningRecord, cfg: PolicyConfig, st: PolicyState) -> ReasoningRecord:
    c = cfg.corruption
    if isinstance(c, FreezePlanAfter):
        if st.step > c.step and not st.freeze_lifted and st.last_record is not None:
            return ReasoningRecord(
                remaining_count=record.remaining_count,
                subtasks=record.subtasks,
                trajectory=st.last_record.trajectory,
                action=record.action,
                depth_tokens=record.depth_tokens,
            )
    elif isinstance(c, CountNoise):
        if st.rng.random() < c.prob:
            extra = record.subtasks[-1] if record.subtasks else ("recover", record.trajectory[-1])
            return ReasoningRecord(
                remaining_count=record.remaining_count + 1,
                subtasks=record.subtasks + (extra,),
                trajectory=record.trajectory,
                action=record.action,
                depth_tokens=record.depth_tokens,
            )
    return record


def plan_chunk(
    obs: Observation, instruction: str, cfg: PolicyConfig, st: PolicyState, chunk: int
) -> tuple[ReasoningRecord, list[tuple[float, ...]], PolicyState]:
    """One inference producing ``chunk`` actions from an imagined straight-line rollout.

    Motion continues toward the planned goal as if unobstructed; once there the
    terminal gripper command repeats with no motion.
    """
    record, first, st = plan_step(obs, instruction, cfg, st)
    actions = [first]
    pos = obs.gripper_pos
    for _ in range(chunk - 1):
        prev = actions[-1]
        pos = (pos[0] + obs.action_scale * prev[0], pos[1] + obs.action_scale * prev[1])
        imagined = replace(obs, gripper_pos=pos)
        if instruction == REWIND_INSTRUCTION:
            nxt = step_toward(pos, obs.initial_gripper_pos, obs.action_scale, cfg.approach_gain, OPEN_CMD)
        else:
            subs = remaining_subtasks(obs)
            nxt = _forward_action(imagined, subs[0], cfg.approach_gain) if subs else first
        actions.append(nxt)
    return record, actions, st


def ground_truth_count(obs: Observation) -> int:
    return len(remaining_subtasks(obs))

