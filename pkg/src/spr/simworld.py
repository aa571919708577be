"""Deterministic top-down tabletop for pick-and-place episodes.

The gripper moves in 2D; z and rotation components of an action are accepted
and ignored.  Failures come from three places: grasp slips (the only use of
the episode RNG), trap regions that cancel motion in one direction, and
scripted events that move objects or toggle traps at fixed steps.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from .trace import GripperState

log = logging.getLogger(__name__)

Vec = tuple[float, float]


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SimParams:
    """Physical knobs.  ``None`` lengths resolve against the workspace width.

    With ``slip_until_retreat`` a slipped object stays ungraspable until the
    gripper backs off more than ``slip_clear_distance`` from it.
    """

    action_scale: Optional[float] = None  # 0.05 * width
    grasp_radius: Optional[float] = None  # 0.03 * width
    slip_prob: float = 0.0
    slip_until_retreat: bool = False
    slip_clear_distance: Optional[float] = None  # 2.5 * action_scale

    def resolved(self, width: float) -> "SimParams":
        scale = self.action_scale if self.action_scale is not None else 0.05 * width
        return SimParams(
            action_scale=scale,
            grasp_radius=self.grasp_radius if self.grasp_radius is not None else 0.03 * width,
            slip_prob=self.slip_prob,
            slip_until_retreat=self.slip_until_retreat,
            slip_clear_distance=self.slip_clear_distance if self.slip_clear_distance is not None else 2.5 * scale,
        )


@dataclass(frozen=True)
class TrapRegion:
    """Disc where motion with a positive component along ``blocked_direction`` is cancelled.

    ``clear_on_exit`` deactivates the trap once the gripper leaves it from inside.
    """

    center: Vec
    radius: float
    blocked_direction: Vec
    active: bool = True
    clear_on_exit: bool = False


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    pos: Vec
    target: str


@dataclass(frozen=True)
class Receptacle:
    id: str
    pos: Vec
    radius: float


@dataclass(frozen=True)
class TeleportObject:
    object_id: str
    pos: Vec


@dataclass(frozen=True)
class ActivateTrap:
    index: int


@dataclass(frozen=True)
class DeactivateTrap:
    index: int


Event = Union[TeleportObject, ActivateTrap, DeactivateTrap]


@dataclass(frozen=True)
class Scenario:
    name: str
    instruction: str
    workspace: Vec
    gripper_start: Vec
    objects: tuple[ObjectSpec, ...]
    receptacles: tuple[Receptacle, ...]
    traps: tuple[TrapRegion, ...] = ()
    events: tuple[tuple[int, Event], ...] = ()
    params: SimParams = SimParams()
    policy: dict = field(default_factory=dict, hash=False)

    def with_params(self, **overrides) -> "Scenario":
        return replace(self, params=replace(self.params, **overrides))


@dataclass
class ObjectState:
    id: str
    pos: Vec
    target: str


@dataclass
class WorldState:
    workspace: Vec
    gripper_pos: Vec
    gripper_state: GripperState
    held: Optional[str]
    objects: list[ObjectState]
    receptacles: tuple[Receptacle, ...]
    traps: list[TrapRegion]
    initial_gripper_pos: Vec
    params: SimParams
    rng: random.Random
    events: tuple[tuple[int, Event], ...] = ()
    slip_locked: set = field(default_factory=set)
    step: int = 0

    def object(self, object_id: str) -> ObjectState:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def receptacle(self, rec_id: str) -> Receptacle:
        for rec in self.receptacles:
            if rec.id == rec_id:
                return rec
        raise KeyError(rec_id)


@dataclass(frozen=True)
class Observation:
    workspace: Vec
    gripper_pos: Vec
    gripper_state: GripperState
    held: Optional[str]
    objects: tuple[tuple[str, Vec, str], ...]
    receptacles: tuple[Receptacle, ...]
    initial_gripper_pos: Vec
    step: int
    grasp_radius: float
    action_scale: float


def dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _inside(p: Sequence[float], workspace: Vec) -> bool:
    return 0 <= p[0] < workspace[0] and 0 <= p[1] < workspace[1]


def _clamp(p: Sequence[float], workspace: Vec) -> Vec:
    return (
        min(max(p[0], 0.0), math.nextafter(workspace[0], 0.0)),
        min(max(p[1], 0.0), math.nextafter(workspace[1], 0.0)),
    )


def validate_scenario(sc: Scenario) -> None:
    w, h = sc.workspace
    if not (w > 0 and h > 0):
        raise ScenarioError("workspace extent must be positive")
    if not _inside(sc.gripper_start, sc.workspace):
        raise ScenarioError(f"gripper start {sc.gripper_start} outside workspace")
    rec_ids = [r.id for r in sc.receptacles]
    if len(set(rec_ids)) != len(rec_ids):
        raise ScenarioError("duplicate receptacle id")
    obj_ids = [o.id for o in sc.objects]
    if len(set(obj_ids)) != len(obj_ids):
        raise ScenarioError("duplicate object id")
    for r in sc.receptacles:
        if r.radius <= 0 or not _inside(r.pos, sc.workspace):
            raise ScenarioError(f"receptacle {r.id!r} must lie inside the workspace with positive radius")
    for o in sc.objects:
        if not _inside(o.pos, sc.workspace):
            raise ScenarioError(f"object {o.id!r} at {o.pos} outside workspace")
        if o.target not in rec_ids:
            raise ScenarioError(f"object {o.id!r} targets unknown receptacle {o.target!r}")
    for i, trap in enumerate(sc.traps):
        if trap.radius <= 0:
            raise ScenarioError(f"trap {i} radius must be positive")
        if abs(math.hypot(*trap.blocked_direction) - 1.0) > 1e-9:
            raise ScenarioError(f"trap {i} blocked_direction must be a unit vector")
        for r in sc.receptacles:
            if dist(r.pos, trap.center) < r.radius + trap.radius:
                raise ScenarioError(f"trap {i} overlaps receptacle {r.id!r}")
    p = sc.params
    for name in ("action_scale", "grasp_radius", "slip_clear_distance"):
        v = getattr(p, name)
        if v is not None and v <= 0:
            raise ScenarioError(f"{name} must be positive")
    if not 0.0 <= p.slip_prob <= 1.0:
        raise ScenarioError("slip_prob must lie in [0, 1]")
    last = -1
    for step, event in sc.events:
        if step < last:
            raise ScenarioError("event steps must be non-decreasing")
        last = step
        if isinstance(event, TeleportObject):
            if event.object_id not in obj_ids:
                raise ScenarioError(f"teleport of unknown object {event.object_id!r}")
            if not _inside(event.pos, sc.workspace):
                raise ScenarioError(f"teleport target {event.pos} outside workspace")
        elif not 0 <= event.index < len(sc.traps):
            raise ScenarioError(f"event references unknown trap {event.index}")


def init_world(scenario: Scenario, seed: int) -> WorldState:
    validate_scenario(scenario)
    return WorldState(
        workspace=tuple(scenario.workspace),
        gripper_pos=tuple(scenario.gripper_start),
        gripper_state=GripperState.OPEN,
        held=None,
        objects=[ObjectState(o.id, tuple(o.pos), o.target) for o in scenario.objects],
        receptacles=tuple(scenario.receptacles),
        traps=list(scenario.traps),
        initial_gripper_pos=tuple(scenario.gripper_start),
        params=scenario.params.resolved(scenario.workspace[0]),
        rng=random.Random(seed),
        events=tuple(scenario.events),
    )


def _trap_filter(world: WorldState, dx: float, dy: float) -> Vec:
    for trap in world.traps:
        if trap.active and dist(world.gripper_pos, trap.center) < trap.radius:
            ux, uy = trap.blocked_direction
            along = dx * ux + dy * uy
            if along > 0:
                dx, dy = dx - along * ux, dy - along * uy
    return dx, dy


def _try_grasp(world: WorldState) -> None:
    p = world.params
    candidates = [
        (dist(o.pos, world.gripper_pos), o.id)
        for o in world.objects
        if dist(o.pos, world.gripper_pos) <= p.grasp_radius
    ]
    world.gripper_state = GripperState.CLOSED
    if not candidates:
        return
    _, object_id = min(candidates)
    if object_id in world.slip_locked:
        return
    if world.rng.random() < p.slip_prob:
        if p.slip_until_retreat:
            world.slip_locked.add(object_id)
        return
    world.held = object_id


def _apply_event(world: WorldState, event: Event) -> None:
    if isinstance(event, TeleportObject):
        obj = world.object(event.object_id)
        if world.held == obj.id:
            world.held = None
        obj.pos = _clamp(event.pos, world.workspace)
    elif isinstance(event, ActivateTrap):
        world.traps[event.index] = replace(world.traps[event.index], active=True)
    else:
        world.traps[event.index] = replace(world.traps[event.index], active=False)


def apply_action(world: WorldState, action: Sequence[float]) -> WorldState:
    """Advance one step in place and return ``world``."""
    a = tuple(action)
    if len(a) != 7:
        raise ValueError(f"expected 7 action components, got {len(a)}")
    if any(a[2:6]):
        log.debug("step %d: ignoring z/rotation components %s", world.step, a[2:6])
    scale = world.params.action_scale
    dx, dy = _trap_filter(world, scale * a[0], scale * a[1])

    before = world.gripper_pos
    world.gripper_pos = _clamp((before[0] + dx, before[1] + dy), world.workspace)
    for i, trap in enumerate(world.traps):
        if (
            trap.active
            and trap.clear_on_exit
            and dist(before, trap.center) < trap.radius
            and dist(world.gripper_pos, trap.center) >= trap.radius
        ):
            world.traps[i] = replace(trap, active=False)
    if world.held is not None:
        world.object(world.held).pos = world.gripper_pos
    if world.slip_locked:
        world.slip_locked = {
            oid
            for oid in world.slip_locked
            if dist(world.object(oid).pos, world.gripper_pos) <= world.params.slip_clear_distance
        }

    if a[6] >= 0:
        if world.gripper_state is GripperState.OPEN:
            _try_grasp(world)
    else:
        world.held = None
        world.gripper_state = GripperState.OPEN

    for step, event in world.events:
        if step == world.step:
            _apply_event(world, event)
    world.step += 1
    return world


def observe(world: WorldState) -> Observation:
    return Observation(
        workspace=world.workspace,
        gripper_pos=world.gripper_pos,
        gripper_state=world.gripper_state,
        held=world.held,
        objects=tuple((o.id, o.pos, o.target) for o in world.objects),
        receptacles=world.receptacles,
        initial_gripper_pos=world.initial_gripper_pos,
        step=world.step,
        grasp_radius=world.params.grasp_radius,
        action_scale=world.params.action_scale,
    )


def object_placed(obs_or_world, object_id: str, pos: Vec, target: str) -> bool:
    rec = next(r for r in obs_or_world.receptacles if r.id == target)
    return obs_or_world.held != object_id and dist(pos, rec.pos) <= rec.radius


def check_success(world: WorldState) -> bool:
    return all(object_placed(world, o.id, o.pos, o.target) for o in world.objects)


def state_digest(world: WorldState) -> str:
    """SHA-256 over a canonical dump of the full world, RNG state included."""
    payload = {
        "workspace": world.workspace,
        "gripper": [world.gripper_pos, world.gripper_state.value, world.held],
        "objects": [[o.id, o.pos, o.target] for o in world.objects],
        "receptacles": [asdict(r) for r in world.receptacles],
        "traps": [asdict(t) for t in world.traps],
        "initial": world.initial_gripper_pos,
        "params": asdict(world.params),
        "slip_locked": sorted(world.slip_locked),
        "step": world.step,
        "rng": repr(world.rng.getstate()),
    }
    text = json.dumps(payload, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()


# -- scenario files -----------------------------------------------------------


def _vec(v, what: str) -> Vec:
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ScenarioError(f"{what} must be a 2-element list")
    return (float(v[0]), float(v[1]))


def _event_from_dict(d: dict) -> tuple[int, Event]:
    kind = d.get("type")
    if kind == "teleport":
        return int(d["step"]), TeleportObject(str(d["object"]), _vec(d["pos"], "teleport pos"))
    if kind == "activate_trap":
        return int(d["step"]), ActivateTrap(int(d["trap"]))
    if kind == "deactivate_trap":
        return int(d["step"]), DeactivateTrap(int(d["trap"]))
    raise ScenarioError(f"unknown event type {kind!r}")


def scenario_from_dict(d: dict) -> Scenario:
    try:
        params = SimParams(**d.get("params", {}))
        sc = Scenario(
            name=str(d.get("name", "scenario")),
            instruction=str(d.get("instruction", "put the objects in their receptacles")),
            workspace=_vec(d.get("workspace", [1.0, 1.0]), "workspace"),
            gripper_start=_vec(d["gripper"], "gripper"),
            objects=tuple(ObjectSpec(str(o["id"]), _vec(o["pos"], "object pos"), str(o["target"])) for o in d["objects"]),
            receptacles=tuple(
                Receptacle(str(r["id"]), _vec(r["pos"], "receptacle pos"), float(r["radius"])) for r in d["receptacles"]
            ),
            traps=tuple(
                TrapRegion(
                    center=_vec(t["center"], "trap center"),
                    radius=float(t["radius"]),
                    blocked_direction=_vec(t["blocked_direction"], "blocked_direction"),
                    active=bool(t.get("active", True)),
                    clear_on_exit=bool(t.get("clear_on_exit", False)),
                )
                for t in d.get("traps", [])
            ),
            events=tuple(_event_from_dict(e) for e in d.get("events", [])),
            params=params,
            policy=dict(d.get("policy", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc
    validate_scenario(sc)
    return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data)
