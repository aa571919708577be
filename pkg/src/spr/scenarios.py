"""Built-in scenarios used by the tests, the acceptance suite and the CLI."""

from __future__ import annotations

from .simworld import ObjectSpec, Receptacle, Scenario, SimParams, TrapRegion


def single_object(**params) -> Scenario:
    """One cube, one bowl; the gripper starts on the far left."""
    return Scenario(
        name="single",
        instruction="put the cube in the bowl",
        workspace=(1.0, 1.0),
        gripper_start=(0.1, 0.5),
        objects=(ObjectSpec("cube", (0.6, 0.5), "bowl"),),
        receptacles=(Receptacle("bowl", (0.6, 0.85), 0.06),),
        params=SimParams(**params),
    )


def slip_recovery(slip_prob: float = 0.3) -> Scenario:
    """Single object whose failed grasps keep failing until the gripper backs off."""
    sc = single_object(slip_prob=slip_prob, slip_until_retreat=True)
    return Scenario(**{**sc.__dict__, "name": "slip"})


def trap_freeze(freeze_after: int = 5) -> Scenario:
    """A one-way barrier on the approach path plus a plan freeze after ``freeze_after`` steps.

    The barrier stops rightward motion at x ~= 0.4 and clears once the gripper
    backs out of it.
    """
    sc = single_object()
    return Scenario(
        **{
            **sc.__dict__,
            "name": "trap",
            "traps": (TrapRegion(center=(0.45, 0.5), radius=0.08, blocked_direction=(1.0, 0.0), clear_on_exit=True),),
            "policy": {"corruption": {"type": "freeze_plan_after", "step": freeze_after}},
        }
    )


def two_objects(**params) -> Scenario:
    return Scenario(
        name="two",
        instruction="put the cube in the bowl and the ball in the box",
        workspace=(1.0, 1.0),
        gripper_start=(0.5, 0.1),
        objects=(ObjectSpec("cube", (0.2, 0.4), "bowl"), ObjectSpec("ball", (0.8, 0.4), "box")),
        receptacles=(Receptacle("bowl", (0.2, 0.85), 0.06), Receptacle("box", (0.8, 0.85), 0.06)),
        params=SimParams(**params),
    )


BUILTIN = {
    "single": single_object,
    "slip": slip_recovery,
    "trap": trap_freeze,
    "two": two_objects,
}
