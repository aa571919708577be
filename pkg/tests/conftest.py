from __future__ import annotations

import pytest
from hypothesis import strategies as st

from spr.trace import DemonstrationTrace, Frame, GripperState

O, C = GripperState.OPEN, GripperState.CLOSED


def make_trace(states, positions=None, actions=None, instruction="pick up the bowl", workspace=(1.0, 1.0), annotations=None):
    n = len(states)
    if positions is None:
        positions = [(round(0.1 + 0.05 * t, 6), 0.5) for t in range(n)]
    if actions is None:
        actions = [(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 if s is C else -1.0) for s in states]
    frames = [
        Frame(t, tuple(positions[t]), states[t], tuple(actions[t]) if t < n - 1 else None) for t in range(n)
    ]
    return DemonstrationTrace(instruction, workspace, tuple(frames), annotations)


@pytest.fixture
def golden_trace():
    """8 frames, gripper O,O,O,C,C,C,O,O."""
    return make_trace([O, O, O, C, C, C, O, O])


def six_digit(lo, hi):
    """Reals already on the 6-fractional-digit grid, so they survive a write/load cycle."""
    return st.integers(int(lo * 1e6), int(hi * 1e6)).map(lambda k: k / 1e6)


@st.composite
def traces(draw, min_frames=2, max_frames=30):
    n = draw(st.integers(min_frames, max_frames))
    w = draw(six_digit(0.5, 3.0))
    h = draw(six_digit(0.5, 3.0))
    states = draw(st.lists(st.sampled_from([O, C]), min_size=n, max_size=n))
    positions = [(draw(six_digit(0, w * 0.999)), draw(six_digit(0, h * 0.999))) for _ in range(n)]
    actions = [tuple(draw(six_digit(-1, 1)) for _ in range(7)) for _ in range(n)]
    instruction = draw(st.text(st.characters(min_codepoint=32, max_codepoint=126), max_size=40))
    return make_trace(states, positions, actions, instruction=instruction, workspace=(w, h))


def pytest_terminal_summary(terminalreporter):
    import sys

    oracles = sys.modules.get("oracles")
    if oracles is None or not oracles.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(oracles.ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")
