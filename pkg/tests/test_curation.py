from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import C, O, make_trace, traces
from spr.curation import (
    REWIND_INSTRUCTION,
    CurationError,
    SmoothingParams,
    attach_semantics,
    build_rewind_records,
    build_training_records,
    curate,
    discretize_coord,
    label_remaining_counts,
    reverse_and_negate,
    sample_waypoints,
    segment_by_gripper,
    smooth_gripper_track,
    waypoint_indices,
)
from spr.reasoning import parse_record, serialize_record
from spr.trace import Annotation


# --- segmentation / counts -------------------------------------------------

def test_golden_trace(golden_trace):
    segs = segment_by_gripper(golden_trace)
    assert [s.end for s in segs] == [3, 6]
    assert [(s.start, s.end) for s in segs] == [(0, 3), (4, 6)]
    assert label_remaining_counts(golden_trace, segs) == [2, 2, 2, 2, 1, 1, 1, 0]
    records = curate(golden_trace)
    assert len(records) == 7
    assert [r.frame for r in records] == list(range(7))
    assert [r.remaining_count for r in records] == [2, 2, 2, 2, 1, 1, 1]


def test_golden_record_contents(golden_trace):
    records = curate(golden_trace)
    # x = 0.1 + 0.05 t on a unit workspace -> floor(x * 256)
    assert [discretize_coord(f.gripper_pos, (1, 1))[0] for f in golden_trace.frames] == [25, 38, 51, 64, 76, 89, 102, 115]
    first = records[0]
    assert first.subtasks == (
        ("step 1 of 2: pick up the bowl", (64, 128)),
        ("step 2 of 2: pick up the bowl", (102, 128)),
    )
    # span 3 -> 3 waypoints at frames 1,2,3
    assert first.trajectory == ((38, 128), (51, 128), (64, 128))
    # at the boundary frame itself the trajectory is the single waypoint
    assert records[3].trajectory == ((64, 128),)
    assert records[4].trajectory == ((89, 128), (102, 128))
    for r in records:
        assert parse_record(serialize_record(r.to_reasoning())) == r.to_reasoning()


def test_no_transition_is_an_error():
    with pytest.raises(CurationError, match="no subtask boundaries detected"):
        segment_by_gripper(make_trace([O] * 5))


def test_annotations_override_gripper():
    anns = (Annotation(0, 1, "reach"), Annotation(2, 4, "push"))
    trace = make_trace([O] * 5, annotations=anns)
    segs = attach_semantics(segment_by_gripper(trace), trace)
    assert [(s.start, s.end, s.semantic) for s in segs] == [(0, 1, "reach"), (2, 4, "push")]


def test_template_table_used():
    trace = make_trace([O, O, C, C])
    table = {("pick up the bowl", 0): "reach the bowl"}
    segs = attach_semantics(segment_by_gripper(trace), trace, table)
    assert segs[0].semantic == "reach the bowl"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([O, C]), min_size=2, max_size=40))
def test_counts_non_increasing_and_step_at_boundaries(states):
    trace = make_trace(states, positions=[(0.5, 0.5)] * len(states))
    if all(s == states[0] for s in states):
        return
    segs = segment_by_gripper(trace)
    counts = label_remaining_counts(trace, segs)
    ends = {s.end for s in segs}
    assert counts[0] == len(segs)
    for t in range(1, len(counts)):
        assert counts[t] <= counts[t - 1]
        # drops by exactly one right after each boundary, nowhere else
        assert counts[t - 1] - counts[t] == (1 if t - 1 in ends else 0)


# --- smoothing -------------------------------------------------------------

def _col(xs):
    return [(x, 0) for x in xs]


def test_single_spike_removed():
    out = smooth_gripper_track(_col([10, 10, 50, 10, 10]))
    assert [p[0] for p in out] == [10] * 5


def test_window_three_median():
    out = smooth_gripper_track(_col([1, 9, 2]), SmoothingParams(outlier_threshold=100, median_window=3))
    assert [p[0] for p in out] == [1, 2, 2]


def test_window_three_interior():
    out = smooth_gripper_track(_col([1, 9, 2, 2]), SmoothingParams(outlier_threshold=100, median_window=3))
    assert [p[0] for p in out] == [1, 2, 2, 2]


def test_outlier_midpoint_rounds_half_up():
    out = smooth_gripper_track(_col([10, 100, 11, 11, 11]), SmoothingParams(outlier_threshold=20, median_window=3))
    # 100 -> round_half_up(10.5) = 11
    assert out[1][0] == 11


def test_boundary_pinned():
    xs = [0, 0, 0, 30, 0, 0, 0]
    params = SmoothingParams(outlier_threshold=100, median_window=3)
    assert smooth_gripper_track(_col(xs), params, boundaries=[3])[3][0] == 30
    assert smooth_gripper_track(_col(xs), params)[3][0] == 0


def _oracle_smooth(xs, threshold, window, pinned):
    """Plain-list reimplementation, 1-D."""
    n = len(xs)
    ys = list(xs)
    for i in range(1, n - 1):
        if abs(xs[i] - xs[i - 1]) > threshold and abs(xs[i] - xs[i + 1]) > threshold:
            s = xs[i - 1] + xs[i + 1]
            ys[i] = (s + 1) // 2  # half-up on integers
    half = window // 2
    while True:
        nxt = []
        for i in range(n):
            if i in pinned:
                nxt.append(ys[i])
                continue
            win = [ys[min(max(j, 0), n - 1)] for j in range(i - half, i + half + 1)]
            nxt.append(sorted(win)[half])
        if nxt == ys:
            return ys
        ys = nxt


tracks = st.lists(st.integers(0, 255), min_size=2, max_size=40)


@settings(max_examples=300, deadline=None)
@given(tracks, st.sampled_from([3, 5, 7]), st.integers(1, 60), st.data())
def test_smoothing_matches_oracle(xs, window, threshold, data):
    bounds = data.draw(st.sets(st.integers(0, len(xs) - 1), max_size=4))
    params = SmoothingParams(outlier_threshold=threshold, median_window=window)
    got = [p[0] for p in smooth_gripper_track(_col(xs), params, sorted(bounds))]
    assert got == _oracle_smooth(xs, threshold, window, bounds | {0, len(xs) - 1})


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 255)), min_size=2, max_size=40), st.sampled_from([3, 5]))
def test_smoothing_idempotent_and_endpoints_pinned(track, window):
    params = SmoothingParams(outlier_threshold=1e9, median_window=window)
    once = smooth_gripper_track(track, params)
    assert smooth_gripper_track(once, params) == once
    assert once[0] == tuple(track[0]) and once[-1] == tuple(track[-1])


def test_smoothing_params_validated():
    with pytest.raises(ValueError):
        SmoothingParams(median_window=4)
    with pytest.raises(ValueError):
        SmoothingParams(outlier_threshold=0)


# --- waypoints -------------------------------------------------------------

def test_waypoint_examples():
    assert waypoint_indices(0, 10) == [2, 4, 6, 8, 10]
    assert waypoint_indices(7, 10) == [8, 9, 10]
    assert waypoint_indices(4, 4) == [4]


@given(st.integers(0, 200), st.integers(0, 200))
def test_waypoint_indices_properties(t, span):
    idx = waypoint_indices(t, t + span)
    assert 1 <= len(idx) <= 5
    assert len(idx) == (1 if span == 0 else min(5, span))
    assert idx[-1] == t + span
    assert all(t < i <= t + span for i in idx) or span == 0
    assert idx == sorted(set(idx))


def test_sample_waypoints_bounds():
    track = [(i, i) for i in range(5)]
    assert sample_waypoints(track, 1, 4) == [(2, 2), (3, 3), (4, 4)]
    with pytest.raises(CurationError):
        sample_waypoints(track, 3, 2)
    with pytest.raises(CurationError):
        sample_waypoints(track, 0, 5)


# --- rewind data -----------------------------------------------------------

def test_reverse_and_negate_small():
    trace = make_trace([O, O, C], actions=[(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, -1.0), (0.7, 0, 0, 0, 0, 0, 1.0), None])
    rev = reverse_and_negate(trace.frames)
    assert [f.t for f in rev] == [2, 1, 0]
    assert rev[0].action == (-0.7, -0.0, -0.0, -0.0, -0.0, -0.0, -1.0)
    assert rev[1].action == (-0.1, -0.2, -0.3, -0.4, -0.5, -0.6, -1.0)
    assert rev[2].action is None


@settings(max_examples=100, deadline=None)
@given(traces(min_frames=3))
def test_rewind_involution(trace):
    if len(set(trace.gripper_states)) < 2:
        return
    first = segment_by_gripper(trace)[0]
    forward = trace.frames[: first.end + 1]
    twice = reverse_and_negate(reverse_and_negate(forward))
    assert [f.t for f in twice] == [f.t for f in forward]
    assert [f.gripper_pos for f in twice] == [f.gripper_pos for f in forward]
    for a, b in zip(twice[:-1], forward[:-1]):
        assert a.action[:6] == b.action[:6]
    recs = build_rewind_records(trace, attach_semantics(segment_by_gripper(trace), trace))
    assert len(recs) == first.end
    assert all(r.instruction == REWIND_INSTRUCTION for r in recs)
    assert all(r.action[6] == -1.0 for r in recs)


def test_rewind_records_end_at_home(golden_trace):
    recs = curate(golden_trace, rewind=True)
    rewind = [r for r in recs if r.instruction == REWIND_INSTRUCTION]
    assert [r.frame for r in rewind] == [3, 2, 1]
    home = discretize_coord(golden_trace.frames[0].gripper_pos, golden_trace.workspace)
    for r in rewind:
        assert r.remaining_count == 1
        assert r.subtasks == ((REWIND_INSTRUCTION, home),)
        assert r.trajectory[-1] == home
    assert rewind[0].trajectory == ((51, 128), (38, 128), (25, 128))


def test_build_requires_semantics(golden_trace):
    segs = segment_by_gripper(golden_trace)
    with pytest.raises(CurationError):
        build_training_records(golden_trace, segs)


def test_records_skip_frames_without_action():
    trace = make_trace([O, C, C])
    recs = curate(trace)
    assert [r.frame for r in recs] == [0, 1]
