"""Turn demonstration traces into reasoning-record supervision.

Pipeline per trace: segment at gripper transitions (or take external
annotations), label each frame with the number of subtasks still ahead,
discretize and smooth the gripper track, then emit one training record per
actionable frame.  Rewind records are synthesized from the first segment by
playing it backwards with negated motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .reasoning import MAX_WAYPOINTS, PIXEL_MAX, Pixel, ReasoningRecord, bin_action
from .trace import DemonstrationTrace, Frame

REWIND_INSTRUCTION = "return to initial position"
GRIPPER_OPEN_CMD = -1.0

# Root-median iteration cap; convergence normally takes a handful of passes.
_MAX_MEDIAN_PASSES = 1000


class CurationError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    semantic: Optional[str] = None
    waypoint: Optional[Pixel] = None


@dataclass(frozen=True)
class SmoothingParams:
    outlier_threshold: float = 20.0
    median_window: int = 5

    def __post_init__(self):
        if self.outlier_threshold <= 0:
            raise ValueError("outlier_threshold must be positive")
        if self.median_window < 3 or self.median_window % 2 == 0:
            raise ValueError("median_window must be odd and >= 3")


@dataclass(frozen=True)
class TrainingRecord:
    frame: int
    instruction: str
    remaining_count: int
    subtasks: tuple[tuple[str, Pixel], ...]
    trajectory: tuple[Pixel, ...]
    action: tuple[float, ...]

    def to_reasoning(self, depth_tokens: Sequence[str] = ()) -> ReasoningRecord:
        return ReasoningRecord(
            remaining_count=self.remaining_count,
            subtasks=self.subtasks,
            trajectory=self.trajectory,
            action=bin_action(self.action),
            depth_tokens=tuple(depth_tokens),
        )


def segment_by_gripper(trace: DemonstrationTrace) -> list[Segment]:
    """Split ``trace`` at every gripper open/close transition.

    The boundary frame is the first frame showing the new gripper state and
    closes its segment.  Frames after the last boundary belong to no segment.
    Annotations, when the trace has them, replace gripper detection.
    """
    if trace.annotations:
        return [Segment(a.start, a.end, a.semantic) for a in trace.annotations]
    states = trace.gripper_states
    boundaries = [t for t in range(1, len(states)) if states[t] != states[t - 1]]
    if not boundaries:
        raise CurationError("no subtask boundaries detected")
    segments = []
    start = 0
    for b in boundaries:
        segments.append(Segment(start, b))
        start = b + 1
    return segments


def label_remaining_counts(trace: DemonstrationTrace, segments: Sequence[Segment]) -> list[int]:
    """Per frame, the number of segments not yet completed (end >= t)."""
    ends = [s.end for s in segments]
    return [sum(1 for e in ends if e >= t) for t in range(len(trace.frames))]


def discretize_coord(p: Sequence[float], workspace: Sequence[float]) -> Pixel:
    x, y = p
    w, h = workspace
    return (
        min(PIXEL_MAX, math.floor(x / w * (PIXEL_MAX + 1))),
        min(PIXEL_MAX, math.floor(y / h * (PIXEL_MAX + 1))),
    )


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def find_outliers(track: np.ndarray, threshold: float) -> np.ndarray:
    """Interior indices whose Chebyshev distance to both neighbours exceeds ``threshold``."""
    if len(track) < 3:
        return np.zeros(0, dtype=int)
    mid = track[1:-1]
    d_prev = np.abs(mid - track[:-2]).max(axis=1)
    d_next = np.abs(mid - track[2:]).max(axis=1)
    return np.nonzero((d_prev > threshold) & (d_next > threshold))[0] + 1


def _median_pass(track: np.ndarray, half: int, pinned: np.ndarray) -> np.ndarray:
    padded = np.pad(track, ((half, half), (0, 0)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1, axis=0)
    # windows: (n, 2, window); integer medians since the window is odd
    out = np.median(windows, axis=2).astype(track.dtype)
    out[pinned] = track[pinned]
    return out


def smooth_gripper_track(
    track: Sequence[Pixel], params: SmoothingParams = SmoothingParams(), boundaries: Sequence[int] = ()
) -> list[Pixel]:
    """Outlier interpolation followed by a boundary-preserving median filter.

    Outliers are replaced by the rounded midpoint of their two neighbours
    (detection uses the raw track).  The per-axis median filter is repeated
    until the track stops changing, so the result is a fixed point of the
    filter.  Boundary frames and both endpoints keep their outlier-corrected
    values.
    """
    arr = np.asarray(track, dtype=np.int64).reshape(-1, 2)
    if len(arr) < 2:
        raise CurationError("track needs at least 2 points")
    corrected = arr.copy()
    for i in find_outliers(arr, params.outlier_threshold):
        mid = (arr[i - 1] + arr[i + 1]) / 2.0
        corrected[i] = [_round_half_up(mid[0]), _round_half_up(mid[1])]

    pinned = np.zeros(len(arr), dtype=bool)
    pinned[[0, -1]] = True
    for b in boundaries:
        if 0 <= b < len(arr):
            pinned[b] = True

    half = params.median_window // 2
    current = corrected
    for _ in range(_MAX_MEDIAN_PASSES):
        nxt = _median_pass(current, half, pinned)
        if np.array_equal(nxt, current):
            break
        current = nxt
    return [(int(x), int(y)) for x, y in current]


def waypoint_indices(t_now: int, t_boundary: int) -> list[int]:
    span = t_boundary - t_now
    if span < 0:
        raise CurationError(f"t_now={t_now} is past boundary {t_boundary}")
    if span == 0:
        return [t_boundary]
    k = min(MAX_WAYPOINTS, span)
    # round(t_now + j*span/k) in exact integer arithmetic; never a .5 tie here
    return [t_now + (2 * j * span + k) // (2 * k) for j in range(1, k + 1)]


def sample_waypoints(track: Sequence[Pixel], t_now: int, t_boundary: int) -> list[Pixel]:
    """1 to 5 evenly spaced track points after ``t_now``, ending exactly at ``t_boundary``."""
    if not 0 <= t_now <= t_boundary < len(track):
        raise CurationError(f"need 0 <= t_now <= t_boundary < {len(track)}, got {t_now}, {t_boundary}")
    return [tuple(track[i]) for i in waypoint_indices(t_now, t_boundary)]


def attach_semantics(
    segments: Sequence[Segment],
    trace: DemonstrationTrace,
    template_table: Optional[Mapping[tuple[str, int], str]] = None,
) -> list[Segment]:
    """Fill in segment descriptions: annotation text, then template table, then a generic fallback."""
    n = len(segments)
    out = []
    for i, seg in enumerate(segments):
        if trace.annotations:
            text = trace.annotations[i].semantic
        elif template_table and (trace.instruction, i) in template_table:
            text = template_table[(trace.instruction, i)]
        else:
            text = f"step {i + 1} of {n}: {trace.instruction}"
        out.append(replace(seg, semantic=text))
    return out


def pixel_track(trace: DemonstrationTrace, params: SmoothingParams, segments: Sequence[Segment]) -> list[Pixel]:
    raw = [discretize_coord(f.gripper_pos, trace.workspace) for f in trace.frames]
    return smooth_gripper_track(raw, params, [s.end for s in segments])


def build_training_records(
    trace: DemonstrationTrace, segments: Sequence[Segment], params: SmoothingParams = SmoothingParams()
) -> list[TrainingRecord]:
    if any(s.semantic is None for s in segments):
        raise CurationError("segments need semantics; call attach_semantics first")
    track = pixel_track(trace, params, segments)
    segments = [replace(s, waypoint=track[s.end]) for s in segments]
    counts = label_remaining_counts(trace, segments)

    records = []
    for frame, count in zip(trace.frames, counts):
        if frame.action is None or count == 0:
            continue
        ahead = [s for s in segments if s.end >= frame.t]
        records.append(
            TrainingRecord(
                frame=frame.t,
                instruction=trace.instruction,
                remaining_count=count,
                subtasks=tuple((s.semantic, s.waypoint) for s in ahead),
                trajectory=tuple(sample_waypoints(track, frame.t, ahead[0].end)),
                action=frame.action,
            )
        )
    return records


def reverse_and_negate(frames: Sequence[Frame]) -> list[Frame]:
    """Play ``frames`` backwards.

    Each reversed frame carries the action undoing the forward transition into
    it: translation and rotation negated, gripper commanded open.  The last
    reversed frame (the original first frame) has no action.
    """
    rev = list(reversed(frames))
    out = []
    for j, frame in enumerate(rev):
        action = None
        if j < len(rev) - 1:
            forward = rev[j + 1].action  # action that moved rev[j+1] -> rev[j]
            if forward is None:
                raise CurationError(f"frame t={rev[j + 1].t} has no action to reverse")
            action = tuple(-v for v in forward[:6]) + (GRIPPER_OPEN_CMD,)
        out.append(replace(frame, action=action))
    return out


def build_rewind_records(
    trace: DemonstrationTrace, segments: Sequence[Segment], params: SmoothingParams = SmoothingParams()
) -> list[TrainingRecord]:
    """Records teaching a retreat from the first subtask waypoint back to the start pose."""
    if not segments:
        raise CurationError("rewind records need at least one segment")
    track = pixel_track(trace, params, segments)
    end = segments[0].end
    reversed_frames = reverse_and_negate(trace.frames[: end + 1])
    reversed_track = track[end::-1]
    home = discretize_coord(trace.frames[0].gripper_pos, trace.workspace)
    last = len(reversed_frames) - 1

    records = []
    for j, frame in enumerate(reversed_frames[:-1]):
        records.append(
            TrainingRecord(
                frame=frame.t,
                instruction=REWIND_INSTRUCTION,
                remaining_count=1,
                subtasks=((REWIND_INSTRUCTION, home),),
                trajectory=tuple(sample_waypoints(reversed_track, j, last)),
                action=frame.action,
            )
        )
    return records


def curate(
    trace: DemonstrationTrace,
    params: SmoothingParams = SmoothingParams(),
    template_table: Optional[Mapping[tuple[str, int], str]] = None,
    rewind: bool = False,
) -> list[TrainingRecord]:
    """Full pipeline for one trace; rewind records follow the forward ones when requested."""
    segments = attach_semantics(segment_by_gripper(trace), trace, template_table)
    records = build_training_records(trace, segments, params)
    if rewind:
        records += build_rewind_records(trace, segments, params)
    return records

