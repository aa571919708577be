"""Demonstration traces and their JSONL file format.

A trace file has one header line followed by one line per frame::

    {"instruction": "pick up the bowl", "workspace": [1.0, 1.0]}
    {"t": 0, "pos": [0.100000, 0.500000], "grip": "O", "action": [0.5, ...]}
    ...
    {"t": 7, "pos": [0.700000, 0.850000], "grip": "O", "action": null}

The header may carry ``"annotations"``, a list of ``{"start", "end",
"semantic"}`` segments, for tasks where gripper transitions do not mark
subtask completion.  Reals are written with exactly six fractional digits.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

ACTION_DIM = 7
PRECISION = 6


class TraceError(ValueError):
    """Raised when a trace file cannot be read or violates an invariant."""


class GripperState(enum.Enum):
    OPEN = "O"
    CLOSED = "C"


@dataclass(frozen=True)
class Annotation:
    start: int
    end: int
    semantic: str


@dataclass(frozen=True)
class Frame:
    t: int
    gripper_pos: tuple[float, float]
    gripper_state: GripperState
    action: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class DemonstrationTrace:
    instruction: str
    workspace: tuple[float, float]
    frames: tuple[Frame, ...]
    annotations: Optional[tuple[Annotation, ...]] = None

    def __post_init__(self):
        # accept lists from callers; equality and hashing need tuples
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.annotations is not None:
            object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def gripper_states(self) -> list[GripperState]:
        return [f.gripper_state for f in self.frames]


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    t: Optional[int] = None

    def __str__(self) -> str:
        where = f"frame t={self.t}: " if self.t is not None else ""
        return f"{where}{self.field}: {self.message}"


def _finite(values: Sequence[float]) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def validate_trace(trace: DemonstrationTrace) -> list[Violation]:
    """Return every invariant violation in ``trace``; an empty list means valid."""
    out: list[Violation] = []
    w, h = trace.workspace
    if not (_finite((w, h)) and w > 0 and h > 0):
        out.append(Violation("workspace", f"extent must be positive and finite, got {trace.workspace}"))
        w = h = math.inf
    if len(trace.frames) < 2:
        out.append(Violation("frames", "fewer than 2 frames"))

    last = len(trace.frames) - 1
    for i, frame in enumerate(trace.frames):
        if frame.t != i:
            out.append(Violation("t", f"expected contiguous index {i}", frame.t))
        x, y = frame.gripper_pos
        if not _finite((x, y)):
            out.append(Violation("pos", "non-finite coordinate", frame.t))
        elif not (0 <= x < w and 0 <= y < h):
            out.append(Violation("pos", f"pose outside workspace: ({x}, {y})", frame.t))
        if not isinstance(frame.gripper_state, GripperState):
            out.append(Violation("grip", f"unknown gripper state {frame.gripper_state!r}", frame.t))
        if frame.action is None:
            if i != last:
                out.append(Violation("action", "missing action on non-final frame", frame.t))
            continue
        if len(frame.action) != ACTION_DIM:
            out.append(Violation("action", f"expected {ACTION_DIM} components, got {len(frame.action)}", frame.t))
            continue
        for k, v in enumerate(frame.action):
            if not _finite((v,)) or not -1.0 <= v <= 1.0:
                out.append(Violation(f"action[{k}]", f"component {v} outside [-1, 1]", frame.t))

    if trace.annotations is not None:
        out.extend(_validate_annotations(trace.annotations, len(trace.frames)))
    return out


def _validate_annotations(annotations: Sequence[Annotation], n_frames: int) -> list[Violation]:
    out = []
    if not annotations:
        out.append(Violation("annotations", "annotation list present but empty"))
    prev_end = None
    for k, ann in enumerate(annotations):
        if not 0 <= ann.start <= ann.end < n_frames:
            out.append(Violation(f"annotations[{k}]", f"span [{ann.start}, {ann.end}] invalid for {n_frames} frames"))
        if prev_end is not None and ann.start != prev_end + 1:
            out.append(Violation(f"annotations[{k}]", "segments must be contiguous and non-overlapping"))
        if not ann.semantic.strip() or "\n" in ann.semantic or ";" in ann.semantic:
            out.append(Violation(f"annotations[{k}]", "semantic must be non-empty, without newline or ';'"))
        prev_end = ann.end
    return out


def _fmt(v: float) -> str:
    return f"{v:.{PRECISION}f}"


def quantize(v: float) -> float:
    """The value a real takes after a write/load cycle."""
    return float(_fmt(v))


def _frame_line(frame: Frame) -> str:
    x, y = frame.gripper_pos
    action = "null" if frame.action is None else "[" + ", ".join(_fmt(v) for v in frame.action) + "]"
    return (
        f'{{"t": {frame.t}, "pos": [{_fmt(x)}, {_fmt(y)}], '
        f'"grip": "{frame.gripper_state.value}", "action": {action}}}'
    )


def _quantized(trace: DemonstrationTrace) -> DemonstrationTrace:
    frames = tuple(
        Frame(
            t=f.t,
            gripper_pos=(quantize(f.gripper_pos[0]), quantize(f.gripper_pos[1])),
            gripper_state=f.gripper_state,
            action=None if f.action is None else tuple(quantize(v) for v in f.action),
        )
        for f in trace.frames
    )
    workspace = (quantize(trace.workspace[0]), quantize(trace.workspace[1]))
    return DemonstrationTrace(trace.instruction, workspace, frames, trace.annotations)


def write_trace(trace: DemonstrationTrace, path: str | Path) -> None:
    """Write ``trace`` as JSONL, rounding every real to six fractional digits.

    Refuses traces that are invalid before or after rounding.
    """
    stored = _quantized(trace)
    problems = validate_trace(trace) or validate_trace(stored)
    if problems:
        raise TraceError("refusing to write invalid trace: " + "; ".join(map(str, problems)))
    header: dict = {"instruction": trace.instruction}
    header_text = json.dumps(header)[:-1]
    header_text += f', "workspace": [{_fmt(stored.workspace[0])}, {_fmt(stored.workspace[1])}]'
    if trace.annotations is not None:
        anns = [{"start": a.start, "end": a.end, "semantic": a.semantic} for a in trace.annotations]
        header_text += ', "annotations": ' + json.dumps(anns)
    header_text += "}"
    lines = [header_text] + [_frame_line(f) for f in stored.frames]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(obj, lineno: int) -> tuple[str, tuple[float, float], Optional[tuple[Annotation, ...]]]:
    if not isinstance(obj, dict) or "instruction" not in obj or "workspace" not in obj:
        raise TraceError(f"line {lineno}: header must hold 'instruction' and 'workspace'")
    instruction = obj["instruction"]
    ws = obj["workspace"]
    if not isinstance(instruction, str):
        raise TraceError(f"line {lineno}: instruction must be a string")
    if not (isinstance(ws, list) and len(ws) == 2 and _finite(ws)):
        raise TraceError(f"line {lineno}: workspace must be [width, height]")
    annotations = None
    if obj.get("annotations") is not None:
        try:
            annotations = tuple(
                Annotation(int(a["start"]), int(a["end"]), str(a["semantic"])) for a in obj["annotations"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"line {lineno}: malformed annotations ({exc})") from exc
    return instruction, (float(ws[0]), float(ws[1])), annotations


def _parse_frame(obj, lineno: int, expected_t: int, workspace: tuple[float, float]) -> Frame:
    try:
        t = obj["t"]
        pos = obj["pos"]
        grip = GripperState(obj["grip"])
        action = obj.get("action")
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"malformed frame at line {lineno} ({exc})") from exc
    if not isinstance(t, int) or t != expected_t:
        raise TraceError(f"non-contiguous frame index at line {lineno}: expected t={expected_t}, got {t}")
    if not (isinstance(pos, list) and len(pos) == 2 and _finite(pos)):
        raise TraceError(f"malformed pos at line {lineno}")
    x, y = float(pos[0]), float(pos[1])
    if not (0 <= x < workspace[0] and 0 <= y < workspace[1]):
        raise TraceError(f"pose outside workspace at line {lineno}: ({x}, {y})")
    if action is not None:
        if not (isinstance(action, list) and len(action) == ACTION_DIM and _finite(action)):
            raise TraceError(f"malformed action at line {lineno}")
        action = tuple(float(v) for v in action)
    return Frame(t, (x, y), grip, action)


def load_trace(path: str | Path) -> DemonstrationTrace:
    """Read and validate a trace file; raise :class:`TraceError` on any problem."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read {path}: {exc}") from exc

    header = None
    frames: list[Frame] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"malformed JSON at line {lineno}: {exc.msg}") from exc
        if header is None:
            header = _parse_header(obj, lineno)
            continue
        frames.append(_parse_frame(obj, lineno, len(frames), header[1]))

    if header is None:
        raise TraceError(f"{path}: empty trace file")
    trace = DemonstrationTrace(header[0], header[1], tuple(frames), header[2])
    problems = validate_trace(trace)
    if problems:
        raise TraceError("; ".join(map(str, problems)))
    return trace
