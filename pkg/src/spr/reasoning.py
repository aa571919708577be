"""Line-oriented text form of a reasoning record.

Five sections, always in this order::

    DEPTH: <depth tokens, space separated, possibly none>
    REMAIN: <n>
    SUB 1: <semantic> @ (x,y)        one line per remaining subtask
    TRAJ: (x1,y1) (x2,y2) ...        1 to 5 waypoints
    ACT: b1 b2 b3 b4 b5 b6 b7        binned action, 0..255 each

Coordinates are pixel positions in [0, 255].  There is no trailing newline.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

PIXEL_MAX = 255
N_BINS = 256
MAX_WAYPOINTS = 5
ACTION_DIM = 7

SECTIONS = ("DEPTH", "REMAIN", "SUB", "TRAJ", "ACT")
_RANK = {name: i for i, name in enumerate(SECTIONS)}

Pixel = tuple[int, int]

_INT = r"(0|[1-9][0-9]*)"
_COORD = rf"\({_INT},{_INT}\)"
_LINE_RE = {
    "DEPTH": re.compile(r"DEPTH:(?: (\S+(?: \S+)*))?"),
    "REMAIN": re.compile(rf"REMAIN: {_INT}"),
    "SUB": re.compile(rf"SUB {_INT}: (\S(?:.*\S)?) @ {_COORD}"),
    "TRAJ": re.compile(rf"TRAJ: ({_COORD}(?: {_COORD})*)"),
    "ACT": re.compile(rf"ACT: {_INT}(?: {_INT}){{{ACTION_DIM - 1}}}"),
}
_COORD_RE = re.compile(_COORD)


class RecordFormatError(ValueError):
    """A record that is malformed or violates an invariant; ``section`` names the culprit."""

    def __init__(self, section: str, message: str):
        super().__init__(message)
        self.section = section


@dataclass(frozen=True)
class ReasoningRecord:
    remaining_count: int
    subtasks: tuple[tuple[str, Pixel], ...]
    trajectory: tuple[Pixel, ...]
    action: tuple[int, ...]
    depth_tokens: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "subtasks", tuple((s, tuple(c)) for s, c in self.subtasks))
        object.__setattr__(self, "trajectory", tuple(tuple(p) for p in self.trajectory))
        object.__setattr__(self, "action", tuple(self.action))
        object.__setattr__(self, "depth_tokens", tuple(self.depth_tokens))


def _pixel_ok(p: Sequence[int]) -> bool:
    return len(p) == 2 and all(isinstance(v, int) and 0 <= v <= PIXEL_MAX for v in p)


def check_record(r: ReasoningRecord) -> None:
    """Raise :class:`RecordFormatError` unless ``r`` satisfies every record invariant."""
    for tok in r.depth_tokens:
        if not tok or any(ch.isspace() for ch in tok):
            raise RecordFormatError("DEPTH", f"depth token {tok!r} empty or contains whitespace")
    if not isinstance(r.remaining_count, int) or r.remaining_count < 0:
        raise RecordFormatError("REMAIN", f"remaining count {r.remaining_count!r} must be a non-negative integer")
    if len(r.subtasks) != r.remaining_count:
        raise RecordFormatError(
            "SUB", f"count mismatch: REMAIN {r.remaining_count} but {len(r.subtasks)} SUB lines"
        )
    for semantic, coord in r.subtasks:
        if semantic != semantic.strip() or not semantic or "\n" in semantic or ";" in semantic:
            raise RecordFormatError("SUB", f"bad semantic text {semantic!r}")
        if not _pixel_ok(coord):
            raise RecordFormatError("SUB", f"coordinate {coord} out of range")
    n = len(r.trajectory)
    if n == 0:
        raise RecordFormatError("TRAJ", "trajectory length 0 < 1")
    if n > MAX_WAYPOINTS:
        raise RecordFormatError("TRAJ", f"trajectory length {n} > {MAX_WAYPOINTS}")
    for p in r.trajectory:
        if not _pixel_ok(p):
            raise RecordFormatError("TRAJ", f"coordinate {p} out of range")
    if len(r.action) != ACTION_DIM:
        raise RecordFormatError("ACT", f"expected {ACTION_DIM} action bins, got {len(r.action)}")
    for b in r.action:
        if not isinstance(b, int) or not 0 <= b < N_BINS:
            raise RecordFormatError("ACT", f"bin {b!r} out of range")


def _xy(p: Pixel) -> str:
    return f"({p[0]},{p[1]})"


def serialize_record(r: ReasoningRecord) -> str:
    check_record(r)
    lines = ["DEPTH:" + "".join(" " + tok for tok in r.depth_tokens), f"REMAIN: {r.remaining_count}"]
    lines += [f"SUB {i}: {sem} @ {_xy(c)}" for i, (sem, c) in enumerate(r.subtasks, start=1)]
    lines.append("TRAJ: " + " ".join(_xy(p) for p in r.trajectory))
    lines.append("ACT: " + " ".join(str(b) for b in r.action))
    return "\n".join(lines)


def _section_of(line: str) -> str:
    for name in SECTIONS:
        if line.startswith(name + ":") or (name == "SUB" and line.startswith("SUB ")):
            return name
    raise RecordFormatError("?", f"unrecognized line {line!r}")


def parse_record(text: str) -> ReasoningRecord:
    """Inverse of :func:`serialize_record`; rejects anything it would not emit."""
    seen: list[str] = []
    fields: dict = {"SUB": []}
    for line in text.split("\n"):
        name = _section_of(line)
        if seen and _RANK[name] < _RANK[seen[-1]]:
            first_later = next(s for s in seen if _RANK[s] > _RANK[name])
            raise RecordFormatError(name, f"section order: {first_later} before {name}")
        if seen and name == seen[-1] and name != "SUB":
            raise RecordFormatError(name, f"duplicate {name} section")
        if not seen or seen[-1] != name:
            seen.append(name)
        m = _LINE_RE[name].fullmatch(line)
        if m is None:
            raise RecordFormatError(name, f"malformed {name} line {line!r}")
        if name == "DEPTH":
            fields["DEPTH"] = tuple(m.group(1).split(" ")) if m.group(1) else ()
        elif name == "REMAIN":
            fields["REMAIN"] = int(m.group(1))
        elif name == "SUB":
            index = int(m.group(1))
            if index != len(fields["SUB"]) + 1:
                raise RecordFormatError("SUB", f"SUB index {index} out of sequence")
            fields["SUB"].append((m.group(2), (int(m.group(3)), int(m.group(4)))))
        elif name == "TRAJ":
            fields["TRAJ"] = tuple((int(a), int(b)) for a, b in _COORD_RE.findall(m.group(1)))
        else:
            fields["ACT"] = tuple(int(v) for v in line[len("ACT: "):].split(" "))

    for name in SECTIONS:
        if name != "SUB" and name not in fields:
            raise RecordFormatError(name, f"missing {name} section")
    record = ReasoningRecord(
        remaining_count=fields["REMAIN"],
        subtasks=tuple(fields["SUB"]),
        trajectory=fields["TRAJ"],
        action=fields["ACT"],
        depth_tokens=fields["DEPTH"],
    )
    check_record(record)
    return record


def bin_value(x: float) -> int:
    if not (math.isfinite(x) and -1.0 <= x <= 1.0):
        raise ValueError(f"action component {x} outside [-1, 1]")
    return min(N_BINS - 1, math.floor((x + 1.0) / 2.0 * N_BINS))


def unbin_value(b: int) -> float:
    if not 0 <= b < N_BINS:
        raise ValueError(f"bin {b} outside [0, {N_BINS - 1}]")
    return -1.0 + (b + 0.5) / (N_BINS / 2)


def bin_action(action: Sequence[float]) -> tuple[int, ...]:
    """Map each of the 7 action components in [-1, 1] to one of 256 bins."""
    if len(action) != ACTION_DIM:
        raise ValueError(f"expected {ACTION_DIM} action components, got {len(action)}")
    return tuple(bin_value(x) for x in action)


def unbin_action(bins: Sequence[int]) -> tuple[float, ...]:
    """Bin centres; within 1/256 of the original component."""
    if len(bins) != ACTION_DIM:
        raise ValueError(f"expected {ACTION_DIM} bins, got {len(bins)}")
    return tuple(unbin_value(b) for b in bins)
