from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spr.monitor import (
    DISJOINT_WINDOWS,
    TAIL_CONSECUTIVE,
    StateRecorder,
    detect_count_anomaly,
    detect_stagnation,
    push_step,
    reset,
    verdict,
)

T = ((1, 1),)


def _oracle(seq, rule):
    if len(seq) < 4:
        return False
    if rule == TAIL_CONSECUTIVE:
        tail = seq[-3:]
        return len(set(tail)) == 3 and list(tail) == sorted(tail)
    pairs = [seq[0:2], seq[2:4]]
    return all(b > a for a, b in pairs)


def _rec(counts, traj=T):
    rec = StateRecorder()
    for c in counts:
        push_step(rec, c, traj)
    return rec


@pytest.mark.parametrize("rule", [TAIL_CONSECUTIVE, DISJOINT_WINDOWS])
def test_truth_table_matches_oracle(rule):
    fired = 0
    for seq in itertools.product(range(4), repeat=4):
        got = detect_count_anomaly(_rec(seq), rule)
        assert got == _oracle(seq, rule), seq
        fired += got
    # independent counts: tail needs c1<c2<c3 (4 choose 3 * 4), disjoint needs two rising pairs (6*6)
    assert fired == {TAIL_CONSECUTIVE: 16, DISJOINT_WINDOWS: 36}[rule]


def test_rules_differ():
    assert detect_count_anomaly(_rec([0, 1, 2, 3]), TAIL_CONSECUTIVE)
    assert not detect_count_anomaly(_rec([0, 1, 0, 1]), TAIL_CONSECUTIVE)
    assert detect_count_anomaly(_rec([0, 1, 0, 1]), DISJOINT_WINDOWS)
    assert not detect_count_anomaly(_rec([3, 1, 2, 3]), DISJOINT_WINDOWS)
    assert detect_count_anomaly(_rec([3, 1, 2, 3]), TAIL_CONSECUTIVE)


def test_unknown_rule():
    with pytest.raises(ValueError):
        detect_count_anomaly(_rec([0, 0, 0, 0]), "median")


@given(st.lists(st.integers(0, 5), max_size=12))
def test_window_keeps_last_four(counts):
    rec = _rec(counts)
    assert list(rec.counts) == counts[-4:]
    for rule in (TAIL_CONSECUTIVE, DISJOINT_WINDOWS):
        assert detect_count_anomaly(rec, rule) == _oracle(counts[-4:], rule)


def test_no_fire_before_full_window():
    assert not detect_count_anomaly(_rec([0, 1, 2]))
    assert not detect_stagnation(_rec([1] * 7))
    assert detect_stagnation(_rec([1] * 8))


def test_stagnation_randomized():
    rng = random.Random(1234)
    mismatches = 0
    for trial in range(10_000):
        rate = rng.choice([0.0, 0.02, 0.1, 0.3, 0.7])
        base = tuple((rng.randrange(256), rng.randrange(256)) for _ in range(rng.randint(1, 5)))
        window = []
        for _ in range(8):
            if rng.random() < rate:
                t = list(base)
                t[rng.randrange(len(t))] = (rng.randrange(256), rng.randrange(256))
                window.append(tuple(t))
            else:
                window.append(base)
        rec = StateRecorder()
        for traj in window:
            push_step(rec, 1, traj)
        mismatches += detect_stagnation(rec) != (len(set(window)) == 1)
    assert mismatches == 0


def test_reset_and_verdict():
    rec = _rec([0, 1, 2, 3])
    v = verdict(rec)
    assert v.count_anomaly and not v.stagnation and v.any
    reset(rec)
    assert len(rec.counts) == 0 and len(rec.trajectories) == 0
    assert not verdict(rec).any


def test_negative_count_rejected():
    with pytest.raises(ValueError):
        push_step(StateRecorder(), -1, T)


def test_to_json():
    rec = _rec([2, 1], ((1, 2), (3, 4)))
    assert rec.to_json() == {"counts": [2, 1], "trajectories": [[[1, 2], [3, 4]], [[1, 2], [3, 4]]]}
