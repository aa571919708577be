from __future__ import annotations

import json
from pathlib import Path

import pytest

from spr.cli import main
from spr.harness import record_demonstration
from spr.scenarios import single_object
from spr.trace import write_trace

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _bench(tmp_path, **overrides):
    cfg = {"scenarios": [str(CONFIGS / "slip.json"), "builtin:trap"], "seeds": 3, "budget": 200, "rewind_n": [0, 3]}
    cfg.update(overrides)
    p = tmp_path / "bench.json"
    p.write_text(json.dumps(cfg))
    return p


def test_run_prints_result(capsys, tmp_path):
    assert main(["run", "--scenario", str(CONFIGS / "trap.json"), "--seed", "7", "--rewind-n", "3", "--log", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["success"] and out["rewinds"] >= 1 and out["seed"] == 7
    assert (tmp_path / out["log"]).exists()


def test_run_builtin_and_chunk(capsys):
    assert main(["run", "--scenario", "builtin:single", "--chunk", "4,2"]) == 0
    assert json.loads(capsys.readouterr().out)["success"]


def test_run_missing_scenario_is_config_error(capsys, tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "none.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_bench_writes_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["bench", "--config", str(_bench(tmp_path)), "--out", str(out)]) == 0
    header = (out / "benchmark.csv").read_text().splitlines()[0]
    assert header.startswith("scenario,rewind_n,corruption,seeds,successes,success_rate")
    assert (out / "summary.json").exists()


def test_bench_twice_is_byte_identical(tmp_path):
    cfg = _bench(tmp_path)
    main(["bench", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["bench", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"])
    for name in ("benchmark.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_length(tmp_path, capsys):
    cfg = _bench(tmp_path, scenarios=["builtin:slip"])
    assert main(["sweep-length", "--config", str(cfg), "--out", str(tmp_path / "o"), "--budgets", "50,100,200"]) == 0
    lines = (tmp_path / "o" / "curve_N3.dat").read_text().splitlines()
    assert lines[0] == "# budget rate" and [l.split()[0] for l in lines[1:]] == ["50", "100", "200"]


def test_sweep_n(tmp_path, capsys):
    cfg = _bench(tmp_path, scenarios=["builtin:trap"])
    assert main(["sweep-n", "--config", str(cfg), "--out", str(tmp_path / "o"), "--ns", "2,3,4"]) == 0
    assert "<- best" in capsys.readouterr().out
    rows = (tmp_path / "o" / "sweep_n.csv").read_text().splitlines()
    assert len(rows) == 4


def test_bad_config_exits_nonzero(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    assert main(["bench", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    p.write_text(json.dumps({"scenarios": ["builtin:slip"], "budget": 0}))
    assert main(["bench", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_curate_and_validate(tmp_path, capsys):
    trace_path = tmp_path / "demo.jsonl"
    write_trace(record_demonstration(single_object()), trace_path)
    templates = tmp_path / "t.json"
    templates.write_text(json.dumps({"put the cube in the bowl": ["grasp the cube", "place the cube in the bowl"]}))
    out = tmp_path / "records.jsonl"
    assert main(["curate", "--in", str(trace_path), "--out", str(out), "--rewind", "--templates", str(templates)]) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert lines[0]["record"].split("\n")[2] == "SUB 1: grasp the cube @ (153,128)"
    assert lines[-1]["instruction"] == "return to initial position"
    assert main(["validate-record", str(out)]) == 0
    assert f"{len(lines)}/{len(lines)} records valid" in capsys.readouterr().out


def test_validate_reports_bad_record(tmp_path, capsys):
    p = tmp_path / "r.txt"
    p.write_text("DEPTH:\nTRAJ: (5,5)\nREMAIN: 0\nACT: 1 1 1 1 1 1 1")
    assert main(["validate-record", str(p)]) == 0
    assert "[REMAIN] section order" in capsys.readouterr().out
    assert main(["validate-record", "--strict", str(p)]) == 1


def test_curate_bad_trace(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"instruction": "x", "workspace": [1, 1]}\n{"t": 0}\n')
    assert main(["curate", "--in", str(p), "--out", str(tmp_path / "o.jsonl")]) == 2


def test_usage_error():
    with pytest.raises(SystemExit):
        main(["run"])
