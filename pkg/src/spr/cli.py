"""Command line entry point: ``spr <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .curation import CurationError, SmoothingParams, curate
from .monitor import COUNT_RULES, TAIL_CONSECUTIVE
from .reasoning import RecordFormatError, parse_record, serialize_record
from .simworld import ScenarioError
from .supervisor import SupervisorConfig
from .trace import TraceError, load_trace


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _chunk(text: str) -> tuple[int, int]:
    vals = _int_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("chunk must be PREDICT,EXECUTE")
    return vals[0], vals[1]


def cmd_run(args) -> int:
    scenario = harness.resolve_scenario(args.scenario)
    sup = SupervisorConfig(rewind_steps=args.rewind_n, count_rule=args.count_rule)
    result = harness.run_episode(
        scenario, args.seed, sup, budget=args.budget, chunk=args.chunk, log_dir=Path(args.log) if args.log else None
    )
    out = {
        "scenario": result.scenario,
        "seed": result.seed,
        "rewind_n": result.rewind_n,
        "corruption": result.corruption,
        "success": result.success,
        "steps_used": result.steps_used,
        "anomalies": result.anomalies,
        "rewinds": result.rewinds,
        "digest": result.digest,
        "log": result.log_path,
    }
    print(json.dumps(out, indent=2))
    return 0


def _load_config(args):
    cfg, raw = harness.load_bench_config(args.config)
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    return cfg, raw


def cmd_bench(args) -> int:
    cfg, _ = _load_config(args)
    table = harness.run_benchmark(cfg)
    for path in harness.emit_report(args.out, tables=[table]):
        print(path)
    return 0


def cmd_sweep_length(args) -> int:
    cfg, raw = _load_config(args)
    budgets = args.budgets or raw.get("budgets") or list(range(100, 1000, 100))
    curves = harness.sweep_max_length(cfg, budgets)
    for curve in curves:
        print(curve.label, " ".join(f"{b}:{r:.3f}" for b, r in curve.points))
    harness.emit_report(args.out, curves=curves)
    return 0


def cmd_sweep_n(args) -> int:
    cfg, raw = _load_config(args)
    ns = args.ns or raw.get("ns") or [2, 3, 4]
    table = harness.sweep_rewind_n(cfg, ns)
    for row in table.rows:
        flag = "  <- best" if row.best else ""
        print(f"N={row.rewind_n} {row.corruption}: success {row.success_rate:.3f}, steps {row.mean_steps:.1f}{flag}")
    harness.emit_report(args.out, tables=[table])
    return 0


def _load_templates(path):
    if path is None:
        return None
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    # {"<instruction>": ["segment 1 text", "segment 2 text", ...]}
    return {(instr, i): text for instr, texts in data.items() for i, text in enumerate(texts)}


def cmd_curate(args) -> int:
    trace = load_trace(args.inp)
    params = SmoothingParams(outlier_threshold=args.outlier_px, median_window=args.median_window)
    records = curate(trace, params, _load_templates(args.templates), rewind=args.rewind)
    lines = [
        json.dumps({"frame": r.frame, "instruction": r.instruction, "record": serialize_record(r.to_reasoning())})
        for r in records
    ]
    Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_validate_record(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    texts = []
    try:
        texts = [json.loads(line)["record"] for line in text.splitlines() if line.strip()]
    except (json.JSONDecodeError, KeyError, TypeError):
        texts = [text[:-1] if text.endswith("\n") else text]
    bad = 0
    for i, rec in enumerate(texts, start=1):
        try:
            parse_record(rec)
        except RecordFormatError as exc:
            bad += 1
            print(f"record {i}: [{exc.section}] {exc}")
    print(f"{len(texts) - bad}/{len(texts)} records valid")
    return 1 if bad and args.strict else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spr", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode")
    run.add_argument("--scenario", required=True, help="scenario JSON file or builtin:<name>")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--rewind-n", type=int, default=3)
    run.add_argument("--budget", type=int, default=harness.DEFAULT_BUDGET)
    run.add_argument("--count-rule", choices=COUNT_RULES, default=TAIL_CONSECUTIVE)
    run.add_argument("--chunk", type=_chunk, default=(1, 1), help="PREDICT,EXECUTE")
    run.add_argument("--log", help="directory for the per-step episode log")
    run.set_defaults(func=cmd_run)

    for name, func, helptext in (
        ("bench", cmd_bench, "benchmark table"),
        ("sweep-length", cmd_sweep_length, "success rate vs step budget"),
        ("sweep-n", cmd_sweep_n, "success rate vs rewind length"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="benchmark config JSON")
        sp.add_argument("--out", default="report", help="output directory")
        sp.add_argument("--workers", type=int, default=0, help="parallel episode workers")
        if name == "sweep-length":
            sp.add_argument("--budgets", type=_int_list)
        if name == "sweep-n":
            sp.add_argument("--ns", type=_int_list)
        sp.set_defaults(func=func)

    cur = sub.add_parser("curate", help="turn a demonstration trace into training records")
    cur.add_argument("--in", dest="inp", required=True)
    cur.add_argument("--out", required=True)
    cur.add_argument("--rewind", action="store_true", help="append rewind records")
    cur.add_argument("--outlier-px", type=float, default=20.0)
    cur.add_argument("--median-window", type=int, default=5)
    cur.add_argument("--templates", help="JSON mapping instruction -> list of segment descriptions")
    cur.set_defaults(func=cmd_curate)

    val = sub.add_parser("validate-record", help="check reasoning records (raw text or curated JSONL)")
    val.add_argument("file")
    val.add_argument("--strict", action="store_true", help="exit 1 when any record is invalid")
    val.set_defaults(func=cmd_validate_record)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, ScenarioError, TraceError, CurationError, ValueError, KeyError) as exc:
        print(f"spr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
