"""Episode runner, benchmark aggregation, ablation sweeps and report files.

Every episode is a pure function of (scenario, seed, supervisor config,
policy config, budget, chunking), so tables can be rebuilt byte for byte and
episodes can run in any order or in parallel.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import simworld
from .policy import CountNoise, Corruption, FreezePlanAfter, PolicyConfig, new_policy_state, plan_chunk, plan_step
from .simworld import Scenario
from .supervisor import (
    COUNT_ANOMALY,
    REWIND_START,
    STAGNATION,
    SupervisorConfig,
    new_state,
    supervise_step,
)
from .trace import DemonstrationTrace, Frame

DEFAULT_BUDGET = 980


@dataclass(frozen=True)
class EpisodeResult:
    scenario: str
    seed: int
    rewind_n: int
    corruption: str
    success: bool
    steps_used: int
    count_anomalies: int
    stagnations: int
    rewinds: int
    digest: str
    log_path: Optional[str] = None
    events: tuple[tuple[int, str], ...] = ()

    @property
    def anomalies(self) -> dict:
        return {"count": self.count_anomalies, "stagnation": self.stagnations}

    def succeeded_within(self, budget: int) -> bool:
        return self.success and self.steps_used <= budget


def corruption_label(c: Corruption) -> str:
    if c is None:
        return "none"
    if isinstance(c, FreezePlanAfter):
        return f"freeze{c.step}"
    return f"noise{c.prob:g}s{c.seed}"


def corruption_from_dict(d: Optional[dict]) -> Corruption:
    if not d:
        return None
    kind = d.get("type")
    if kind == "freeze_plan_after":
        return FreezePlanAfter(int(d["step"]))
    if kind == "count_noise":
        return CountNoise(float(d["prob"]), int(d.get("seed", 0)))
    raise ValueError(f"unknown corruption type {kind!r}")


def policy_config_for(scenario: Scenario) -> PolicyConfig:
    p = scenario.policy
    return PolicyConfig(
        corruption=corruption_from_dict(p.get("corruption")),
        waypoint_count=int(p.get("waypoint_count", 5)),
        approach_gain=float(p.get("approach_gain", 1.0)),
    )


def run_episode(
    scenario: Scenario,
    seed: int,
    sup_cfg: SupervisorConfig = SupervisorConfig(),
    pol_cfg: Optional[PolicyConfig] = None,
    budget: int = DEFAULT_BUDGET,
    chunk: tuple[int, int] = (1, 1),
    log_dir: Optional[Path] = None,
) -> EpisodeResult:
    """Closed loop: observe, plan under the current instruction, supervise, act.

    The supervisor's decision on step t picks the instruction for step t+1.
    Only the first ``chunk[1]`` of the ``chunk[0]`` predicted actions run.
    """
    predict, execute = chunk
    if budget <= 0 or not 1 <= execute <= predict:
        raise ValueError(f"need budget > 0 and 1 <= execute <= predict, got {budget}, {chunk}")
    pol_cfg = pol_cfg if pol_cfg is not None else policy_config_for(scenario)

    world = simworld.init_world(scenario, seed)
    pst = new_policy_state(pol_cfg)
    sst = new_state(scenario.instruction)
    instruction = scenario.instruction
    steps = 0
    success = simworld.check_success(world)
    rows = []
    while not success and steps < budget:
        obs = simworld.observe(world)
        record, actions, pst = plan_chunk(obs, instruction, pol_cfg, pst, predict)
        sst, decision = supervise_step(sst, record, sup_cfg)
        rows.append(
            {
                "step": steps,
                "instruction": instruction,
                "mode": "rewind" if instruction == sup_cfg.rewind_instruction else "normal",
                "count": record.remaining_count,
                "anomaly": sst.last_anomaly,
            }
        )
        for action in actions[:execute]:
            simworld.apply_action(world, action)
            steps += 1
            success = simworld.check_success(world)
            if success or steps >= budget:
                break
        instruction = decision.instruction

    events = tuple(sst.event_log)
    label = corruption_label(pol_cfg.corruption)
    log_path = None
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        name = f"{scenario.name}_s{seed}_N{sup_cfg.rewind_steps}_{label}.json"
        (log_dir / name).write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
        log_path = name
    return EpisodeResult(
        scenario=scenario.name,
        seed=seed,
        rewind_n=sup_cfg.rewind_steps,
        corruption=label,
        success=success,
        steps_used=steps,
        count_anomalies=sum(1 for _, e in events if e == COUNT_ANOMALY),
        stagnations=sum(1 for _, e in events if e == STAGNATION),
        rewinds=sum(1 for _, e in events if e == REWIND_START),
        digest=simworld.state_digest(world),
        log_path=log_path,
        events=events,
    )


# -- benchmarks ---------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    scenarios: tuple[Scenario, ...]
    seeds: tuple[int, ...] = tuple(range(10))
    budget: int = DEFAULT_BUDGET
    rewind_ns: tuple[int, ...] = (0, 3)
    # None: each scenario's own policy corruption
    corruptions: Optional[tuple[Corruption, ...]] = None
    chunk: tuple[int, int] = (1, 1)
    count_rule: str = "tail-consecutive"
    workers: int = 1
    log_dir: Optional[str] = None

    def __post_init__(self):
        if not self.scenarios or not self.seeds:
            raise ValueError("need at least one scenario and one seed")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if not 1 <= self.chunk[1] <= self.chunk[0]:
            raise ValueError("chunk must satisfy 1 <= execute <= predict")


@dataclass(frozen=True)
class _EpisodeSpec:
    scenario: Scenario
    seed: int
    rewind_n: int
    pol_cfg: PolicyConfig
    budget: int
    chunk: tuple[int, int]
    count_rule: str
    log_dir: Optional[str]

    def run(self) -> EpisodeResult:
        sup = SupervisorConfig(rewind_steps=self.rewind_n, count_rule=self.count_rule)
        log_dir = Path(self.log_dir) if self.log_dir else None
        return run_episode(self.scenario, self.seed, sup, self.pol_cfg, self.budget, self.chunk, log_dir)


def _run_spec(spec: _EpisodeSpec) -> EpisodeResult:
    return spec.run()


def _specs(cfg: BenchConfig, rewind_ns: Iterable[int], budget: int) -> list[_EpisodeSpec]:
    specs = []
    for sc in cfg.scenarios:
        base = policy_config_for(sc)
        corrs = [base.corruption] if cfg.corruptions is None else list(cfg.corruptions)
        for n in rewind_ns:
            for c in corrs:
                for seed in cfg.seeds:
                    specs.append(
                        _EpisodeSpec(sc, seed, n, replace(base, corruption=c), budget, cfg.chunk, cfg.count_rule, cfg.log_dir)
                    )
    return specs


def run_episodes(specs: Sequence[_EpisodeSpec], workers: int = 1) -> list[EpisodeResult]:
    if workers <= 1:
        return [s.run() for s in specs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_spec, specs, chunksize=max(1, len(specs) // (4 * workers))))


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    rewind_n: int
    corruption: str
    seeds: int
    successes: int
    success_rate: float
    mean_steps: float
    count_anomalies: int
    stagnations: int
    rewinds: int
    best: bool = False


@dataclass
class MetricsTable:
    name: str
    rows: list[MetricsRow]
    episodes: list[EpisodeResult] = field(default_factory=list)

    def row(self, **match) -> MetricsRow:
        hits = [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]


def _aggregate(key: tuple, episodes: Sequence[EpisodeResult], budget: Optional[int] = None) -> MetricsRow:
    scenario, n, corruption = key
    wins = [e.succeeded_within(budget) if budget is not None else e.success for e in episodes]
    steps = [min(e.steps_used, budget) if budget is not None else e.steps_used for e in episodes]
    return MetricsRow(
        scenario=scenario,
        rewind_n=n,
        corruption=corruption,
        seeds=len(episodes),
        successes=sum(wins),
        success_rate=sum(wins) / len(episodes),
        mean_steps=sum(steps) / len(episodes),
        count_anomalies=sum(e.count_anomalies for e in episodes),
        stagnations=sum(e.stagnations for e in episodes),
        rewinds=sum(e.rewinds for e in episodes),
    )


def _group(episodes: Iterable[EpisodeResult], by_scenario: bool = True) -> dict[tuple, list[EpisodeResult]]:
    groups: dict[tuple, list[EpisodeResult]] = {}
    for e in sorted(episodes, key=lambda e: (e.scenario, e.rewind_n, e.corruption, e.seed)):
        key = (e.scenario if by_scenario else "*", e.rewind_n, e.corruption)
        groups.setdefault(key, []).append(e)
    return groups


def run_benchmark(cfg: BenchConfig) -> MetricsTable:
    """One row per (scenario, rewind N, corruption) over all seeds."""
    episodes = run_episodes(_specs(cfg, cfg.rewind_ns, cfg.budget), cfg.workers)
    rows = [_aggregate(k, eps) for k, eps in sorted(_group(episodes).items())]
    return MetricsTable("benchmark", rows, sorted(episodes, key=_episode_key))


def _episode_key(e: EpisodeResult) -> tuple:
    return (e.scenario, e.rewind_n, e.corruption, e.seed)


@dataclass(frozen=True)
class SweepCurve:
    rewind_n: int
    corruption: str
    points: tuple[tuple[int, float], ...]

    @property
    def label(self) -> str:
        suffix = "" if self.corruption == "none" else f"_{self.corruption}"
        return f"N{self.rewind_n}{suffix}"


def sweep_max_length(cfg: BenchConfig, budgets: Sequence[int]) -> list[SweepCurve]:
    """Success rate against step budget, per supervisor variant, pooled over scenarios.

    Each episode runs once at the largest budget; a smaller budget b counts it
    as a success only if it finished within b steps.
    """
    budgets = list(budgets)
    if not budgets or budgets != sorted(budgets) or budgets[0] <= 0:
        raise ValueError("budgets must be positive and ascending")
    episodes = run_episodes(_specs(cfg, cfg.rewind_ns, budgets[-1]), cfg.workers)
    curves = []
    for (_, n, corruption), eps in sorted(_group(episodes, by_scenario=False).items()):
        points = tuple((b, sum(e.succeeded_within(b) for e in eps) / len(eps)) for b in budgets)
        curves.append(SweepCurve(n, corruption, points))
    return curves


def sweep_rewind_n(cfg: BenchConfig, ns: Sequence[int] = (2, 3, 4)) -> MetricsTable:
    """One row per rewind length over identical seeds; the best row per corruption is flagged.

    Best means highest success rate, then fewest mean steps, then smallest N.
    """
    if not ns:
        raise ValueError("need at least one rewind length")
    episodes = run_episodes(_specs(cfg, ns, cfg.budget), cfg.workers)
    rows = [_aggregate(k, eps) for k, eps in sorted(_group(episodes, by_scenario=False).items())]
    for corruption in sorted({r.corruption for r in rows}):
        group = [r for r in rows if r.corruption == corruption]
        best = min(group, key=lambda r: (-r.success_rate, r.mean_steps, r.rewind_n))
        rows[rows.index(best)] = replace(best, best=True)
    return MetricsTable("sweep_n", rows, sorted(episodes, key=_episode_key))


# -- reports --------------------------------------------------------------------

_COLUMNS = [
    "scenario",
    "rewind_n",
    "corruption",
    "seeds",
    "successes",
    "success_rate",
    "mean_steps",
    "count_anomalies",
    "stagnations",
    "rewinds",
    "best",
]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def table_csv(table: MetricsTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for r in table.rows:
        writer.writerow([_cell(getattr(r, c)) for c in _COLUMNS])
    return buf.getvalue()


def curve_dat(curve: SweepCurve) -> str:
    lines = ["# budget rate"] + [f"{b} {rate:.6f}" for b, rate in curve.points]
    return "\n".join(lines) + "\n"


def _row_json(r: MetricsRow) -> dict:
    d = asdict(r)
    for k, v in d.items():
        if isinstance(v, float):
            d[k] = round(v, 6)
    return d


def emit_report(
    out_dir: str | Path,
    tables: Sequence[MetricsTable] = (),
    curves: Sequence[SweepCurve] = (),
) -> list[Path]:
    """Write one CSV per table, a ``curve_<variant>.dat`` per sweep curve, and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary: dict = {"tables": {}, "curves": {}}
    for table in tables:
        path = out / f"{table.name}.csv"
        path.write_text(table_csv(table), encoding="utf-8")
        written.append(path)
        summary["tables"][table.name] = [_row_json(r) for r in table.rows]
    for curve in curves:
        path = out / f"curve_{curve.label}.dat"
        path.write_text(curve_dat(curve), encoding="utf-8")
        written.append(path)
        summary["curves"][curve.label] = [[b, round(rate, 6)] for b, rate in curve.points]
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    return written


def plateau_budget(curve: SweepCurve) -> int:
    """Smallest budget at which the curve already equals its final value."""
    final = curve.points[-1][1]
    return next(b for b, rate in curve.points if rate >= final)


# -- config files ---------------------------------------------------------------


def resolve_scenario(ref, base_dir: Path = Path(".")) -> Scenario:
    """A scenario from ``builtin:<name>``, a JSON file path, or an inline dict."""
    from .scenarios import BUILTIN

    if isinstance(ref, dict):
        return simworld.scenario_from_dict(ref)
    ref = str(ref)
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in BUILTIN:
            raise simworld.ScenarioError(f"unknown builtin scenario {name!r}; have {sorted(BUILTIN)}")
        return BUILTIN[name]()
    path = Path(ref)
    if not path.is_absolute():
        path = base_dir / path
    return simworld.load_scenario(path)


def bench_config_from_dict(d: dict, base_dir: Path = Path(".")) -> BenchConfig:
    seeds = d.get("seeds", 10)
    seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(int(s) for s in seeds)
    corrs = d.get("corruptions")
    return BenchConfig(
        scenarios=tuple(resolve_scenario(s, base_dir) for s in d["scenarios"]),
        seeds=seeds,
        budget=int(d.get("budget", DEFAULT_BUDGET)),
        rewind_ns=tuple(int(n) for n in d.get("rewind_n", (0, 3))),
        corruptions=None if corrs is None else tuple(corruption_from_dict(c) for c in corrs),
        chunk=tuple(int(v) for v in d.get("chunk", (1, 1))),
        count_rule=str(d.get("count_rule", "tail-consecutive")),
        workers=int(d.get("workers", 1)),
        log_dir=d.get("log_dir"),
    )


def load_bench_config(path: str | Path) -> tuple[BenchConfig, dict]:
    """The parsed config plus the raw dict (which may also hold ``budgets`` and ``ns``)."""
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    return bench_config_from_dict(raw, path.parent), raw


def record_demonstration(scenario: Scenario, seed: int = 0, budget: int = DEFAULT_BUDGET) -> DemonstrationTrace:
    """Roll out the uncorrupted policy without supervision and log it as a demonstration trace."""
    pol_cfg = PolicyConfig()
    world = simworld.init_world(scenario, seed)
    pst = new_policy_state(pol_cfg)
    frames = []
    while not simworld.check_success(world) and world.step < budget:
        obs = simworld.observe(world)
        _, action, pst = plan_step(obs, scenario.instruction, pol_cfg, pst)
        frames.append(Frame(world.step, world.gripper_pos, world.gripper_state, tuple(action)))
        simworld.apply_action(world, action)
    frames.append(Frame(world.step, world.gripper_pos, world.gripper_state, None))
    return DemonstrationTrace(scenario.instruction, scenario.workspace, tuple(frames))
