"""Setting sweeps, the reflect-success harness and report emission."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import fmean
from typing import Any, Mapping, Sequence

from .loop import SETTINGS, EpisodeConfig, ReflectionDB, run_episode
from .perception import explore
from .plan import Plan, layers, plan_length, validate
from .reasoning.base import Reasoner, ReasonerError, ReasonerRequest
from .reasoning.oracle import OracleReasoner
from .reasoning.remote import EndpointConfig, RemoteReasoner
from .reasoning.transcript import RecordingBackend, ReplayBackend
from .tasks import TASK_NAMES, TaskSpec, get_task, instantiate_task, task_goal
from .world import PRIMITIVE_KINDS, Scenario, WorldState, apply_draw, check_preconditions, holds, load_scenario

TABLE_COLUMNS = ("Task", "Setting", "Task Success Rate", "Subtask Completion Rate", "Time", "Length of Initial Plan")


@dataclass(frozen=True)
class BenchConfig:
    tasks: tuple[str, ...] = TASK_NAMES
    settings: tuple[str, ...] = SETTINGS
    trials: int = 10
    base_seed: int = 0
    backend: str = "oracle"
    # one probability for every non-navigation primitive; None keeps the deterministic profile
    success_prob: float | None = None
    max_retries: int = 2
    max_iterations: int = 3
    remac_robots: int = 2
    workers: int = 1
    transcript_dir: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for t in self.tasks:
            get_task(t)
        for s in self.settings:
            if s not in SETTINGS:
                raise ValueError(f"unknown setting {s!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "tasks": list(self.tasks),
            "settings": list(self.settings),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "backend": self.backend,
            "success_prob": self.success_prob,
            "max_retries": self.max_retries,
            "max_iterations": self.max_iterations,
            "remac_robots": self.remac_robots,
            "workers": self.workers,
            "transcript_dir": self.transcript_dir,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BenchConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for key in ("tasks", "settings"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> BenchConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def success_profile(p: float | None) -> dict[str, float] | None:
    if p is None:
        return None
    if not 0.0 <= p <= 1.0:
        raise ValueError("success probability must lie in [0, 1]")
    return {k: (1.0 if k == "navigate" else p) for k in PRIMITIVE_KINDS}


def make_backend(name: str) -> Reasoner:
    """``oracle``, ``oracle:<mode>``, ``remote`` (endpoint from the environment) or ``replay:<path>``."""
    if name == "oracle":
        return OracleReasoner()
    if name.startswith("oracle:"):
        return OracleReasoner(name.split(":", 1)[1])
    if name == "remote":
        return RemoteReasoner(EndpointConfig.from_env())
    if name.startswith("replay:"):
        return ReplayBackend(name.split(":", 1)[1])
    raise ValueError(f"unknown backend {name!r}")


# --------------------------------------------------------------------------
# Sweep
# --------------------------------------------------------------------------


@dataclass
class BenchReport:
    config: dict[str, Any]
    rows: list[dict[str, Any]]
    aggregates: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"config": self.config, "aggregates": self.aggregates, "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BenchReport:
        return cls(dict(d["config"]), list(d["rows"]), list(d["aggregates"]))


def aggregate(rows: Sequence[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Per (task, setting) means; time and length only over successful trials."""
    cells: dict[tuple[str, str], list[Mapping[str, Any]]] = {}
    for r in rows:
        cells.setdefault((r["task"], r["setting"]), []).append(r)
    out = []
    for (task, setting), rs in cells.items():
        wins = [r for r in rs if r["task_success"]]
        out.append(
            {
                "task": task,
                "setting": setting,
                "trials": len(rs),
                "task_success_rate": sum(r["task_success"] for r in rs) / len(rs),
                "subtask_completion_rate": fmean(r["subtask_completion_rate"] for r in rs),
                "time": fmean(r["simulated_time"] for r in wins) if wins else None,
                "plan_length": fmean(r["initial_plan_length"] for r in wins) if wins else None,
                "aborted": sum(r["status"] in ("backend-abort", "error") for r in rs),
            }
        )
    return out


def run_trial(task: TaskSpec, setting: str, trial: int, config: BenchConfig) -> dict[str, Any]:
    seed = config.base_seed ^ trial
    robots = config.remac_robots if setting == "REMAC" else 1
    ep = EpisodeConfig.for_setting(
        setting, robot_count=robots, seed=seed, max_retries=config.max_retries, max_iterations=config.max_iterations
    )
    scenario = instantiate_task(task, seed, robots)
    profile = success_profile(config.success_prob)
    if profile:
        scenario = scenario.with_success_prob(profile)
    row: dict[str, Any] = {"task": task.name, "setting": setting, "trial": trial, "seed": seed, "layout": scenario.layout_id}
    backend = make_backend(config.backend)
    transcript = None
    if config.transcript_dir:
        Path(config.transcript_dir).mkdir(parents=True, exist_ok=True)
        transcript = Path(config.transcript_dir) / f"{task.name}_{setting}_{trial}.jsonl"
        backend = RecordingBackend(backend, transcript, record_latency=config.backend == "remote")
        backend.episode = f"{task.name}/{setting}/{trial}"
    try:
        _, m = run_episode(scenario, ep, backend, task)
        row.update(m.to_dict())
    except Exception as exc:  # one broken trial must not sink the sweep
        row.update(
            task_success=False, subtask_completion_rate=0.0, initial_plan_length=None,
            simulated_time=None, status="error", iterations=0, reason=f"{type(exc).__name__}: {exc}",
        )
    finally:
        if transcript is not None:
            backend.close()
    row["transcript"] = str(transcript) if transcript else None
    return row


def run_bench(config: BenchConfig) -> BenchReport:
    jobs = [(get_task(t), s, k) for t in config.tasks for s in config.settings for k in range(config.trials)]
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            rows = list(pool.map(lambda j: run_trial(*j, config), jobs))
    else:
        rows = [run_trial(*j, config) for j in jobs]
    return BenchReport(config.to_dict(), rows, aggregate(rows))


def check_report(report: BenchReport) -> list[str]:
    """Differences between stored aggregates and those recomputed from the rows."""
    fresh = aggregate(report.rows)
    if fresh == report.aggregates:
        return []
    return [f"aggregate mismatch for {a['task']}/{a['setting']}" for a, b in zip(fresh, report.aggregates) if a != b] or [
        "aggregate count mismatch"
    ]


def _fmt(value: Any, pct: bool = False) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NaN"
    if pct:
        return f"{100 * value:.2f}%"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def render_table(report: BenchReport) -> str:
    rows = [list(TABLE_COLUMNS)]
    for a in report.aggregates:
        rows.append(
            [
                a["task"],
                a["setting"],
                _fmt(a["task_success_rate"], pct=True),
                _fmt(a["subtask_completion_rate"], pct=True),
                _fmt(a["time"]),
                _fmt(a["plan_length"]),
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(TABLE_COLUMNS))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def emit_report(report: BenchReport, out_dir: str | Path) -> tuple[Path, Path]:
    problems = check_report(report)
    if problems:
        raise ValueError("; ".join(problems))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    js, txt = out / "report.json", out / "report.txt"
    js.write_text(report.to_json())
    txt.write_text(render_table(report))
    return js, txt


def load_report(path: str | Path) -> BenchReport:
    return BenchReport.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# Deterministic plan simulation and the reflect-success harness
# --------------------------------------------------------------------------


@dataclass
class Simulation:
    feasible: bool
    makespan: float
    problems: list[str]
    world: WorldState | None


def simulate_plan(plan: Plan, scenario: Scenario) -> Simulation:
    """Run ``plan`` with every primitive succeeding.

    Inside a layer a robot whose target station is taken waits for the
    other robots first. Stops at the first infeasible primitive.
    """
    problems = validate(plan, scenario)
    if problems:
        return Simulation(False, 0.0, problems, None)
    world = load_scenario(replace(scenario, primitive_success_prob={k: 1.0 for k in PRIMITIVE_KINDS}))
    for layer in layers(plan):
        start, spent = world.clock, {s.robot: 0.0 for s in layer}
        pending = list(layer)
        while pending:
            s = next((x for x in pending if check_preconditions(world, x.primitive).passed), pending[0])
            pending.remove(s)
            v = check_preconditions(world, s.primitive)
            if not v.passed:
                return Simulation(False, world.clock, [f"{s.id} {s.describe()}: {v.reason}"], world)
            world.clock = start + spent[s.robot]
            world, _ = apply_draw(world, s.primitive, 0.0)
            spent[s.robot] = world.clock - start
        world.clock = start + max(spent.values())
    return Simulation(True, world.clock, [], world)


class EchoPlanner(Reasoner):
    """Planner that hands back the previous plan untouched."""

    backend_id = "echo"

    def __init__(self) -> None:
        self.calls = 0

    def handle(self, req: ReasonerRequest) -> Any:
        if req.kind != "Decompose" or not req.previous_plan:
            raise ReasonerError("echo planner only answers Decompose requests that carry a previous plan")
        return Plan.from_dict(req.previous_plan)


@dataclass(frozen=True)
class ReflectResult:
    rate: float
    scored: int
    unscored: int
    trials: list[dict[str, Any]]


def reflect_request(task: TaskSpec, trial_seed: int, robot_count: int = 1) -> tuple[ReasonerRequest, Scenario]:
    """First-iteration material for one trial: the flawed plan and the reflections it produced.

    The flawed iteration always runs single-robot, like a first attempt
    that has not yet learned; the follow-up request asks for ``robot_count``.
    """
    scenario = instantiate_task(task, trial_seed, max(robot_count, 1))
    oracle = OracleReasoner("naive")
    db = ReflectionDB()
    trace, _ = run_episode(
        replace(scenario, robots=scenario.robots[:1]), EpisodeConfig("CC", seed=trial_seed), oracle, task, db
    )
    first = Plan.from_dict(trace.of("plan")[0]["plan"])
    registry = explore(load_scenario(scenario), [r.id for r in scenario.robots[:robot_count]], oracle.propose_items(task.instruction)).registry
    req = ReasonerRequest(
        "Decompose",
        instruction=task.instruction,
        registry=registry.snapshot(),
        reflections=db.for_prompt(),
        previous_plan=first.to_dict(),
        robot_count=robot_count,
        robots=tuple((r.id, r.home) for r in scenario.robots[:robot_count]),
        iteration=2,
    )
    return req, scenario


def reflect_success_rate(
    task: TaskSpec | str, backend: Reasoner, trials: int = 5, robot_count: int = 1, base_seed: int = 0
) -> ReflectResult:
    """Share of trials where ``backend`` turns the reflections into a correct, reference-length plan."""
    task = get_task(task) if isinstance(task, str) else task
    target = task.reference_length[robot_count]
    rows, wins, unscored = [], 0, 0
    for k in range(trials):
        seed = base_seed ^ k
        req, scenario = reflect_request(task, seed, robot_count)
        row: dict[str, Any] = {"trial": k, "seed": seed}
        try:
            plan = backend.ask(req)
        except ReasonerError as exc:
            unscored += 1
            row.update(scored=False, reason=str(exc))
            rows.append(row)
            continue
        sim = simulate_plan(plan, scenario)
        reached = sim.feasible and sim.world is not None and holds(sim.world, task_goal(task, scenario))
        length = plan_length(plan) if sim.world is not None else None
        ok = reached and length == target
        wins += ok
        row.update(scored=True, success=ok, length=length, problems=sim.problems)
        rows.append(row)
    scored = trials - unscored
    return ReflectResult(wins / scored if scored else 0.0, scored, unscored, rows)
