"""Check-execute-reflect executor and the outer self-improvement iterations."""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

from .perception import ItemRegistry, explore, observe
from .plan import Plan, PlanError, Subtask, plan_length, splice_replan, validate
from .reasoning.base import PlanParseError, Reasoner, ReasonerRequest, Reflection, TransportError
from .tasks import TaskSpec, task_goal
from .world import Predicate, Scenario, Verdict, WorldState, apply_draw, check_preconditions, holds, load_scenario

SETTINGS = ("BASE", "CC", "RE", "REMAC")
STATUSES = ("success", "plan-failure", "blind-failure", "backend-abort")


@dataclass(frozen=True)
class EpisodeConfig:
    setting: str
    max_retries: int = 2
    max_iterations: int = 3
    robot_count: int = 1
    seed: int = 0
    replan_budget: int = 5
    transport_retries: int = 2
    # keep the end state of one iteration as the start of the next
    continue_mode: bool = False
    early_stop: bool = True

    def __post_init__(self) -> None:
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}")
        if self.max_retries < 0 or self.max_iterations < 1 or self.replan_budget < 0:
            raise ValueError("max_retries >= 0, max_iterations >= 1 and replan_budget >= 0 required")
        if self.setting == "REMAC" and self.robot_count < 2:
            raise ValueError("REMAC needs at least two robots")
        if self.setting != "REMAC" and self.robot_count != 1:
            raise ValueError(f"{self.setting} runs a single robot")

    @classmethod
    def for_setting(cls, setting: str, **kw: Any) -> EpisodeConfig:
        kw.setdefault("robot_count", 2 if setting == "REMAC" else 1)
        return cls(setting, **kw)

    @property
    def checks(self) -> bool:
        return self.setting != "BASE"

    @property
    def iterations(self) -> int:
        return self.max_iterations if self.setting in ("RE", "REMAC") else 1


class BackendAbort(RuntimeError):
    pass


class ReflectionDB:
    """Append-only reflection memory that outlives iteration resets."""

    def __init__(self, entries: Iterable[Reflection] = ()):
        self._entries: list[Reflection] = list(entries)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[Reflection, ...]:
        return tuple(self._entries)

    def append(self, r: Reflection) -> None:
        self._entries.append(r)

    def for_prompt(self) -> tuple[dict[str, Any], ...]:
        """Entries with duplicate (verb, args, cause) collapsed, first occurrence kept."""
        seen: set[tuple] = set()
        out = []
        for r in self._entries:
            if r.key() not in seen:
                seen.add(r.key())
                out.append(r.to_dict())
        return tuple(out)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps([r.to_dict() for r in self._entries], indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> ReflectionDB:
        return cls(Reflection.from_dict(d) for d in json.loads(Path(path).read_text()))


class EpisodeTrace:
    """Ordered event log; every event carries a sequence number and a simulated timestamp."""

    def __init__(self, events: Iterable[dict[str, Any]] = ()):
        self.events: list[dict[str, Any]] = list(events)

    def emit(self, kind: str, t: float, **data: Any) -> int:
        self.events.append({"seq": len(self.events), "t": round(t, 6), "event": kind, **data})
        return len(self.events) - 1

    def of(self, kind: str) -> list[dict[str, Any]]:
        return [e for e in self.events if e["event"] == kind]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> EpisodeTrace:
        return cls(json.loads(line) for line in Path(path).read_text().splitlines() if line.strip())


@dataclass(frozen=True)
class EpisodeMetrics:
    task_success: bool
    subtask_completion_rate: float
    initial_plan_length: int | None
    simulated_time: float | None
    status: str = "success"
    iterations: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_success": self.task_success,
            "subtask_completion_rate": self.subtask_completion_rate,
            "initial_plan_length": self.initial_plan_length,
            "simulated_time": self.simulated_time,
            "status": self.status,
            "iterations": self.iterations,
        }


@dataclass
class IterationOutcome:
    status: str
    initial_plan: Plan
    plan: Plan  # as executed, including spliced repairs
    makespan: float
    precheck_failures: int = 0
    reason: str = ""


@dataclass
class _Context:
    scenario: Scenario
    config: EpisodeConfig
    backend: Reasoner
    db: ReflectionDB
    trace: EpisodeTrace
    instruction: str
    registry: ItemRegistry
    robots: tuple[tuple[str, str], ...]
    goal: Predicate
    iteration: int = 1
    offset: float = 0.0
    rng: random.Random = field(default_factory=random.Random)

    def ask(self, req: ReasonerRequest) -> Any:
        last: Exception | None = None
        for _ in range(self.config.transport_retries + 1):
            try:
                return self.backend.ask(req)
            except (TransportError, PlanParseError) as exc:
                last = exc
        raise BackendAbort(f"{req.kind}: {last}")


def world_reset_for_iteration(scenario: Scenario) -> WorldState:
    return load_scenario(scenario)


def _ready(plan: Plan) -> list[Subtask]:
    """Next layer of the remaining plan: one ready subtask per robot, lowest index first."""
    finished = {s.id for s in plan.subtasks if s.status in ("done", "failed")}
    layer: dict[str, Subtask] = {}
    for s in plan.remaining():
        if s.robot not in layer and s.deps <= finished:
            layer[s.robot] = s
    return [layer[r] for r in sorted(layer)]


def _sub_event(s: Subtask) -> dict[str, Any]:
    return {"subtask": s.id, "robot": s.robot, "verb": s.verb, "args": list(s.args)}


def run_iteration(world: WorldState, ctx: _Context, plan: Plan) -> tuple[WorldState, IterationOutcome]:
    """Execute ``plan`` layer by layer; returns the end world and the outcome."""
    cfg, trace = ctx.config, ctx.trace
    current = plan
    retries: Counter[str] = Counter()
    replans = 0
    pre_failures = 0
    start = world.clock

    def now() -> float:
        return ctx.offset + world.clock

    def precheck(s: Subtask) -> tuple[Verdict, int, dict[str, Any]]:
        obs = observe(world, s.robot).to_dict()
        req = ReasonerRequest("PreCheck", observation=obs, subtask=s.to_dict(), iteration=ctx.iteration)
        v: Verdict = ctx.ask(req)
        idx = trace.emit("precheck", now(), **_sub_event(s), passed=v.passed, reason=v.reason, code=v.code)
        return v, idx, obs

    def repair(s: Subtask, v: Verdict, idx: int, obs: dict[str, Any]) -> str | None:
        """Reflect on a failed pre-check and splice a new suffix; returns a failure reason or None."""
        nonlocal current, replans, pre_failures
        pre_failures += 1
        if replans >= cfg.replan_budget:
            return "replan budget exhausted"
        req = ReasonerRequest(
            "Reflect", observation=obs, subtask=s.to_dict(), verdict=v.to_dict(), iteration=ctx.iteration
        )
        r: Reflection = ctx.ask(req)
        r = replace(r, iteration=ctx.iteration, observation_ref=idx, created_at=round(now(), 6))
        ctx.db.append(r)
        trace.emit("reflection", now(), **_sub_event(s), cause=r.cause, code=r.code, db_size=len(ctx.db))
        req = ReasonerRequest(
            "Decompose",
            instruction=ctx.instruction,
            registry=ctx.registry.snapshot(),
            observation=obs,
            reflections=ctx.db.for_prompt(),
            previous_plan=current.to_dict(),
            robot_count=cfg.robot_count,
            robots=ctx.robots,
            failed_subtask=s.id,
            iteration=ctx.iteration,
        )
        suffix: Plan = ctx.ask(req)
        try:
            current = splice_replan(current, s.id, suffix.subtasks, ctx.scenario)
        except PlanError as exc:
            trace.emit("replan_rejected", now(), failed_subtask=s.id, violations=exc.violations)
            return f"replan rejected: {exc}"
        replans += 1
        trace.emit("replan", now(), failed_subtask=s.id, plan=current.to_dict())
        return None

    def execute(s: Subtask) -> None:
        nonlocal world
        p = s.primitive
        truth = check_preconditions(world, p)
        if not truth.passed:
            # the checker passed something infeasible, or checks are off
            trace.emit("skip", now(), **_sub_event(s), reason=truth.reason)
            return
        world, out = apply_draw(world, p, ctx.rng.random())
        trace.emit("primitive", now(), **_sub_event(s), **out.to_dict())

    def finish(status: str, reason: str = "") -> tuple[WorldState, IterationOutcome]:
        return world, IterationOutcome(status, plan, current, world.clock - start, pre_failures, reason)

    while current.remaining():
        layer = _ready(current)
        if not layer:
            return finish("plan-failure", "no runnable subtask")
        layer_start = world.clock
        spent = {s.robot: 0.0 for s in layer}
        pending = list(layer)
        while pending:
            # run first whichever subtask can start now (a robot may be waiting for a station to clear)
            s = next((x for x in pending if check_preconditions(world, x.primitive).passed), pending[0])
            pending.remove(s)
            world.clock = layer_start + spent[s.robot]

            if not cfg.checks:
                execute(s)
                ok = holds(world, s.goal)
                current = current.with_status(s.id, "done" if ok else "failed")
                spent[s.robot] = world.clock - layer_start
                continue

            v, idx, obs = precheck(s)
            if not v.passed:
                spent[s.robot] = world.clock - layer_start
                why = repair(s, v, idx, obs)
                if why:
                    world.clock = layer_start + max(spent.values())
                    return finish("plan-failure", why)
                break  # plan changed: recompute the layer
            replanned = False
            while True:
                execute(s)
                obs = observe(world, s.robot).to_dict()
                post: Verdict = ctx.ask(
                    ReasonerRequest("PostCheck", observation=obs, subtask=s.to_dict(), iteration=ctx.iteration)
                )
                trace.emit("postcheck", now(), **_sub_event(s), passed=post.passed, reason=post.reason)
                if post.passed:
                    current = current.with_status(s.id, "done")
                    break
                if retries[s.id] >= cfg.max_retries:
                    current = current.with_status(s.id, "failed")
                    spent[s.robot] = world.clock - layer_start
                    world.clock = layer_start + max(spent.values())
                    return finish("plan-failure", f"{s.id} failed after {retries[s.id]} retries")
                v, idx, obs = precheck(s)
                if not v.passed:
                    spent[s.robot] = world.clock - layer_start
                    why = repair(s, v, idx, obs)
                    if why:
                        world.clock = layer_start + max(spent.values())
                        return finish("plan-failure", why)
                    replanned = True
                    break
                retries[s.id] += 1
                trace.emit("retry", now(), **_sub_event(s), attempt=retries[s.id])
            spent[s.robot] = world.clock - layer_start
            if replanned:
                break
        world.clock = layer_start + max(spent.values())

    if holds(world, ctx.goal):
        return finish("success")
    return finish("blind-failure" if not cfg.checks else "plan-failure", "task goal unmet")


def run_episode(
    scenario: Scenario,
    config: EpisodeConfig,
    backend: Reasoner,
    task: TaskSpec,
    db: ReflectionDB | None = None,
) -> tuple[EpisodeTrace, EpisodeMetrics]:
    """Explore, then plan and execute for up to ``config.iterations`` iterations.

    Later iterations see every stored reflection and the previous initial
    plan. Iterating continues past a success that still needed repairs and
    stops at the first iteration whose plan ran without any failed pre-check.
    """
    if len(scenario.robots) < config.robot_count:
        raise ValueError(f"scenario has {len(scenario.robots)} robots, config wants {config.robot_count}")
    trace = EpisodeTrace()
    db = db if db is not None else ReflectionDB()
    robots = tuple((r.id, r.home) for r in scenario.robots[: config.robot_count])
    ctx = _Context(
        scenario, config, backend, db, trace, task.instruction, ItemRegistry(), robots, task_goal(task, scenario)
    )
    trace.emit("episode", 0.0, setting=config.setting, seed=config.seed, robots=[r for r, _ in robots])

    try:
        proposed = ctx.ask(ReasonerRequest("ProposeItems", instruction=task.instruction))
        trace.emit("proposal", 0.0, items=list(proposed))
        found = explore(load_scenario(scenario), [r for r, _ in robots], proposed, early_stop=config.early_stop)
    except BackendAbort as exc:
        trace.emit("final", 0.0, status="backend-abort", reason=str(exc))
        return trace, compute_metrics(trace)
    nav = float(scenario.duration_table["navigate"])
    for rnd, robot, station in found.visits:
        trace.emit("explore", rnd * nav, robot=robot, station=station)
    ctx.registry = found.registry
    ctx.offset = found.time
    trace.emit("exploration_done", found.time, rounds=found.rounds, stopped_early=found.stopped_early, time=found.time)

    previous: Plan | None = None
    world = world_reset_for_iteration(scenario)
    for it in range(1, config.iterations + 1):
        ctx.iteration = it
        ctx.rng = random.Random(f"{config.seed}:{it}")
        if it > 1 and not config.continue_mode:
            world = world_reset_for_iteration(scenario)
        iter_start = ctx.offset
        world.clock = 0.0
        try:
            req = ReasonerRequest(
                "Decompose",
                instruction=task.instruction,
                registry=ctx.registry.snapshot(),
                reflections=db.for_prompt(),
                previous_plan=previous.to_dict() if previous else None,
                robot_count=config.robot_count,
                robots=robots,
                iteration=it,
            )
            trace.emit("decompose", iter_start, iteration=it, reflections=len(req.reflections))
            plan: Plan = ctx.ask(req)
            plan = replace(plan, iteration=it)
            violations = validate(plan, scenario)
            trace.emit("plan", iter_start, iteration=it, plan=plan.to_dict(), violations=violations)
            if violations:
                trace.emit(
                    "iteration_end", iter_start, iteration=it, status="plan-failure", reason="invalid plan",
                    done=0, total=len(plan), length=None, makespan=0.0, precheck_failures=0,
                )
                previous = plan
                continue
            world, out = run_iteration(world, ctx, plan)
        except BackendAbort as exc:
            trace.emit("final", ctx.offset, status="backend-abort", reason=str(exc))
            return trace, compute_metrics(trace)
        ctx.offset += world.clock
        trace.emit(
            "iteration_end",
            ctx.offset,
            iteration=it,
            status=out.status,
            reason=out.reason,
            done=len(out.plan.done()),
            total=len(out.plan),
            length=plan_length(out.plan),
            makespan=round(out.makespan, 6),
            precheck_failures=out.precheck_failures,
            exploration_time=found.time,
        )
        previous = plan
        if out.status == "success" and out.precheck_failures == 0:
            break
    ends = trace.of("iteration_end")
    best = [e for e in ends if e["status"] == "success"]
    final = best[-1] if best else ends[-1]
    trace.emit("final", ctx.offset, status=final["status"], iteration=final["iteration"], reflections=len(db))
    return trace, compute_metrics(trace)


def compute_metrics(trace: EpisodeTrace) -> EpisodeMetrics:
    """Metrics of the last successful iteration (or the last iteration if none succeeded)."""
    finals = trace.of("final")
    status = finals[-1]["status"] if finals else "plan-failure"
    ends = trace.of("iteration_end")
    if not ends:
        return EpisodeMetrics(False, 0.0, None, None, status, 0)
    best = [e for e in ends if e["status"] == "success"]
    e = best[-1] if best else ends[-1]
    rate = e["done"] / e["total"] if e["total"] else 0.0
    if e["status"] != "success":
        return EpisodeMetrics(False, rate, None, None, status, len(ends))
    time = e.get("exploration_time", 0.0) + e["makespan"]
    return EpisodeMetrics(True, rate, e["length"], round(time, 6), status, len(ends))


def trace_violations(trace: EpisodeTrace, max_retries: int) -> list[str]:
    """Check-loop ordering rules over one trace; empty means none broken.

    A reflection must directly follow a failed pre-check of the same subtask.
    A retry must follow a passing pre-check issued after the failed
    post-check. No subtask may retry more than ``max_retries`` times.
    """
    out: list[str] = []
    last: dict[str, dict[str, Any]] = {}
    post_failed: dict[str, bool] = {}
    counts: Counter[tuple[int, str]] = Counter()
    iteration = 0
    for e in trace.events:
        kind = e["event"]
        if kind == "decompose":
            iteration = e["iteration"]
            last.clear()
            post_failed.clear()
        sid = e.get("subtask")
        if kind == "reflection":
            prev = last.get(sid)
            if prev is None or prev["event"] != "precheck" or prev["passed"]:
                out.append(f"event {e['seq']}: reflection without a failed pre-check")
        elif kind == "retry":
            prev = last.get(sid)
            if not post_failed.get(sid) or prev is None or prev["event"] != "precheck" or not prev["passed"]:
                out.append(f"event {e['seq']}: retry without a fresh passing pre-check after a failed post-check")
            counts[(iteration, sid)] += 1
            if counts[(iteration, sid)] > max_retries:
                out.append(f"event {e['seq']}: {sid} retried more than {max_retries} times")
            post_failed[sid] = False
        elif kind == "postcheck":
            post_failed[sid] = not e["passed"]
        if kind in ("precheck", "postcheck", "primitive", "skip"):
            last[sid] = e
    return out
