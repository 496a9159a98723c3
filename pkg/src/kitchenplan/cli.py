"""Command line entry point: ``kitchenplan run|bench|reflect-bench|replay|inspect``."""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from typing import Any, Sequence

from .bench import BenchConfig, emit_report, make_backend, reflect_success_rate, render_table, run_bench, success_profile
from .loop import SETTINGS, EpisodeConfig, EpisodeTrace, ReflectionDB, run_episode
from .plan import Plan, render_layers
from .reasoning.base import ReasonerError
from .reasoning.transcript import RecordingBackend, ReplayBackend
from .tasks import TASK_NAMES, get_task, instantiate_task

EXIT_CODES = {"success": 0, "plan-failure": 1, "blind-failure": 2, "backend-abort": 3}
EXIT_DIVERGED = 4


def _episode(meta: dict[str, Any], backend: Any, args: argparse.Namespace) -> int:
    task = get_task(meta["task"])
    config = EpisodeConfig.for_setting(
        meta["setting"],
        seed=meta["seed"],
        max_iterations=meta["max_iterations"],
        max_retries=meta["max_retries"],
        **({"robot_count": meta["robots"]} if meta.get("robots") else {}),
    )
    scenario = instantiate_task(task, meta["seed"], config.robot_count)
    profile = success_profile(meta.get("success_prob"))
    if profile:
        scenario = scenario.with_success_prob(profile)
    db = ReflectionDB()
    trace, metrics = run_episode(scenario, config, backend, task, db)
    if getattr(args, "trace", None):
        trace.write(args.trace)
    if getattr(args, "reflections", None):
        db.save(args.reflections)
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return EXIT_CODES[metrics.status]


def cmd_run(args: argparse.Namespace) -> int:
    meta = {
        "task": args.task,
        "setting": args.setting,
        "seed": args.seed,
        "max_iterations": args.max_iterations,
        "max_retries": args.max_retries,
        "success_prob": args.success_prob,
        "robots": args.robots,
    }
    backend = make_backend(args.backend)
    if args.transcript:
        with RecordingBackend(backend, args.transcript, record_latency=args.backend == "remote", meta=meta) as rec:
            return _episode(meta, rec, args)
    return _episode(meta, backend, args)


def cmd_replay(args: argparse.Namespace) -> int:
    backend = ReplayBackend(args.transcript)
    if not backend.meta:
        print("transcript has no episode metadata; record it with `kitchenplan run --transcript`", file=sys.stderr)
        return 2
    try:
        code = _episode(backend.meta, backend, args)
    except ReasonerError as exc:
        print(f"replay diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    if not backend.exhausted:
        print(f"replay finished with {len(backend.entries) - backend.position} unused entries", file=sys.stderr)
        return EXIT_DIVERGED
    return code


def cmd_bench(args: argparse.Namespace) -> int:
    config = BenchConfig.load(args.config) if args.config else BenchConfig()
    report = run_bench(config)
    emit_report(report, args.out)
    sys.stdout.write(render_table(report))
    return 0


def cmd_reflect_bench(args: argparse.Namespace) -> int:
    result = reflect_success_rate(args.task, make_backend(args.backend), args.trials, args.robots, args.seed)
    print(json.dumps({"task": args.task, "rate": result.rate, "scored": result.scored, "unscored": result.unscored}))
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    if args.reflections:
        for r in ReflectionDB.load(args.reflections).entries:
            s = r.subtask
            print(f"[iter {r.iteration}] {s.get('verb')}({', '.join(s.get('args', []))}): {r.cause}")
        return 0
    trace = EpisodeTrace.read(args.trace)
    counts = Counter(e["event"] for e in trace.events)
    print(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    for e in trace.of("plan"):
        print(f"\niteration {e['iteration']} initial plan")
        print(render_layers(Plan.from_dict(e["plan"])))
    for e in trace.of("iteration_end"):
        print(f"iteration {e['iteration']}: {e['status']} ({e['done']}/{e['total']} subtasks, length {e['length']})")
    final = trace.of("final")
    if final:
        print(f"final: {final[-1]['status']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kitchenplan", description="Multi-robot kitchen planning with checks and reflection.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode")
    run.add_argument("--task", choices=TASK_NAMES, required=True)
    run.add_argument("--setting", choices=SETTINGS, default="REMAC")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--backend", default="oracle", help="oracle, oracle:<mode>, remote or replay:<path>")
    run.add_argument("--max-iterations", type=int, default=3)
    run.add_argument("--max-retries", type=int, default=2)
    run.add_argument("--success-prob", type=float, default=None, help="success probability of non-navigation primitives")
    run.add_argument("--robots", type=int, default=None, help="robot count (REMAC only; default 2)")
    run.add_argument("--trace", help="write the event log (JSON lines) here")
    run.add_argument("--reflections", help="write the reflection memory (JSON) here")
    run.add_argument("--transcript", help="record reasoner exchanges (JSON lines) here")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="sweep tasks x settings x trials")
    bench.add_argument("--config", help="BenchConfig JSON file (defaults: all tasks and settings, 10 trials)")
    bench.add_argument("--out", default="bench_out")
    bench.set_defaults(func=cmd_bench)

    rb = sub.add_parser("reflect-bench", help="score how well a planner uses reflections")
    rb.add_argument("--task", choices=TASK_NAMES, required=True)
    rb.add_argument("--backend", default="oracle")
    rb.add_argument("--trials", type=int, default=5)
    rb.add_argument("--robots", type=int, choices=(1, 2), default=1)
    rb.add_argument("--seed", type=int, default=0)
    rb.set_defaults(func=cmd_reflect_bench)

    rp = sub.add_parser("replay", help="rerun a recorded episode from its transcript")
    rp.add_argument("--transcript", required=True)
    rp.add_argument("--trace", help="write the replayed event log here")
    rp.set_defaults(func=cmd_replay)

    ins = sub.add_parser("inspect", help="summarize a trace or a reflection file")
    group = ins.add_mutually_exclusive_group(required=True)
    group.add_argument("--trace")
    group.add_argument("--reflections")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
