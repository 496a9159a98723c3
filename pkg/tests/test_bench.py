import json
from dataclasses import replace

import pytest

from kitchenplan.bench import (
    TABLE_COLUMNS,
    BenchConfig,
    BenchReport,
    EchoPlanner,
    aggregate,
    check_report,
    emit_report,
    load_report,
    make_backend,
    reflect_success_rate,
    render_table,
    run_bench,
    simulate_plan,
)
from kitchenplan.reasoning import OracleReasoner, RecordingBackend, ReplayBackend
from kitchenplan.reasoning.base import Reasoner, TransportError
from kitchenplan.tasks import canonical_plan, get_task, instantiate_task, naive_plan


def test_single_trial_single_cell():
    report = run_bench(BenchConfig(tasks=("OpenCabinetPnP",), settings=("RE",), trials=1))
    assert len(report.rows) == 1
    assert report.aggregates[0]["trials"] == 1
    assert report.rows[0]["seed"] == 0


def test_trial_seeds_xor_base_seed():
    report = run_bench(BenchConfig(tasks=("OpenCabinetPnP",), settings=("CC",), trials=3, base_seed=5))
    assert [r["seed"] for r in report.rows] == [5, 4, 7]


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        BenchConfig(trials=0)
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"tasks": ["HeatOnStove"], "trials": 2}))
    assert BenchConfig.load(path) == BenchConfig(tasks=("HeatOnStove",), trials=2)
    path.write_text(json.dumps({"trails": 2}))
    with pytest.raises(ValueError):
        BenchConfig.load(path)


def test_failed_base_row_renders_nan():
    report = run_bench(BenchConfig(tasks=("OpenMicrowavePnP",), settings=("BASE",), trials=2))
    line = render_table(report).splitlines()[1].split()
    assert line[:3] == ["OpenMicrowavePnP", "BASE", "0.00%"]
    assert line[-2:] == ["NaN", "NaN"]


def test_empty_report_is_header_only():
    text = render_table(BenchReport({}, [], []))
    assert text.splitlines() == ["  ".join(TABLE_COLUMNS)]


def test_json_reingest_keeps_aggregates(tmp_path):
    report = run_bench(BenchConfig(tasks=("DefrostInBowl",), settings=("CC", "REMAC"), trials=2))
    js, txt = emit_report(report, tmp_path)
    back = load_report(js)
    assert back.aggregates == report.aggregates
    assert check_report(back) == []
    assert txt.read_text() == render_table(report)


def test_tampered_report_is_refused(tmp_path):
    report = run_bench(BenchConfig(tasks=("DefrostInBowl",), settings=("CC",), trials=1))
    bad = BenchReport(report.config, report.rows, [dict(report.aggregates[0], task_success_rate=0.5)])
    assert check_report(bad)
    with pytest.raises(ValueError):
        emit_report(bad, tmp_path)


def test_aggregate_means_over_successes_only():
    rows = [
        {"task": "T", "setting": "CC", "task_success": True, "subtask_completion_rate": 1.0,
         "simulated_time": 10.0, "initial_plan_length": 8, "status": "success"},
        {"task": "T", "setting": "CC", "task_success": True, "subtask_completion_rate": 1.0,
         "simulated_time": 12.0, "initial_plan_length": 9, "status": "success"},
        {"task": "T", "setting": "CC", "task_success": False, "subtask_completion_rate": 0.5,
         "simulated_time": None, "initial_plan_length": None, "status": "plan-failure"},
    ]
    (a,) = aggregate(rows)
    assert a["task_success_rate"] == 2 / 3
    assert a["subtask_completion_rate"] == 2.5 / 3
    assert (a["time"], a["plan_length"]) == (11.0, 8.5)


def test_sweep_report_is_byte_identical():
    config = BenchConfig(tasks=("HeatOnStove",), trials=3, success_prob=0.8)
    assert run_bench(config).to_json() == run_bench(config).to_json()


def test_parallel_trials_do_not_change_results():
    config = BenchConfig(tasks=("HeatOnStove",), trials=3, success_prob=0.8)
    a, b = run_bench(config), run_bench(replace(config, workers=4))
    assert (a.rows, a.aggregates) == (b.rows, b.aggregates)


class BrokenBackend(Reasoner):
    backend_id = "broken"

    def handle(self, req):
        raise RuntimeError("backend bug")


def test_broken_trial_is_recorded_not_raised(monkeypatch):
    monkeypatch.setattr("kitchenplan.bench.make_backend", lambda name: BrokenBackend())
    report = run_bench(BenchConfig(tasks=("OpenCabinetPnP",), settings=("CC",), trials=1))
    assert report.rows[0]["status"] == "error"
    assert report.aggregates[0]["aborted"] == 1


def test_transcripts_are_referenced(tmp_path):
    report = run_bench(BenchConfig(tasks=("OpenCabinetPnP",), settings=("RE",), trials=1, transcript_dir=str(tmp_path)))
    path = report.rows[0]["transcript"]
    assert path and (tmp_path / "OpenCabinetPnP_RE_0.jsonl").exists()


def test_unknown_backend():
    with pytest.raises(ValueError):
        make_backend("psychic")
    with pytest.raises(ValueError):
        make_backend("oracle:nosuchmode")


# -- plan simulation -------------------------------------------------------


def test_simulation_reports_first_infeasible_step():
    task = get_task("HeatOnStove")
    sc = instantiate_task(task, 0)
    sim = simulate_plan(naive_plan(task, sc), sc)
    assert not sim.feasible
    assert "container" in sim.problems[0]


def test_simulation_of_canonical_plan_matches_makespan():
    task = get_task("OpenMicrowavePnP")
    sc = instantiate_task(task, 0, 2)
    sim = simulate_plan(canonical_plan(task, 2, sc), sc)
    # layers: navigate | pick vs open | navigate | place_and_start
    assert sim.feasible and sim.makespan == 2.0 + 1.5 + 2.0 + 2.0


# -- reflect-success harness -----------------------------------------------


@pytest.mark.parametrize("robots", [1, 2])
def test_reflective_oracle_scores_one(robots):
    assert reflect_success_rate("DefrostInBowl", OracleReasoner("reflective"), 3, robots).rate == 1.0


def test_echo_planner_scores_zero():
    result = reflect_success_rate("OpenMicrowavePnP", EchoPlanner(), 3)
    assert result.rate == 0.0 and result.scored == 3


class DeadBackend(Reasoner):
    backend_id = "dead"

    def handle(self, req):
        raise TransportError("endpoint answered 503")


def test_transport_failures_are_unscored():
    result = reflect_success_rate("OpenCabinetPnP", DeadBackend(), 2)
    assert (result.scored, result.unscored) == (0, 2)


def test_reflect_rate_replays(tmp_path):
    path = tmp_path / "rb.jsonl"
    with RecordingBackend(OracleReasoner(), path, record_latency=False) as rec:
        live = reflect_success_rate("HeatOnStove", rec, 3)
    again = reflect_success_rate("HeatOnStove", ReplayBackend(path), 3)
    assert again.rate == live.rate
    assert again.trials == live.trials
