import pytest

from kitchenplan.bench import success_profile
from kitchenplan.loop import (
    EpisodeConfig,
    EpisodeTrace,
    ReflectionDB,
    compute_metrics,
    run_episode,
    trace_violations,
    world_reset_for_iteration,
)
from kitchenplan.reasoning import OracleReasoner
from kitchenplan.reasoning.base import Reasoner, Reflection, TransportError
from kitchenplan.tasks import get_task, instantiate_task


def episode(name, setting, seed=0, backend=None, db=None, prob=None, **kw):
    task = get_task(name)
    config = EpisodeConfig.for_setting(setting, seed=seed, **kw)
    sc = instantiate_task(task, seed, config.robot_count)
    if prob is not None:
        sc = sc.with_success_prob(success_profile(prob))
    return run_episode(sc, config, backend or OracleReasoner(), task, db)


def test_setting_configs():
    assert not EpisodeConfig.for_setting("BASE").checks
    assert EpisodeConfig.for_setting("CC").iterations == 1
    assert EpisodeConfig.for_setting("RE").iterations == 3
    assert EpisodeConfig.for_setting("REMAC").robot_count == 2
    with pytest.raises(ValueError):
        EpisodeConfig("REMAC", robot_count=1)
    with pytest.raises(ValueError):
        EpisodeConfig("RE", robot_count=2)
    with pytest.raises(ValueError):
        EpisodeConfig("CC", max_iterations=0)


def test_base_fails_blind_on_microwave():
    trace, m = episode("OpenMicrowavePnP", "BASE")
    assert m.status == "blind-failure"
    assert not m.task_success
    assert m.simulated_time is None and m.initial_plan_length is None
    assert trace.of("skip")
    assert not trace.of("precheck")


def test_cc_recovers_with_redundant_steps():
    trace, m = episode("OpenMicrowavePnP", "CC")
    assert m.task_success and m.iterations == 1
    assert [e["code"] for e in trace.of("reflection")] == ["DOOR_CLOSED", "GRIPPER_FULL"]
    assert m.initial_plan_length > 6


@pytest.mark.parametrize("setting, length", [("RE", 6), ("REMAC", 4)])
def test_evolution_reaches_reference_length(setting, length):
    trace, m = episode("OpenMicrowavePnP", setting)
    assert m.task_success
    assert m.initial_plan_length == length
    assert m.subtask_completion_rate == 1.0
    assert len(trace.of("decompose")) >= 2


def test_second_iteration_sees_first_iteration_reflections():
    trace, _ = episode("DefrostInBowl", "RE")
    reqs = trace.of("decompose")
    assert reqs[0]["reflections"] == 0
    assert reqs[1]["reflections"] >= 1


def test_single_iteration_re_behaves_like_cc():
    _, re1 = episode("HeatOnStove", "RE", max_iterations=1)
    _, cc = episode("HeatOnStove", "CC")
    assert re1.to_dict() == cc.to_dict()


def test_reflection_db_survives_reset():
    db = ReflectionDB()
    task = get_task("OpenCabinetPnP")
    sc = instantiate_task(task, 2)
    run_episode(sc, EpisodeConfig.for_setting("RE", seed=2), OracleReasoner(), task, db)
    size = len(db)
    assert size >= 1
    fresh = world_reset_for_iteration(sc)
    assert fresh.fixtures["cabinet"].door == "closed"
    assert len(db) == size


def test_reflection_db_roundtrip(tmp_path):
    db = ReflectionDB([Reflection(1, {"verb": "place", "args": ["a", "b"]}, "open b first", "DOOR_CLOSED")])
    db.append(Reflection(2, {"verb": "place", "args": ["a", "b"]}, "open b first", "DOOR_CLOSED"))
    db.save(tmp_path / "r.json")
    back = ReflectionDB.load(tmp_path / "r.json")
    assert back.entries == db.entries
    assert len(back.for_prompt()) == 1  # identical verb, args and cause collapse


def find_retry_episode():
    for seed in range(100):
        trace, m = episode("OpenMicrowavePnP", "CC", seed=seed, prob=0.8)
        if trace.of("retry") and m.task_success:
            return trace
    raise AssertionError("no seed in range produced a retry")


def test_failed_place_is_rechecked_then_retried():
    trace = find_retry_episode()
    events = trace.events
    i = next(k for k, e in enumerate(events) if e["event"] == "retry")
    sid = events[i]["subtask"]
    before = [e for e in events[:i] if e.get("subtask") == sid]
    assert before[-1]["event"] == "precheck" and before[-1]["passed"]
    assert before[-2]["event"] == "postcheck" and not before[-2]["passed"]
    assert trace_violations(trace, 2) == []


def test_no_retries_turns_postcheck_failure_into_plan_failure():
    for seed in range(100):
        trace, m = episode("HeatOnStove", "CC", seed=seed, prob=0.8, max_retries=0)
        if any(not e["passed"] for e in trace.of("postcheck")):
            assert m.status == "plan-failure"
            assert not trace.of("retry")
            return
    raise AssertionError("no post-check failure in range")


def test_metrics_from_partial_iteration():
    trace = EpisodeTrace()
    trace.emit("iteration_end", 10.0, iteration=1, status="plan-failure", done=4, total=6, length=6,
               makespan=10.0, precheck_failures=0, exploration_time=2.0)
    trace.emit("final", 10.0, status="plan-failure")
    m = compute_metrics(trace)
    assert round(m.subtask_completion_rate * 100, 2) == 66.67
    assert m.initial_plan_length is None and m.simulated_time is None


def test_metrics_time_is_exploration_plus_makespan():
    trace = EpisodeTrace()
    trace.emit("iteration_end", 0.0, iteration=1, status="success", done=6, total=6, length=6,
               makespan=10.0, precheck_failures=0, exploration_time=4.0)
    trace.emit("final", 0.0, status="success")
    m = compute_metrics(trace)
    assert (m.task_success, m.initial_plan_length, m.simulated_time) == (True, 6, 14.0)


def test_trace_roundtrip(tmp_path):
    trace, _ = episode("DefrostInBowl", "REMAC")
    trace.write(tmp_path / "t.jsonl")
    back = EpisodeTrace.read(tmp_path / "t.jsonl")
    assert back.to_jsonl() == trace.to_jsonl()
    assert compute_metrics(back) == compute_metrics(trace)


def test_trace_sequence_and_causality():
    trace, _ = episode("HeatOnStove", "REMAC", prob=0.8, seed=4)
    assert [e["seq"] for e in trace.events] == list(range(len(trace.events)))
    assert trace_violations(trace, 2) == []
    last_primitive = {}
    for e in trace.events:
        if e["event"] == "primitive":
            last_primitive[e["subtask"]] = e["seq"]
        if e["event"] == "postcheck":
            assert e["subtask"] in last_primitive


class FlakyBackend(Reasoner):
    backend_id = "flaky"

    def __init__(self, failures):
        self.inner = OracleReasoner()
        self.failures = failures
        self.calls = 0

    def handle(self, req):
        if self.failures:
            self.failures -= 1
            raise TransportError("endpoint answered 503")
        return self.inner.ask(req)


def test_transient_transport_errors_are_retried():
    _, m = episode("OpenCabinetPnP", "CC", backend=FlakyBackend(2))
    assert m.status == "success"


def test_persistent_transport_errors_abort():
    trace, m = episode("OpenCabinetPnP", "CC", backend=FlakyBackend(10**6))
    assert m.status == "backend-abort"
    assert trace.of("final")[-1]["status"] == "backend-abort"


def test_identical_seeds_give_identical_traces():
    a, _ = episode("HeatOnStove", "REMAC", seed=9, prob=0.8)
    b, _ = episode("HeatOnStove", "REMAC", seed=9, prob=0.8)
    assert a.to_jsonl() == b.to_jsonl()
