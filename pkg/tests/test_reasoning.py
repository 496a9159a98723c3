import json

import httpx
import pytest
from conftest import CARROT, kitchen

from kitchenplan.perception import explore, observe
from kitchenplan.plan import Plan, make_subtask, plan_length
from kitchenplan.reasoning import OracleReasoner, RecordingBackend, ReplayBackend
from kitchenplan.reasoning.base import (
    PlanParseError,
    ReasonerRequest,
    RequestError,
    TransportError,
    decode_response,
    encode_response,
)
from kitchenplan.reasoning.remote import (
    EndpointConfig,
    RemoteReasoner,
    extract_json,
    render_prompt,
    template_hash,
)
from kitchenplan.reasoning.transcript import TranscriptDivergence, TranscriptExhausted
from kitchenplan.tasks import get_task, instantiate_task
from kitchenplan.world import Primitive, apply_draw, load_scenario

DOORS = ("microwave", "cabinet")
ROBOT = (("robot_a", "home_a"),)


def walk(state, *steps, robot="robot_a", draw=0.0):
    for kind, *args in steps:
        state, _ = apply_draw(state, Primitive(kind, robot, tuple(args)), draw)
    return state


def check(kind, state, verb, args, robot="robot_a", **kw):
    sub = make_subtask("t1", verb, robot, args, (), DOORS)
    return ReasonerRequest(kind, observation=observe(state, robot).to_dict(), subtask=sub.to_dict(), **kw)


def decompose_request(name, robots=1, seed=0, reflections=()):
    task = get_task(name)
    sc = instantiate_task(task, seed, robots)
    reg = explore(load_scenario(sc), [r.id for r in sc.robots], list(task.proposal)).registry
    return ReasonerRequest(
        "Decompose",
        instruction=task.instruction,
        registry=reg.snapshot(),
        reflections=tuple(reflections),
        robot_count=robots,
        robots=tuple((r.id, r.home) for r in sc.robots),
    )


# -- proposals -------------------------------------------------------------


@pytest.mark.parametrize(
    "text, items",
    [
        ("heat the vegetables", ["microwave or stove", "vegetable"]),
        ("defrost the fish", ["sink", "bowl", "fish"]),
        ("Defrost the fish ", ["sink", "bowl", "fish"]),
        ("juggle the plates", []),
    ],
)
def test_oracle_proposals(text, items):
    assert OracleReasoner().propose_items(text) == items


def test_empty_instruction_is_rejected():
    with pytest.raises(RequestError):
        OracleReasoner().propose_items("")


# -- checks ----------------------------------------------------------------


def test_precheck_place_into_closed_microwave():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"))
    v = OracleReasoner().precheck(check("PreCheck", state, "place", ["carrot", "microwave"]))
    assert not v.passed
    assert v.reason == "microwave door is closed"


def test_precheck_pick_visible_carrot_passes():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"))
    v = OracleReasoner().precheck(check("PreCheck", state, "pick", ["carrot"]))
    assert v.passed and v.reason == ""


def test_precheck_open_while_holding():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"))
    v = OracleReasoner().precheck(check("PreCheck", state, "open", ["microwave"]))
    assert not v.passed
    assert v.code == "GRIPPER_FULL"
    assert v.reason.startswith("gripper not empty")


def test_precheck_for_another_robot_is_refused():
    state = load_scenario(kitchen([CARROT], robots=2))
    req = ReasonerRequest(
        "PreCheck",
        observation=observe(state, "robot_a").to_dict(),
        subtask=make_subtask("t1", "navigate", "robot_b", ["counter"], (), DOORS).to_dict(),
    )
    assert OracleReasoner().precheck(req).code == "WRONG_ROBOT"


def test_postcheck_after_successful_place():
    state = load_scenario(kitchen([CARROT], doors={"microwave": "open"}))
    state = walk(state, ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"), ("place", "carrot", "microwave"))
    assert OracleReasoner().postcheck(check("PostCheck", state, "place", ["carrot", "microwave"])).passed


def test_postcheck_after_dropped_place():
    state = load_scenario(kitchen([CARROT], doors={"microwave": "open"}, primitive_success_prob={"place": 0.8}))
    state = walk(state, ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"))
    state = walk(state, ("place", "carrot", "microwave"), draw=0.99)
    v = OracleReasoner().postcheck(check("PostCheck", state, "place", ["carrot", "microwave"]))
    assert not v.passed
    assert v.reason == "object not in target"


def test_postcheck_after_open_cabinet():
    state = walk(load_scenario(kitchen([])), ("navigate", "cabinet"), ("open", "cabinet"))
    assert OracleReasoner().postcheck(check("PostCheck", state, "open", ["cabinet"])).passed


def test_postcheck_sees_food_behind_closed_door():
    state = load_scenario(kitchen([CARROT], doors={"microwave": "open"}))
    state = walk(state, ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"),
                 ("place_and_start", "carrot", "microwave"))
    assert OracleReasoner().postcheck(check("PostCheck", state, "place_and_start", ["carrot", "microwave"])).passed


# -- reflections -----------------------------------------------------------


def reflect_on(state, verb, args):
    oracle = OracleReasoner()
    v = oracle.precheck(check("PreCheck", state, verb, args))
    return oracle.reflect(check("Reflect", state, verb, args, verdict=v.to_dict()))


def test_reflection_for_closed_door():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"))
    r = reflect_on(state, "place", ["carrot", "microwave"])
    assert r.cause == "open the microwave door before any place into it"
    assert r.code == "DOOR_CLOSED"


def test_reflection_for_full_gripper():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"), ("pick", "carrot"), ("navigate", "microwave"))
    assert reflect_on(state, "open", ["microwave"]).cause == "free the gripper before opening doors"


def test_reflection_for_missing_container():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"), ("pick", "carrot"), ("navigate", "stove"))
    r = reflect_on(state, "place", ["carrot", "stove"])
    assert r.code == "NEEDS_CONTAINER" and "pan" in r.cause


def test_reflect_on_a_pass_is_rejected():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"))
    with pytest.raises(RequestError):
        OracleReasoner().reflect(check("Reflect", state, "pick", ["carrot"], verdict={"passed": True, "reason": ""}))


# -- decomposition ---------------------------------------------------------


def test_naive_microwave_plan_skips_the_door():
    plan = OracleReasoner("naive").decompose(decompose_request("OpenMicrowavePnP"))
    verbs = [s.verb for s in plan.subtasks]
    assert "open" not in verbs
    assert verbs[-1] == "place_and_start"


@pytest.mark.parametrize("robots, length", [(1, 6), (2, 4)])
def test_reflection_yields_canonical_microwave_plan(robots, length):
    reflection = {"cause": "open the microwave door before any place into it", "code": "DOOR_CLOSED"}
    plan = OracleReasoner().decompose(decompose_request("OpenMicrowavePnP", robots, reflections=[reflection]))
    assert plan_length(plan) == length


def test_adaptive_oracle_ignores_unrelated_reflections():
    reflection = {"cause": "navigate first", "code": "NOT_AT_STATION"}
    plan = OracleReasoner().decompose(decompose_request("DefrostInBowl", reflections=[reflection]))
    assert plan_length(plan) < 9


def test_oracle_replan_inserts_open_before_place():
    oracle = OracleReasoner()
    task = get_task("OpenMicrowavePnP")
    sc = instantiate_task(task, 0)
    req = decompose_request("OpenMicrowavePnP")
    plan = oracle.decompose(req)
    state = load_scenario(sc)
    for s in plan.subtasks[:3]:
        state, _ = apply_draw(state, s.primitive, 0.0)
        plan = plan.with_status(s.id, "done")
    failed = plan.subtasks[3]
    obs = observe(state, "robot_a").to_dict()
    v = oracle.precheck(ReasonerRequest("PreCheck", observation=obs, subtask=failed.to_dict()))
    r = oracle.reflect(ReasonerRequest("Reflect", observation=obs, subtask=failed.to_dict(), verdict=v.to_dict()))
    new = oracle.decompose(
        ReasonerRequest(
            "Decompose", instruction=task.instruction, registry=req.registry, observation=obs,
            reflections=(r.to_dict(),), previous_plan=plan.to_dict(), robots=ROBOT, failed_subtask=failed.id,
        )
    )
    assert [s.verb for s in new.subtasks] == ["open", "place_and_start"]
    assert new.subtasks[1].deps == frozenset({new.subtasks[0].id})


def test_oracle_is_deterministic():
    req = decompose_request("HeatOnStove", 2)
    assert OracleReasoner("reflective").decompose(req) == OracleReasoner("reflective").decompose(req)


def test_decompose_needs_registry():
    with pytest.raises(RequestError):
        OracleReasoner().decompose(ReasonerRequest("Decompose", instruction="defrost the fish"))


def test_response_codec_roundtrip():
    plan = OracleReasoner("reflective").decompose(decompose_request("DefrostInBowl"))
    assert decode_response("Decompose", json.loads(json.dumps(encode_response("Decompose", plan)))) == plan


# -- remote backend --------------------------------------------------------


def completion(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def remote(handler):
    return RemoteReasoner(EndpointConfig("http://model.test/v1", "m", "k"), httpx.MockTransport(handler))


def test_remote_request_shape_and_success():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.url.path == "/v1/chat/completions"
        assert request.headers["authorization"] == "Bearer k"
        return httpx.Response(200, json=completion('```json\n{"items": ["sink", "bowl"]}\n```'))

    assert remote(handler).propose_items("defrost the fish") == ["sink", "bowl"]
    body = seen[0]
    assert body["temperature"] == 0 and body["n"] == 1
    assert [m["role"] for m in body["messages"]] == ["system", "user"]


def test_remote_reprompts_then_parses():
    replies = iter(["no fence here", '```json\n{"items": []}\n```'])
    calls = []

    def handler(request):
        calls.append(json.loads(request.content))
        return httpx.Response(200, json=completion(next(replies)))

    assert remote(handler).propose_items("heat the vegetables") == []
    assert len(calls) == 2
    assert calls[1]["messages"][-1]["role"] == "user"


def test_remote_gives_up_after_two_reprompts():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(200, json=completion("I think you should open the door."))

    with pytest.raises(PlanParseError) as err:
        remote(handler).propose_items("heat the vegetables")
    assert len(calls) == 3
    assert "open the door" in err.value.raw


@pytest.mark.parametrize("status", [429, 500, 503])
def test_remote_transport_errors(status):
    with pytest.raises(TransportError):
        remote(lambda request: httpx.Response(status)).propose_items("heat the vegetables")


def test_remote_network_failure_is_transport_error():
    def handler(request):
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError):
        remote(handler).propose_items("heat the vegetables")


def test_remote_verdict_and_plan_parsing():
    state = walk(load_scenario(kitchen([CARROT])), ("navigate", "counter"))
    backend = remote(lambda r: httpx.Response(200, json=completion('```json\n{"passed": false, "reason": "door shut"}\n```')))
    v = backend.precheck(check("PreCheck", state, "pick", ["carrot"]))
    assert (v.passed, v.reason, v.code) == (False, "door shut", "MODEL")

    rows = [{"id": "t1", "verb": "navigate", "args": ["counter"], "robot": "robot_a", "deps": []}]
    backend = remote(lambda r: httpx.Response(200, json=completion("```json\n" + json.dumps({"subtasks": rows}) + "\n```")))
    plan = backend.decompose(decompose_request("OpenMicrowavePnP"))
    assert isinstance(plan, Plan) and plan.subtasks[0].args == ("counter",)


def test_two_fenced_blocks_is_a_parse_error():
    with pytest.raises(PlanParseError):
        extract_json('```json\n{}\n```\n```json\n{}\n```')


def test_prompts_embed_request_fields():
    text = render_prompt(decompose_request("DefrostInBowl"))
    assert "defrost the fish" in text and "$" not in text
    assert len(template_hash()) == 64


def test_endpoint_config_from_env():
    cfg = EndpointConfig.from_env({"KITCHENPLAN_BASE_URL": "http://x/v1/", "KITCHENPLAN_MODEL": "m"})
    assert cfg.base_url == "http://x/v1"
    with pytest.raises(ValueError):
        EndpointConfig.from_env({})


# -- record and replay -----------------------------------------------------


def test_record_then_replay(tmp_path):
    path = tmp_path / "t.jsonl"
    with RecordingBackend(OracleReasoner(), path, record_latency=False) as rec:
        first = rec.propose_items("defrost the fish")
        plan = rec.decompose(decompose_request("DefrostInBowl"))
    replay = ReplayBackend(path)
    assert replay.propose_items("defrost the fish") == first
    assert replay.decompose(decompose_request("DefrostInBowl")) == plan
    assert replay.exhausted
    with pytest.raises(TranscriptExhausted):
        replay.propose_items("defrost the fish")


def test_replay_divergence_names_first_difference(tmp_path):
    path = tmp_path / "t.jsonl"
    with RecordingBackend(OracleReasoner(), path, record_latency=False) as rec:
        rec.decompose(decompose_request("DefrostInBowl", seed=0))
    with pytest.raises(TranscriptDivergence) as err:
        ReplayBackend(path).decompose(decompose_request("DefrostInBowl", seed=1))
    assert err.value.index == 0
    assert "registry" in str(err.value)


def test_transcript_lines_carry_tags(tmp_path):
    path = tmp_path / "t.jsonl"
    with RecordingBackend(OracleReasoner(), path, meta={"task": "x"}) as rec:
        rec.propose_items("defrost the fish")
    header, entry = [json.loads(line) for line in path.read_text().splitlines()]
    assert header["meta"] == {"task": "x"} and header["format"] == 1
    assert {"episode", "iteration", "backend", "request", "response", "latency", "template_hash"} <= set(entry)
