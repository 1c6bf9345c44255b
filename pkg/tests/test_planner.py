"""Planner: fixture transports, the repair round-trip, and clamping."""

import json

import pytest

from segue.errors import ParameterError, PlanError
from segue.planner import (
    PlanRequest,
    build_request,
    clamp_plan,
    extract_json_object,
    plan,
)
from segue.score import (
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    validate_score,
)

from conftest import DATA_DIR


class FixtureTransport:
    """Returns canned replies in order and records every request."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def __call__(self, url, payload, headers, timeout):
        self.requests.append(
            {"url": url, "payload": payload, "headers": headers, "timeout": timeout}
        )
        if not self.replies:
            raise AssertionError("transport called more often than expected")
        return self.replies.pop(0)


def load_fixture(name):
    return json.loads((DATA_DIR / name).read_text())


def request(**overrides):
    defaults = dict(
        description="a minute of dreamy electronica in three parts",
        total_duration_seconds=60.0,
        endpoint="http://localhost:9999/v1/chat/completions",
        model_name="fixture-model",
    )
    defaults.update(overrides)
    return PlanRequest(**defaults)


GOLDEN_SCORE = Score(
    segments=(
        Segment(Prompt("warm analog synth pads, slow attack, dreamy"), 20.0),
        Segment(Prompt("mid-tempo electronic groove with plucky bass"), 20.0),
        Segment(Prompt("sparse ambient outro, airy pads and soft chimes"), 20.0),
    ),
    transitions=(
        TransitionSpec(duration_seconds=4.0),
        TransitionSpec(duration_seconds=3.0),
    ),
    sampling=SamplingConfig(),
)


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------


def test_plan_parses_golden_fixture():
    transport = FixtureTransport([load_fixture("planner_reply_valid.json")])
    score = plan(request(), transport)
    assert score == GOLDEN_SCORE
    assert len(transport.requests) == 1


def test_plan_request_shape():
    transport = FixtureTransport([load_fixture("planner_reply_valid.json")])
    plan(request(), transport)
    sent = transport.requests[0]
    payload = sent["payload"]
    assert payload["model"] == "fixture-model"
    assert payload["temperature"] == 0.2
    roles = [m["role"] for m in payload["messages"]]
    assert roles == ["system", "user"]
    system = payload["messages"][0]["content"]
    assert '"segments"' in system  # schema present
    assert system.count("Worked example") == 2
    assert "60" in system  # duration budget rendered into the template
    user = payload["messages"][1]["content"]
    assert "dreamy electronica" in user


def test_plan_repairs_once_then_fails():
    bad = load_fixture("planner_reply_long_transition.json")
    transport = FixtureTransport([bad, bad])
    with pytest.raises(PlanError, match="repair"):
        plan(request(), transport)
    assert len(transport.requests) == 2
    repair_messages = transport.requests[1]["payload"]["messages"]
    assert len(repair_messages) == 4  # system, user, assistant, repair user
    assert repair_messages[2]["role"] == "assistant"
    assert "invalid" in repair_messages[3]["content"]
    assert "5-second" in repair_messages[3]["content"]


def test_plan_repair_can_succeed():
    transport = FixtureTransport(
        [
            load_fixture("planner_reply_long_transition.json"),
            load_fixture("planner_reply_valid.json"),
        ]
    )
    score = plan(request(), transport)
    assert score == GOLDEN_SCORE
    assert len(transport.requests) == 2


def test_plan_rejects_empty_description_before_any_call():
    transport = FixtureTransport([])
    with pytest.raises(ParameterError, match="description"):
        plan(request(description="   "), transport)
    assert transport.requests == []


def test_plan_requires_api_key_for_remote_endpoints():
    transport = FixtureTransport([])
    with pytest.raises(ParameterError, match="api_key"):
        plan(request(endpoint="https://api.example.com/v1/chat/completions"), transport)
    assert transport.requests == []


def test_plan_sends_bearer_header_when_key_present():
    transport = FixtureTransport([load_fixture("planner_reply_valid.json")])
    plan(
        request(
            endpoint="https://api.example.com/v1/chat/completions", api_key="sk-test"
        ),
        transport,
    )
    assert transport.requests[0]["headers"]["Authorization"] == "Bearer sk-test"


def test_plan_rejects_reply_without_json():
    reply = {"choices": [{"message": {"role": "assistant", "content": "sorry, no"}}]}
    transport = FixtureTransport([reply])
    with pytest.raises(PlanError, match="no JSON"):
        plan(request(), transport)


def test_plan_rejects_malformed_completion():
    transport = FixtureTransport([{"oops": True}])
    with pytest.raises(PlanError, match="choices"):
        plan(request(), transport)


def test_plan_flags_duration_deviation_and_repairs():
    # 90 s planned against a 60 s request: > 10% off, triggers repair.
    short = {
        "choices": [
            {
                "message": {
                    "role": "assistant",
                    "content": json.dumps(
                        {
                            "segments": [
                                {"prompt": "a", "duration_seconds": 45},
                                {"prompt": "b", "duration_seconds": 45},
                            ]
                        }
                    ),
                }
            }
        ]
    }
    transport = FixtureTransport([short, load_fixture("planner_reply_valid.json")])
    score = plan(request(), transport)
    assert score == GOLDEN_SCORE
    assert "deviates" in transport.requests[1]["payload"]["messages"][3]["content"]


def test_plan_clamps_small_deviation_to_exact_total():
    # 57 s planned against 60 s: within 10%, accepted and rescaled.
    reply = {
        "choices": [
            {
                "message": {
                    "role": "assistant",
                    "content": json.dumps(
                        {
                            "segments": [
                                {"prompt": "a", "duration_seconds": 19},
                                {"prompt": "b", "duration_seconds": 19},
                                {"prompt": "c", "duration_seconds": 19},
                            ]
                        }
                    ),
                }
            }
        ]
    }
    transport = FixtureTransport([reply])
    score = plan(request(), transport)
    assert score.total_duration_seconds == pytest.approx(60.0, abs=1e-9)
    assert not any(d.severity == "error" for d in validate_score(score))


def test_plan_enforces_max_segments():
    many = {
        "choices": [
            {
                "message": {
                    "role": "assistant",
                    "content": json.dumps(
                        {
                            "segments": [
                                {"prompt": f"part {i}", "duration_seconds": 20}
                                for i in range(3)
                            ]
                        }
                    ),
                }
            }
        ]
    }
    transport = FixtureTransport([many, many])
    with pytest.raises(PlanError, match="segments"):
        plan(request(max_segments=2), transport)


# ---------------------------------------------------------------------------
# clamp_plan
# ---------------------------------------------------------------------------


def test_clamp_rescales_proportionally():
    score = Score(
        segments=(Segment(Prompt("a"), 80.0), Segment(Prompt("b"), 40.0)),
        transitions=(TransitionSpec(duration_seconds=4.0),),
    )
    clamped = clamp_plan(score, 60.0)
    assert [s.duration_seconds for s in clamped.segments] == [40.0, 20.0]
    assert clamped.transitions[0].duration_seconds == 4.0


def test_clamp_identity_when_exact():
    score = Score(
        segments=(Segment(Prompt("a"), 30.0), Segment(Prompt("b"), 30.0)),
        transitions=(TransitionSpec(),),
    )
    assert clamp_plan(score, 60.0) == score


def test_clamp_shrinks_transitions_that_no_longer_fit():
    # Rescaling 60 s down to 8 s leaves a 5 s transition between two 4 s
    # segments; it must shrink to fit (half the smaller neighbour).
    score = Score(
        segments=(Segment(Prompt("a"), 30.0), Segment(Prompt("b"), 30.0)),
        transitions=(TransitionSpec(duration_seconds=5.0),),
    )
    clamped = clamp_plan(score, 8.0)
    assert [s.duration_seconds for s in clamped.segments] == [4.0, 4.0]
    assert clamped.transitions[0].duration_seconds == 2.0
    assert not any(d.severity == "error" for d in validate_score(clamped))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def test_extract_json_object_cases():
    assert extract_json_object("no braces here") is None
    assert extract_json_object('{"a": 1}') == '{"a": 1}'
    assert extract_json_object('prose {"a": {"b": 2}} more') == '{"a": {"b": 2}}'
    tricky = 'say {"text": "closing } inside", "n": 1} end'
    assert extract_json_object(tricky) == '{"text": "closing } inside", "n": 1}'
    escaped = '{"quote": "a \\" b }", "x": 2}'
    assert extract_json_object(escaped) == escaped


def test_build_request_validates_arguments():
    with pytest.raises(ParameterError):
        build_request(request(total_duration_seconds=0.0))
    with pytest.raises(ParameterError):
        build_request(request(max_segments=0))
    with pytest.raises(ParameterError):
        build_request(request(endpoint=""))
