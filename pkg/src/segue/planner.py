"""Score planning through a chat-completion language model endpoint.

``plan`` sends one request to an OpenAI-compatible ``/v1/chat/completions``
endpoint whose system message (a versioned text asset under ``assets/``)
carries the score schema and two worked examples. The first JSON object in
the reply is parsed as a score; if it fails validation, exactly one repair
round-trip quotes the diagnostics back to the model. The HTTP transport is
injected, so tests (and offline use) swap in fixtures and never touch the
network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from importlib import resources
from typing import Any, Protocol
from urllib.parse import urlparse

from .errors import ParameterError, ParseError, PlanError
from .score import Score, has_errors, load_score, validate_score

log = logging.getLogger(__name__)

REQUEST_TIMEOUT_SECONDS = 60.0
LLM_TEMPERATURE = 0.2
# Planned total duration may deviate from the request by at most this
# fraction before (and after) proportional clamping.
DURATION_TOLERANCE = 0.10

_LOCAL_HOSTS = {"localhost", "127.0.0.1", "::1"}


class Transport(Protocol):
    """One HTTP POST returning the parsed JSON reply."""

    def __call__(
        self, url: str, payload: dict[str, Any], headers: dict[str, str], timeout: float
    ) -> dict[str, Any]: ...


def http_transport(
    url: str, payload: dict[str, Any], headers: dict[str, str], timeout: float
) -> dict[str, Any]:
    import requests

    try:
        response = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise PlanError(f"endpoint unreachable: {exc}") from None
    if response.status_code != 200:
        raise PlanError(f"endpoint returned HTTP {response.status_code}: {response.text[:200]}")
    try:
        return response.json()
    except ValueError:
        raise PlanError("endpoint reply is not JSON") from None


@dataclass(frozen=True)
class PlanRequest:
    description: str
    total_duration_seconds: float
    endpoint: str
    model_name: str
    api_key: str = ""
    max_segments: int = 12


def _prompt_template() -> str:
    return (
        resources.files("segue.assets").joinpath("planner_prompt.txt").read_text("utf-8")
    )


def build_request(request: PlanRequest) -> dict[str, Any]:
    """The chat-completion payload ``plan`` would send; used verbatim by
    the CLI's dry-run mode."""
    _check_request(request)
    system = _prompt_template().format(
        total_duration_seconds=f"{request.total_duration_seconds:g}",
        max_segments=request.max_segments,
    )
    user = (
        f"Description: {request.description.strip()}\n"
        f"Total duration: {request.total_duration_seconds:g} seconds.\n"
        f"Use at most {request.max_segments} segments."
    )
    return {
        "model": request.model_name,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": LLM_TEMPERATURE,
    }


def _check_request(request: PlanRequest) -> None:
    if not request.description.strip():
        raise ParameterError("description is empty")
    if not request.total_duration_seconds > 0:
        raise ParameterError(
            f"total duration must be > 0, got {request.total_duration_seconds}"
        )
    if request.max_segments < 1:
        raise ParameterError(f"max_segments must be >= 1, got {request.max_segments}")
    if not request.endpoint:
        raise ParameterError("endpoint is empty")


def _is_local(endpoint: str) -> bool:
    return urlparse(endpoint).hostname in _LOCAL_HOSTS


def extract_json_object(text: str) -> str | None:
    """The first balanced top-level JSON object in ``text``, or None.

    Braces inside string literals (and escaped quotes inside those) do
    not count toward the balance.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _reply_content(reply: dict[str, Any]) -> str:
    try:
        content = reply["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise PlanError("malformed completion reply: no choices[0].message.content") from None
    if not isinstance(content, str):
        raise PlanError("malformed completion reply: content is not text")
    return content


def _try_parse(blob: str, request: PlanRequest) -> tuple[Score | None, list[str]]:
    """Parse and fully check one candidate score; returns (score, problems)."""
    try:
        score = load_score(blob, strict=False)
    except ParseError as exc:
        return None, [f"the JSON does not parse as a score: {exc}"]
    problems = [str(d) for d in validate_score(score) if d.severity == "error"]
    if len(score.segments) > request.max_segments:
        problems.append(
            f"{len(score.segments)} segments exceed the maximum of {request.max_segments}"
        )
    total = score.total_duration_seconds
    want = request.total_duration_seconds
    if abs(total - want) > DURATION_TOLERANCE * want:
        problems.append(
            f"segment durations sum to {total:g} s, which deviates more than "
            f"{DURATION_TOLERANCE:.0%} from the requested {want:g} s"
        )
    if problems:
        return None, problems
    return score, []


def plan(request: PlanRequest, transport: Transport = http_transport) -> Score:
    """Generate a validated score from a plain-language description.

    Issues one completion request and at most one repair round-trip; the
    returned score always validates and its durations are clamped to sum
    exactly to the requested total. Raises PlanError when the model
    cannot produce a valid score, and ParameterError before any network
    traffic for bad arguments.
    """
    payload = build_request(request)
    headers = {"Content-Type": "application/json"}
    if request.api_key:
        headers["Authorization"] = f"Bearer {request.api_key}"
    elif not _is_local(request.endpoint):
        raise ParameterError("api_key is required for non-local endpoints")

    reply = transport(request.endpoint, payload, headers, REQUEST_TIMEOUT_SECONDS)
    content = _reply_content(reply)
    blob = extract_json_object(content)
    if blob is None:
        raise PlanError("the model reply contains no JSON object")
    score, problems = _try_parse(blob, request)

    if score is None:
        log.info("planned score invalid, issuing one repair round-trip: %s", problems)
        repair_payload = dict(payload)
        repair_payload["messages"] = payload["messages"] + [
            {"role": "assistant", "content": content},
            {
                "role": "user",
                "content": (
                    "That score is invalid:\n- "
                    + "\n- ".join(problems)
                    + "\nReply with a corrected JSON score object and nothing else."
                ),
            },
        ]
        reply = transport(request.endpoint, repair_payload, headers, REQUEST_TIMEOUT_SECONDS)
        content = _reply_content(reply)
        blob = extract_json_object(content)
        if blob is None:
            raise PlanError("the repair reply contains no JSON object")
        score, problems = _try_parse(blob, request)
        if score is None:
            raise PlanError("score still invalid after one repair attempt: " + "; ".join(problems))

    clamped = clamp_plan(score, request.total_duration_seconds)
    if has_errors(validate_score(clamped)):
        raise PlanError("clamped score failed validation; this is a bug")
    return clamped


def clamp_plan(score: Score, total_duration_seconds: float) -> Score:
    """Rescale segment durations proportionally to the exact total.

    Transitions are left alone unless the rescale makes one at least as
    long as an adjacent segment; such transitions shrink to half the
    smaller neighbour so the window always fits.
    """
    if not total_duration_seconds > 0:
        raise ParameterError(f"total duration must be > 0, got {total_duration_seconds}")
    current = score.total_duration_seconds
    if current <= 0:
        raise ParameterError("score has no positive duration to rescale")
    scale = total_duration_seconds / current
    segments = tuple(
        replace(seg, duration_seconds=seg.duration_seconds * scale) for seg in score.segments
    )
    transitions = []
    for i, tr in enumerate(score.transitions):
        shortest = min(segments[i].duration_seconds, segments[i + 1].duration_seconds)
        if tr.duration_seconds >= shortest:
            tr = replace(tr, duration_seconds=shortest / 2)
        transitions.append(tr)
    return replace(score, segments=segments, transitions=tuple(transitions))
