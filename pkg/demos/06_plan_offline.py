"""Planning a score via a chat endpoint, entirely offline.

The planner's HTTP transport is injected, so this demo swaps in a canned
reply instead of a live model endpoint and still exercises the whole
pipeline: prompt template, JSON extraction, validation, clamping.

Run: python3 demos/06_plan_offline.py
"""

import json

from segue import PlanRequest, build_request, plan, save_score

request = PlanRequest(
    description="three minutes that drift from rainy-day jazz into late-night synthwave",
    total_duration_seconds=180.0,
    endpoint="http://localhost:8080/v1/chat/completions",
    model_name="any-chat-model",
)

# What would go over the wire (the CLI's `plan --dry-run` prints the same).
payload = build_request(request)
print("request payload keys:", sorted(payload))
print("system message starts:")
print("  " + payload["messages"][0]["content"].splitlines()[1])
print("user message:")
for line in payload["messages"][1]["content"].splitlines():
    print("  " + line)

# A canned completion standing in for the model's answer.
canned_score = {
    "segments": [
        {"prompt": "mellow jazz quartet, brushed drums, rainy window mood", "duration_seconds": 80},
        {"prompt": "jazz chords over warm analog synth arpeggios, drum machine creeping in", "duration_seconds": 55},
        {"prompt": "late-night synthwave, gated reverb drums, neon arpeggios", "duration_seconds": 45},
    ],
    "transitions": [{"duration_seconds": 5}, {"duration_seconds": 4}],
}
reply = {"choices": [{"message": {"role": "assistant",
                                  "content": "Here you go!\n" + json.dumps(canned_score)}}]}


def fixture_transport(url, payload, headers, timeout):
    print(f"\n(transport called once: POST {url})")
    return reply


score = plan(request, fixture_transport)
print(f"\nplanned {len(score.segments)} segments, "
      f"{score.total_duration_seconds:g} s total (clamped to the request)")
print(save_score(score).decode())
