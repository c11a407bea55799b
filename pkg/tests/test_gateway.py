from __future__ import annotations

import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_gateway
from llmgrade.errors import (
    CacheMissError,
    ConfigurationError,
    FixtureMissError,
    ParseError,
    SchemaError,
    TransientError,
)
from llmgrade.gateway import (
    GenerationParams,
    GradeResponse,
    HttpTransport,
    MockTransport,
    ModelEndpoint,
    ModelGateway,
    ResponseCache,
    completion_body,
    mock_complete,
    parse_completion_body,
    parse_for_style,
    parse_grade_response,
    request_digest,
)
from llmgrade.templates import ProblemSpec, PromptStyle, Submission, render_prompt

PROMPT = render_prompt(ProblemSpec("p1", "Add two numbers."), Submission("s01", "int main(){}"), PromptStyle.ZERO_SHOT_COT)
PARAMS = GenerationParams()
GOOD = '{"reasoning_steps": "ok", "comment": "fine", "score": 90}'


# -- digests -------------------------------------------------------------------

def test_digest_depends_on_every_component(endpoint):
    base = request_digest(endpoint, PROMPT, PARAMS, 0)
    assert base == request_digest(endpoint, PROMPT, PARAMS, 0, 0)
    variants = [
        request_digest(endpoint, PROMPT, PARAMS, 1),
        request_digest(endpoint, PROMPT, PARAMS, 0, 1),
        request_digest(endpoint, PROMPT, GenerationParams(temperature=0.2), 0),
        request_digest(ModelEndpoint("other", endpoint.base_url, endpoint.model_id), PROMPT, PARAMS, 0),
        request_digest(ModelEndpoint(endpoint.name, endpoint.base_url, "m2"), PROMPT, PARAMS, 0),
        request_digest(endpoint, render_prompt(ProblemSpec("p1", "Add two numbers."), Submission("s01", "int main(){}"),
                                               PromptStyle.ZERO_SHOT), PARAMS, 0),
    ]
    assert len({base, *variants}) == len(variants) + 1
    assert len(base) == 64


# -- cache and retries -----------------------------------------------------------

def test_cache_hit_skips_transport(tmp_path, endpoint):
    gw = make_gateway([{"response": GOOD}], tmp_path)
    first = gw.complete_chat(endpoint, PROMPT, PARAMS, 0)
    assert not first.from_cache and gw.network_calls == 1
    path = ResponseCache(tmp_path).path(first.request_digest)
    assert path.parent.name == first.request_digest[:2] and path.exists()
    second = gw.complete_chat(endpoint, PROMPT, PARAMS, 0)
    assert second.from_cache and second.text == first.text
    assert gw.network_calls == 1 and gw.transport.calls == 1

    offline = ModelGateway(ResponseCache(tmp_path), None)
    assert offline.complete_chat(endpoint, PROMPT, PARAMS, 0).text == first.text
    with pytest.raises(CacheMissError):
        offline.complete_chat(endpoint, PROMPT, PARAMS, 1)


def test_retry_with_backoff(endpoint):
    sleeps = []
    gw = make_gateway([{"response": GOOD, "fail_first": 2}], sleep=sleeps.append)
    raw = gw.complete_chat(endpoint, PROMPT, PARAMS, 0)
    assert raw.retries == 2 and sleeps == [0.5, 1.0]
    assert json.loads(raw.text)["score"] == 90


def test_retries_exhausted(endpoint):
    sleeps = []
    gw = make_gateway([{"response": GOOD, "fail_first": 10}], sleep=sleeps.append)
    with pytest.raises(TransientError) as err:
        gw.complete_chat(endpoint, PROMPT, PARAMS, 0)
    assert err.value.retries == 3
    assert sleeps == [0.5, 1.0, 2.0]
    assert gw.network_calls == 4


def test_client_error_not_retried(endpoint):
    sleeps = []
    gw = make_gateway([{"status": 401}], sleep=sleeps.append)
    with pytest.raises(ConfigurationError):
        gw.complete_chat(endpoint, PROMPT, PARAMS, 0)
    assert sleeps == [] and gw.network_calls == 1


def test_fixture_rules_match_in_order(endpoint):
    rules = [
        {"query_index": 1, "response": "one"},
        {"attempt": 1, "response": "retry"},
        {"task": "grade", "style": "zero_shot", "response": "zs"},
        {"contains": ["Add two"], "responses": ["a", "b", "c"]},
    ]
    t = MockTransport(rules)
    assert mock_complete(t, PROMPT, PARAMS, 1, endpoint=endpoint).text == "one"
    assert mock_complete(t, PROMPT, PARAMS, 0, endpoint=endpoint, attempt=1).text == "retry"
    assert mock_complete(t, PROMPT, PARAMS, 5, endpoint=endpoint).text == "c"
    with pytest.raises(FixtureMissError):
        mock_complete([{"task": "geval", "response": "x"}], PROMPT, PARAMS, 0)


def test_fixtures_from_dir(tmp_path, endpoint):
    (tmp_path / "a.json").write_text(json.dumps([{"query_index": 0, "response": "json"}]))
    (tmp_path / "b.yaml").write_text("rules:\n  - response: yaml\n")
    t = MockTransport.from_dir(tmp_path)
    assert mock_complete(t, PROMPT, PARAMS, 0, endpoint=endpoint).text == "json"
    assert mock_complete(t, PROMPT, PARAMS, 1, endpoint=endpoint).text == "yaml"


# -- HTTP wire format --------------------------------------------------------------

def _http_gateway(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return ModelGateway(None, HttpTransport(client), sleep=lambda s: None, **kw)


def test_http_request_shape(monkeypatch):
    monkeypatch.setenv("GRADER_KEY", "sk-test")
    seen = []

    def handler(request: httpx.Request):
        seen.append(request)
        lp = [{"token": "9", "logprob": -0.1, "top_logprobs": [{"token": "9", "logprob": -0.1}]}]
        return httpx.Response(200, text=completion_body("m", GOOD, lp))

    ep = ModelEndpoint("remote", "https://api.example.test/v1/", "m-large", auth_ref="GRADER_KEY", supports_logprobs=True)
    raw = _http_gateway(handler).complete_chat(ep, PROMPT, GenerationParams(request_seed=5), 0)
    req = seen[0]
    assert str(req.url) == "https://api.example.test/v1/chat/completions"
    assert req.method == "POST"
    assert req.headers["authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert body == {
        "model": "m-large",
        "messages": PROMPT.messages(),
        "temperature": 0.7,
        "top_p": 1.0,
        "max_tokens": 2048,
        "seed": 5,
        "logprobs": True,
        "top_logprobs": 10,
    }
    assert raw.text == GOOD
    assert raw.token_logprobs[0].token == "9" and raw.token_logprobs[0].top == (("9", -0.1),)


@pytest.mark.parametrize("status, retried", [(429, True), (500, True), (503, True), (400, False), (404, False)])
def test_http_status_policy(status, retried, endpoint):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(status, text="nope")
        return httpx.Response(200, text=completion_body("m", GOOD))

    gw = _http_gateway(handler)
    if retried:
        assert gw.complete_chat(endpoint, PROMPT, PARAMS, 0).retries == 1
    else:
        with pytest.raises(ConfigurationError):
            gw.complete_chat(endpoint, PROMPT, PARAMS, 0)
        assert len(calls) == 1


def test_http_transport_error_retried(endpoint):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, text=completion_body("m", GOOD))

    assert _http_gateway(handler).complete_chat(endpoint, PROMPT, PARAMS, 0).retries == 2


def test_missing_credentials(monkeypatch):
    monkeypatch.delenv("NOT_SET_KEY", raising=False)
    ep = ModelEndpoint("remote", "https://x.test/v1", "m", auth_ref="NOT_SET_KEY")
    gw = _http_gateway(lambda r: httpx.Response(200, text=completion_body("m", GOOD)))
    with pytest.raises(ConfigurationError, match="NOT_SET_KEY"):
        gw.complete_chat(ep, PROMPT, PARAMS, 0)


def test_completion_body_roundtrip():
    assert parse_completion_body(completion_body("m", "hello")) == ("hello", None)
    with pytest.raises(TransientError):
        parse_completion_body("{}")


# -- reply parsing -------------------------------------------------------------------

@pytest.mark.parametrize(
    "text",
    [
        GOOD,
        f"```json\n{GOOD}\n```",
        f"Sure! Here is the evaluation:\n{GOOD}\nHope this helps {{not json}}",
        f"{{broken\n{GOOD}",
    ],
)
def test_parse_wrappers(text):
    assert parse_grade_response(text) == GradeResponse("ok", "fine", 90)


@pytest.mark.parametrize("raw, expected", [("84.6", 85), ("112", 100), ("-3", 0), ("84.5", 85), ('"77"', 77), ("0.49", 0)])
def test_round_then_clamp(raw, expected):
    text = f'{{"reasoning_steps": "r", "comment": "c", "score": {raw}}}'
    assert parse_grade_response(text).score == expected


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_grade_response("score: 90")
    with pytest.raises(SchemaError, match="reasoning_steps"):
        parse_grade_response('{"comment": "c", "score": 1}')
    with pytest.raises(SchemaError, match="not numeric"):
        parse_grade_response('{"reasoning_steps": "", "comment": "c", "score": "high"}')
    with pytest.raises(SchemaError, match="boolean"):
        parse_grade_response('{"reasoning_steps": "", "comment": "c", "score": true}')
    zs = parse_for_style('{"comment": "c", "score": 3}', PromptStyle.ZERO_SHOT)
    assert zs.score == 3 and zs.reasoning_steps == ""


def test_structured_reasoning_is_stringified():
    r = parse_grade_response('{"reasoning_steps": {"Correctness": "60/80"}, "comment": "c", "score": 60}')
    assert json.loads(r.reasoning_steps) == {"Correctness": "60/80"}


@settings(max_examples=200, deadline=None)
@given(st.text(), st.text(), st.integers(0, 100))
def test_parse_serialize_idempotent(reasoning, comment, score):
    r = GradeResponse(reasoning, comment, score)
    assert parse_grade_response(r.to_json()) == r
    assert parse_grade_response(parse_grade_response(r.to_json()).to_json()) == r


@settings(max_examples=200, deadline=None)
@given(st.decimals(min_value=-1000, max_value=1000, places=3, allow_nan=False))
def test_score_always_in_range(value):
    text = f'{{"reasoning_steps": "", "comment": "", "score": {value}}}'
    assert 0 <= parse_grade_response(text).score <= 100
