"""OpenAI-compatible chat client with retries, replay cache and a mock provider.

Every completion goes through :class:`ModelGateway`. A request is identified
by a SHA-256 digest over (endpoint name, model id, full prompt, decoding
parameters, query index, attempt). A cache hit never touches the transport,
which is what makes whole pipeline runs replayable byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol

import httpx
import yaml

from .errors import (
    CacheMissError,
    ConfigurationError,
    FixtureMissError,
    ParseError,
    SchemaError,
    TransientError,
)
from .templates import PromptStyle, RenderedPrompt
from .utils import atomic_write_text, canonical_json, round_half_away, sha256_hex

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
TOP_LOGPROBS = 10


@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    base_url: str
    model_id: str
    auth_ref: Optional[str] = None
    supports_logprobs: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ModelEndpoint":
        return cls(
            name=str(data["name"]),
            base_url=str(data.get("base_url", "http://localhost:11434/v1")),
            model_id=str(data.get("model_id", data["name"])),
            auth_ref=data.get("auth_ref"),
            supports_logprobs=bool(data.get("supports_logprobs", False)),
        )


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    max_tokens: int = 2048
    top_p: float = 1.0
    request_seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ConfigurationError("max_tokens must be positive")
        if not 0 < self.top_p <= 1:
            raise ConfigurationError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float
    top: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class RawCompletion:
    text: str
    token_logprobs: Optional[tuple[TokenLogprob, ...]]
    latency_ms: int
    request_digest: str
    retries: int = 0
    from_cache: bool = False


@dataclass(frozen=True)
class GradeResponse:
    reasoning_steps: str
    comment: str
    score: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


# -- request identity ------------------------------------------------------

def digest_material(
    endpoint: ModelEndpoint,
    prompt: RenderedPrompt,
    params: GenerationParams,
    query_index: int,
    attempt: int = 0,
) -> dict:
    return {
        "endpoint": endpoint.name,
        "model_id": endpoint.model_id,
        "system": prompt.system_text,
        "user": prompt.user_text,
        "params": {
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "top_p": params.top_p,
            "request_seed": params.request_seed,
        },
        "query_index": query_index,
        "attempt": attempt,
    }


def request_digest(
    endpoint: ModelEndpoint,
    prompt: RenderedPrompt,
    params: GenerationParams,
    query_index: int,
    attempt: int = 0,
) -> str:
    return sha256_hex(canonical_json(digest_material(endpoint, prompt, params, query_index, attempt)))


def build_payload(endpoint: ModelEndpoint, prompt: RenderedPrompt, params: GenerationParams) -> dict:
    payload = {
        "model": endpoint.model_id,
        "messages": prompt.messages(),
        "temperature": params.temperature,
        "top_p": params.top_p,
        "max_tokens": params.max_tokens,
    }
    if params.request_seed is not None:
        payload["seed"] = params.request_seed
    if endpoint.supports_logprobs:
        payload["logprobs"] = True
        payload["top_logprobs"] = TOP_LOGPROBS
    return payload


@dataclass(frozen=True)
class ChatRequest:
    endpoint: ModelEndpoint
    prompt: RenderedPrompt
    params: GenerationParams
    query_index: int
    attempt: int
    digest: str

    @property
    def payload(self) -> dict:
        return build_payload(self.endpoint, self.prompt, self.params)


def parse_completion_body(body: str) -> tuple[str, Optional[tuple[TokenLogprob, ...]]]:
    """Pull the message text and token log-probabilities out of a response body."""
    try:
        data = json.loads(body)
        choice = data["choices"][0]
        text = choice["message"].get("content") or ""
    except (ValueError, KeyError, IndexError, TypeError, AttributeError) as exc:
        raise TransientError(f"malformed completion body: {exc}") from exc
    content = (choice.get("logprobs") or {}).get("content")
    if not content:
        return text, None
    tokens = tuple(
        TokenLogprob(
            token=t["token"],
            logprob=float(t["logprob"]),
            top=tuple((a["token"], float(a["logprob"])) for a in t.get("top_logprobs") or ()),
        )
        for t in content
    )
    return text, tokens


# -- cache -----------------------------------------------------------------

class ResponseCache:
    """One file per request digest under ``<root>/<first-2-hex>/<digest>.resp``."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.resp"

    def get(self, digest: str) -> Optional[dict]:
        p = self.path(digest)
        if not p.exists():
            return None
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)

    def put(self, digest: str, record: dict) -> None:
        atomic_write_text(self.path(digest), json.dumps(record, sort_keys=True, indent=1, ensure_ascii=False) + "\n")

    def __contains__(self, digest: str) -> bool:
        return self.path(digest).exists()

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.resp")) if self.root.exists() else 0


# -- transports ------------------------------------------------------------

class RetryableError(Exception):
    """One failed transport attempt that may succeed if repeated."""


class Transport(Protocol):
    def send(self, request: ChatRequest) -> str: ...


class HttpTransport:
    """POST ``<base_url>/chat/completions`` with a bearer token from the environment."""

    def __init__(self, client: Optional[httpx.Client] = None, timeout: float = 120.0):
        self.client = client or httpx.Client(timeout=timeout)

    def send(self, request: ChatRequest) -> str:
        ep = request.endpoint
        headers = {"Content-Type": "application/json"}
        if ep.auth_ref:
            key = os.environ.get(ep.auth_ref)
            if not key:
                raise ConfigurationError(f"endpoint {ep.name}: environment variable {ep.auth_ref} is not set")
            headers["Authorization"] = f"Bearer {key}"
        url = ep.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self.client.post(url, json=request.payload, headers=headers)
        except httpx.TransportError as exc:
            raise RetryableError(f"{ep.name}: {type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableError(f"{ep.name}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ConfigurationError(f"{ep.name}: HTTP {resp.status_code}: {resp.text[:500]}")
        return resp.text


class OfflineTransport:
    def send(self, request: ChatRequest) -> str:
        raise CacheMissError(
            f"offline mode: no cached completion {request.digest} "
            f"(endpoint {request.endpoint.name}, query {request.query_index})"
        )


def completion_body(model_id: str, text: str, logprobs: Optional[list] = None, rid: str = "") -> str:
    """Serialize an OpenAI-shaped chat completion body."""
    body = {
        "id": rid,
        "object": "chat.completion",
        "model": model_id,
        "choices": [
            {
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "logprobs": {"content": logprobs} if logprobs else None,
                "finish_reason": "stop",
            }
        ],
    }
    return json.dumps(body, ensure_ascii=False, sort_keys=True)


@dataclass
class FixtureRule:
    response: Optional[str] = None
    responses: Optional[list[str]] = None
    logprobs: Optional[list] = None
    digest: Optional[str] = None
    endpoint: Optional[str] = None
    task: Optional[str] = None
    style: Optional[str] = None
    contains: tuple[str, ...] = ()
    query_index: Optional[int] = None
    attempt: Optional[int] = None
    fail_first: int = 0
    status: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "FixtureRule":
        contains = d.get("contains") or ()
        if isinstance(contains, str):
            contains = (contains,)
        return cls(
            response=d.get("response"),
            responses=d.get("responses"),
            logprobs=d.get("logprobs"),
            digest=d.get("digest"),
            endpoint=d.get("endpoint"),
            task=d.get("task"),
            style=d.get("style"),
            contains=tuple(contains),
            query_index=d.get("query_index"),
            attempt=d.get("attempt"),
            fail_first=int(d.get("fail_first", 0)),
            status=d.get("status"),
        )

    def matches(self, req: ChatRequest) -> bool:
        if self.digest is not None and self.digest != req.digest:
            return False
        if self.endpoint is not None and self.endpoint != req.endpoint.name:
            return False
        if self.task is not None and self.task != req.prompt.task:
            return False
        if self.style is not None and (req.prompt.style is None or self.style != req.prompt.style.value):
            return False
        if self.query_index is not None and self.query_index != req.query_index:
            return False
        if self.attempt is not None and self.attempt != req.attempt:
            return False
        return all(s in req.prompt.user_text for s in self.contains)

    def text_for(self, req: ChatRequest) -> tuple[str, Optional[list]]:
        if self.responses:
            i = req.query_index % len(self.responses)
            lp = self.logprobs[i] if self.logprobs and isinstance(self.logprobs[0], list) else self.logprobs
            return self.responses[i], lp
        return self.response or "", self.logprobs


class MockTransport:
    """Deterministic stand-in for a provider, driven by fixture rules.

    Rules are tried in order; the first match answers. ``fail_first: n``
    makes a rule fail its first n calls for each digest, which scripts the
    retry path.
    """

    def __init__(self, rules: Iterable[FixtureRule | dict]):
        self.rules = [r if isinstance(r, FixtureRule) else FixtureRule.from_dict(r) for r in rules]
        self.calls = 0
        self._failures: dict[tuple[int, str], int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_dir(cls, path: Path | str) -> "MockTransport":
        path = Path(path)
        files = [path] if path.is_file() else sorted(
            p for p in path.iterdir() if p.suffix in (".json", ".yaml", ".yml")
        )
        rules: list[dict] = []
        for f in files:
            with open(f, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) if f.suffix != ".json" else json.load(fh)
            if isinstance(data, dict):
                data = data.get("rules", [])
            rules.extend(data or [])
        return cls(rules)

    def send(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        for i, rule in enumerate(self.rules):
            if not rule.matches(request):
                continue
            if rule.status is not None:
                raise ConfigurationError(f"{request.endpoint.name}: HTTP {rule.status} (scripted)")
            if rule.fail_first:
                key = (i, request.digest)
                with self._lock:
                    seen = self._failures.get(key, 0)
                    self._failures[key] = seen + 1
                if seen < rule.fail_first:
                    raise RetryableError(f"scripted failure {seen + 1}/{rule.fail_first}")
            text, logprobs = rule.text_for(request)
            return completion_body(request.endpoint.model_id, text, logprobs, rid=f"mock-{request.digest[:12]}")
        raise FixtureMissError(
            f"no fixture for {request.prompt.task} request to {request.endpoint.name} "
            f"(query {request.query_index}, attempt {request.attempt}, digest {request.digest})"
        )


# -- gateway ---------------------------------------------------------------

class ModelGateway:
    """Cache-first completion client.

    ``transport=None`` means offline: any cache miss raises
    :class:`CacheMissError`.
    """

    def __init__(
        self,
        cache: Optional[ResponseCache],
        transport: Optional[Transport],
        *,
        max_retries: int = DEFAULT_RETRIES,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cache = cache
        self.transport = transport if transport is not None else OfflineTransport()
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.sleep = sleep
        self.network_calls = 0
        self.digests: set[str] = set()
        self._lock = threading.Lock()

    def complete_chat(
        self,
        endpoint: ModelEndpoint,
        prompt: RenderedPrompt,
        params: GenerationParams,
        query_index: int,
        attempt: int = 0,
    ) -> RawCompletion:
        digest = request_digest(endpoint, prompt, params, query_index, attempt)
        with self._lock:
            self.digests.add(digest)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                text, logprobs = parse_completion_body(hit["response"])
                return RawCompletion(text, logprobs, int(hit.get("latency_ms", 0)), digest, 0, True)

        request = ChatRequest(endpoint, prompt, params, query_index, attempt, digest)
        retries = 0
        while True:
            start = time.perf_counter()
            try:
                with self._lock:
                    self.network_calls += 1
                body = self.transport.send(request)
                break
            except RetryableError as exc:
                if retries >= self.max_retries:
                    raise TransientError(
                        f"{endpoint.name}: giving up after {retries} retries: {exc}", retries=retries
                    ) from exc
                delay = self.backoff_base * (2 ** retries)
                logger.warning("%s: attempt %d failed (%s); retrying in %.2fs", endpoint.name, retries + 1, exc, delay)
                self.sleep(delay)
                retries += 1
        latency = int((time.perf_counter() - start) * 1000)
        text, logprobs = parse_completion_body(body)
        if self.cache is not None:
            self.cache.put(
                digest,
                {
                    "digest": digest,
                    "request": {
                        "endpoint": endpoint.name,
                        "base_url": endpoint.base_url,
                        "payload": request.payload,
                        "query_index": query_index,
                        "attempt": attempt,
                        "schema_version": prompt.response_schema_version,
                    },
                    "response": body,
                    "latency_ms": latency,
                },
            )
        return RawCompletion(text, logprobs, latency, digest, retries, False)


def complete_chat(
    endpoint: ModelEndpoint,
    prompt: RenderedPrompt,
    params: GenerationParams,
    query_index: int,
    *,
    gateway: ModelGateway,
    attempt: int = 0,
) -> RawCompletion:
    return gateway.complete_chat(endpoint, prompt, params, query_index, attempt)


def mock_complete(
    fixtures: MockTransport | Iterable[dict],
    prompt: RenderedPrompt,
    params: GenerationParams,
    query_index: int,
    *,
    endpoint: Optional[ModelEndpoint] = None,
    attempt: int = 0,
    max_retries: int = DEFAULT_RETRIES,
) -> RawCompletion:
    """Answer one request from fixtures alone, with the standard retry policy."""
    transport = fixtures if isinstance(fixtures, MockTransport) else MockTransport(fixtures)
    endpoint = endpoint or ModelEndpoint(name="mock", base_url="mock://", model_id="mock")
    gw = ModelGateway(None, transport, max_retries=max_retries, sleep=lambda s: None)
    return gw.complete_chat(endpoint, prompt, params, query_index, attempt)


# -- structured reply parsing ----------------------------------------------

def _balanced_span(text: str, start: int) -> Optional[str]:
    """The ``{...}`` span opening at ``start``, respecting JSON string escapes."""
    depth, in_str, esc = 0, False, False
    for j in range(start, len(text)):
        ch = text[j]
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : j + 1]
    return None


def extract_json_object(text: str) -> dict:
    """First brace-balanced span, scanning left to right, that decodes to a JSON object."""
    start = text.find("{")
    while start >= 0:
        candidate = _balanced_span(text, start)
        if candidate is not None:
            try:
                obj = json.loads(candidate, parse_float=Decimal)
            except ValueError:
                obj = None
            if isinstance(obj, dict):
                return obj
        start = text.find("{", start + 1)
    raise ParseError("no balanced JSON object in model output", raw=text)


_NUMERIC = re.compile(r"^\s*[-+]?\d+(\.\d+)?\s*$")


def _coerce_score(value, raw: str) -> Decimal | int:
    if isinstance(value, bool):
        raise SchemaError("score is boolean", raw=raw)
    if isinstance(value, (int, Decimal)):
        return value
    if isinstance(value, str) and _NUMERIC.match(value):
        try:
            return Decimal(value.strip())
        except InvalidOperation:
            pass
    raise SchemaError(f"score is not numeric: {value!r}", raw=raw)


def parse_grade_response(text: str, *, require_reasoning: bool = True, max_score: int = 100) -> GradeResponse:
    """Parse a grading reply into a :class:`GradeResponse`.

    Takes the first balanced JSON object anywhere in ``text`` (fences and
    surrounding prose are ignored), rounds the score half away from zero and
    clamps it to ``[0, max_score]``.
    """
    obj = extract_json_object(text)
    missing = [k for k in ("comment", "score") if k not in obj]
    if require_reasoning and "reasoning_steps" not in obj:
        missing.insert(0, "reasoning_steps")
    if missing:
        raise SchemaError(f"missing field(s): {', '.join(missing)}", raw=text)
    reasoning = obj.get("reasoning_steps", "")
    comment = obj["comment"]
    if not isinstance(comment, str):
        raise SchemaError("comment is not a string", raw=text)
    if not isinstance(reasoning, str):
        # some models return the per-criterion breakdown as an object
        reasoning = json.dumps(reasoning, default=str, ensure_ascii=False)
    score = round_half_away(_coerce_score(obj["score"], text))
    return GradeResponse(reasoning_steps=reasoning, comment=comment, score=min(max_score, max(0, score)))


def parse_for_style(text: str, style: Optional[PromptStyle], max_score: int = 100) -> GradeResponse:
    return parse_grade_response(
        text, require_reasoning=style is not PromptStyle.ZERO_SHOT, max_score=max_score
    )
