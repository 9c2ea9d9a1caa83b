"""Single chokepoint for all LLM traffic.

No pipeline module builds provider payloads itself; everything funnels through
a Gateway holding one Provider. Providers implement complete(request) -> str.
Three are shipped: a scripted provider for tests and offline runs, a cassette
provider that records/replays real traffic as {request_digest, response_text}
pairs, and an HTTP provider speaking the OpenAI chat-completions dialect.

Determinism contract: a provider's response is a function of the request, so
identical requests yield identical responses under scripted and replay modes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

from ..errors import BudgetError, ProviderError, SchemaError

logger = logging.getLogger(__name__)

PIPELINE_TEMPERATURE = 0.2
JUDGE_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT = 4096


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    temperature: float
    max_output: int
    model_id: str


def request_digest(request: CompletionRequest) -> str:
    """Stable content hash of a request, used as the cassette key."""
    payload = json.dumps(
        {
            "system_prompt": request.system_prompt,
            "user_prompt": request.user_prompt,
            "temperature": request.temperature,
            "max_output": request.max_output,
            "model_id": request.model_id,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


Responder = Callable[[CompletionRequest], Optional[str]]


class ScriptedProvider:
    """Deterministic provider driven by registered rules.

    Rules are checked in registration order; the first match answers. A rule
    matches on a digest, on a substring of the combined prompts, or via a
    callable returning a response (or None to pass). A rule registered with a
    list of responses serves them in sequence and the final one sticks, which
    models retry-then-succeed fixtures. Every served call is recorded on
    .calls for assertions.
    """

    def __init__(self) -> None:
        self._rules: list[tuple[Callable[[CompletionRequest], bool], list[str], list[int]]] = []
        self._responders: list[Responder] = []
        self._by_digest: dict[str, str] = {}
        self.calls: list[CompletionRequest] = []

    def add_response(
        self, substring: str, response: Union[str, list[str]], *, regex: bool = False
    ) -> "ScriptedProvider":
        if regex:
            pattern = re.compile(substring, re.DOTALL)

            def match(req: CompletionRequest, pattern=pattern) -> bool:
                return bool(pattern.search(req.system_prompt + "\n" + req.user_prompt))

        else:

            def match(req: CompletionRequest, needle=substring) -> bool:
                return needle in req.system_prompt + "\n" + req.user_prompt

        responses = [response] if isinstance(response, str) else list(response)
        if not responses:
            raise ValueError("a scripted rule needs at least one response")
        self._rules.append((match, responses, [0]))
        return self

    def add_digest_response(self, digest: str, response: str) -> "ScriptedProvider":
        self._by_digest[digest] = response
        return self

    def add_responder(self, responder: Responder) -> "ScriptedProvider":
        self._responders.append(responder)
        return self

    def complete(self, request: CompletionRequest) -> str:
        self.calls.append(request)
        digest = request_digest(request)
        if digest in self._by_digest:
            return self._by_digest[digest]
        for responder in self._responders:
            answer = responder(request)
            if answer is not None:
                return answer
        for match, responses, cursor in self._rules:
            if match(request):
                answer = responses[min(cursor[0], len(responses) - 1)]
                cursor[0] += 1
                return answer
        raise ProviderError(
            "scripted provider has no rule for request"
            f" (digest {digest[:12]}, prompt head {request.user_prompt[:80]!r})"
        )


class CassetteProvider:
    """Record/replay wrapper storing {request_digest, response_text} pairs.

    Replay mode answers purely from the cassette file and fails on a miss.
    Record mode delegates to an inner provider and appends each new exchange.
    """

    def __init__(
        self,
        path: Union[str, Path],
        mode: str = "replay",
        inner: Optional[Provider] = None,
    ) -> None:
        if mode not in ("replay", "record"):
            raise ValueError(f"cassette mode '{mode}' must be replay or record")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner provider")
        self._path = Path(path)
        self._mode = mode
        self._inner = inner
        self._entries: dict[str, str] = {}
        if self._path.exists():
            for i, entry in enumerate(json.loads(self._path.read_text("utf-8"))):
                if set(entry) != {"request_digest", "response_text"}:
                    raise SchemaError(f"cassette entry {i}: bad keys {sorted(entry)}")
                self._entries[entry["request_digest"]] = entry["response_text"]
        elif mode == "replay":
            raise ProviderError(f"cassette file not found: {self._path}")

    def complete(self, request: CompletionRequest) -> str:
        digest = request_digest(request)
        if digest in self._entries:
            return self._entries[digest]
        if self._mode == "replay":
            raise ProviderError(f"cassette has no entry for request digest {digest}")
        assert self._inner is not None
        response = self._inner.complete(request)
        self._entries[digest] = response
        self._save()
        return response

    def _save(self) -> None:
        entries = [
            {"request_digest": digest, "response_text": text}
            for digest, text in self._entries.items()
        ]
        self._path.write_text(
            json.dumps(entries, ensure_ascii=False, indent=2) + "\n", "utf-8"
        )


class HTTPProvider:
    """OpenAI-compatible chat-completions client."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        api_key_env: str = "PAPERDECK_API_KEY",
        timeout: float = 120.0,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._model_id = model_id
        self._api_key_env = api_key_env
        self._timeout = timeout

    def complete(self, request: CompletionRequest) -> str:
        import httpx  # deferred so offline paths never need it at import time

        api_key = os.environ.get(self._api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": request.model_id or self._model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        }
        try:
            response = httpx.post(
                f"{self._base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self._timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"completion request failed: {exc}") from exc
        if response.status_code != 200:
            raise ProviderError(
                f"completion endpoint returned {response.status_code}: {response.text[:200]}"
            )
        body = response.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError("completion response missing choices[0].message.content") from None


class Gateway:
    """Provider wrapper adding defaults, retries, budgets, and serialization.

    Temperature defaults depend on the role kind: pipeline calls run at 0.2,
    judging calls at 0. Transient provider failures are retried with
    exponential backoff up to max_retries; an optional max_calls budget caps
    total completions for a run. Calls are serialized through one lock so a
    rate-limited provider is never hit concurrently.
    """

    def __init__(
        self,
        provider: Provider,
        model_id: str = "",
        max_retries: int = 3,
        backoff_seconds: float = 0.5,
        max_calls: Optional[int] = None,
        min_interval_seconds: float = 0.0,
        pipeline_temperature: float = PIPELINE_TEMPERATURE,
        judge_temperature: float = JUDGE_TEMPERATURE,
    ) -> None:
        self._provider = provider
        self._model_id = model_id
        self._max_retries = max(1, max_retries)
        self._backoff = backoff_seconds
        self._max_calls = max_calls
        self._min_interval = min_interval_seconds
        self._pipeline_temperature = pipeline_temperature
        self._judge_temperature = judge_temperature
        self._calls_made = 0
        self._last_call = 0.0
        self._lock = threading.Lock()

    @property
    def calls_made(self) -> int:
        return self._calls_made

    def complete(
        self,
        system_prompt: str,
        user_prompt: str,
        *,
        kind: str = "pipeline",
        temperature: Optional[float] = None,
        max_output: int = DEFAULT_MAX_OUTPUT,
        model_id: Optional[str] = None,
    ) -> str:
        if temperature is None:
            temperature = (
                self._judge_temperature if kind == "judge"
                else self._pipeline_temperature
            )
        request = CompletionRequest(
            system_prompt=system_prompt,
            user_prompt=user_prompt,
            temperature=temperature,
            max_output=max_output,
            model_id=self._model_id if model_id is None else model_id,
        )
        with self._lock:
            if self._max_calls is not None and self._calls_made >= self._max_calls:
                raise BudgetError(
                    f"LLM call budget of {self._max_calls} exhausted"
                )
            if self._min_interval > 0:
                wait = self._last_call + self._min_interval - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
            last_error: Optional[Exception] = None
            for attempt in range(self._max_retries):
                try:
                    text = self._provider.complete(request)
                    self._calls_made += 1
                    self._last_call = time.monotonic()
                    return text
                except BudgetError:
                    raise
                except ProviderError as exc:
                    last_error = exc
                    if attempt + 1 < self._max_retries:
                        time.sleep(self._backoff * (2**attempt))
            raise ProviderError(
                f"provider failed after {self._max_retries} attempts: {last_error}"
            )


def strip_code_fences(text: str) -> str:
    """Unwrap a response the model wrapped in a single ``` fence, if any."""
    stripped = text.strip()
    match = re.fullmatch(r"```[a-zA-Z]*\n(.*?)\n?```", stripped, re.DOTALL)
    return match.group(1) if match else stripped


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_json_payload(text: str):
    """Pull the JSON value out of a model response.

    Accepts raw JSON, a fenced ```json block, or JSON embedded in leading or
    trailing prose. Raises SchemaError when nothing parses.
    """
    candidates = [text.strip()]
    candidates.extend(m.strip() for m in _FENCE_RE.findall(text))
    brace = _outermost_span(text)
    if brace:
        candidates.append(brace)
    for candidate in candidates:
        if not candidate:
            continue
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            continue
    raise SchemaError(f"response contains no parseable JSON: {text[:120]!r}")


def _outermost_span(text: str) -> Optional[str]:
    for opener, closer in (("{", "}"), ("[", "]")):
        start = text.find(opener)
        end = text.rfind(closer)
        if start != -1 and end > start:
            return text[start : end + 1]
    return None
