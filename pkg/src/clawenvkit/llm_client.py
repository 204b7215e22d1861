"""Uniform LLM provider interface with retries, plus a scripted stub.

Every LLM-backed stage (parser, generator, feasibility, judge, agent loop)
goes through LlmClient.complete. Providers implement ``send`` and signal
transport failures by raising CallFailed; the retry policy decides which
failures are retried and how long to wait.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import requests

from .errors import ProviderError

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 529})


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)


@dataclass
class ChatResponse:
    text: str = ""
    tool_calls: list[ToolCall] = field(default_factory=list)
    attempts_used: int = 1


@dataclass
class ChatRequest:
    messages: list[dict[str, Any]]
    model: str = "default"
    tool_definitions: list[dict[str, Any]] | None = None
    temperature: float = 0.0
    max_tokens: int = 4096
    timeout_s: float = 120.0

    def last_content(self) -> str:
        for msg in reversed(self.messages):
            content = msg.get("content")
            if isinstance(content, str) and content:
                return content
        return ""


class CallFailed(Exception):
    """A single provider call failed; the retry loop decides what happens."""

    def __init__(self, kind: str = "status", status: int | None = None, message: str = ""):
        self.kind = kind  # "status" | "timeout" | "connection"
        self.status = status
        super().__init__(message or f"{kind} failure (status={status})")


@dataclass
class RetryPolicy:
    """Backoff: wait = uniform(2, 4) x (attempt + 1) seconds, scaled."""

    max_retries: int = 5
    retryable_statuses: frozenset[int] = RETRYABLE_STATUSES
    wait_low: float = 2.0
    wait_high: float = 4.0
    time_scale: float = 1.0

    def is_retryable(self, failure: CallFailed) -> bool:
        if failure.kind in ("timeout", "connection"):
            return True
        return failure.status in self.retryable_statuses

    def wait_seconds(self, attempt: int, rng: random.Random) -> float:
        return rng.uniform(self.wait_low, self.wait_high) * (attempt + 1) * self.time_scale


class LlmClient:
    """Provider wrapper applying the retry policy to every call."""

    def __init__(self, provider, policy: RetryPolicy | None = None,
                 rng: random.Random | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.provider = provider
        self.policy = policy or RetryPolicy()
        self.rng = rng or random.Random(0)
        self.sleep = sleep
        self.wait_log: list[float] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        last: CallFailed | None = None
        for attempt in range(self.policy.max_retries + 1):
            try:
                resp = self.provider.send(req)
                resp.attempts_used = attempt + 1
                return resp
            except CallFailed as failure:
                if not self.policy.is_retryable(failure):
                    raise ProviderError(f"non-retryable provider failure: {failure}",
                                        status=failure.status, attempts=attempt + 1)
                last = failure
                if attempt < self.policy.max_retries:
                    wait = self.policy.wait_seconds(attempt, self.rng)
                    self.wait_log.append(wait)
                    self.sleep(wait)
        raise ProviderError(f"provider failed after {self.policy.max_retries + 1} attempts: {last}",
                            status=last.status if last else None,
                            attempts=self.policy.max_retries + 1)


def complete_chat(req: ChatRequest, provider, policy: RetryPolicy | None = None) -> ChatResponse:
    """Functional form of LlmClient.complete for one-off calls."""
    return LlmClient(provider, policy).complete(req)


class HttpProvider:
    """Chat-completions HTTP provider (widely used JSON wire shape)."""

    def __init__(self, base_url: str, api_key: str = "", model: str = "default",
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.session = session or requests.Session()

    def send(self, req: ChatRequest) -> ChatResponse:
        payload: dict[str, Any] = {
            "model": req.model if req.model != "default" else self.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.tool_definitions:
            payload["tools"] = req.tool_definitions
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(f"{self.base_url}/chat/completions", json=payload,
                                     headers=headers, timeout=req.timeout_s)
        except requests.Timeout as exc:
            raise CallFailed("timeout", message=str(exc))
        except requests.ConnectionError as exc:
            raise CallFailed("connection", message=str(exc))
        if resp.status_code != 200:
            raise CallFailed("status", status=resp.status_code, message=resp.text[:500])
        body = resp.json()
        message = body["choices"][0]["message"]
        tool_calls = []
        for tc in message.get("tool_calls") or []:
            fn = tc.get("function", {})
            args = fn.get("arguments", "{}")
            if isinstance(args, str):
                try:
                    args = json.loads(args)
                except json.JSONDecodeError:
                    args = {"_raw": args}
            tool_calls.append(ToolCall(name=str(fn.get("name", "")), arguments=args))
        return ChatResponse(text=message.get("content") or "", tool_calls=tool_calls)


@dataclass
class StubEntry:
    """One scripted step: a canned response or a simulated failure."""

    response: ChatResponse | None = None
    failure: CallFailed | None = None
    match: str | None = None  # substring matched against the request content
    times: int = 1


class ScriptedStub:
    """Deterministic, replayable stand-in for the LLM provider.

    Entries without a matcher are consumed in order; entries with a matcher
    are picked by substring match against the request's message contents.
    A transcript of every request is recorded for assertions.
    """

    def __init__(self, entries: list[StubEntry] | None = None):
        self.entries = list(entries or [])
        self.transcript: list[ChatRequest] = []

    @staticmethod
    def entry(item: Any, match: str | None = None, times: int = 1) -> StubEntry:
        if isinstance(item, StubEntry):
            return item
        if isinstance(item, CallFailed):
            return StubEntry(failure=item, match=match, times=times)
        if isinstance(item, ChatResponse):
            return StubEntry(response=item, match=match, times=times)
        if isinstance(item, dict):
            return StubEntry(response=ChatResponse(text=json.dumps(item)), match=match, times=times)
        return StubEntry(response=ChatResponse(text=str(item)), match=match, times=times)

    @classmethod
    def of(cls, *items: Any) -> "ScriptedStub":
        return cls([cls.entry(item) for item in items])

    @classmethod
    def from_file(cls, path: str) -> "ScriptedStub":
        """Load a script from a JSON file: a list of entry objects."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        entries = []
        for item in raw:
            if "fail_status" in item:
                failure = CallFailed("status", status=int(item["fail_status"]))
                entries.append(StubEntry(failure=failure, match=item.get("match"),
                                         times=int(item.get("times", 1))))
                continue
            if item.get("fail") in ("timeout", "connection"):
                entries.append(StubEntry(failure=CallFailed(item["fail"]),
                                         match=item.get("match"),
                                         times=int(item.get("times", 1))))
                continue
            calls = [ToolCall(name=tc["name"], arguments=tc.get("arguments", {}))
                     for tc in item.get("tool_calls", [])]
            entries.append(StubEntry(
                response=ChatResponse(text=item.get("text", ""), tool_calls=calls),
                match=item.get("match"), times=int(item.get("times", 1))))
        return cls(entries)

    def _request_text(self, req: ChatRequest) -> str:
        return "\n".join(str(m.get("content", "")) for m in req.messages)

    def send(self, req: ChatRequest) -> ChatResponse:
        self.transcript.append(req)
        text = self._request_text(req)
        chosen: StubEntry | None = None
        for entry in self.entries:
            if entry.times == 0:
                continue
            if entry.match is None or entry.match in text:
                chosen = entry
                break
        if chosen is None:
            raise CallFailed("connection", message="scripted stub exhausted")
        if chosen.times > 0:
            chosen.times -= 1
        if chosen.failure is not None:
            raise CallFailed(chosen.failure.kind, status=chosen.failure.status,
                             message=str(chosen.failure))
        resp = chosen.response
        assert resp is not None
        return ChatResponse(text=resp.text, tool_calls=list(resp.tool_calls))


def stub_client(*items: Any, policy: RetryPolicy | None = None) -> LlmClient:
    """LlmClient over a ScriptedStub with instant (unscaled) backoff waits."""
    policy = policy or RetryPolicy(time_scale=0.0)
    return LlmClient(ScriptedStub.of(*items), policy, sleep=lambda _s: None)
