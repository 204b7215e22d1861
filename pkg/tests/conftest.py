"""Shared fixtures: golden task documents, registries, and scripted agents."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from clawenvkit import builtin_registry, parse_task_config
from clawenvkit.llm_client import (
    ChatResponse,
    LlmClient,
    RetryPolicy,
    ScriptedStub,
    StubEntry,
    ToolCall,
)

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = DATA_DIR / "golden"
MUTATION_DIR = DATA_DIR / "mutations"

TODO_FINAL_REPORT = (
    "Sprint status report. Open/in-progress vs completed breakdown by status: "
    "task-1, task-5, task-6 open; task-2, task-4 in-progress; task-3, task-7 "
    "completed. Priority mix: high, medium, low. Flagging blocker items "
    "(task-1, task-4) and urgent items (task-2, task-6) for immediate attention."
)


def load_golden(name: str):
    return parse_task_config((GOLDEN_DIR / f"{name}.yaml").read_text(encoding="utf-8"))


@pytest.fixture
def registry():
    return builtin_registry()


@pytest.fixture
def todo_cfg():
    return load_golden("todo-001")


@pytest.fixture
def cross_cfg():
    return load_golden("calendar_contacts_gmail-001")


@pytest.fixture
def terminal_cfg():
    return load_golden("terminal-001")


def instant_client(stub: ScriptedStub) -> LlmClient:
    """Client over a stub with zero-length waits (offline tests)."""
    return LlmClient(stub, RetryPolicy(time_scale=0.0), sleep=lambda _s: None)


def todo_agent_stub() -> ScriptedStub:
    """Scripted agent for todo-001: one list_tasks call, then the report."""
    return ScriptedStub([
        StubEntry(response=ChatResponse(
            text="Listing the tasks first.",
            tool_calls=[ToolCall(name="list_tasks", arguments={})])),
        StubEntry(response=ChatResponse(text=TODO_FINAL_REPORT)),
    ])


def judge_stub(score: float = 0.7, times: int = -1) -> ScriptedStub:
    body = json.dumps({"score": score, "reasoning": "scripted verdict"})
    return ScriptedStub([StubEntry(response=ChatResponse(text=body), times=times)])
