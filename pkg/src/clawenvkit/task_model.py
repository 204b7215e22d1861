"""Task environment data model and (de)serialization.

A task environment is a triple: a natural-language prompt, an interaction
interface (tools over mock services), and an evaluation functional (weighted
scoring components plus safety checks). This module defines the configuration
types, parses them from YAML/JSON documents, and serializes them back.

Parsing is deliberately lenient: missing fields default to empty values so
the structural validator can report them as issues. ParseError is reserved
for documents that are not mappings or carry wrongly-typed fields.
"""

from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ClassificationError, ParseError

DEFAULT_MAX_ROUNDS = 20
DEFAULT_TIMEOUT_S = 300

DIFFICULTIES = ("easy", "medium", "hard")

# Required kind-specific fields for each of the 15 check types.
CHECK_KINDS: dict[str, list[str]] = {
    "audit_action_exists": ["service", "action"],
    "audit_field_equals": ["service", "action", "field", "value"],
    "audit_field_contains": ["service", "action", "field", "contains"],
    "audit_count_gte": ["service", "action", "count"],
    "audit_count_equals": ["service", "action", "count"],
    "audit_sequence": ["service", "actions"],
    "keywords_present": ["keywords"],
    "keywords_absent": ["keywords"],
    "pattern_match": ["pattern"],
    "min_length": ["min_length"],
    "file_exists": ["path"],
    "file_hash_equals": ["path", "hash"],
    "exit_code": ["cmd", "expected_exit"],
    "test_suite_pass": ["test_file"],
    "llm_judge": ["rubric"],
}

# Accepted on input for compatibility with documents that name the check
# after a specific test framework; always serialized as test_suite_pass.
CHECK_KIND_ALIASES = {"pytest_pass": "test_suite_pass"}

SAFETY_KINDS = ("tool_not_called", "keywords_not_in_output")

# llm_judge total-weight caps by task kind.
JUDGE_CAP_API = 0.55
JUDGE_CAP_FILE = 0.65

WEIGHT_SUM_MIN = 0.95
WEIGHT_SUM_MAX = 1.05


class TaskKind(enum.Enum):
    API_SINGLE = "api_single"
    API_CROSS = "api_cross"
    FILE_DEPENDENT = "file_dependent"
    LIVE_WEB = "live_web"


@dataclass(frozen=True)
class Tool:
    """A callable tool: a canonical service action bound to an endpoint."""

    name: str
    service: str
    endpoint: str
    params: dict[str, str] = field(default_factory=dict)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name, "service": self.service, "endpoint": self.endpoint}
        if self.params:
            doc["params"] = dict(self.params)
        return doc


@dataclass(frozen=True)
class CheckSpec:
    """One scoring check: a kind plus its kind-specific fields."""

    kind: str
    fields: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.fields[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.fields.get(key, default)

    def missing_fields(self) -> list[str]:
        """Required fields absent for this kind; empty if kind is unknown."""
        required = CHECK_KINDS.get(self.kind, [])
        return [f for f in required if self.fields.get(f) is None]

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"type": self.kind}
        doc.update(self.fields)
        return doc


@dataclass(frozen=True)
class ScoringComponent:
    name: str
    weight: float
    check: CheckSpec

    def to_doc(self) -> dict[str, Any]:
        return {"name": self.name, "weight": self.weight, "check": self.check.to_doc()}


@dataclass(frozen=True)
class SafetyCheck:
    kind: str
    tool_name: str | None = None
    keywords: tuple[str, ...] = ()

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"type": self.kind}
        if self.kind == "tool_not_called":
            doc["tool_name"] = self.tool_name
        elif self.kind == "keywords_not_in_output":
            doc["keywords"] = list(self.keywords)
        else:
            if self.tool_name is not None:
                doc["tool_name"] = self.tool_name
            if self.keywords:
                doc["keywords"] = list(self.keywords)
        return doc


@dataclass(frozen=True)
class IntentAtom:
    """A typed intent unit extracted from a user request."""

    type: str  # action | object | constraint
    name: str
    description: str = ""

    ATOM_TYPES = ("action", "object", "constraint")


@dataclass(frozen=True)
class WorkspaceFile:
    """A file materialized under /workspace/ before the agent runs.

    ``contents`` holds literal text; ``generate`` optionally names a
    procedural generator directive instead.
    """

    path: str
    contents: str = ""
    generate: str | None = None

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"path": self.path}
        if self.generate is not None:
            doc["generate"] = self.generate
        else:
            doc["contents"] = self.contents
        return doc


@dataclass
class TaskConfig:
    """The full task environment configuration.

    Local well-formedness (weight sums, caps, reference closure) is the
    validator's job; this type only guarantees field-level shape.
    """

    task_id: str = ""
    task_name: str = ""
    prompt: str = ""
    difficulty: str = "medium"
    category: str = ""
    services: list[str] = field(default_factory=list)
    tools: list[Tool] = field(default_factory=list)
    fixtures: dict[str, list[dict]] = field(default_factory=dict)
    files: list[WorkspaceFile] = field(default_factory=list)
    scoring_components: list[ScoringComponent] = field(default_factory=list)
    safety_checks: list[SafetyCheck] = field(default_factory=list)
    max_rounds: int = DEFAULT_MAX_ROUNDS
    timeout_s: float = DEFAULT_TIMEOUT_S
    extra: dict[str, Any] = field(default_factory=dict)

    KNOWN_FIELDS = (
        "task_id", "task_name", "prompt", "difficulty", "category", "services",
        "tools", "fixtures", "files", "scoring_components", "safety_checks",
        "max_rounds", "timeout_s",
    )

    def judge_weight(self) -> float:
        return sum(c.weight for c in self.scoring_components if c.check.kind == "llm_judge")

    def weight_sum(self) -> float:
        return sum(c.weight for c in self.scoring_components)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "task_id": self.task_id,
            "task_name": self.task_name,
            "prompt": self.prompt,
            "difficulty": self.difficulty,
            "category": self.category,
            "services": list(self.services),
            "tools": [t.to_doc() for t in self.tools],
            "fixtures": copy.deepcopy(self.fixtures),
            "files": [f.to_doc() for f in self.files],
            "scoring_components": [c.to_doc() for c in self.scoring_components],
            "safety_checks": [s.to_doc() for s in self.safety_checks],
            "max_rounds": self.max_rounds,
            "timeout_s": self.timeout_s,
        }
        # Unknown fields are preserved verbatim for round-trip stability.
        for key, value in self.extra.items():
            doc.setdefault(key, copy.deepcopy(value))
        return doc


def _expect(value: Any, types: type | tuple, field_name: str) -> Any:
    if value is not None and not isinstance(value, types):
        raise ParseError(
            f"expected {types} but got {type(value).__name__}", field=field_name
        )
    return value


def _parse_tool(doc: Any, idx: int) -> Tool:
    _expect(doc, dict, f"tools[{idx}]")
    params = _expect(doc.get("params"), dict, f"tools[{idx}].params") or {}
    return Tool(
        name=str(doc.get("name", "")),
        service=str(doc.get("service", "")),
        endpoint=str(doc.get("endpoint", "")),
        params={str(k): str(v) for k, v in params.items()},
    )


def _parse_check(doc: Any, where: str) -> CheckSpec:
    _expect(doc, dict, where)
    doc = dict(doc)
    kind = str(doc.pop("type", doc.pop("kind", "")))
    kind = CHECK_KIND_ALIASES.get(kind, kind)
    return CheckSpec(kind=kind, fields=doc)


def _parse_component(doc: Any, idx: int) -> ScoringComponent:
    where = f"scoring_components[{idx}]"
    _expect(doc, dict, where)
    weight = doc.get("weight", 0.0)
    if not isinstance(weight, (int, float)) or isinstance(weight, bool):
        raise ParseError("weight must be a number", field=f"{where}.weight")
    check_doc = doc.get("check")
    if check_doc is None:
        # Flat form: check fields inline beside name/weight.
        check_doc = {k: v for k, v in doc.items() if k not in ("name", "weight")}
    return ScoringComponent(
        name=str(doc.get("name", "")),
        weight=float(weight),
        check=_parse_check(check_doc, f"{where}.check"),
    )


def _parse_safety(doc: Any, idx: int) -> SafetyCheck:
    where = f"safety_checks[{idx}]"
    _expect(doc, dict, where)
    kind = str(doc.get("type", doc.get("kind", "")))
    keywords = _expect(doc.get("keywords"), list, f"{where}.keywords") or []
    tool_name = doc.get("tool_name")
    return SafetyCheck(
        kind=kind,
        tool_name=None if tool_name is None else str(tool_name),
        keywords=tuple(str(k) for k in keywords),
    )


def _parse_file(doc: Any, idx: int) -> WorkspaceFile:
    where = f"files[{idx}]"
    _expect(doc, dict, where)
    return WorkspaceFile(
        path=str(doc.get("path", "")),
        contents=str(doc.get("contents", "")),
        generate=doc.get("generate"),
    )


def parse_task_config(document: str | dict) -> TaskConfig:
    """Parse a task document (YAML or JSON text, or a mapping) into a TaskConfig.

    Defaults are applied (max_rounds=20, timeout_s=300). Structural
    invariants are not enforced here; run the validator for that.
    """
    if isinstance(document, str):
        try:
            doc = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ParseError(f"invalid document syntax: {exc}", line=getattr(mark, "line", None))
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ParseError(f"task document must be a mapping, got {type(doc).__name__}")

    services = _expect(doc.get("services"), list, "services") or []
    tools_doc = _expect(doc.get("tools"), list, "tools") or []
    fixtures_doc = _expect(doc.get("fixtures"), dict, "fixtures") or {}
    files_doc = _expect(doc.get("files"), list, "files") or []
    components_doc = _expect(doc.get("scoring_components"), list, "scoring_components") or []
    safety_doc = _expect(doc.get("safety_checks"), list, "safety_checks") or []

    fixtures: dict[str, list[dict]] = {}
    for svc, records in fixtures_doc.items():
        records = _expect(records, list, f"fixtures.{svc}") or []
        fixtures[str(svc)] = [dict(_expect(r, dict, f"fixtures.{svc}[]") or {}) for r in records]

    max_rounds = doc.get("max_rounds", DEFAULT_MAX_ROUNDS)
    if not isinstance(max_rounds, int) or isinstance(max_rounds, bool) or max_rounds <= 0:
        raise ParseError("max_rounds must be a positive integer", field="max_rounds")
    timeout_s = doc.get("timeout_s", DEFAULT_TIMEOUT_S)
    if not isinstance(timeout_s, (int, float)) or isinstance(timeout_s, bool) or timeout_s <= 0:
        raise ParseError("timeout_s must be a positive number", field="timeout_s")

    extra = {k: copy.deepcopy(v) for k, v in doc.items() if k not in TaskConfig.KNOWN_FIELDS}

    return TaskConfig(
        task_id=str(doc.get("task_id", "")),
        task_name=str(doc.get("task_name", "")),
        prompt=str(doc.get("prompt", "")),
        difficulty=str(doc.get("difficulty", "medium")),
        category=str(doc.get("category", "")),
        services=[str(s) for s in services],
        tools=[_parse_tool(t, i) for i, t in enumerate(tools_doc)],
        fixtures=fixtures,
        files=[_parse_file(f, i) for i, f in enumerate(files_doc)],
        scoring_components=[_parse_component(c, i) for i, c in enumerate(components_doc)],
        safety_checks=[_parse_safety(s, i) for i, s in enumerate(safety_doc)],
        max_rounds=max_rounds,
        timeout_s=float(timeout_s),
        extra=extra,
    )


def serialize_task_config(cfg: TaskConfig, *, fmt: str = "yaml") -> str:
    """Serialize a TaskConfig back to its document surface form."""
    doc = cfg.to_doc()
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=False)
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def classify_task_kind(cfg: TaskConfig, registry=None) -> TaskKind:
    """Derive the task kind from services/files composition.

    Live-web classification keys on a registry flag rather than a hardcoded
    service name; without a registry no service is considered live.
    """
    if registry is not None:
        for svc in cfg.services:
            spec = registry.get(svc)
            if spec is not None and getattr(spec, "live", False):
                return TaskKind.LIVE_WEB
    if len(cfg.services) >= 2:
        return TaskKind.API_CROSS
    if len(cfg.services) == 1:
        return TaskKind.API_SINGLE
    if cfg.files:
        return TaskKind.FILE_DEPENDENT
    raise ClassificationError(
        f"task {cfg.task_id or '<unnamed>'} has no services and no files; kind is undecidable"
    )


def judge_weight_cap(kind: TaskKind) -> float:
    """Maximum total llm_judge weight allowed for a task of this kind."""
    if kind == TaskKind.FILE_DEPENDENT:
        return JUDGE_CAP_FILE
    return JUDGE_CAP_API
