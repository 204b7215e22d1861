"""Parser and Generator workflows: request → spec → validated task configs.

Every LLM call goes through the injected client, so the whole pipeline runs
offline against a scripted stub. Diversity controls (focus-action rotation,
shuffled service order, recent-name dedup) keep batches from collapsing onto
one action or one task shape.
"""

from __future__ import annotations

import copy
import importlib.resources
import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

from . import prompts
from .errors import (
    FixtureError,
    GenerationError,
    ParseError,
    ServiceDeclined,
    ServiceRejected,
    StartError,
    TaskDiscarded,
)
from .llm_client import ChatRequest, LlmClient
from .mock_services import ErrorInjectionPolicy, MockRuntime
from .registry import ServiceRegistry, ServiceSpec
from .task_model import (
    DIFFICULTIES,
    IntentAtom,
    TaskConfig,
    WorkspaceFile,
    parse_task_config,
)
from .validator import (
    _extract_json,
    check_feasibility,
    validate_service_spec,
    validate_structure,
    verify_coverage,
)

MAX_TASK_ATTEMPTS = 3
MAX_SERVICE_ATTEMPTS = 3
MAX_FIXTURE_ATTEMPTS = 3
DEDUP_CAPACITY = 10


def load_categories() -> dict[str, list[str]]:
    """The category → default-services map shipped with the package."""
    data = importlib.resources.files("clawenvkit").joinpath("data/categories.json")
    return json.loads(data.read_text(encoding="utf-8"))


@dataclass
class ParsedSpec:
    """Structured interpretation of a natural-language task request."""

    services: list[str] = field(default_factory=list)
    missing_services: list[str] = field(default_factory=list)
    difficulty: str = "medium"
    atoms: list[IntentAtom] = field(default_factory=list)
    reasoning: str = ""
    category: str = ""


class GenerationHistory:
    """Batch-level diversity state: recent names and focus-action rotation.

    Single-writer: a batch that generates concurrently must serialize
    updates through one coordinator.
    """

    def __init__(self):
        self.recent_task_names: deque[str] = deque(maxlen=DEDUP_CAPACITY)
        self.focus_action_cursor: dict[str, int] = {}

    def current_focus(self, registry: ServiceRegistry, service: str) -> str | None:
        actions = registry.actions(service)
        if not actions:
            return None
        return actions[self.focus_action_cursor.get(service, 0) % len(actions)]

    def advance(self, service: str) -> None:
        self.focus_action_cursor[service] = self.focus_action_cursor.get(service, 0) + 1

    def record_acceptance(self, task_name: str, primary_service: str | None) -> None:
        self.recent_task_names.append(task_name)
        if primary_service:
            self.advance(primary_service)


def parse_request(text: str, llm: LlmClient, registry: ServiceRegistry,
                  categories: dict[str, list[str]] | None = None) -> ParsedSpec:
    """One provider call turning a request into services + intent atoms.

    A malformed response earns exactly one reprompt carrying the parse
    error; a second failure raises GenerationError.
    """
    if not text.strip():
        raise GenerationError("request text is empty")
    categories = categories if categories is not None else load_categories()
    system = prompts.PARSER_SYSTEM.format(
        services=", ".join(registry.names()),
        categories=json.dumps({k: v for k, v in categories.items() if v}),
    )
    messages = [{"role": "system", "content": system},
                {"role": "user", "content": text}]
    last_error = ""
    for attempt in range(2):
        resp = llm.complete(ChatRequest(messages=messages))
        try:
            return _parse_spec_response(resp.text, categories)
        except GenerationError as exc:
            last_error = str(exc)
            messages = messages + [
                {"role": "assistant", "content": resp.text},
                {"role": "user", "content": f"Your response was invalid: {last_error}. "
                                            "Respond with the corrected JSON only."},
            ]
    raise GenerationError(f"request parsing failed after reprompt: {last_error}")


def _parse_spec_response(text: str, categories: dict[str, list[str]]) -> ParsedSpec:
    doc = _extract_json(text)
    if not isinstance(doc, dict):
        raise GenerationError("response is not a JSON object")
    services = [str(s) for s in doc.get("services") or []]
    missing = [str(s) for s in doc.get("missing_services") or []]
    if not services and not missing:
        raise GenerationError("no services selected")
    difficulty = str(doc.get("difficulty", "medium"))
    if difficulty not in DIFFICULTIES:
        raise GenerationError(f"invalid difficulty {difficulty!r}")
    atoms = []
    for i, raw in enumerate(doc.get("atoms") or []):
        if not isinstance(raw, dict):
            raise GenerationError(f"atom [{i}] is not an object")
        atom_type = str(raw.get("type", ""))
        if atom_type not in IntentAtom.ATOM_TYPES:
            raise GenerationError(f"atom [{i}] has invalid type {atom_type!r}")
        atoms.append(IntentAtom(type=atom_type, name=str(raw.get("name", "")),
                                description=str(raw.get("description", ""))))
    category = str(doc.get("category", ""))
    if not category:
        for name, svcs in categories.items():
            if svcs and set(svcs) == set(services):
                category = name
                break
    return ParsedSpec(services=services, missing_services=missing,
                      difficulty=difficulty, atoms=atoms,
                      reasoning=str(doc.get("reasoning", "")), category=category)


@dataclass
class GenerationAttempt:
    """Diagnostics from one task-generation attempt."""

    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def generate_task(spec: ParsedSpec, registry: ServiceRegistry, llm: LlmClient,
                  history: GenerationHistory | None = None,
                  rng: random.Random | None = None,
                  trace: dict[str, Any] | None = None) -> TaskConfig:
    """Generate and fully validate one task config, retrying with feedback.

    Up to 3 attempts total; each failed attempt's issues are appended to the
    next prompt. Exhaustion raises TaskDiscarded with all attempts' issues.
    """
    history = history or GenerationHistory()
    rng = rng or random.Random(0)
    missing = [s for s in spec.services if s not in registry]
    if missing:
        raise GenerationError(f"services not in registry: {missing} "
                              "(resolve via generate_service first)")
    services = list(spec.services)
    rng.shuffle(services)
    primary = services[0] if services else None
    focus = history.current_focus(registry, primary) if primary else None
    if trace is not None:
        trace["primary_service"] = primary
        trace["focus_action"] = focus

    system = prompts.TASK_GENERATION_SYSTEM.format(
        difficulty=spec.difficulty,
        services=", ".join(services),
        focus_action=focus or "(none)",
        endpoint_listing=prompts.render_endpoint_listing(registry, services),
        recent_names="\n".join(f"- {n}" for n in history.recent_task_names) or "(none)",
        atoms_block=prompts.render_atoms_block(spec.atoms),
    )
    messages = [{"role": "system", "content": system},
                {"role": "user", "content": "Generate the task document now."}]

    attempts: list[GenerationAttempt] = []
    for _attempt in range(MAX_TASK_ATTEMPTS):
        resp = llm.complete(ChatRequest(messages=messages))
        attempt = GenerationAttempt()
        cfg: TaskConfig | None = None
        try:
            cfg = parse_task_config(_strip_fences(resp.text))
        except ParseError as exc:
            attempt.issues.append(f"document does not parse: {exc}")
        if cfg is not None:
            attempt.issues.extend(
                f"structure: {i.message}" for i in validate_structure(cfg, registry))
            coverage = verify_coverage(cfg, spec.atoms)
            attempt.issues.extend(
                f"coverage: atom [{a.type}] {a.name!r} is not verifiable"
                for a in coverage.uncovered)
            if not attempt.issues:
                verdict = check_feasibility(cfg, llm)
                if not verdict.feasible:
                    attempt.issues.append(f"feasibility: {verdict.reasoning}")
        attempts.append(attempt)
        if cfg is not None and attempt.ok:
            if not cfg.category and spec.category:
                cfg.category = spec.category
            history.record_acceptance(cfg.task_name, primary)
            if trace is not None:
                trace["attempts_used"] = len(attempts)
            return cfg
        messages = messages + [
            {"role": "assistant", "content": resp.text},
            {"role": "user", "content": "The document failed validation:\n"
             + "\n".join(f"- {i}" for i in attempt.issues)
             + "\nFix every issue and return the full corrected YAML."},
        ]
    raise TaskDiscarded(
        f"task generation failed after {MAX_TASK_ATTEMPTS} attempts", attempts=attempts)


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1:
            text = text[first_newline + 1:]
        if text.rstrip().endswith("```"):
            text = text.rstrip()[:-3]
    return text


def _default_confirm(spec: ServiceSpec) -> bool:
    listing = "\n".join(f"  POST {e.path}  ({e.action})" for e in spec.endpoints)
    answer = input(f"Register generated service {spec.name!r}?\n{listing}\n[y/N] ")
    return answer.strip().lower() in ("y", "yes")


def smoke_test_service(spec: ServiceSpec) -> None:
    """Start the spec in the mock runtime and hit every endpoint once.

    Uses the in-process handler with injection off; any endpoint answering
    outside {2xx, 404, 422} fails the smoke test. 404/422 are acceptable
    here: the store is empty and we send no parameters.
    """
    solo = ServiceRegistry([spec])
    runtime = MockRuntime(solo, {}, ErrorInjectionPolicy(rate=0.0))
    for ep in spec.endpoints:
        body = {p: "smoke" for p in ep.required}
        status, _resp = runtime.handle("POST", ep.path, body)
        if status >= 500 or status == 405:
            raise StartError(f"smoke test: {ep.path} answered {status}")


def generate_service(request: str, registry: ServiceRegistry, llm: LlmClient,
                     confirm: Callable[[ServiceSpec], bool] | None = None) -> ServiceSpec:
    """Design, validate, smoke-test, confirm, and register a new mock service."""
    confirm = confirm or _default_confirm
    system = prompts.SERVICE_GENERATION_SYSTEM.format(
        request=request, existing=", ".join(registry.names()))
    messages = [{"role": "system", "content": system},
                {"role": "user", "content": "Design the service now."}]
    all_issues: list[str] = []
    for _attempt in range(MAX_SERVICE_ATTEMPTS):
        resp = llm.complete(ChatRequest(messages=messages))
        doc = _extract_json(resp.text)
        issues: list[str] = []
        spec: ServiceSpec | None = None
        if not isinstance(doc, dict):
            issues.append("response is not a JSON object")
        else:
            spec = ServiceSpec.from_doc(doc)
            issues.extend(i.message for i in validate_service_spec(spec, registry))
        if spec is not None and not issues:
            try:
                smoke_test_service(spec)
            except StartError as exc:
                issues.append(str(exc))
        if spec is not None and not issues:
            if not confirm(spec):
                raise ServiceDeclined(f"service {spec.name!r} declined at confirmation")
            registry.register(spec)
            return spec
        all_issues.extend(issues)
        messages = messages + [
            {"role": "assistant", "content": resp.text},
            {"role": "user", "content": "The service spec failed validation:\n"
             + "\n".join(f"- {i}" for i in issues)
             + "\nFix every issue and return the full corrected JSON."},
        ]
    raise ServiceRejected(
        f"service generation failed after {MAX_SERVICE_ATTEMPTS} attempts: {all_issues}")


_PROCEDURAL_SAMPLES = {
    "string": lambda svc, fname, i: f"{svc} {fname} {i + 1}",
    "bool": lambda svc, fname, i: i % 2 == 0,
    "int": lambda svc, fname, i: i + 1,
    "list": lambda svc, fname, i: [],
}


def _procedural_record(service: str, schema: dict[str, Any], index: int) -> dict[str, Any]:
    record: dict[str, Any] = {}
    id_field = schema.get("id_field", "id")
    for fname, fspec in (schema.get("fields") or {}).items():
        if fname == id_field:
            record[fname] = f"{service}-{index + 1}"
            continue
        enum = (fspec or {}).get("enum")
        if enum:
            record[fname] = enum[index % len(enum)]
            continue
        ftype = str((fspec or {}).get("type", "string"))
        maker = _PROCEDURAL_SAMPLES.get(ftype, _PROCEDURAL_SAMPLES["string"])
        record[fname] = maker(service, fname, index)
    return record


def _record_conforms(record: Any, schema: dict[str, Any]) -> bool:
    if not isinstance(record, dict):
        return False
    fields = schema.get("fields") or {}
    if not fields:
        return True
    return all(k in fields for k in record)


def generate_fixtures(cfg: TaskConfig, registry: ServiceRegistry,
                      llm: LlmClient | None = None, *,
                      count: int = 7) -> tuple[dict[str, list[dict]], list[WorkspaceFile]]:
    """Produce per-service fixture records and workspace files for a config.

    Services whose schema is fully enumerable are filled procedurally;
    otherwise the provider generates records, each regenerated up to 3
    times on schema mismatch before FixtureError.
    """
    fixtures: dict[str, list[dict]] = {}
    for service in cfg.services:
        spec = registry.get(service)
        schema = (spec.fixture_schema if spec else None) or {}
        if not schema.get("fields"):
            fixtures[service] = []
            continue
        if cfg.fixtures.get(service):
            fixtures[service] = copy.deepcopy(cfg.fixtures[service])
            continue
        if llm is None or _all_enumerable(schema):
            fixtures[service] = [_procedural_record(service, schema, i)
                                 for i in range(count)]
        else:
            fixtures[service] = _llm_records(service, schema, cfg, llm, count)
    files = [WorkspaceFile(path=f.path, contents=_materialize_contents(f),
                           generate=None) for f in cfg.files]
    return fixtures, files


def _all_enumerable(schema: dict[str, Any]) -> bool:
    fields = schema.get("fields") or {}
    return all((f or {}).get("enum") or (f or {}).get("type") in _PROCEDURAL_SAMPLES
               for f in fields.values())


def _llm_records(service: str, schema: dict[str, Any], cfg: TaskConfig,
                 llm: LlmClient, count: int) -> list[dict]:
    prompt = prompts.FIXTURE_GENERATION_SYSTEM.format(
        service=service, schema=json.dumps(schema), prompt=cfg.prompt, count=count)
    records: list[dict] = []
    for attempt in range(MAX_FIXTURE_ATTEMPTS):
        resp = llm.complete(ChatRequest(messages=[{"role": "user", "content": prompt}]))
        doc = _extract_json(resp.text)
        candidates = doc.get("records") if isinstance(doc, dict) else None
        if isinstance(candidates, list):
            good = [r for r in candidates if _record_conforms(r, schema)]
            records.extend(good)
            if len(records) >= count and len(good) == len(candidates):
                return records[:count]
        if attempt == MAX_FIXTURE_ATTEMPTS - 1:
            break
        prompt += "\nSome records did not conform to the schema; regenerate."
    if records:
        return records[:count]
    raise FixtureError(f"could not produce conforming records for {service!r} "
                       f"after {MAX_FIXTURE_ATTEMPTS} attempts")


def _materialize_contents(f: WorkspaceFile) -> str:
    if f.generate is None:
        return f.contents
    # Procedural file directives: "lines:N" emits N numbered lines; anything
    # else is emitted as a labelled placeholder payload.
    if f.generate.startswith("lines:"):
        n = int(f.generate.split(":", 1)[1])
        return "\n".join(f"line {i + 1}" for i in range(n)) + "\n"
    return f"generated: {f.generate}\n"


@dataclass
class ManifestEntry:
    index: int
    status: str  # accepted | discarded | error
    task_id: str = ""
    task_name: str = ""
    category: str = ""
    services: list[str] = field(default_factory=list)
    focus_action: str | None = None
    attempts_used: int = 0
    issues: list[str] = field(default_factory=list)

    def to_doc(self) -> dict[str, Any]:
        return {
            "index": self.index, "status": self.status, "task_id": self.task_id,
            "task_name": self.task_name, "category": self.category,
            "services": self.services, "focus_action": self.focus_action,
            "attempts_used": self.attempts_used, "issues": self.issues,
        }


def generate_benchmark(request: str, count: int, llm: LlmClient,
                       registry: ServiceRegistry, *,
                       seed: int = 0) -> tuple[list[TaskConfig], list[ManifestEntry]]:
    """Generate N environments from one request with shared diversity state.

    Discards are recorded in the manifest without aborting the batch.
    """
    if count < 1:
        raise GenerationError(f"count must be >= 1, got {count}")
    history = GenerationHistory()
    rng = random.Random(seed)
    categories = load_categories()
    configs: list[TaskConfig] = []
    manifest: list[ManifestEntry] = []
    for index in range(count):
        entry = ManifestEntry(index=index, status="error")
        try:
            spec = parse_request(request, llm, registry, categories)
            entry.category = spec.category
            entry.services = list(spec.services)
            trace: dict[str, Any] = {}
            cfg = generate_task(spec, registry, llm, history, rng, trace)
            entry.focus_action = trace.get("focus_action")
            entry.attempts_used = int(trace.get("attempts_used", 1))
            if not cfg.fixtures:
                cfg.fixtures, _files = generate_fixtures(cfg, registry, None)
            entry.status = "accepted"
            entry.task_id = cfg.task_id
            entry.task_name = cfg.task_name
            configs.append(cfg)
        except TaskDiscarded as exc:
            entry.status = "discarded"
            entry.attempts_used = len(exc.attempts)
            entry.issues = [i for a in exc.attempts for i in a.issues]
        except GenerationError as exc:
            entry.status = "error"
            entry.issues = [str(exc)]
        manifest.append(entry)
    return configs, manifest
