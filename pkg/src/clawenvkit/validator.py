"""Structural, coverage, and feasibility validation of task configs.

validate_structure runs 12 checks sequentially and collects every issue
into a flat list; it never short-circuits. verify_coverage maps intent
atoms onto the config; check_feasibility asks the configured LLM whether
the task is actually solvable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import prompts
from .errors import ClassificationError, ProviderError
from .registry import ServiceRegistry, ServiceSpec
from .task_model import (
    CHECK_KINDS,
    SAFETY_KINDS,
    WEIGHT_SUM_MAX,
    WEIGHT_SUM_MIN,
    IntentAtom,
    TaskConfig,
    classify_task_kind,
    judge_weight_cap,
)

_EPS = 1e-9

_WORKSPACE_REF = re.compile(r"/workspace/[\w./-]+")

# Check kinds whose path field names an agent-created output; those paths
# need no files[] entry (the agent is expected to create them).
_OUTPUT_PATH_KINDS = {"file_exists", "file_hash_equals"}


@dataclass(frozen=True)
class Issue:
    """One structural validation failure; check_id maps to a single check."""

    check_id: int
    message: str
    path: str = ""
    severity: str = "error"

    def to_doc(self) -> dict:
        return {"check_id": self.check_id, "severity": self.severity,
                "message": self.message, "path": self.path}


@dataclass(frozen=True)
class SpecIssue:
    """One service-spec validation failure."""

    code: str
    message: str


@dataclass
class CoverageReport:
    covered: list[tuple[IntentAtom, str]] = field(default_factory=list)
    uncovered: list[IntentAtom] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.uncovered


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    reasoning: str = ""


def _audit_actions_required(cfg: TaskConfig) -> set[str]:
    """Actions some scoring component requires the agent to perform."""
    out: set[str] = set()
    for comp in cfg.scoring_components:
        check = comp.check
        if check.kind in ("audit_action_exists", "audit_field_equals", "audit_field_contains"):
            if check.get("action"):
                out.add(str(check["action"]))
        elif check.kind in ("audit_count_gte", "audit_count_equals"):
            count = check.get("count", 0)
            if check.get("action") and isinstance(count, (int, float)) and count >= 1:
                out.add(str(check["action"]))
        elif check.kind == "audit_sequence":
            for action in check.get("actions") or []:
                out.add(str(action))
    return out


def validate_structure(cfg: TaskConfig, registry: ServiceRegistry) -> list[Issue]:
    """Run the 12 structural checks in order; return all issues found."""
    issues: list[Issue] = []

    # 1: required fields
    for name in ("task_id", "task_name", "prompt"):
        if not getattr(cfg, name):
            issues.append(Issue(1, f"Required field {name!r} missing or empty", path=name))
    if not cfg.scoring_components:
        issues.append(Issue(1, "Required field 'scoring_components' missing or empty",
                            path="scoring_components"))

    # 2: component count
    if len(cfg.scoring_components) < 3:
        issues.append(Issue(2, f"Fewer than 3 components ({len(cfg.scoring_components)})",
                            path="scoring_components"))

    # 3: weight sum
    total = cfg.weight_sum()
    if not (WEIGHT_SUM_MIN - _EPS <= total <= WEIGHT_SUM_MAX + _EPS):
        issues.append(Issue(3, f"Sum outside [0.95, 1.05]: weights sum to {total:.4f}",
                            path="scoring_components"))

    # 4: check kinds valid with required fields
    for i, comp in enumerate(cfg.scoring_components):
        where = f"scoring_components[{i}].check"
        if comp.check.kind not in CHECK_KINDS:
            issues.append(Issue(4, f"Unknown check type {comp.check.kind!r}", path=where))
            continue
        missing = comp.check.missing_fields()
        if missing:
            issues.append(Issue(
                4, f"Check {comp.check.kind!r} missing required fields: {', '.join(missing)}",
                path=where))

    # 5: llm_judge weight cap by task kind (API cap when kind is undecidable)
    try:
        kind = classify_task_kind(cfg, registry)
        cap = judge_weight_cap(kind)
    except ClassificationError:
        cap = judge_weight_cap(None)  # type: ignore[arg-type]
    judge_total = cfg.judge_weight()
    if judge_total > cap + _EPS:
        issues.append(Issue(
            5, f"llm_judge weight {judge_total:.2f} exceeds cap {cap:.2f}",
            path="scoring_components"))

    # 6: safety checks present with known kinds
    if not cfg.safety_checks:
        issues.append(Issue(6, "No safety checks defined", path="safety_checks"))
    for i, sc in enumerate(cfg.safety_checks):
        if sc.kind not in SAFETY_KINDS:
            issues.append(Issue(6, f"Unknown safety check type {sc.kind!r}",
                                path=f"safety_checks[{i}]"))

    # 7: safety tool refs exist
    known_actions = {t.name for t in cfg.tools}
    for svc in cfg.services:
        known_actions.update(registry.actions(svc))
    for i, sc in enumerate(cfg.safety_checks):
        if sc.kind == "tool_not_called" and sc.tool_name not in known_actions:
            issues.append(Issue(7, f"Safety check references unknown tool {sc.tool_name!r}",
                                path=f"safety_checks[{i}].tool_name"))

    # 8: services exist in registry
    referenced = list(dict.fromkeys(list(cfg.services) + [t.service for t in cfg.tools if t.service]))
    for svc in referenced:
        if svc not in registry:
            issues.append(Issue(8, f"Unknown service {svc!r}", path="services"))

    # 9: endpoints are real routes and names are canonical actions
    for i, tool in enumerate(cfg.tools):
        spec = registry.get(tool.service)
        if spec is None:
            continue  # already issue #8
        ep = spec.endpoint_for_path(tool.endpoint)
        if ep is None:
            issues.append(Issue(9, f"Endpoint {tool.endpoint!r} is not a route of "
                                   f"service {tool.service!r}", path=f"tools[{i}].endpoint"))
        elif ep.action != tool.name:
            issues.append(Issue(9, f"Tool name {tool.name!r} does not match canonical action "
                                   f"{ep.action!r} for {tool.endpoint!r}", path=f"tools[{i}].name"))

    # 10: multi-service tasks use >=2 distinct services among tools
    if len(set(cfg.services)) >= 2:
        tool_services = {t.service for t in cfg.tools}
        if len(tool_services) < 2:
            issues.append(Issue(10, "Multi-service task uses tools from fewer than 2 services",
                                path="tools"))

    # 11: no action both forbidden by safety and required by scoring
    forbidden = {sc.tool_name for sc in cfg.safety_checks
                 if sc.kind == "tool_not_called" and sc.tool_name}
    required = _audit_actions_required(cfg)
    for action in sorted(forbidden & required):
        issues.append(Issue(11, f"Safety forbids {action!r} while scoring requires it",
                            path="safety_checks"))

    # 12: /workspace/ references closed against files[]. Paths asserted by
    # file_exists / file_hash_equals are agent outputs and are exempt.
    declared = {f.path for f in cfg.files}
    refs: list[tuple[str, str]] = [(m, "prompt") for m in _WORKSPACE_REF.findall(cfg.prompt)]
    for i, comp in enumerate(cfg.scoring_components):
        if comp.check.kind in _OUTPUT_PATH_KINDS:
            continue
        for fname in ("cmd", "test_file"):
            value = comp.check.get(fname)
            if isinstance(value, str):
                refs.extend((m, f"scoring_components[{i}].check.{fname}")
                            for m in _WORKSPACE_REF.findall(value))
    seen: set[str] = set()
    for ref, where in refs:
        ref = ref.rstrip(".")
        if ref in declared or ref in seen:
            continue
        seen.add(ref)
        issues.append(Issue(12, f"/workspace/ ref without files[] entry: {ref}", path=where))

    return issues


def _norm(text: str) -> str:
    return re.sub(r"[\s_-]+", " ", text.lower()).strip()


def _text_contains(haystack: str, name: str) -> bool:
    """Case-insensitive, whole-word-preferring substring match."""
    hay = _norm(haystack)
    needle = _norm(name)
    if not needle:
        return False
    if re.search(rf"\b{re.escape(needle)}\b", hay):
        return True
    return needle in hay


def verify_coverage(cfg: TaskConfig, atoms: list[IntentAtom]) -> CoverageReport:
    """Check that every intent atom maps to a checkable element of the config."""
    report = CoverageReport()
    rubrics = [str(c.check.get("rubric", "")) for c in cfg.scoring_components
               if c.check.kind == "llm_judge"]
    keyword_lists = [c.check.get("keywords") or [] for c in cfg.scoring_components
                     if c.check.kind in ("keywords_present", "keywords_absent")]
    fixtures_text = json.dumps(cfg.fixtures)

    for atom in atoms:
        evidence = None
        if atom.type == "action":
            in_tools = any(t.name == atom.name for t in cfg.tools)
            scored = atom.name in _audit_actions_required(cfg) or any(
                _text_contains(r, atom.name) for r in rubrics)
            if in_tools and scored:
                evidence = f"tools[].name={atom.name} + scoring"
        elif atom.type == "object":
            if _text_contains(fixtures_text, atom.name):
                evidence = "fixtures"
            elif _text_contains(cfg.prompt, atom.name):
                evidence = "prompt"
            elif any(_text_contains(r, atom.name) for r in rubrics):
                evidence = "llm_judge rubric"
        elif atom.type == "constraint":
            for i, sc in enumerate(cfg.safety_checks):
                if sc.kind == "tool_not_called" and sc.tool_name and (
                        _text_contains(atom.name, sc.tool_name)
                        or _text_contains(atom.description, sc.tool_name)):
                    evidence = f"safety_checks[{i}]"
                    break
                if sc.kind == "keywords_not_in_output" and any(
                        _text_contains(atom.name, kw) or _text_contains(atom.description, kw)
                        for kw in sc.keywords):
                    evidence = f"safety_checks[{i}]"
                    break
            if evidence is None:
                for kws in keyword_lists:
                    if any(_text_contains(atom.name, str(kw)) or
                           _text_contains(str(kw), atom.name) for kw in kws):
                        evidence = "scoring keywords"
                        break
            if evidence is None and any(_text_contains(r, atom.name) for r in rubrics):
                evidence = "llm_judge rubric"

        if evidence is not None:
            report.covered.append((atom, evidence))
        else:
            report.uncovered.append(atom)
    return report


def check_feasibility(cfg: TaskConfig, llm) -> FeasibilityVerdict:
    """One LLM call asking whether the task is actually solvable.

    Provider outages must not deadlock generation: on failure the verdict
    defaults to feasible with a marker in the reasoning.
    """
    from .llm_client import ChatRequest  # local import to avoid a cycle

    prompt = prompts.render_feasibility(cfg)
    try:
        resp = llm.complete(ChatRequest(messages=[
            {"role": "system", "content": prompts.FEASIBILITY_SYSTEM},
            {"role": "user", "content": prompt},
        ]))
    except ProviderError:
        return FeasibilityVerdict(feasible=True, reasoning="judge unavailable")
    parsed = _extract_json(resp.text)
    if not isinstance(parsed, dict) or "feasible" not in parsed:
        return FeasibilityVerdict(feasible=True, reasoning="unparseable feasibility response")
    return FeasibilityVerdict(feasible=bool(parsed["feasible"]),
                              reasoning=str(parsed.get("reasoning", "")))


def _extract_json(text: str):
    """Parse a JSON object from text, tolerating surrounding prose/fences."""
    text = (text or "").strip()
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        pass
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            return json.loads(text[start:end + 1])
        except (json.JSONDecodeError, ValueError):
            return None
    return None


def validate_service_spec(spec: ServiceSpec, registry: ServiceRegistry) -> list[SpecIssue]:
    """Validate a generated mock-service spec against the runtime's rules."""
    issues: list[SpecIssue] = []
    for ep in spec.endpoints:
        if ep.method != "POST":
            issues.append(SpecIssue("non_post", f"endpoint {ep.path} uses {ep.method}; "
                                                "business endpoints must be POST-only"))
        if not ep.path.startswith(f"/{spec.name}/"):
            issues.append(SpecIssue("bad_path", f"endpoint path {ep.path!r} must match "
                                                f"/{spec.name}/{{resource}}"))
    if not 4 <= len(spec.endpoints) <= 7:
        issues.append(SpecIssue("endpoint_count",
                                f"endpoint count {len(spec.endpoints)} outside [4, 7]"))
    if spec.name in registry:
        issues.append(SpecIssue("duplicate", f"service name {spec.name!r} duplicates an "
                                             "existing registry entry"))
    if not spec.fixture_schema:
        issues.append(SpecIssue("missing_fixture_schema", "fixture_schema is missing or empty"))
    return issues
