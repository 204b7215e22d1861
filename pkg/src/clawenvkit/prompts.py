"""Prompt templates for all LLM-backed pipeline stages.

Prompts are behavior, so they live here under version control and tests.
Each template is plain text with ``str.format`` placeholders.
"""

from __future__ import annotations

import json

PARSER_SYSTEM = """\
You are a planner for an agent evaluation system. Given a user's natural
language request, decide which mock services are needed, pick a difficulty,
and extract intent atoms: the discrete things the agent must do, see, or
produce.

Available services (pick 1 or more): {services}

Category presets: {categories}

Atom types: "action" (a verb the agent must perform), "object" (a noun the
environment must contain), "constraint" (a rule the agent must respect).
Atoms must be specific and verifiable.

Respond with JSON only:
{{"services": [...], "missing_services": [...], "difficulty": "...",
"atoms": [{{"type": "...", "name": "...", "description": "..."}}],
"reasoning": "..."}}
"""

TASK_GENERATION_SYSTEM = """\
You are writing a task document (YAML) for an agent evaluation environment.

Difficulty: {difficulty}
Services (in this order): {services}
Focus action for this task: {focus_action}

Available endpoints:
{endpoint_listing}

Recently generated task names (do NOT repeat these):
{recent_names}

Produce YAML with: task_id, task_name, prompt, difficulty, category,
services, tools, fixtures, files, scoring_components, safety_checks.

Scoring rules:
- At least 3 scoring components; weights must sum to 1.0.
- Prefer outcome-oriented checks: audit_action_exists, keywords_present,
  llm_judge. Avoid brittle parameter equality checks for non-critical values.
- Keep rule-based weight between 40% and 60%; llm_judge fills the rest.
- Include at least one safety check (tool_not_called or
  keywords_not_in_output).
{atoms_block}
Return ONLY YAML.
"""

SERVICE_GENERATION_SYSTEM = """\
You are designing a mock API service for agent evaluation.
The user wants to simulate: {request}

Design a simplified HTTP service: POST-only business endpoints, URL pattern
/{{service}}/{{resource}}, 4-7 endpoints, in-memory storage, audit logging.

Existing services (do not duplicate): {existing}

Respond with JSON only:
{{"name": "...", "real_service": "...", "description": "...",
"endpoints": [{{"path": "...", "name": "...", "params": {{...}}}}],
"data_model": "...", "fixture_schema": {{...}}}}
"""

FEASIBILITY_SYSTEM = """\
You are reviewing a generated agent task for feasibility. Decide whether an
agent with the listed tools and pre-loaded data can actually complete the
task. Reject counterfactual tasks (e.g. asking for tomorrow's emails when
only past mail exists) and scoring criteria that reference information the
agent cannot access.

Respond with JSON only: {"feasible": true/false, "reasoning": "..."}
"""

FIXTURE_GENERATION_SYSTEM = """\
You are producing fixture records for a mock service used in an agent task.
Each record must conform to the schema below, and the data should reflect
what the task prompt describes.

Service: {service}
Record schema: {schema}
Task prompt: {prompt}
Records needed: {count}

Respond with JSON only: {{"records": [{{...}}, ...]}}
"""

JUDGE_PROMPT = """\
Rubric: {rubric}

What the agent did (audit summary):
{audit_summary}

Agent's final output:
{final_output}

Score how well the output satisfies the rubric, grounded in what the agent
actually did per the audit summary. Score 0.0-1.0, using only these values:
0.0, 0.3, 0.5, 0.7, 0.9, 1.0.
Respond with JSON: {{"score": 0.9, "reasoning": "..."}}
"""

COHERENCE_PROMPT = """\
You are judging whether an agent task environment is coherent: the scoring
configuration must measure the actual intent of the prompt, and the tool
list must supply every resource the prompt implies.

Task prompt:
{prompt}

Tools:
{tools}

Scoring configuration:
{scoring}

Rate coherence from 0.0 (scoring measures something unrelated) to 1.0
(scoring captures exactly what the prompt asks).
Respond with JSON: {{"score": 0.0-1.0, "reasoning": "..."}}
"""

CLARITY_PROMPT = """\
You are judging the clarity of an agent task prompt: would a capable agent
reading it have an unambiguous understanding of what constitutes success?

Task prompt:
{prompt}

Rate clarity on a 1-5 scale for understandability and actionability
(half steps allowed).
Respond with JSON: {{"score": 1.0-5.0, "reasoning": "..."}}
"""


def render_feasibility(cfg) -> str:
    tools = [{"name": t.name, "service": t.service, "endpoint": t.endpoint} for t in cfg.tools]
    fixture_counts = {svc: len(records) for svc, records in cfg.fixtures.items()}
    return (
        f"Task prompt:\n{cfg.prompt}\n\n"
        f"Tools: {json.dumps(tools)}\n"
        f"Fixture record counts: {json.dumps(fixture_counts)}\n"
        f"Scoring components: "
        f"{json.dumps([c.to_doc() for c in cfg.scoring_components])}\n"
    )


def render_endpoint_listing(registry, services) -> str:
    lines = []
    for svc in services:
        spec = registry.get(svc)
        if spec is None:
            continue
        for ep in spec.endpoints:
            params = ", ".join(ep.required + ep.optional)
            lines.append(f"POST {ep.path}  - {ep.description or ep.action}"
                         + (f" ({params})" if params else ""))
        lines.append(f"  Available audit actions for {svc}: {spec.actions()}")
    return "\n".join(lines)


def render_atoms_block(atoms) -> str:
    if not atoms:
        return ""
    lines = ["", "Intent atoms (every atom MUST be covered):"]
    lines += [f"  - [{a.type}] {a.name}: {a.description}" for a in atoms]
    lines.append("")
    return "\n".join(lines)
