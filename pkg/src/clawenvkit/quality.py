"""Automated task-quality dimensions: validity, coherence, and clarity.

Validity is binary and purely structural; coherence and clarity are
LLM-judged with neutral fallbacks so a flaky judge never blocks a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .errors import ProviderError
from .grading import _extract_json
from .llm_client import ChatRequest, LlmClient
from .registry import ServiceRegistry
from .task_model import TaskConfig
from .validator import validate_structure

# Structural checks whose failure makes a task invalid (not merely warned):
# component count, weight budget, check-kind shape, service registration,
# and endpoint canonicality.
VALIDITY_CHECK_IDS = frozenset({3, 4, 8, 9})
COHERENCE_FALLBACK = 0.5
CLARITY_FALLBACK = 3.0


@dataclass
class QualityReport:
    validity: bool
    coherence: float
    clarity: float
    coherence_fallback: bool = False
    clarity_fallback: bool = False
    notes: list[str] = field(default_factory=list)

    def to_doc(self) -> dict[str, Any]:
        return {
            "validity": self.validity,
            "coherence": self.coherence,
            "clarity": self.clarity,
            "coherence_fallback": self.coherence_fallback,
            "clarity_fallback": self.clarity_fallback,
            "notes": self.notes,
        }


def assess_validity(cfg: TaskConfig, registry: ServiceRegistry) -> tuple[bool, list[str]]:
    issues = validate_structure(cfg, registry)
    blocking = [i for i in issues if i.check_id in VALIDITY_CHECK_IDS]
    return (not blocking), [i.message for i in blocking]


def _judged_number(llm: LlmClient | None, prompt: str,
                   low: float, high: float) -> tuple[float | None, str]:
    if llm is None:
        return None, "no judge configured"
    req = ChatRequest(messages=[{"role": "user", "content": prompt}])
    try:
        resp = llm.complete(req)
    except ProviderError:
        return None, "judge unavailable"
    parsed = _extract_json(resp.text)
    if isinstance(parsed, dict) and isinstance(parsed.get("score"), (int, float)):
        return min(high, max(low, float(parsed["score"]))), ""
    return None, "unparseable judge response"


def assess_coherence(cfg: TaskConfig, llm: LlmClient | None) -> tuple[float, bool, str]:
    """Do the scoring checks actually measure what the prompt asks? [0, 1]."""
    prompt = prompts.COHERENCE_PROMPT.format(
        prompt=cfg.prompt,
        tools="\n".join(f"- {t.name}: POST {t.endpoint}" for t in cfg.tools) or "(none)",
        scoring="\n".join(
            f"- {c.name} (weight {c.weight}): {c.check.kind} {c.check.fields}"
            for c in cfg.scoring_components),
    )
    score, note = _judged_number(llm, prompt, 0.0, 1.0)
    if score is None:
        return COHERENCE_FALLBACK, True, note
    return score, False, note


def assess_clarity(cfg: TaskConfig, llm: LlmClient | None) -> tuple[float, bool, str]:
    """Is the prompt unambiguous for a competent agent? Scale 1-5."""
    if not cfg.prompt.strip():
        raise ValueError("cannot assess clarity of an empty prompt")
    prompt = prompts.CLARITY_PROMPT.format(prompt=cfg.prompt)
    score, note = _judged_number(llm, prompt, 1.0, 5.0)
    if score is None:
        return CLARITY_FALLBACK, True, note
    return score, False, note


def assess_quality(cfg: TaskConfig, registry: ServiceRegistry,
                   llm: LlmClient | None = None) -> QualityReport:
    validity, notes = assess_validity(cfg, registry)
    coherence, coh_fb, coh_note = assess_coherence(cfg, llm)
    clarity, cla_fb, cla_note = assess_clarity(cfg, llm)
    for note in (coh_note, cla_note):
        if note:
            notes.append(note)
    return QualityReport(validity=validity, coherence=coherence, clarity=clarity,
                         coherence_fallback=coh_fb, clarity_fallback=cla_fb,
                         notes=notes)
