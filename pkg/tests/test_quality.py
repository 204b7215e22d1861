"""Environment-quality dimensions: validity, coherence, clarity."""

import pytest

from clawenvkit import parse_task_config, validate_structure
from clawenvkit.llm_client import CallFailed, ScriptedStub, StubEntry
from clawenvkit.quality import (
    assess_clarity,
    assess_coherence,
    assess_quality,
    assess_validity,
)

from conftest import MUTATION_DIR, instant_client


def failing_llm():
    return instant_client(ScriptedStub([StubEntry(failure=CallFailed("status", 401))]))


def test_validity_true_for_validated_config(registry, todo_cfg):
    assert validate_structure(todo_cfg, registry) == []
    valid, notes = assess_validity(todo_cfg, registry)
    assert valid and notes == []


def test_validity_ignores_non_blocking_issues(registry, todo_cfg):
    # Dropping safety checks trips check 6, which warns but does not
    # invalidate; an unknown check kind (check 4) does.
    todo_cfg.safety_checks = []
    assert assess_validity(todo_cfg, registry)[0] is True

    broken = parse_task_config(
        (MUTATION_DIR / "check_04.yaml").read_text(encoding="utf-8"))
    valid, notes = assess_validity(broken, registry)
    assert valid is False and notes


def test_coherence_scripted_score(registry, todo_cfg):
    llm = instant_client(ScriptedStub.of({"score": 0.59, "reasoning": "mostly aligned"}))
    score, fallback, _note = assess_coherence(todo_cfg, llm)
    assert score == pytest.approx(0.59) and not fallback


def test_coherence_fallback_on_failure(todo_cfg):
    score, fallback, note = assess_coherence(todo_cfg, failing_llm())
    assert score == 0.5 and fallback and "unavailable" in note


def test_clarity_scripted_score(todo_cfg):
    llm = instant_client(ScriptedStub.of({"score": 3.54, "reasoning": "clear enough"}))
    score, fallback, _note = assess_clarity(todo_cfg, llm)
    assert score == pytest.approx(3.54) and not fallback


def test_clarity_fallback_is_midpoint(todo_cfg):
    score, fallback, _note = assess_clarity(todo_cfg, failing_llm())
    assert score == 3.0 and fallback


def test_clarity_rejects_empty_prompt(todo_cfg):
    todo_cfg.prompt = "   "
    with pytest.raises(ValueError):
        assess_clarity(todo_cfg, None)


def test_quality_idempotent_per_script(registry, todo_cfg):
    def run():
        llm = instant_client(ScriptedStub([
            StubEntry(response=__import__("clawenvkit").ChatResponse(
                text='{"score": 0.8}'), match="coherent", times=-1),
            StubEntry(response=__import__("clawenvkit").ChatResponse(
                text='{"score": 4.0}'), match="clarity", times=-1),
        ]))
        return assess_quality(todo_cfg, registry, llm)

    a, b = run(), run()
    assert a.to_doc() == b.to_doc()
    assert a.coherence == 0.8 and a.clarity == 4.0 and a.validity


def test_quality_without_judge_uses_both_fallbacks(registry, todo_cfg):
    report = assess_quality(todo_cfg, registry, None)
    assert (report.coherence, report.clarity) == (0.5, 3.0)
    assert report.coherence_fallback and report.clarity_fallback
