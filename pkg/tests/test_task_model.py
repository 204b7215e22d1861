"""Task document parsing, serialization, and kind classification."""

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from clawenvkit import (
    ParseError,
    TaskKind,
    classify_task_kind,
    parse_task_config,
    serialize_task_config,
)
from clawenvkit.task_model import judge_weight_cap

from conftest import load_golden


def test_golden_round_trip_yaml():
    cfg = load_golden("todo-001")
    again = parse_task_config(serialize_task_config(cfg))
    assert again.to_doc() == cfg.to_doc()


def test_round_trip_preserves_unknown_fields():
    cfg = parse_task_config("task_id: t\nprompt: p\ncustom_field: {a: 1}\n")
    assert cfg.extra == {"custom_field": {"a": 1}}
    assert parse_task_config(serialize_task_config(cfg)).extra == cfg.extra


def test_json_documents_parse_too():
    cfg = load_golden("todo-001")
    again = parse_task_config(serialize_task_config(cfg, fmt="json"))
    assert again.to_doc() == cfg.to_doc()


def test_missing_fields_default_instead_of_raising():
    cfg = parse_task_config("task_name: only a name")
    assert cfg.task_id == "" and cfg.prompt == ""
    assert cfg.max_rounds == 20 and cfg.timeout_s == 300


def test_wrong_types_raise_parse_error():
    with pytest.raises(ParseError):
        parse_task_config("tools: not-a-list")
    with pytest.raises(ParseError):
        parse_task_config("- a\n- list")
    with pytest.raises(ParseError):
        parse_task_config("max_rounds: 0")
    with pytest.raises(ParseError):
        parse_task_config("scoring_components:\n  - name: x\n    weight: heavy")


def test_parse_error_carries_yaml_line():
    with pytest.raises(ParseError):
        parse_task_config("prompt: [unclosed")


def test_check_kind_alias_normalized():
    cfg = parse_task_config(
        "scoring_components:\n"
        "  - name: tests\n    weight: 1.0\n"
        "    check: {type: pytest_pass, test_file: test_x.py}\n")
    assert cfg.scoring_components[0].check.kind == "test_suite_pass"
    assert "test_suite_pass" in serialize_task_config(cfg)


def test_classification(registry, todo_cfg, cross_cfg, terminal_cfg):
    assert classify_task_kind(todo_cfg, registry) == TaskKind.API_SINGLE
    assert classify_task_kind(cross_cfg, registry) == TaskKind.API_CROSS
    assert classify_task_kind(terminal_cfg, registry) == TaskKind.FILE_DEPENDENT


def test_live_service_classifies_live_web(registry, todo_cfg):
    todo_cfg.services = ["web_real"]
    assert classify_task_kind(todo_cfg, registry) == TaskKind.LIVE_WEB


def test_undecidable_kind_raises(registry):
    from clawenvkit import ClassificationError
    cfg = parse_task_config("task_id: bare\nprompt: p")
    with pytest.raises(ClassificationError):
        classify_task_kind(cfg, registry)


def test_judge_caps_by_kind():
    assert judge_weight_cap(TaskKind.API_SINGLE) == 0.55
    assert judge_weight_cap(TaskKind.API_CROSS) == 0.55
    assert judge_weight_cap(TaskKind.LIVE_WEB) == 0.55
    assert judge_weight_cap(TaskKind.FILE_DEPENDENT) == 0.65


@settings(deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.dictionaries(
    st.text(alphabet="abcdefgh_", min_size=1, max_size=8),
    st.one_of(st.integers(), st.text(max_size=10), st.booleans()),
    max_size=5))
def test_extra_fields_round_trip_property(extra):
    extra = {k: v for k, v in extra.items()
             if k not in ("task_id", "task_name", "prompt", "difficulty", "category",
                          "services", "tools", "fixtures", "files", "max_rounds",
                          "timeout_s", "scoring_components", "safety_checks")}
    cfg = parse_task_config({"task_id": "t", "prompt": "p", **extra})
    assert parse_task_config(serialize_task_config(cfg)).extra == extra
