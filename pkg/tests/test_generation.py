"""Parser/generator workflows: retries, diversity controls, fixtures."""

import pytest

from clawenvkit import (
    GenerationError,
    GenerationHistory,
    ParsedSpec,
    ServiceDeclined,
    ServiceRejected,
    TaskDiscarded,
    generate_benchmark,
    generate_fixtures,
    generate_service,
    generate_task,
    parse_request,
)
from clawenvkit.generation import load_categories
from clawenvkit.llm_client import ChatResponse, ScriptedStub, StubEntry
from clawenvkit.mock_services import validate_fixtures

from conftest import GOLDEN_DIR, instant_client

PARSER_MARK = "planner for an agent evaluation system"
FEASIBILITY_MARK = "reviewing a generated agent task"

PARSED_JSON = {
    "services": ["calendar", "contacts", "gmail"],
    "missing_services": [],
    "difficulty": "medium",
    "atoms": [
        {"type": "action", "name": "list_events", "description": "read the calendar"},
        {"type": "action", "name": "send_email", "description": "notify attendees"},
        {"type": "object", "name": "meeting", "description": "an event exists"},
        {"type": "constraint", "name": "no_delete_event",
         "description": "must not call delete_event"},
    ],
    "reasoning": "schedule + notify spans three services",
}

SERVICE_JSON = {
    "name": "parcel",
    "real_service": "parcel tracking",
    "description": "Tracks shipments",
    "endpoints": [
        {"path": "/parcel/shipments", "name": "list_shipments", "params": {}},
        {"path": "/parcel/shipments/create", "name": "create_shipment",
         "params": {"destination": "required"}},
        {"path": "/parcel/shipments/get", "name": "get_shipment",
         "params": {"id": "required"}},
        {"path": "/parcel/shipments/track", "name": "track_shipment",
         "params": {"id": "required"}},
        {"path": "/parcel/shipments/cancel", "name": "cancel_shipment",
         "params": {"id": "required"}},
    ],
    "data_model": "shipments: id, destination, status",
    "fixture_schema": {"id_field": "id", "fields": {"id": {"type": "string"},
                                                    "destination": {"type": "string"},
                                                    "status": {"type": "string"}}},
}


def golden_doc(name_suffix=""):
    text = (GOLDEN_DIR / "todo-001.yaml").read_text(encoding="utf-8")
    if name_suffix:
        text = text.replace("task_name: Sprint Review Task Audit",
                            f"task_name: Sprint Review Task Audit {name_suffix}")
    return text


def feasible_entry():
    return StubEntry(response=ChatResponse(text='{"feasible": true, "reasoning": "ok"}'),
                     match=FEASIBILITY_MARK, times=-1)


def todo_spec():
    return ParsedSpec(services=["todo"], difficulty="medium", atoms=[])


# ---- parse_request --------------------------------------------------------

def test_parse_request_happy_path(registry):
    llm = instant_client(ScriptedStub.of(PARSED_JSON))
    spec = parse_request("Test if agent can schedule a meeting and notify attendees",
                         llm, registry)
    assert spec.services == ["calendar", "contacts", "gmail"]
    assert len(spec.atoms) == 4
    assert spec.atoms[3].type == "constraint"
    assert spec.category == "workflow"  # matched against the category presets


def test_parse_request_reprompts_once_then_succeeds(registry):
    bad = {**PARSED_JSON, "atoms": [{"type": "verb", "name": "x"}]}
    stub = ScriptedStub.of(bad, PARSED_JSON)
    spec = parse_request("req", instant_client(stub), registry)
    assert len(stub.transcript) == 2
    assert spec.difficulty == "medium"
    # the reprompt carries the parse error back to the provider
    assert "invalid type 'verb'" in stub.transcript[1].messages[-1]["content"]


def test_parse_request_two_bad_responses_raise(registry):
    bad = {**PARSED_JSON, "atoms": [{"type": "verb", "name": "x"}]}
    with pytest.raises(GenerationError):
        parse_request("req", instant_client(ScriptedStub.of(bad, bad)), registry)


def test_parse_request_empty_text_rejected(registry):
    with pytest.raises(GenerationError):
        parse_request("  ", instant_client(ScriptedStub.of(PARSED_JSON)), registry)


# ---- generate_task --------------------------------------------------------

def test_generate_task_accepts_valid_document(registry):
    stub = ScriptedStub([feasible_entry(),
                         StubEntry(response=ChatResponse(text=golden_doc()))])
    history = GenerationHistory()
    cfg = generate_task(todo_spec(), registry, instant_client(stub), history)
    assert cfg.task_id == "todo-001"
    assert list(history.recent_task_names) == ["Sprint Review Task Audit"]
    assert history.focus_action_cursor["todo"] == 1


def test_generate_task_retries_with_feedback_then_succeeds(registry):
    stub = ScriptedStub([
        feasible_entry(),
        StubEntry(response=ChatResponse(text="not: a valid config")),
        StubEntry(response=ChatResponse(text="also: bad")),
        StubEntry(response=ChatResponse(text=golden_doc())),
    ])
    trace = {}
    cfg = generate_task(todo_spec(), registry, instant_client(stub), trace=trace)
    assert cfg.task_id == "todo-001"
    assert trace["attempts_used"] == 3
    # feedback from attempt 1 reached the provider on attempt 2
    retry_prompt = stub.transcript[1].messages[-1]["content"]
    assert "failed validation" in retry_prompt


def test_generate_task_discards_after_exactly_three_attempts(registry):
    stub = ScriptedStub([StubEntry(response=ChatResponse(text="broken: doc"), times=-1)])
    with pytest.raises(TaskDiscarded) as exc:
        generate_task(todo_spec(), registry, instant_client(stub))
    assert len(exc.value.attempts) == 3
    assert len(stub.transcript) == 3  # no feasibility calls for invalid docs


def test_generate_task_requires_registered_services(registry):
    spec = ParsedSpec(services=["nonexistent"])
    with pytest.raises(GenerationError, match="nonexistent"):
        generate_task(spec, registry, instant_client(ScriptedStub.of("x")))


def test_focus_rotation_visits_every_action(registry):
    history = GenerationHistory()
    m = len(registry.actions("todo"))
    seen = []
    for k in range(2 * m):
        seen.append(history.current_focus(registry, "todo"))
        history.advance("todo")
    # over 2m generations each action is the focus exactly twice
    assert all(seen.count(a) == 2 for a in registry.actions("todo"))


def test_dedup_window_capped_at_ten():
    history = GenerationHistory()
    for i in range(25):
        history.record_acceptance(f"task {i}", "todo")
    assert len(history.recent_task_names) == 10
    assert list(history.recent_task_names) == [f"task {i}" for i in range(15, 25)]


# ---- generate_service -----------------------------------------------------

def test_generate_service_registers_on_confirm(registry):
    llm = instant_client(ScriptedStub.of(SERVICE_JSON))
    spec = generate_service("simulate a parcel-tracking API", registry, llm,
                            confirm=lambda _s: True)
    assert "parcel" in registry
    assert len(spec.endpoints) == 5


def test_generate_service_fixes_get_endpoint_on_retry(registry):
    bad = {**SERVICE_JSON,
           "endpoints": [{**SERVICE_JSON["endpoints"][0], "method": "GET"}]
           + SERVICE_JSON["endpoints"][1:]}
    stub = ScriptedStub.of(bad, SERVICE_JSON)
    generate_service("parcel API", registry, instant_client(stub),
                     confirm=lambda _s: True)
    assert len(stub.transcript) == 2
    assert "POST-only" in stub.transcript[1].messages[-1]["content"]


def test_generate_service_decline_leaves_registry_unchanged(registry):
    before = set(registry.names())
    with pytest.raises(ServiceDeclined):
        generate_service("parcel API", registry,
                         instant_client(ScriptedStub.of(SERVICE_JSON)),
                         confirm=lambda _s: False)
    assert set(registry.names()) == before


def test_generate_service_rejected_after_three_attempts(registry):
    stub = ScriptedStub([StubEntry(response=ChatResponse(text="garbage"), times=-1)])
    with pytest.raises(ServiceRejected):
        generate_service("parcel API", registry, instant_client(stub),
                         confirm=lambda _s: True)
    assert len(stub.transcript) == 3


# ---- generate_fixtures ----------------------------------------------------

def test_procedural_fixtures_conform_to_schema(registry, todo_cfg):
    todo_cfg.fixtures = {}
    fixtures, files = generate_fixtures(todo_cfg, registry)
    assert len(fixtures["todo"]) == 7
    validate_fixtures(registry, fixtures)  # raises on nonconformance
    statuses = {r["status"] for r in fixtures["todo"]}
    assert statuses == {"open", "in-progress", "completed"}
    assert files == []


def test_existing_fixtures_kept(registry, todo_cfg):
    fixtures, _files = generate_fixtures(todo_cfg, registry)
    assert fixtures["todo"] == todo_cfg.fixtures["todo"]


def test_workspace_files_materialized(registry, terminal_cfg):
    _fixtures, files = generate_fixtures(terminal_cfg, registry)
    assert files[0].path == "/workspace/task_data.txt"
    assert "WAL" in files[0].contents


# ---- generate_benchmark ---------------------------------------------------

def bench_stub(doc_entries):
    entries = [
        StubEntry(response=ChatResponse(
            text=__import__("json").dumps({**PARSED_JSON, "services": ["todo"],
                                           "atoms": []})),
            match=PARSER_MARK, times=-1),
        feasible_entry(),
    ]
    entries.extend(doc_entries)
    return ScriptedStub(entries)


def test_benchmark_batch_with_one_permanent_failure(registry):
    docs = [StubEntry(response=ChatResponse(text=golden_doc("A"))),
            StubEntry(response=ChatResponse(text=golden_doc("B"))),
            StubEntry(response=ChatResponse(text="bad: doc"), times=3),
            StubEntry(response=ChatResponse(text=golden_doc("D"))),
            StubEntry(response=ChatResponse(text=golden_doc("E")))]
    configs, manifest = generate_benchmark("audit my sprint", 5,
                                           instant_client(bench_stub(docs)), registry)
    assert len(configs) == 4
    statuses = [m.status for m in manifest]
    assert statuses == ["accepted", "accepted", "discarded", "accepted", "accepted"]
    assert manifest[2].attempts_used == 3 and manifest[2].issues


def test_benchmark_rotation_visible_in_manifest(registry):
    docs = [StubEntry(response=ChatResponse(text=golden_doc(s))) for s in "ABC"]
    _configs, manifest = generate_benchmark("audit my sprint", 3,
                                            instant_client(bench_stub(docs)), registry)
    focuses = [m.focus_action for m in manifest]
    assert len(set(focuses)) == 3


def test_benchmark_single_task_base_case(registry):
    docs = [StubEntry(response=ChatResponse(text=golden_doc()))]
    configs, manifest = generate_benchmark("audit my sprint", 1,
                                           instant_client(bench_stub(docs)), registry)
    assert len(configs) == 1 and manifest[0].status == "accepted"


def test_benchmark_rejects_zero_count(registry):
    with pytest.raises(GenerationError):
        generate_benchmark("x", 0, instant_client(ScriptedStub.of("y")), registry)


def test_categories_config_loads():
    categories = load_categories()
    assert categories["workflow"] == ["calendar", "contacts", "gmail"]
    assert len(categories) == 24
