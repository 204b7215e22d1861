"""Mock runtime semantics: routing, audit, injection, fixtures, HTTP layer."""

import random

import pytest
import requests

from clawenvkit import ErrorInjectionPolicy, MockRuntime, StartError, start_services
from clawenvkit.mock_services import inject_decision

from conftest import load_golden

NO_INJECT = ErrorInjectionPolicy(rate=0.0)


@pytest.fixture
def runtime(registry, todo_cfg):
    return MockRuntime(registry, todo_cfg.fixtures, NO_INJECT)


def test_listing_returns_fixtures(runtime):
    status, body = runtime.handle("POST", "/todo/tasks", {})
    assert status == 200
    assert len(body["records"]) == 7


def test_filters_and_tag_listing(runtime):
    status, body = runtime.handle("POST", "/todo/tasks", {"status": "open"})
    assert {r["id"] for r in body["records"]} == {"task-1", "task-5", "task-6"}
    status, body = runtime.handle("POST", "/todo/tasks", {"tag": "blocker"})
    assert {r["id"] for r in body["records"]} == {"task-1", "task-4"}


def test_non_post_business_route_is_405_and_audited(runtime):
    status, _ = runtime.handle("GET", "/todo/tasks", {})
    assert status == 405
    audit = runtime.read_audit()
    assert len(audit) == 1 and audit[0].response_status == 405


def test_unknown_route_404_not_audited(runtime):
    status, _ = runtime.handle("POST", "/todo/nothing", {})
    assert status == 404
    assert runtime.read_audit() == []


def test_wrong_parameter_name_is_422_with_field_errors(runtime):
    status, body = runtime.handle("POST", "/todo/tasks/get", {"taskid": "task-1"})
    assert status == 422
    assert body["fields"] == {"taskid": "unknown parameter",
                              "task_id": "required parameter missing"}


def test_crud_cycle_and_reset(runtime):
    status, created = runtime.handle("POST", "/todo/tasks/create", {"title": "New one"})
    assert status == 200 and created["id"] == "todo-new-1"
    status, got = runtime.handle("POST", "/todo/tasks/get", {"task_id": "todo-new-1"})
    assert status == 200 and got["title"] == "New one"
    status, _ = runtime.handle("POST", "/todo/tasks/update",
                               {"task_id": "task-1", "status": "completed"})
    assert status == 200
    status, _ = runtime.handle("POST", "/todo/tasks/delete", {"task_id": "task-2"})
    assert status == 200
    status, _ = runtime.handle("POST", "/todo/tasks/get", {"task_id": "task-2"})
    assert status == 404

    runtime.reset()
    assert runtime.read_audit() == []
    _, body = runtime.handle("POST", "/todo/tasks", {})
    assert len(body["records"]) == 7


def test_audit_ordinals_strictly_increase(runtime):
    for _ in range(5):
        runtime.handle("POST", "/todo/tasks", {})
    assert [r.ordinal for r in runtime.read_audit()] == [0, 1, 2, 3, 4]


def test_control_routes_unaudited(runtime):
    assert runtime.handle("GET", "/todo/health", None)[0] == 200
    assert runtime.handle("GET", "/audit", None)[0] == 200
    assert runtime.read_audit() == []


def test_gmail_send_and_inbox_semantics(registry):
    cfg = load_golden("calendar_contacts_gmail-001")
    runtime = MockRuntime(registry, cfg.fixtures, NO_INJECT)
    status, sent = runtime.handle("POST", "/gmail/send", {
        "to": "alice@acmesoft.io", "subject": "Reminder", "body": "See you Monday"})
    assert status == 200 and sent["folder"] == "sent"
    _, inbox = runtime.handle("POST", "/gmail/inbox", {})
    assert {r["id"] for r in inbox["records"]} == {"email-1", "email-2"}


def test_contact_search_is_substring(registry):
    cfg = load_golden("calendar_contacts_gmail-001")
    runtime = MockRuntime(registry, cfg.fixtures, NO_INJECT)
    _, body = runtime.handle("POST", "/contacts/search", {"query": "pixelworks"})
    assert [r["name"] for r in body["records"]] == ["Carla Mendes"]


def test_fixture_schema_violation_names_the_record(registry):
    fixtures = {"todo": [{"id": "t1", "title": "ok", "status": "open",
                          "priority": "low", "due_date": "", "tags": []},
                         {"id": "t2", "surprise": 1}]}
    with pytest.raises(StartError, match=r"todo\[1\].*surprise"):
        MockRuntime(registry, fixtures, NO_INJECT)


def test_injection_determinism_same_seed_same_stream(registry, todo_cfg):
    def statuses(seed):
        runtime = MockRuntime(registry, todo_cfg.fixtures,
                              ErrorInjectionPolicy(rate=0.5, seed=seed), time_scale=0.0)
        return [runtime.handle("POST", "/todo/tasks", {})[0] for _ in range(40)]

    assert statuses(11) == statuses(11)
    assert statuses(11) != statuses(12)


def test_control_traffic_does_not_perturb_injection(registry, todo_cfg):
    def run(with_control):
        runtime = MockRuntime(registry, todo_cfg.fixtures,
                              ErrorInjectionPolicy(rate=0.5, seed=5), time_scale=0.0)
        out = []
        for i in range(20):
            if with_control:
                runtime.handle("GET", "/todo/health", None)
            out.append(runtime.handle("POST", "/todo/tasks", {})[0])
        return out

    assert run(False) == run(True)


def test_delayed_responses_succeed_and_mark_injected(registry, todo_cfg):
    policy = ErrorInjectionPolicy(rate=1.0,
                                  split={"rate_limit": 0.0, "server_error": 0.0,
                                         "delay": 1.0}, seed=1)
    runtime = MockRuntime(registry, todo_cfg.fixtures, policy, time_scale=0.0)
    status, _ = runtime.handle("POST", "/todo/tasks", {})
    assert status == 200
    record = runtime.read_audit()[0]
    assert record.injected and record.injected_kind == "delay"


def test_inject_decision_exempt_paths_consume_no_rng():
    policy = ErrorInjectionPolicy(rate=1.0, seed=0)
    rng = random.Random(0)
    before = rng.getstate()
    assert inject_decision("/todo/audit", policy, rng).kind == "pass"
    assert inject_decision("/todo/reset", policy, rng).kind == "pass"
    assert inject_decision("/todo/health", policy, rng).kind == "pass"
    assert rng.getstate() == before


def test_invalid_policy_rejected():
    with pytest.raises(ValueError):
        ErrorInjectionPolicy(rate=1.5)
    with pytest.raises(ValueError):
        ErrorInjectionPolicy(split={"rate_limit": 0.9, "server_error": 0.9, "delay": 0.2})


def test_http_listener_end_to_end(registry, todo_cfg):
    handle = start_services(registry, todo_cfg.fixtures, NO_INJECT, port=0)
    try:
        base = handle.base_url
        resp = requests.post(f"{base}/todo/tasks", json={}, timeout=5)
        assert resp.status_code == 200 and len(resp.json()["records"]) == 7
        assert requests.get(f"{base}/todo/tasks", timeout=5).status_code == 405
        audit = requests.get(f"{base}/audit", timeout=5).json()["records"]
        assert [r["response_status"] for r in audit] == [200, 405]
        injected = requests.get(f"{base}/audit?injected=true", timeout=5).json()
        assert injected["records"] == []
        assert requests.get(f"{base}/reset", timeout=5).status_code == 200
        assert requests.get(f"{base}/audit", timeout=5).json()["records"] == []
    finally:
        handle.stop()


def test_busy_port_raises_start_error(registry):
    first = start_services(registry, {}, NO_INJECT, port=0)
    try:
        with pytest.raises(StartError):
            start_services(registry, {}, NO_INJECT, port=first.port)
    finally:
        first.stop()
