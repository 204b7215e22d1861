"""In-memory multi-service mock API runtime.

One HTTP listener serves every registered service under /{service}/...
with POST-only business routes, full audit logging, and seeded error
injection middleware. Control routes (/audit, /reset, /health) are exempt
from injection and are not audited.
"""

from __future__ import annotations

import copy
import json
import random
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from .errors import StartError
from .registry import Endpoint, ServiceRegistry, ServiceSpec

DEFAULT_PORT = 9100

CONTROL_SUFFIXES = ("/audit", "/reset", "/health")


@dataclass
class AuditRecord:
    """One server-side record of an API call."""

    ordinal: int
    service: str
    action: str
    endpoint: str
    request_body: dict[str, Any]
    response_status: int
    response_body: Any
    injected: bool = False
    injected_kind: str | None = None  # rate_limit | server_error | delay
    wall_time: float = 0.0
    mono_time: float = 0.0

    @property
    def ok(self) -> bool:
        return 200 <= self.response_status < 300

    def to_doc(self) -> dict[str, Any]:
        return {
            "ordinal": self.ordinal,
            "service": self.service,
            "action": self.action,
            "endpoint": self.endpoint,
            "request_body": self.request_body,
            "response_status": self.response_status,
            "response_body": self.response_body,
            "injected": self.injected,
            "injected_kind": self.injected_kind,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "AuditRecord":
        return cls(
            ordinal=int(doc["ordinal"]),
            service=str(doc.get("service", "")),
            action=str(doc.get("action", "")),
            endpoint=str(doc.get("endpoint", "")),
            request_body=dict(doc.get("request_body") or {}),
            response_status=int(doc.get("response_status", 0)),
            response_body=doc.get("response_body"),
            injected=bool(doc.get("injected", False)),
            injected_kind=doc.get("injected_kind"),
            wall_time=float(doc.get("wall_time", 0.0)),
        )


@dataclass
class ErrorInjectionPolicy:
    """Per-request injection distribution, one seeded stream per runtime."""

    rate: float = 0.25
    split: dict[str, float] = field(default_factory=lambda: {
        "rate_limit": 0.35, "server_error": 0.35, "delay": 0.30})
    delay_range_s: tuple[float, float] = (2.0, 4.0)
    exempt_suffixes: tuple[str, ...] = CONTROL_SUFFIXES
    seed: int = 0

    def __post_init__(self):
        total = sum(self.split.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"injection split must sum to 1.0, got {total}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"injection rate must be in [0, 1], got {self.rate}")


@dataclass(frozen=True)
class Decision:
    kind: str  # pass | rate_limit | server_error | delay
    delay_s: float = 0.0


def inject_decision(path: str, policy: ErrorInjectionPolicy, rng: random.Random) -> Decision:
    """Decide whether/how to inject an error for one request.

    Exempt paths never consume RNG draws, so control-route traffic does not
    perturb the deterministic injection stream.
    """
    if any(path.endswith(suffix) for suffix in policy.exempt_suffixes):
        return Decision("pass")
    if rng.random() >= policy.rate:
        return Decision("pass")
    pick = rng.random()
    cumulative = 0.0
    for kind in ("rate_limit", "server_error", "delay"):
        cumulative += policy.split.get(kind, 0.0)
        if pick < cumulative:
            if kind == "delay":
                lo, hi = policy.delay_range_s
                return Decision("delay", delay_s=rng.uniform(lo, hi))
            return Decision(kind)
    return Decision("pass")


class DataStore:
    """Per-service in-memory record collections, reset to loaded fixtures."""

    def __init__(self, fixtures: dict[str, list[dict]]):
        self._fixtures = copy.deepcopy(fixtures)
        self._data: dict[str, list[dict]] = {}
        self._create_counters: dict[str, int] = {}
        self.reset()

    def reset(self) -> None:
        self._data = copy.deepcopy(self._fixtures)
        self._create_counters = {}

    def records(self, service: str) -> list[dict]:
        return self._data.setdefault(service, [])

    def next_id(self, service: str) -> str:
        n = self._create_counters.get(service, 0) + 1
        self._create_counters[service] = n
        return f"{service}-new-{n}"


def validate_fixtures(registry: ServiceRegistry, fixtures: dict[str, list[dict]]) -> None:
    """Raise StartError naming the offending record on schema mismatch."""
    for service, records in fixtures.items():
        spec = registry.get(service)
        if spec is None:
            raise StartError(f"fixtures reference unknown service {service!r}")
        fields = (spec.fixture_schema or {}).get("fields")
        if not fields:
            continue
        for i, record in enumerate(records):
            unknown = [k for k in record if k not in fields]
            if unknown:
                raise StartError(
                    f"fixture record {service}[{i}] has fields not in schema: {unknown}")


class MockRuntime:
    """Request handling core, usable in-process or behind the HTTP listener."""

    def __init__(self, registry: ServiceRegistry, fixtures: dict[str, list[dict]],
                 policy: ErrorInjectionPolicy | None = None, *,
                 time_scale: float = 1.0, allow_net: bool = False):
        self.registry = registry
        self.policy = policy or ErrorInjectionPolicy()
        self.time_scale = time_scale
        self.allow_net = allow_net
        validate_fixtures(registry, fixtures)
        self.store = DataStore(fixtures)
        self.audit: list[AuditRecord] = []
        self.rng = random.Random(self.policy.seed)
        self.lock = threading.Lock()

    # -- public log access -------------------------------------------------

    def read_audit(self, service: str | None = None) -> list[AuditRecord]:
        with self.lock:
            records = list(self.audit)
        if service and service != "all":
            records = [r for r in records if r.service == service]
        return [copy.deepcopy(r) for r in records]

    def read_injected(self) -> list[AuditRecord]:
        return [r for r in self.read_audit() if r.injected]

    def reset(self) -> None:
        with self.lock:
            self.store.reset()
            self.audit.clear()
            self.rng = random.Random(self.policy.seed)

    # -- request handling --------------------------------------------------

    def handle(self, method: str, path: str, body: dict[str, Any] | None) -> tuple[int, Any]:
        path, _, query = path.partition("?")
        if any(path.endswith(suffix) for suffix in CONTROL_SUFFIXES):
            return self._handle_control(path, query)
        resolved = self.registry.resolve(path)
        if resolved is None:
            return 404, {"error": f"unknown route {path}"}
        spec, endpoint = resolved
        body = body or {}

        with self.lock:
            if method.upper() != "POST":
                status, resp = 405, {"error": "business routes are POST-only"}
                self._append_audit(spec, endpoint, body, status, resp, False, None)
                return status, resp
            decision = inject_decision(path, self.policy, self.rng)
            if decision.kind == "rate_limit":
                status, resp = 429, {"error": "rate limited (injected)"}
                self._append_audit(spec, endpoint, body, status, resp, True, "rate_limit")
                return status, resp
            if decision.kind == "server_error":
                status, resp = 500, {"error": "internal server error (injected)"}
                self._append_audit(spec, endpoint, body, status, resp, True, "server_error")
                return status, resp
            if decision.kind == "delay":
                time.sleep(decision.delay_s * self.time_scale)
            status, resp = self._execute(spec, endpoint, body)
            self._append_audit(spec, endpoint, body, status, resp,
                               decision.kind == "delay",
                               "delay" if decision.kind == "delay" else None)
            return status, resp

    def _append_audit(self, spec: ServiceSpec, endpoint: Endpoint, body: dict,
                      status: int, resp: Any, injected: bool, kind: str | None) -> None:
        self.audit.append(AuditRecord(
            ordinal=len(self.audit),
            service=spec.name,
            action=endpoint.action,
            endpoint=endpoint.path,
            request_body=copy.deepcopy(body),
            response_status=status,
            response_body=copy.deepcopy(resp),
            injected=injected,
            injected_kind=kind,
            wall_time=time.time(),
            mono_time=time.monotonic(),
        ))

    def _handle_control(self, path: str, query: str) -> tuple[int, Any]:
        parts = path.strip("/").split("/")
        service = parts[0] if len(parts) > 1 else None
        if service is not None and service not in self.registry:
            return 404, {"error": f"unknown service {service!r}"}
        if path.endswith("/health"):
            return 200, {"status": "ok"}
        if path.endswith("/reset"):
            self.reset()
            return 200, {"status": "reset"}
        # /audit
        records = self.read_audit(service or "all")
        params = urllib.parse.parse_qs(query)
        if params.get("injected", ["false"])[0].lower() in ("1", "true"):
            records = [r for r in records if r.injected]
        return 200, {"records": [r.to_doc() for r in records]}

    # -- business logic ----------------------------------------------------

    def _execute(self, spec: ServiceSpec, ep: Endpoint, body: dict) -> tuple[int, Any]:
        allowed = set(ep.required) | set(ep.optional)
        unknown = [k for k in body if k not in allowed]
        missing = [k for k in ep.required if k not in body]
        if unknown or missing:
            errors = {}
            for k in unknown:
                errors[k] = "unknown parameter"
            for k in missing:
                errors[k] = "required parameter missing"
            return 422, {"error": "parameter validation failed", "fields": errors}
        return self._dispatch(spec, ep, body)

    def _dispatch(self, spec: ServiceSpec, ep: Endpoint, body: dict) -> tuple[int, Any]:
        action = ep.action
        records = self.store.records(spec.name)
        id_field = (spec.fixture_schema or {}).get("id_field", "id")

        if spec.live and action in ("web_fetch", "get_page_text", "web_search"):
            return self._live_web(action, body)

        if action in ("send_email", "create_draft"):
            record = {id_field: self.store.next_id(spec.name), **body,
                      "folder": "sent" if action == "send_email" else "drafts"}
            records.append(record)
            return 200, record
        if action == "list_inbox":
            inbox = [r for r in records if r.get("folder", "inbox") == "inbox"]
            return 200, {"records": copy.deepcopy(inbox)}

        if action.startswith("list_") or action in ("get_budget", "web_search"):
            out = records
            if action == "web_search":
                query = str(body.get("query", "")).lower()
                out = [r for r in records
                       if any(query in str(v).lower() for v in r.values())]
            else:
                for key, value in body.items():
                    if key == "tag":
                        out = [r for r in out if value in (r.get("tags") or [])]
                    elif key in ("start_date", "days", "unread_only", "feed_id"):
                        continue  # window/paging filters: mock returns all
                    else:
                        out = [r for r in out if str(r.get(key)) == str(value)]
            return 200, {"records": copy.deepcopy(out)}

        if action.startswith("search_"):
            query = str(body.get("query", "")).lower()
            out = [r for r in records
                   if any(query in str(v).lower() for v in r.values())]
            return 200, {"records": copy.deepcopy(out)}

        if action.startswith("create_") or action.startswith("subscribe_"):
            record = dict(body)
            record.setdefault(id_field, self.store.next_id(spec.name))
            records.append(record)
            return 200, copy.deepcopy(record)

        if action.startswith(("get_", "update_", "delete_")) and ep.required:
            key = str(body.get(ep.required[0], ""))
            for i, record in enumerate(records):
                if str(record.get(id_field)) == key:
                    if action.startswith("get_"):
                        return 200, copy.deepcopy(record)
                    if action.startswith("update_"):
                        updates = {k: v for k, v in body.items() if k != ep.required[0]}
                        record.update(updates)
                        return 200, copy.deepcopy(record)
                    records.pop(i)
                    return 200, {"deleted": key}
            return 404, {"error": f"record {key!r} not found"}

        if action == "web_fetch" or action == "get_page_text":
            url = str(body.get("url", ""))
            for record in records:
                if record.get(id_field) == url:
                    return 200, copy.deepcopy(record)
            return 404, {"error": f"page {url!r} not found"}

        # Unmatched actions behave as a listing over the collection.
        return 200, {"records": copy.deepcopy(records)}

    def _live_web(self, action: str, body: dict) -> tuple[int, Any]:
        if not self.allow_net:
            return 403, {"error": "live web access disabled; start with --allow-net"}
        import requests

        url = str(body.get("url", body.get("query", "")))
        try:
            resp = requests.get(url, timeout=20)
            return 200, {"url": url, "status": resp.status_code, "body": resp.text[:65536]}
        except requests.RequestException as exc:
            return 502, {"error": f"live fetch failed: {exc}"}


class _Handler(BaseHTTPRequestHandler):
    runtime: MockRuntime  # set on the server class

    def _respond(self, status: int, body: Any) -> None:
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _read_body(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError:
            return None
        return parsed if isinstance(parsed, dict) else None

    def _dispatch(self, method: str) -> None:
        body = self._read_body()
        if body is None:
            self._respond(400, {"error": "request body must be a JSON object"})
            return
        status, resp = self.server.runtime.handle(method, self.path, body)  # type: ignore[attr-defined]
        self._respond(status, resp)

    def do_POST(self):  # noqa: N802
        self._dispatch("POST")

    def do_GET(self):  # noqa: N802
        self._dispatch("GET")

    def log_message(self, fmt, *args):  # silence per-request stderr noise
        pass


class ServiceHandle:
    """A running mock runtime bound to one local port."""

    def __init__(self, runtime: MockRuntime, server: ThreadingHTTPServer,
                 thread: threading.Thread):
        self.runtime = runtime
        self.server = server
        self.thread = thread
        self.port = server.server_address[1]
        self.base_url = f"http://127.0.0.1:{self.port}"

    def read_audit(self, service: str | None = None) -> list[AuditRecord]:
        return self.runtime.read_audit(service)

    def read_injected(self) -> list[AuditRecord]:
        return self.runtime.read_injected()

    def reset(self) -> None:
        self.runtime.reset()

    def health(self) -> bool:
        return True

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def start_services(registry: ServiceRegistry, fixtures: dict[str, list[dict]],
                   policy: ErrorInjectionPolicy | None = None, *,
                   port: int = DEFAULT_PORT, time_scale: float = 1.0,
                   allow_net: bool = False) -> ServiceHandle:
    """Start one listener serving all registered services.

    ``port=0`` binds an ephemeral port. Raises StartError on a busy port or
    a fixture record that does not conform to its service's schema.
    """
    runtime = MockRuntime(registry, fixtures, policy,
                          time_scale=time_scale, allow_net=allow_net)
    try:
        server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    except OSError as exc:
        raise StartError(f"cannot bind 127.0.0.1:{port}: {exc}")
    server.runtime = runtime  # type: ignore[attr-defined]
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return ServiceHandle(runtime, server, thread)
