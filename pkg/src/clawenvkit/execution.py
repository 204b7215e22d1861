"""Task execution: sandbox, harness tiers, agent loop, result collection.

The sandbox here is process-level: an isolated working directory, a mock
service runtime on an ephemeral local port, and an egress-blocking HTTP
client. A container-level adapter can replace it without changing the
contracts (isolation + mounts + timeout).
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
import shutil
import subprocess
import sys
import tempfile
import time
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import requests

from .errors import EgressBlocked, ProviderError, SandboxError
from .llm_client import ChatRequest, LlmClient, ToolCall
from .mock_services import (
    AuditRecord,
    ErrorInjectionPolicy,
    ServiceHandle,
    start_services,
)
from .registry import ServiceRegistry
from .task_model import TaskConfig

HEALTH_POLL_S = 0.5
HEALTH_BUDGET_S = 10.0
TOOL_RESULT_CAP = 16 * 1024

_XML_TOOL_CALL = re.compile(r"<tool_call>\s*(\{.*?\})\s*</tool_call>", re.S)

_LOOPBACK_HOSTS = {"127.0.0.1", "localhost", "::1"}


class HarnessTier(enum.Enum):
    NATIVE_PLUGIN = "native_plugin"
    MCP_STDIO = "mcp_stdio"
    SKILL_DOCUMENT = "skill_document"


@dataclass
class SandboxConfig:
    network_egress: bool = False
    timeout_s: float = 300.0
    time_scale: float = 1.0
    port: int = 0
    timeout_mode: str = "partial"  # partial | zero


class LocalHttpClient:
    """HTTP client enforcing the sandbox egress policy."""

    def __init__(self, egress: bool = False, session: requests.Session | None = None):
        self.egress = egress
        self.session = session or requests.Session()

    def _check(self, url: str) -> None:
        host = urllib.parse.urlsplit(url).hostname or ""
        if not self.egress and host not in _LOOPBACK_HOSTS:
            raise EgressBlocked(f"outbound request to {host!r} refused (egress disabled)")

    def post(self, url: str, body: dict | None = None, timeout: float = 30.0) -> tuple[int, Any]:
        self._check(url)
        resp = self.session.post(url, json=body or {}, timeout=timeout)
        return resp.status_code, _json_or_text(resp)

    def get(self, url: str, timeout: float = 30.0) -> tuple[int, Any]:
        self._check(url)
        resp = self.session.get(url, timeout=timeout)
        return resp.status_code, _json_or_text(resp)


def _json_or_text(resp: requests.Response) -> Any:
    try:
        return resp.json()
    except ValueError:
        return resp.text


@dataclass
class SandboxHandle:
    root_dir: Path
    workspace_dir: Path
    services: ServiceHandle | None
    base_url: str
    config: SandboxConfig
    client: LocalHttpClient

    def teardown_services(self) -> None:
        if self.services is not None:
            self.services.stop()
            self.services = None

    def cleanup(self) -> None:
        self.teardown_services()
        shutil.rmtree(self.root_dir, ignore_errors=True)


def init_sandbox(cfg: TaskConfig, sandbox: SandboxConfig,
                 policy: ErrorInjectionPolicy | None = None,
                 registry: ServiceRegistry | None = None) -> SandboxHandle:
    """Create the isolated working dir, materialize files, start services.

    Waits for service health with 0.5s polls over a 10s budget (both scaled
    by time_scale); exhaustion raises SandboxError.
    """
    from .registry import builtin_registry

    registry = registry or builtin_registry()
    root = Path(tempfile.mkdtemp(prefix="clawenvkit-"))
    workspace = root / "workspace"
    workspace.mkdir()
    for wf in cfg.files:
        rel = wf.path.removeprefix("/workspace/").lstrip("/")
        target = workspace / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(wf.contents, encoding="utf-8")

    client = LocalHttpClient(egress=sandbox.network_egress)
    services: ServiceHandle | None = None
    base_url = ""
    if cfg.services:
        try:
            services = start_services(registry, cfg.fixtures, policy,
                                      port=sandbox.port, time_scale=sandbox.time_scale,
                                      allow_net=sandbox.network_egress)
        except Exception:
            shutil.rmtree(root, ignore_errors=True)
            raise
        base_url = services.base_url
        try:
            _wait_healthy(client, base_url, cfg.services, sandbox.time_scale)
        except SandboxError:
            services.stop()
            shutil.rmtree(root, ignore_errors=True)
            raise
    return SandboxHandle(root_dir=root, workspace_dir=workspace, services=services,
                         base_url=base_url, config=sandbox, client=client)


def _wait_healthy(client: LocalHttpClient, base_url: str, services: list[str],
                  time_scale: float) -> None:
    deadline = time.monotonic() + HEALTH_BUDGET_S * time_scale
    poll = HEALTH_POLL_S * time_scale
    while True:
        try:
            ok = all(client.get(f"{base_url}/{svc}/health", timeout=5)[0] == 200
                     for svc in services)
        except requests.RequestException:
            ok = False
        if ok:
            return
        if time.monotonic() >= deadline:
            raise SandboxError("mock service health check did not pass within budget")
        time.sleep(poll)


@dataclass
class HarnessArtifacts:
    """Per-tier integration artifacts plus a uniform invoke() transport."""

    tier: HarnessTier
    prompt: str
    tool_manifest: list[dict[str, Any]] = field(default_factory=list)
    skill_text: str = ""
    config_path: Path | None = None
    tools_file: Path | None = None
    _invoker: Any = None

    def invoke(self, name: str, arguments: dict[str, Any]) -> tuple[int, Any]:
        if self._invoker is None:
            raise RuntimeError("harness has no tool transport (file-only task)")
        return self._invoker.invoke(name, arguments)

    def close(self) -> None:
        if self._invoker is not None and hasattr(self._invoker, "close"):
            self._invoker.close()


class _DirectInvoker:
    """Tier 1/3 transport: POST straight to the mock endpoint."""

    def __init__(self, manifest: list[dict], client: LocalHttpClient):
        self.by_name = {t["name"]: t for t in manifest}
        self.client = client

    def invoke(self, name: str, arguments: dict) -> tuple[int, Any]:
        tool = self.by_name.get(name)
        if tool is None:
            return 404, {"error": f"unknown tool {name!r}"}
        return self.client.post(tool["url"], arguments)


class _McpInvoker:
    """Tier 2 transport: JSON-RPC over a stdio MCP server subprocess."""

    def __init__(self, tools_file: Path, base_url: str):
        self.cmd = [sys.executable, "-m", "clawenvkit.mcp_stdio",
                    "--base-url", base_url, "--tools-file", str(tools_file)]
        self.proc: subprocess.Popen | None = None
        self._next_id = 0

    def _ensure_started(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            return
        self.proc = subprocess.Popen(self.cmd, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True)
        self._rpc("initialize", {"protocolVersion": "2024-11-05",
                                 "clientInfo": {"name": "clawenvkit", "version": "0.1"}})

    def _rpc(self, method: str, params: dict) -> dict:
        assert self.proc and self.proc.stdin and self.proc.stdout
        self._next_id += 1
        msg = {"jsonrpc": "2.0", "id": self._next_id, "method": method, "params": params}
        self.proc.stdin.write(json.dumps(msg) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("MCP server closed its stdout")
        return json.loads(line)

    def invoke(self, name: str, arguments: dict) -> tuple[int, Any]:
        self._ensure_started()
        resp = self._rpc("tools/call", {"name": name, "arguments": arguments})
        if "error" in resp:
            return 500, {"error": resp["error"].get("message", "MCP error")}
        content = resp.get("result", {}).get("content", [])
        text = content[0].get("text", "{}") if content else "{}"
        payload = json.loads(text)
        return int(payload.get("status", 200)), payload.get("body")

    def close(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        self.proc = None


def tool_manifest(cfg: TaskConfig, base_url: str) -> list[dict[str, Any]]:
    """Callable descriptors generated from the task's tools at runtime."""
    return [{
        "name": t.name,
        "service": t.service,
        "endpoint": t.endpoint,
        "url": f"{base_url}{t.endpoint}",
        "params": dict(t.params),
    } for t in cfg.tools]


def render_skill_document(manifest: list[dict[str, Any]]) -> str:
    """SKILL.md: one command-line HTTP invocation example per endpoint."""
    lines = [
        "# SKILL: calling the task APIs",
        "",
        "The following HTTP endpoints are available. All business endpoints",
        "are POST with a JSON body. Example invocations:",
        "",
    ]
    for tool in manifest:
        example_body = {p: f"<{p}>" for p in tool["params"]} or {}
        lines.append(f"## {tool['name']} ({tool['service']})")
        lines.append("```")
        lines.append(f"curl -s -X POST {tool['url']} \\")
        lines.append("  -H 'Content-Type: application/json' \\")
        lines.append(f"  -d '{json.dumps(example_body)}'")
        lines.append("```")
        lines.append("")
    return "\n".join(lines)


def prepare_harness(tier: HarnessTier, cfg: TaskConfig, services_endpoint: str, *,
                    workdir: Path | None = None,
                    client: LocalHttpClient | None = None) -> HarnessArtifacts:
    """Build the tier-specific integration artifacts for one run."""
    manifest = tool_manifest(cfg, services_endpoint)
    if not manifest:
        return HarnessArtifacts(tier=tier, prompt=cfg.prompt)
    client = client or LocalHttpClient()

    if tier == HarnessTier.NATIVE_PLUGIN:
        return HarnessArtifacts(tier=tier, prompt=cfg.prompt, tool_manifest=manifest,
                                _invoker=_DirectInvoker(manifest, client))
    if tier == HarnessTier.MCP_STDIO:
        workdir = workdir or Path(tempfile.mkdtemp(prefix="clawenvkit-mcp-"))
        tools_file = workdir / "tools.json"
        tools_file.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        config_path = workdir / "mcp.json"
        config_path.write_text(json.dumps({
            "mcpServers": {
                "clawenvkit": {
                    "command": sys.executable,
                    "args": ["-m", "clawenvkit.mcp_stdio",
                             "--base-url", services_endpoint,
                             "--tools-file", str(tools_file)],
                }
            }
        }, indent=2), encoding="utf-8")
        return HarnessArtifacts(tier=tier, prompt=cfg.prompt, tool_manifest=manifest,
                                config_path=config_path, tools_file=tools_file,
                                _invoker=_McpInvoker(tools_file, services_endpoint))
    if tier == HarnessTier.SKILL_DOCUMENT:
        skill = render_skill_document(manifest)
        return HarnessArtifacts(tier=tier, prompt=cfg.prompt + "\n\n" + skill,
                                tool_manifest=manifest, skill_text=skill,
                                _invoker=_DirectInvoker(manifest, client))
    raise ValueError(f"unknown harness tier: {tier}")


@dataclass
class Trajectory:
    turns: list[dict[str, Any]] = field(default_factory=list)
    final_output: str = ""
    rounds_used: int = 0
    timed_out: bool = False

    def tool_call_count(self) -> int:
        return sum(len(t.get("tool_calls", [])) for t in self.turns)

    def to_doc(self) -> dict[str, Any]:
        return {"turns": self.turns, "final_output": self.final_output,
                "rounds_used": self.rounds_used, "timed_out": self.timed_out}

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "Trajectory":
        return cls(turns=list(doc.get("turns", [])),
                   final_output=str(doc.get("final_output", "")),
                   rounds_used=int(doc.get("rounds_used", 0)),
                   timed_out=bool(doc.get("timed_out", False)))


def parse_xml_tool_calls(text: str) -> list[ToolCall]:
    """Extract <tool_call>{json}</tool_call> markup emitted in plain text."""
    calls = []
    for raw in _XML_TOOL_CALL.findall(text or ""):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and obj.get("name"):
            args = obj.get("arguments", obj.get("args", {}))
            calls.append(ToolCall(name=str(obj["name"]),
                                  arguments=args if isinstance(args, dict) else {}))
    return calls


def _tool_definitions(cfg: TaskConfig) -> list[dict[str, Any]]:
    defs = []
    for t in cfg.tools:
        defs.append({
            "type": "function",
            "function": {
                "name": t.name,
                "description": f"POST {t.endpoint} on service {t.service}",
                "parameters": {
                    "type": "object",
                    "properties": {p: {"type": "string", "description": d}
                                   for p, d in t.params.items()},
                },
            },
        })
    return defs


def run_agent_loop(cfg: TaskConfig, harness: HarnessArtifacts, llm: LlmClient, *,
                   time_scale: float = 1.0) -> Trajectory:
    """Built-in baseline tool-calling loop.

    Stops on a no-tool-call response, at max_rounds, or when the (scaled)
    task timeout elapses; a timeout leaves a partial trajectory for grading.
    """
    traj = Trajectory()
    messages: list[dict[str, Any]] = [{"role": "user", "content": harness.prompt}]
    tool_defs = _tool_definitions(cfg) or None
    deadline = time.monotonic() + cfg.timeout_s * time_scale
    last_text = ""

    while traj.rounds_used < cfg.max_rounds:
        if time.monotonic() >= deadline:
            traj.timed_out = True
            return traj
        req = ChatRequest(messages=list(messages), tool_definitions=tool_defs)
        try:
            resp = llm.complete(req)
        except ProviderError:
            traj.final_output = last_text
            return traj
        traj.rounds_used += 1
        calls = resp.tool_calls or parse_xml_tool_calls(resp.text)
        turn = {"role": "assistant", "content": resp.text,
                "tool_calls": [{"name": c.name, "args": c.arguments} for c in calls],
                "tool_results": []}
        traj.turns.append(turn)
        last_text = resp.text or last_text

        if not calls:
            traj.final_output = resp.text
            return traj

        messages.append({"role": "assistant", "content": resp.text})
        for call in calls:
            if time.monotonic() >= deadline:
                traj.timed_out = True
                return traj
            status, body = harness.invoke(call.name, call.arguments)
            result_text = json.dumps({"status": status, "body": body})
            if len(result_text) > TOOL_RESULT_CAP:
                result_text = result_text[:TOOL_RESULT_CAP] + "...[truncated]"
            turn["tool_results"].append({"name": call.name, "status": status,
                                         "result": result_text})
            messages.append({"role": "tool", "name": call.name, "content": result_text})

    traj.final_output = last_text
    return traj


@dataclass
class RunResult:
    """Everything grading needs, snapshotted after agent termination."""

    trajectory: Trajectory
    audit_snapshot: list[AuditRecord] = field(default_factory=list)
    injected_snapshot: list[AuditRecord] = field(default_factory=list)
    workspace_snapshot: dict[str, dict[str, Any]] = field(default_factory=dict)
    workspace_dir: str | None = None
    collection_error: str | None = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "trajectory": self.trajectory.to_doc(),
            "audit_snapshot": [r.to_doc() for r in self.audit_snapshot],
            "injected_snapshot": [r.to_doc() for r in self.injected_snapshot],
            "workspace_snapshot": self.workspace_snapshot,
            "workspace_dir": self.workspace_dir,
            "collection_error": self.collection_error,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "RunResult":
        return cls(
            trajectory=Trajectory.from_doc(doc.get("trajectory", {})),
            audit_snapshot=[AuditRecord.from_doc(r) for r in doc.get("audit_snapshot", [])],
            injected_snapshot=[AuditRecord.from_doc(r) for r in doc.get("injected_snapshot", [])],
            workspace_snapshot=dict(doc.get("workspace_snapshot", {})),
            workspace_dir=doc.get("workspace_dir"),
            collection_error=doc.get("collection_error"),
        )


def snapshot_workspace(workspace_dir: Path) -> dict[str, dict[str, Any]]:
    """Hash every file under the workspace; keep small files' bytes inline."""
    out: dict[str, dict[str, Any]] = {}
    for path in sorted(workspace_dir.rglob("*")):
        if not path.is_file():
            continue
        data = path.read_bytes()
        entry: dict[str, Any] = {
            "sha256": hashlib.sha256(data).hexdigest(),
            "size": len(data),
        }
        if len(data) <= 65536:
            try:
                entry["text"] = data.decode("utf-8")
            except UnicodeDecodeError:
                pass
        out[f"/workspace/{path.relative_to(workspace_dir).as_posix()}"] = entry
    return out


def collect(handle: SandboxHandle, trajectory: Trajectory) -> RunResult:
    """Fetch audit/injected snapshots over HTTP, hash the workspace, tear down."""
    audit: list[AuditRecord] = []
    injected: list[AuditRecord] = []
    error: str | None = None
    if handle.services is not None:
        try:
            status, body = handle.client.get(f"{handle.base_url}/audit")
            if status != 200:
                raise RuntimeError(f"audit endpoint returned {status}")
            audit = [AuditRecord.from_doc(r) for r in body["records"]]
            status, body = handle.client.get(f"{handle.base_url}/audit?injected=true")
            if status != 200:
                raise RuntimeError(f"injected audit endpoint returned {status}")
            injected = [AuditRecord.from_doc(r) for r in body["records"]]
        except Exception as exc:  # snapshot failure grades audit checks as 0
            audit, injected = [], []
            error = f"audit snapshot failed: {exc}"
    workspace = snapshot_workspace(handle.workspace_dir)
    handle.teardown_services()
    return RunResult(trajectory=trajectory, audit_snapshot=audit,
                     injected_snapshot=injected, workspace_snapshot=workspace,
                     workspace_dir=str(handle.workspace_dir), collection_error=error)
