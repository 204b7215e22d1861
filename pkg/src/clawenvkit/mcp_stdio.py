"""Stdio MCP server exposing a task's tools over JSON-RPC.

Run as ``python -m clawenvkit.mcp_stdio --base-url URL --tools-file FILE``.
Each tools/call is forwarded as an HTTP POST to the tool's mock endpoint;
the response is returned as a JSON text content block with the upstream
status and body.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.request

PROTOCOL_VERSION = "2024-11-05"


def _post(url: str, body: dict) -> tuple[int, object]:
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(url, data=data, method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        try:
            payload = json.loads(exc.read().decode("utf-8"))
        except Exception:
            payload = {"error": str(exc)}
        return exc.code, payload


def _tool_schema(tool: dict) -> dict:
    return {
        "name": tool["name"],
        "description": f"POST {tool['endpoint']} on service {tool['service']}",
        "inputSchema": {
            "type": "object",
            "properties": {p: {"type": "string", "description": d}
                           for p, d in tool.get("params", {}).items()},
        },
    }


def serve(base_url: str, tools: list[dict], stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    by_name = {t["name"]: t for t in tools}

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            continue
        method = msg.get("method", "")
        msg_id = msg.get("id")
        if msg_id is None:
            continue  # notifications need no reply
        if method == "initialize":
            result = {
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": "clawenvkit-tools", "version": "0.1.0"},
            }
        elif method == "tools/list":
            result = {"tools": [_tool_schema(t) for t in tools]}
        elif method == "tools/call":
            params = msg.get("params", {})
            tool = by_name.get(params.get("name", ""))
            if tool is None:
                _reply(stdout, msg_id, error={"code": -32602,
                                              "message": f"unknown tool {params.get('name')!r}"})
                continue
            status, body = _post(tool["url"], params.get("arguments") or {})
            result = {
                "content": [{"type": "text",
                             "text": json.dumps({"status": status, "body": body})}],
                "isError": status >= 400,
            }
        else:
            _reply(stdout, msg_id, error={"code": -32601, "message": f"unknown method {method!r}"})
            continue
        _reply(stdout, msg_id, result=result)


def _reply(stdout, msg_id, result=None, error=None) -> None:
    msg: dict = {"jsonrpc": "2.0", "id": msg_id}
    if error is not None:
        msg["error"] = error
    else:
        msg["result"] = result
    stdout.write(json.dumps(msg) + "\n")
    stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Stdio MCP server for task tools")
    parser.add_argument("--base-url", required=True)
    parser.add_argument("--tools-file", required=True)
    args = parser.parse_args(argv)
    with open(args.tools_file, encoding="utf-8") as fh:
        tools = json.load(fh)
    serve(args.base_url, tools)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
