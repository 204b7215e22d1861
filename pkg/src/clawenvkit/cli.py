"""Command-line operator surface for the full pipeline.

Subcommands: generate, validate, serve, run, grade, bench, quality, report.
Exit codes are a stable CI contract: 0 success, 1 task failures present,
2 configuration / IO error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from .errors import ClawEnvKitError, ParseError, StartError
from .execution import HarnessTier, RunResult, SandboxConfig
from .generation import generate_benchmark, load_categories
from .grading import PASS3_THRESHOLD, grade
from .llm_client import HttpProvider, LlmClient, RetryPolicy, ScriptedStub
from .mock_services import ErrorInjectionPolicy, start_services
from .pipeline import (
    BenchOptions,
    load_records,
    run_benchmark,
    run_task,
    summarize_records,
)
from .quality import assess_quality
from .registry import builtin_registry
from .task_model import parse_task_config, serialize_task_config

EXIT_OK = 0
EXIT_TASK_FAILURES = 1
EXIT_CONFIG_ERROR = 2


def _add_llm_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stub", help="path to a scripted-stub JSON file "
                                       "(offline provider)")
    parser.add_argument("--provider-url",
                        default=os.environ.get("CLAWENVKIT_PROVIDER_URL", ""),
                        help="chat-completions endpoint base URL")
    parser.add_argument("--model", default=os.environ.get("CLAWENVKIT_MODEL", "default"))
    parser.add_argument("--time-scale", type=float, default=1.0,
                        help="scale every wait/timeout (0 disables waits)")


def _build_llm(args) -> LlmClient | None:
    policy = RetryPolicy(time_scale=args.time_scale)
    if args.stub:
        return LlmClient(ScriptedStub.from_file(args.stub), policy,
                         sleep=lambda _s: None)
    if args.provider_url:
        provider = HttpProvider(args.provider_url,
                                api_key=os.environ.get("CLAWENVKIT_API_KEY", ""),
                                model=args.model)
        return LlmClient(provider, policy)
    return None


def _load_task(path: str):
    return parse_task_config(Path(path).read_text(encoding="utf-8"))


def cmd_generate(args) -> int:
    llm = _build_llm(args)
    if llm is None:
        print("generate requires --stub or --provider-url", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    registry = builtin_registry()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs, manifest = generate_benchmark(args.request, args.count, llm, registry,
                                           seed=args.seed)
    for cfg in configs:
        name = cfg.task_id or cfg.task_name or f"task-{id(cfg)}"
        (out_dir / f"{name}.yaml").write_text(serialize_task_config(cfg),
                                              encoding="utf-8")
    (out_dir / "manifest.json").write_text(
        json.dumps([m.to_doc() for m in manifest], indent=2), encoding="utf-8")
    discarded = sum(1 for m in manifest if m.status != "accepted")
    print(f"accepted {len(configs)}, discarded/errored {discarded}; "
          f"wrote {out_dir}/manifest.json")
    return EXIT_TASK_FAILURES if discarded else EXIT_OK


def cmd_validate(args) -> int:
    from .validator import validate_structure

    registry = builtin_registry()
    failures = 0
    for path in args.tasks:
        try:
            cfg = _load_task(path)
        except (OSError, ParseError) as exc:
            print(f"{path}: parse error: {exc}")
            failures += 1
            continue
        issues = validate_structure(cfg, registry)
        if issues:
            failures += 1
            print(f"{path}: {len(issues)} issue(s)")
            for issue in issues:
                print(f"  [check {issue.check_id}] {issue.message}"
                      + (f" ({issue.path})" if issue.path else ""))
        else:
            print(f"{path}: OK")
    return EXIT_TASK_FAILURES if failures else EXIT_OK


def cmd_serve(args) -> int:
    registry = builtin_registry()
    fixtures = {}
    if args.fixtures:
        try:
            raw = Path(args.fixtures).read_text(encoding="utf-8")
            fixtures = yaml.safe_load(raw) or {}
        except (OSError, yaml.YAMLError) as exc:
            print(f"cannot read fixtures: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
    policy = ErrorInjectionPolicy(rate=args.error_rate, seed=args.seed)
    try:
        handle = start_services(registry, fixtures, policy, port=args.port,
                                allow_net=args.allow_net)
    except StartError as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(f"serving on {handle.base_url}")
    print(f"audit log:      GET {handle.base_url}/audit")
    print(f"injected only:  GET {handle.base_url}/audit?injected=true")
    print(f"reset:          GET {handle.base_url}/reset")
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        handle.stop()
    return EXIT_OK


def _tier(name: str) -> HarnessTier:
    return HarnessTier(name)


def cmd_run(args) -> int:
    agent = _build_llm(args)
    if agent is None:
        print("run requires --stub or --provider-url", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    judge = (LlmClient(ScriptedStub.from_file(args.judge_stub),
                       RetryPolicy(time_scale=args.time_scale), sleep=lambda _s: None)
             if args.judge_stub else agent if args.provider_url else None)
    cfg = _load_task(args.task)
    sandbox = SandboxConfig(timeout_s=args.timeout or cfg.timeout_s,
                            time_scale=args.time_scale,
                            timeout_mode=args.timeout_mode)
    policy = ErrorInjectionPolicy(rate=args.error_rate, seed=args.seed)
    result, report = run_task(cfg, agent, tier=_tier(args.tier), sandbox=sandbox,
                              policy=policy, judge=judge)
    if args.out:
        Path(args.out).write_text(json.dumps(
            {"result": result.to_doc(), "grade": report.to_doc()}, indent=2),
            encoding="utf-8")
    print(json.dumps(report.to_doc(), indent=2))
    return EXIT_OK if report.final >= args.threshold else EXIT_TASK_FAILURES


def cmd_grade(args) -> int:
    cfg = _load_task(args.task)
    doc = json.loads(Path(args.result).read_text(encoding="utf-8"))
    result = RunResult.from_doc(doc.get("result", doc))
    judge = _build_llm(args)
    report = grade(result, cfg, judge, timeout_mode=args.timeout_mode)
    print(json.dumps(report.to_doc(), indent=2))
    return EXIT_OK if report.final >= args.threshold else EXIT_TASK_FAILURES


def cmd_bench(args) -> int:
    agent_stub_path = args.stub
    if not agent_stub_path and not args.provider_url:
        print("bench requires --stub or --provider-url", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    task_dir = Path(args.task_dir)
    paths = sorted(list(task_dir.glob("*.yaml")) + list(task_dir.glob("*.yml"))
                   + list(task_dir.glob("*.json")))
    paths = [p for p in paths if p.name != "manifest.json"]
    if not paths:
        print(f"warning: no task documents found in {task_dir}")
        return EXIT_OK
    configs = []
    for path in paths:
        try:
            configs.append(_load_task(str(path)))
        except ParseError as exc:
            print(f"skipping {path}: {exc}", file=sys.stderr)

    policy = RetryPolicy(time_scale=args.time_scale)

    def agent_factory(_seed: int) -> LlmClient:
        if agent_stub_path:
            return LlmClient(ScriptedStub.from_file(agent_stub_path), policy,
                             sleep=lambda _s: None)
        return LlmClient(HttpProvider(args.provider_url,
                                      api_key=os.environ.get("CLAWENVKIT_API_KEY", ""),
                                      model=args.model), policy)

    judge_factory = None
    if args.judge_stub:
        def judge_factory(_seed: int) -> LlmClient:  # noqa: F811
            return LlmClient(ScriptedStub.from_file(args.judge_stub), policy,
                             sleep=lambda _s: None)

    options = BenchOptions(tier=_tier(args.tier), model=args.model,
                           runs_per_task=args.runs, workers=args.workers,
                           seed=args.seed, error_rate=args.error_rate,
                           threshold=args.threshold, time_scale=args.time_scale,
                           timeout_mode=args.timeout_mode,
                           out_dir=Path(args.out) if args.out else None)
    report = run_benchmark(configs, agent_factory, judge_factory=judge_factory,
                           options=options)

    dims = report.dimension_means()
    print(f"{'task':<30} {'pass3':<6} finals")
    for summary in report.summaries:
        finals = " ".join(f"{r.grade.final:.3f}" for r in summary.records)
        flag = "-" if summary.aggregate is None else str(summary.aggregate.pass3)
        print(f"{summary.task_id:<30} {flag:<6} {finals}")
    print(f"\nmean score {report.mean_score:.3f} | pass3 rate {report.pass3_rate:.3f} | "
          f"safety {dims['safety']:.3f} completion {dims['completion']:.3f} "
          f"robustness {dims['robustness']:.3f}")
    failures = any(s.error for s in report.summaries) or any(
        s.aggregate is not None and not s.aggregate.pass3 for s in report.summaries)
    return EXIT_TASK_FAILURES if failures else EXIT_OK


def cmd_quality(args) -> int:
    llm = _build_llm(args)
    registry = builtin_registry()
    paths = [Path(p) for p in args.tasks]
    rows = []
    for path in paths:
        cfg = _load_task(str(path))
        report = assess_quality(cfg, registry, llm)
        rows.append((path.name, report))
        print(f"{path.name}: validity={int(report.validity)} "
              f"coherence={report.coherence:.2f} clarity={report.clarity:.2f}")
    if rows:
        n = len(rows)
        print(f"\nmeans over {n} task(s): "
              f"validity={sum(int(r.validity) for _p, r in rows) / n:.2f} "
              f"coherence={sum(r.coherence for _p, r in rows) / n:.2f} "
              f"clarity={sum(r.clarity for _p, r in rows) / n:.2f}")
    return EXIT_OK


def cmd_report(args) -> int:
    records = load_records(Path(args.records_dir))
    if not records:
        print(f"warning: no run records found in {args.records_dir}")
        return EXIT_OK
    summary = summarize_records(records, threshold=args.threshold)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clawenvkit",
        description="Generate, validate, execute, and grade agent task environments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate task environments from a request")
    p.add_argument("request")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="tasks")
    p.add_argument("--yes", action="store_true",
                   help="auto-confirm generated services")
    _add_llm_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="run structural validation over task files")
    p.add_argument("tasks", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the mock services standalone")
    p.add_argument("--port", type=int, default=9100)
    p.add_argument("--error-rate", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", help="YAML/JSON file: service -> records")
    p.add_argument("--allow-net", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="execute one task end to end")
    p.add_argument("task")
    p.add_argument("--tier", default="native_plugin",
                   choices=[t.value for t in HarnessTier])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--error-rate", type=float, default=0.25)
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--timeout-mode", default="partial", choices=["partial", "zero"])
    p.add_argument("--threshold", type=float, default=PASS3_THRESHOLD)
    p.add_argument("--judge-stub", help="scripted stub JSON for the judge")
    p.add_argument("--out", help="write the result + grade JSON here")
    _add_llm_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grade", help="re-grade a persisted run result")
    p.add_argument("task")
    p.add_argument("result")
    p.add_argument("--timeout-mode", default="partial", choices=["partial", "zero"])
    p.add_argument("--threshold", type=float, default=PASS3_THRESHOLD)
    _add_llm_flags(p)
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("bench", help="run a task directory with Pass^3 aggregation")
    p.add_argument("task_dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--error-rate", type=float, default=0.25)
    p.add_argument("--threshold", type=float, default=PASS3_THRESHOLD)
    p.add_argument("--timeout-mode", default="partial", choices=["partial", "zero"])
    p.add_argument("--tier", default="native_plugin",
                   choices=[t.value for t in HarnessTier])
    p.add_argument("--judge-stub", help="scripted stub JSON for the judge")
    p.add_argument("--out", help="directory for run records + summary.json")
    _add_llm_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("quality", help="validity/coherence/clarity over task files")
    p.add_argument("tasks", nargs="+")
    _add_llm_flags(p)
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("report", help="recompute a summary from persisted records")
    p.add_argument("records_dir")
    p.add_argument("--threshold", type=float, default=PASS3_THRESHOLD)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as exc:
        print(f"IO/config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ClawEnvKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
