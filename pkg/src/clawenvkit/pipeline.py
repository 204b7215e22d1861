"""End-to-end task execution and benchmark orchestration.

One run = sandbox → harness → agent loop → collect → grade. A benchmark
executes each task three times with distinct injection seeds and aggregates
per-task Pass^3. Results persist as JSON run records so every summary number
can be recomputed from disk.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .execution import (
    HarnessTier,
    RunResult,
    SandboxConfig,
    collect,
    init_sandbox,
    prepare_harness,
    run_agent_loop,
)
from .grading import PASS3_THRESHOLD, AggregateReport, GradeReport, aggregate_pass3, grade
from .llm_client import LlmClient
from .mock_services import ErrorInjectionPolicy
from .registry import ServiceRegistry, builtin_registry
from .task_model import TaskConfig

DEFAULT_RUNS_PER_TASK = 3

AgentFactory = Callable[[int], LlmClient]


@dataclass
class RunRecord:
    """One persisted run: enough to re-derive every summary number."""

    task_id: str
    run_index: int
    tier: str
    model: str
    seed: int
    grade: GradeReport
    duration_s: float = 0.0
    result_path: str | None = None
    error: str | None = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "run_index": self.run_index,
            "tier": self.tier,
            "model": self.model,
            "seed": self.seed,
            "grade": self.grade.to_doc(),
            "duration_s": self.duration_s,
            "result_path": self.result_path,
            "error": self.error,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "RunRecord":
        return cls(
            task_id=str(doc.get("task_id", "")),
            run_index=int(doc.get("run_index", 0)),
            tier=str(doc.get("tier", "")),
            model=str(doc.get("model", "")),
            seed=int(doc.get("seed", 0)),
            grade=GradeReport.from_doc(doc.get("grade", {})),
            duration_s=float(doc.get("duration_s", 0.0)),
            result_path=doc.get("result_path"),
            error=doc.get("error"),
        )


def run_task(cfg: TaskConfig, agent: LlmClient, *,
             registry: ServiceRegistry | None = None,
             tier: HarnessTier = HarnessTier.NATIVE_PLUGIN,
             sandbox: SandboxConfig | None = None,
             policy: ErrorInjectionPolicy | None = None,
             judge: LlmClient | None = None,
             keep_workspace: bool = False) -> tuple[RunResult, GradeReport]:
    """Execute one task end to end and grade the collected result."""
    registry = registry or builtin_registry()
    sandbox = sandbox or SandboxConfig(timeout_s=cfg.timeout_s)
    handle = init_sandbox(cfg, sandbox, policy, registry)
    try:
        harness = prepare_harness(tier, cfg, handle.base_url,
                                  workdir=handle.root_dir, client=handle.client)
        try:
            trajectory = run_agent_loop(cfg, harness, agent,
                                        time_scale=sandbox.time_scale)
        finally:
            harness.close()
        result = collect(handle, trajectory)
        report = grade(result, cfg, judge, time_scale=sandbox.time_scale,
                       timeout_mode=sandbox.timeout_mode)
    finally:
        if not keep_workspace:
            handle.cleanup()
    return result, report


@dataclass
class BenchOptions:
    tier: HarnessTier = HarnessTier.NATIVE_PLUGIN
    model: str = "stub"
    runs_per_task: int = DEFAULT_RUNS_PER_TASK
    workers: int = 1
    seed: int = 0
    error_rate: float = 0.25
    threshold: float = PASS3_THRESHOLD
    time_scale: float = 1.0
    timeout_mode: str = "partial"
    out_dir: Path | None = None


@dataclass
class TaskSummary:
    task_id: str
    aggregate: AggregateReport | None
    records: list[RunRecord] = field(default_factory=list)
    error: str | None = None


@dataclass
class BenchReport:
    summaries: list[TaskSummary] = field(default_factory=list)

    @property
    def pass3_rate(self) -> float:
        graded = [s for s in self.summaries if s.aggregate is not None]
        if not graded:
            return 0.0
        return sum(1 for s in graded if s.aggregate.pass3) / len(graded)

    @property
    def mean_score(self) -> float:
        finals = [r.grade.final for s in self.summaries for r in s.records
                  if r.error is None]
        return sum(finals) / len(finals) if finals else 0.0

    def dimension_means(self) -> dict[str, float]:
        records = [r for s in self.summaries for r in s.records if r.error is None]
        if not records:
            return {"safety": 0.0, "completion": 0.0, "robustness": 0.0}
        n = len(records)
        return {
            "safety": sum(r.grade.safety for r in records) / n,
            "completion": sum(r.grade.completion for r in records) / n,
            "robustness": sum(r.grade.robustness for r in records) / n,
        }


def _injection_seed(base: int, task_index: int, run_index: int) -> int:
    """Distinct, reproducible injection seed per (task, run)."""
    return base * 1_000_003 + task_index * 101 + run_index


def run_benchmark(configs: list[TaskConfig], agent_factory: AgentFactory, *,
                  registry: ServiceRegistry | None = None,
                  judge_factory: AgentFactory | None = None,
                  options: BenchOptions | None = None) -> BenchReport:
    """Run every task runs_per_task times and aggregate Pass^3 per task.

    ``agent_factory(seed)`` must return a fresh client per run so workers
    never share scripted state; with that, worker count cannot change any
    grade value.
    """
    options = options or BenchOptions()
    registry = registry or builtin_registry()
    report = BenchReport()

    units: list[tuple[int, TaskConfig, int]] = [
        (ti, cfg, ri)
        for ti, cfg in enumerate(configs)
        for ri in range(options.runs_per_task)
    ]

    def execute(unit: tuple[int, TaskConfig, int]) -> tuple[int, int, RunRecord]:
        task_index, cfg, run_index = unit
        seed = _injection_seed(options.seed, task_index, run_index)
        started = time.monotonic()
        try:
            policy = ErrorInjectionPolicy(rate=options.error_rate, seed=seed)
            sandbox = SandboxConfig(timeout_s=cfg.timeout_s,
                                    time_scale=options.time_scale,
                                    timeout_mode=options.timeout_mode)
            _result, grade_report = run_task(
                cfg, agent_factory(seed), registry=registry, tier=options.tier,
                sandbox=sandbox, policy=policy,
                judge=judge_factory(seed) if judge_factory else None)
            record = RunRecord(task_id=cfg.task_id, run_index=run_index,
                               tier=options.tier.value, model=options.model,
                               seed=seed, grade=grade_report)
        except Exception as exc:  # per-run failures never abort the batch
            record = RunRecord(task_id=cfg.task_id, run_index=run_index,
                               tier=options.tier.value, model=options.model,
                               seed=seed, grade=GradeReport(final=0.0, safety=1),
                               error=f"{type(exc).__name__}: {exc}")
        record.duration_s = time.monotonic() - started
        return task_index, run_index, record

    if options.workers > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            outcomes = list(pool.map(execute, units))
    else:
        outcomes = [execute(u) for u in units]

    by_task: dict[int, list[RunRecord]] = {}
    for task_index, _run_index, record in outcomes:
        by_task.setdefault(task_index, []).append(record)

    for task_index, cfg in enumerate(configs):
        records = sorted(by_task.get(task_index, []), key=lambda r: r.run_index)
        summary = TaskSummary(task_id=cfg.task_id, aggregate=None, records=records)
        failures = [r.error for r in records if r.error]
        if failures:
            summary.error = "; ".join(failures)
        if len(records) == 3:
            summary.aggregate = aggregate_pass3([r.grade for r in records],
                                                threshold=options.threshold)
        report.summaries.append(summary)

    if options.out_dir is not None:
        persist_records(report, options.out_dir)
    return report


def persist_records(report: BenchReport, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for summary in report.summaries:
        for record in summary.records:
            path = out_dir / f"{record.task_id or 'task'}_run{record.run_index}.json"
            path.write_text(json.dumps(record.to_doc(), indent=2), encoding="utf-8")
    summary_doc = {
        "pass3_rate": report.pass3_rate,
        "mean_score": report.mean_score,
        "dimension_means": report.dimension_means(),
        "tasks": [{
            "task_id": s.task_id,
            "pass3": s.aggregate.pass3 if s.aggregate else None,
            "per_run_finals": s.aggregate.per_run_finals if s.aggregate else [],
            "error": s.error,
        } for s in report.summaries],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary_doc, indent=2),
                                          encoding="utf-8")


def load_records(records_dir: Path) -> list[RunRecord]:
    records = []
    for path in sorted(Path(records_dir).glob("*_run*.json")):
        records.append(RunRecord.from_doc(json.loads(path.read_text(encoding="utf-8"))))
    return records


def summarize_records(records: list[RunRecord],
                      threshold: float = PASS3_THRESHOLD) -> dict[str, Any]:
    """Recompute the benchmark summary purely from persisted run records."""
    by_task: dict[str, list[RunRecord]] = {}
    for record in records:
        by_task.setdefault(record.task_id, []).append(record)
    tasks = []
    pass3_flags = []
    finals = []
    for task_id, task_records in sorted(by_task.items()):
        task_records.sort(key=lambda r: r.run_index)
        finals.extend(r.grade.final for r in task_records if r.error is None)
        entry: dict[str, Any] = {"task_id": task_id,
                                 "per_run_finals": [r.grade.final for r in task_records]}
        if len(task_records) == 3:
            agg = aggregate_pass3([r.grade for r in task_records], threshold=threshold)
            entry["pass3"] = agg.pass3
            pass3_flags.append(agg.pass3)
        tasks.append(entry)
    return {
        "pass3_rate": (sum(pass3_flags) / len(pass3_flags)) if pass3_flags else 0.0,
        "mean_score": (sum(finals) / len(finals)) if finals else 0.0,
        "tasks": tasks,
    }
