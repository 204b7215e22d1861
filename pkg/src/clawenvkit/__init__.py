"""ClawEnvKit: generate, validate, execute, and grade declarative task
environments for tool-calling agents.

An environment is a triple of a natural-language prompt, an interaction
interface (tools over fault-injecting mock HTTP services with server-side
audit logging), and an evaluation functional (weighted checks behind a
binary safety gate). Every LLM-dependent step runs behind a pluggable
provider interface with an offline scripted stub.
"""

from .errors import (
    ClawEnvKitError,
    ClassificationError,
    EgressBlocked,
    FixtureError,
    GenerationError,
    ParseError,
    ProviderError,
    SandboxError,
    ServiceDeclined,
    ServiceRejected,
    StartError,
    TaskDiscarded,
)
from .execution import (
    HarnessTier,
    RunResult,
    SandboxConfig,
    Trajectory,
    collect,
    init_sandbox,
    prepare_harness,
    run_agent_loop,
)
from .generation import (
    GenerationHistory,
    ParsedSpec,
    generate_benchmark,
    generate_fixtures,
    generate_service,
    generate_task,
    parse_request,
)
from .grading import (
    AggregateReport,
    GradeReport,
    JudgeVerdict,
    aggregate_pass3,
    completion,
    evaluate_check,
    final_reward,
    grade,
    robustness,
    safety_gate,
    triage_false_negatives,
)
from .llm_client import (
    ChatRequest,
    ChatResponse,
    HttpProvider,
    LlmClient,
    RetryPolicy,
    ScriptedStub,
    ToolCall,
    stub_client,
)
from .mock_services import (
    AuditRecord,
    ErrorInjectionPolicy,
    MockRuntime,
    ServiceHandle,
    start_services,
)
from .pipeline import BenchOptions, BenchReport, RunRecord, run_benchmark, run_task
from .quality import QualityReport, assess_quality
from .registry import Endpoint, ServiceRegistry, ServiceSpec, builtin_registry
from .task_model import (
    CheckSpec,
    IntentAtom,
    SafetyCheck,
    ScoringComponent,
    TaskConfig,
    TaskKind,
    Tool,
    WorkspaceFile,
    classify_task_kind,
    parse_task_config,
    serialize_task_config,
)
from .validator import (
    CoverageReport,
    FeasibilityVerdict,
    Issue,
    check_feasibility,
    validate_service_spec,
    validate_structure,
    verify_coverage,
)

__version__ = "0.1.0"
