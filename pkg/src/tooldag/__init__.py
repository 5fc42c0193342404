"""Synthetic multi-step function-calling tasks and a deterministic harness to run agents on them."""

from .agents import (
    AgentFactory,
    AgentSpec,
    EpisodeTrace,
    NullAgent,
    OracleAgent,
    RandomAgent,
    StaleValueAgent,
    TypeChasingAgent,
    plan_oracle,
    run_agent,
)
from .classifier import FailureBreakdown, FailureType, classify_call, summarize_failures
from .errors import AdapterError, ConfigError, ParseFailure
from .executor import (
    CallRequest,
    CallResponse,
    EpisodeOptions,
    Status,
    execute_call,
    execute_turn,
    finalize,
    start_episode,
)
from .harness import SweepConfig, SweepReport, expand_sweep, run_sweep, write_report
from .taskgen import (
    DepGraph,
    GenConfig,
    NodeKind,
    TaskInstance,
    generate_task,
    render_tool_schemas,
    render_user_prompt,
)

__all__ = [name for name in dir() if not name.startswith("_")]
