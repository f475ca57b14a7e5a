"""Wait-free parallel consensus coordination, validated by deterministic simulation."""

from .core import (
    FAIL,
    SKIP,
    Fail,
    InstanceChange,
    Mode,
    Noop,
    Request,
    RoundDecisionSet,
    ServiceConfig,
    Skip,
    Success,
    TimingModel,
    Transfer,
    default_epsilon,
    make_request,
    partition_decisions,
    validate_config,
)
from .ordering import (
    LedgerState,
    LogEntry,
    execute_round,
    execution_order,
    factorial,
    permute_index,
    round_digest,
)
from .scenario import FaultEvent, Scenario, WorkloadSpec, inject, load_scenario, make_random_scenario
from .scheduler import RoundTable, apply_skip, delay_bound, detect_soft_failures, ready_rounds
from .sim import Metrics, SimResult, compare_logs, run

__all__ = [
    "FAIL",
    "SKIP",
    "Fail",
    "FaultEvent",
    "InstanceChange",
    "LedgerState",
    "LogEntry",
    "Metrics",
    "Mode",
    "Noop",
    "Request",
    "RoundDecisionSet",
    "RoundTable",
    "Scenario",
    "ServiceConfig",
    "SimResult",
    "Skip",
    "Success",
    "TimingModel",
    "Transfer",
    "WorkloadSpec",
    "apply_skip",
    "compare_logs",
    "default_epsilon",
    "delay_bound",
    "detect_soft_failures",
    "execute_round",
    "execution_order",
    "factorial",
    "inject",
    "load_scenario",
    "make_random_scenario",
    "make_request",
    "partition_decisions",
    "permute_index",
    "ready_rounds",
    "round_digest",
    "run",
    "validate_config",
]
