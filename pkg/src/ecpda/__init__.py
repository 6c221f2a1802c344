"""Deterministic-annealing edge controller placement (leader-less and leader-based)."""

from .annealing import RunResult, ScheduleConfig, TraceRecord, best_over_kmax
from .lb import run_ecp_lb
from .ll import run_ecp_ll
from .network import (
    InstanceError,
    NetworkInstance,
    ObjectiveBreakdown,
    Placement,
    evaluate_lb,
    evaluate_ll,
    generate_gaussian_instance,
    load_instance,
    load_placement,
    save_instance,
    save_placement,
)
from .oracle import InstanceTooLarge, OracleReport, lb_brute_force, ll_brute_force
from .phase import PhaseScanResult, find_critical_temperatures

SOLVERS = {"ll": run_ecp_ll, "lb": run_ecp_lb}

__all__ = [
    "InstanceError",
    "InstanceTooLarge",
    "NetworkInstance",
    "ObjectiveBreakdown",
    "OracleReport",
    "PhaseScanResult",
    "Placement",
    "RunResult",
    "SOLVERS",
    "ScheduleConfig",
    "TraceRecord",
    "best_over_kmax",
    "evaluate_lb",
    "evaluate_ll",
    "find_critical_temperatures",
    "generate_gaussian_instance",
    "lb_brute_force",
    "ll_brute_force",
    "load_instance",
    "load_placement",
    "run_ecp_lb",
    "run_ecp_ll",
    "save_instance",
    "save_placement",
]
