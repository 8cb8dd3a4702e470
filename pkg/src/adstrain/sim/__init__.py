from .audit import AuditResult, audit_exactly_once
from .chaos import calibrate_preemption_warning, chaos_scenario, preemption_scenario
from .engine import (
    COMMITTED_EARLY,
    COMPONENT_FAILURE,
    HOLD,
    PREEMPTION_TIMEOUT,
    RESTART_FROM_CHECKPOINT,
    CheckpointRecord,
    EpochRecord,
    PreemptionNotice,
    SimReport,
    Simulator,
    TrainingHold,
    autoscale_readers,
    run,
)
from .export import write_report
from .fleet import ChipDemand, PipelineDemand, chip_demand_snapshot, fleet_at
from .scenario import Fault, SimScenario

__all__ = [
    "AuditResult", "audit_exactly_once", "calibrate_preemption_warning", "chaos_scenario",
    "preemption_scenario", "COMMITTED_EARLY", "COMPONENT_FAILURE", "HOLD", "PREEMPTION_TIMEOUT",
    "RESTART_FROM_CHECKPOINT", "CheckpointRecord", "EpochRecord", "PreemptionNotice", "SimReport",
    "Simulator", "TrainingHold", "autoscale_readers", "run", "write_report", "ChipDemand",
    "PipelineDemand", "chip_demand_snapshot", "fleet_at", "Fault", "SimScenario",
]
