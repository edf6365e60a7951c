"""Instance generation, orchestration and reports behind the command line."""

from .experiments import (
    cmd_certify,
    cmd_kernel_export,
    cmd_lemma_suite,
    cmd_sharpness,
    cmd_solve,
    cmd_verify_bounds,
)
from .instances import Instance, build_instance, generate_instance
from .orchestrator import InstanceOrchestrator, run_instances
from .reports import ExitCode, ExperimentReport

__all__ = [
    "Instance",
    "build_instance",
    "generate_instance",
    "InstanceOrchestrator",
    "run_instances",
    "ExitCode",
    "ExperimentReport",
    "cmd_certify",
    "cmd_verify_bounds",
    "cmd_sharpness",
    "cmd_lemma_suite",
    "cmd_solve",
    "cmd_kernel_export",
]
