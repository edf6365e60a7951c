"""
Instance orchestrator for experiment sweeps.

Runs one unit of numerical work per seed in worker threads, bounded by a
semaphore, and returns the results in seed order for a single-threaded merge.
"""

import asyncio
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

from ..core.exceptions import ConfigurationError, PrincipleViolationError
from ..core.log import get_logger

logger = get_logger(__name__)

FATAL_ERRORS = (ConfigurationError, PrincipleViolationError)

Work = Callable[[int], Any]


class InstanceStatus(str, Enum):
    """Instance execution status."""
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class InstanceResult:
    """Outcome of one seeded instance."""
    seed: int
    status: InstanceStatus = InstanceStatus.PENDING
    value: Any = None
    execution_time: float = 0.0
    error_type: Optional[str] = None
    error_message: Optional[str] = None
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is InstanceStatus.COMPLETED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "status": self.status.value,
            "execution_time": self.execution_time,
            "error_type": self.error_type,
            "error_message": self.error_message,
        }


class InstanceMonitor:
    """Context manager timing one instance and recording its outcome."""

    def __init__(self, result: InstanceResult, orchestrator: "InstanceOrchestrator"):
        self.result = result
        self.orchestrator = orchestrator
        self.start_time: Optional[float] = None

    async def __aenter__(self):
        self.start_time = time.perf_counter()
        self.result.status = InstanceStatus.IN_PROGRESS
        self.result.started_at = datetime.now(timezone.utc)
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        self.result.execution_time = time.perf_counter() - (self.start_time or 0.0)
        self.result.completed_at = datetime.now(timezone.utc)
        if exc_type is None:
            self.result.status = InstanceStatus.COMPLETED
            self.orchestrator._record(self.result)
            return False
        self.result.status = InstanceStatus.FAILED
        self.result.error_type = exc_type.__name__
        self.result.error_message = str(exc_val)
        self.orchestrator._record(self.result)
        logger.warning(
            "instance_failed", seed=self.result.seed, error_type=exc_type.__name__, error=str(exc_val)
        )
        # configuration problems and hard principle failures abort the sweep
        return not issubclass(exc_type, FATAL_ERRORS)


class InstanceOrchestrator:
    """
    Dispatches seeded work to threads and collects results in seed order.

    Args:
        max_concurrent: Number of instances allowed to run at once
    """

    def __init__(self, max_concurrent: int = 4):
        if max_concurrent < 1:
            raise ConfigurationError("max_concurrent must be at least 1")
        self.max_concurrent = max_concurrent
        self.history: List[InstanceResult] = []
        self._semaphore: Optional[asyncio.Semaphore] = None

    def _record(self, result: InstanceResult) -> None:
        self.history.append(result)

    async def _run_one(self, seed: int, work: Work) -> InstanceResult:
        assert self._semaphore is not None
        result = InstanceResult(seed=seed)
        async with self._semaphore:
            async with InstanceMonitor(result, self):
                result.value = await asyncio.to_thread(work, seed)
        return result

    async def run(self, seeds: Sequence[int], work: Work) -> List[InstanceResult]:
        """
        Run ``work(seed)`` for every seed.

        Returns:
            Results in the order of ``seeds``; failed instances carry the error

        Raises:
            ConfigurationError: If any instance hit a configuration problem
            PrincipleViolationError: If any instance requested a hard failure
        """
        self._semaphore = asyncio.Semaphore(self.max_concurrent)
        logger.info("sweep_started", instances=len(seeds), max_concurrent=self.max_concurrent)
        started = time.perf_counter()
        results = await asyncio.gather(*(self._run_one(seed, work) for seed in seeds))
        logger.info(
            "sweep_finished",
            instances=len(results),
            failed=sum(1 for r in results if not r.ok),
            elapsed=round(time.perf_counter() - started, 6),
        )
        return list(results)

    def get_metrics(self) -> Dict[str, Any]:
        """Aggregate counts and timings over every instance run so far."""
        completed = [r for r in self.history if r.ok]
        times = [r.execution_time for r in self.history]
        return {
            "total_instances": len(self.history),
            "completed": len(completed),
            "failed": len(self.history) - len(completed),
            "success_rate": len(completed) / len(self.history) if self.history else 0.0,
            "total_time": sum(times),
            "max_time": max(times) if times else 0.0,
        }


def run_instances(seeds: Sequence[int], work: Work, max_concurrent: int = 4) -> List[InstanceResult]:
    """Synchronous entry point used by the experiments."""
    orchestrator = InstanceOrchestrator(max_concurrent)
    return asyncio.run(orchestrator.run(seeds, work))
