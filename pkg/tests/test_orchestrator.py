"""
Tests for the seeded instance orchestrator.
"""

import threading

import pytest

from potential_bounds.core.exceptions import (
    ConfigurationError,
    DomainError,
    PrincipleViolationError,
)
from potential_bounds.harness.orchestrator import (
    InstanceOrchestrator,
    InstanceStatus,
    run_instances,
)


@pytest.mark.unit
class TestInstanceOrchestrator:

    async def test_results_follow_seed_order(self):
        orchestrator = InstanceOrchestrator(max_concurrent=2)
        results = await orchestrator.run([3, 1, 2], lambda seed: seed * seed)
        assert [r.seed for r in results] == [3, 1, 2]
        assert [r.value for r in results] == [9, 1, 4]
        assert all(r.status is InstanceStatus.COMPLETED for r in results)

    async def test_numerical_failures_are_recorded(self):
        def work(seed):
            if seed == 2:
                raise DomainError("b below one")
            return seed

        orchestrator = InstanceOrchestrator()
        results = await orchestrator.run([1, 2, 3], work)
        failed = results[1]
        assert failed.status is InstanceStatus.FAILED
        assert failed.error_type == "DomainError"
        assert failed.to_dict()["error_message"] == "b below one"
        assert [r.ok for r in results] == [True, False, True]

        metrics = orchestrator.get_metrics()
        assert metrics["total_instances"] == 3
        assert metrics["failed"] == 1
        assert metrics["success_rate"] == pytest.approx(2 / 3)

    @pytest.mark.parametrize("error", [ConfigurationError, PrincipleViolationError])
    async def test_fatal_errors_propagate(self, error):
        def work(seed):
            raise error("stop")

        with pytest.raises(error):
            await InstanceOrchestrator().run([0], work)

    async def test_concurrency_is_bounded(self):
        lock = threading.Lock()
        active = {"now": 0, "peak": 0}

        def work(seed):
            with lock:
                active["now"] += 1
                active["peak"] = max(active["peak"], active["now"])
            threading.Event().wait(0.01)
            with lock:
                active["now"] -= 1
            return seed

        await InstanceOrchestrator(max_concurrent=2).run(list(range(8)), work)
        assert active["peak"] <= 2

    def test_invalid_concurrency(self):
        with pytest.raises(ConfigurationError):
            InstanceOrchestrator(max_concurrent=0)

    def test_empty_metrics(self):
        assert InstanceOrchestrator().get_metrics()["success_rate"] == 0.0


@pytest.mark.unit
def test_run_instances_is_synchronous():
    results = run_instances([0, 1], lambda seed: seed + 10, max_concurrent=1)
    assert [r.value for r in results] == [10, 11]
