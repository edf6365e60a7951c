"""
End-to-end runs of the experiment sweeps on small instances.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from potential_bounds.core.config import LabSettings, RunConfig, load_run_config
from potential_bounds.core.exceptions import ConfigurationError
from potential_bounds.core.serialization import read_json, write_json
from potential_bounds.harness.experiments import (
    COMMANDS,
    SharpnessExperiment,
    VerifyBoundsExperiment,
    cmd_certify,
    cmd_kernel_export,
    cmd_lemma_suite,
    cmd_sharpness,
    cmd_solve,
    cmd_verify_bounds,
    resolve_b,
)
from potential_bounds.harness.instances import build_instance
from potential_bounds.harness.reports import ExitCode
from potential_bounds.measure_kernel import (
    MeasureSpace,
    kernel_from_document,
    kernel_to_document,
    volterra_kernel,
)
from potential_bounds.principles import WmpVerdict


EXPERIMENTS_DIR = Path(__file__).resolve().parents[1] / "config" / "experiments"


@pytest.fixture
def settings() -> LabSettings:
    return LabSettings(max_concurrent_instances=2)


def _with(config: RunConfig, **sections) -> RunConfig:
    data = config.model_dump(mode="json")
    for key, value in sections.items():
        data[key] = {**data[key], **value} if isinstance(value, dict) else value
    return RunConfig.model_validate(data)


@pytest.mark.unit
class TestResolveB:

    def test_kappa_policy(self, run_config):
        instance = build_instance(run_config)
        b, info = resolve_b(instance, run_config)
        assert info["source"] == "kappa"
        assert b == pytest.approx(2.0 * info["kappa"])

    def test_h_ratio(self, run_config):
        config = _with(run_config, h={"kind": "random", "low": 0.5, "high": 2.0})
        instance = build_instance(config)
        b, info = resolve_b(instance, config)
        assert info["source"] == "kappa_h_ratio"
        assert b == pytest.approx(2.0 * info["kappa"] * instance.h.max() / instance.h.min())
        plain, _ = resolve_b(instance, config, use_h=False)
        assert plain == pytest.approx(2.0 * info["kappa"])

    def test_volterra_is_known(self):
        config = RunConfig.model_validate({"space": {"n": 8}, "kernel": {"family": "volterra"}})
        b, info = resolve_b(build_instance(config), config)
        assert b == 1.0
        assert info["source"] == "known_volterra"

    def test_exhaustive_policy(self, run_config):
        config = _with(run_config, solver={"b_policy": "exhaustive_lp"})
        b, info = resolve_b(build_instance(config), config)
        assert info["source"] == "exhaustive_wmp"
        kappa_b, _ = resolve_b(build_instance(run_config), run_config)
        assert 1.0 <= b <= kappa_b + 1e-9

    def test_kappa_needs_quasi_metric(self, tmp_path):
        space = MeasureSpace.uniform_grid(5)
        path = write_json(tmp_path / "volterra.json", kernel_to_document(volterra_kernel(space), space))
        config = RunConfig.model_validate({"kernel": {"family": "custom", "path": str(path)}})
        with pytest.raises(ConfigurationError):
            resolve_b(build_instance(config), config)


@pytest.mark.integration
class TestExperiments:

    def test_verify_bounds_passes(self, run_config, settings):
        report = cmd_verify_bounds(run_config, settings)
        assert report.exit_code == ExitCode.OK
        assert report.summary["violations"] == 0
        assert report.summary["points"] == 12
        assert report.summary["min_margin"] >= 0.0
        assert {row["seed"] for row in report.rows} == {7, 8}

    def test_verify_bounds_is_deterministic(self, run_config, settings):
        first = cmd_verify_bounds(run_config, settings).deterministic_dict()
        second = cmd_verify_bounds(run_config, settings).deterministic_dict()
        assert first == second

    def test_verify_bounds_decreasing(self, run_config, settings):
        config = _with(run_config, nonlinearity={"kind": "power", "q": -1.0})
        report = cmd_verify_bounds(config, settings)
        assert report.exit_code == ExitCode.OK
        assert report.summary["per_instance"][0]["theorem"] == "upper_power_negative"

    def test_verify_bounds_homogeneous(self, run_config, settings):
        config = _with(run_config, nonlinearity={"kind": "power", "q": 0.5, "homogeneous": True})
        report = cmd_verify_bounds(config, settings)
        assert report.summary["violations"] == 0
        assert all(p["scaling_error"] <= 1e-8 for p in report.summary["per_instance"])

    def test_homogeneous_needs_sublinear_power(self, run_config, settings):
        config = _with(run_config, nonlinearity={"kind": "power", "q": 2.0, "homogeneous": True})
        with pytest.raises(ConfigurationError):
            VerifyBoundsExperiment(config, settings)

    def test_certify(self, run_config, settings):
        report = cmd_certify(run_config, settings)
        assert len(report.rows) == 2
        for row in report.rows:
            assert row["kappa"] >= 0.5
            assert row["b_certified"] == pytest.approx(2.0 * row["kappa"])
            assert row["wmp_verdict"] is WmpVerdict.CERTIFIED
            assert row["b_minimal"] <= row["b_certified"] + 1e-9
            assert row["max_kappa_w"] is not None

    def test_sharpness(self, settings):
        config = RunConfig.model_validate({
            "space": {"kind": "grid", "n": 51, "start": 0.0, "stop": 0.9},
            "kernel": {"family": "volterra"},
            "nonlinearity": {"kind": "power", "q": 1.0},
            "solver": {"tol": 1e-12, "refinements": 1},
        })
        report = cmd_sharpness(config, settings)
        assert report.exit_code == ExitCode.OK
        assert [row["n"] for row in report.rows] == [51, 101]
        assert report.rows[1]["gap"] < report.rows[0]["gap"]
        assert report.rows[1]["ratio"] > 1.5
        assert report.summary["oracle_gap"] is not None

    def test_sharpness_needs_volterra(self, run_config, settings):
        with pytest.raises(ConfigurationError):
            SharpnessExperiment(run_config, settings)

    def test_lemma_suite(self, run_config, settings):
        report = cmd_lemma_suite(run_config, settings)
        checks = {row["check"] for row in report.rows}
        assert checks == {"layer_cake", "key_lemma", "iter_psi", "power_iterate", "iterated_power"}
        assert report.summary["failed_checks"] == 0
        assert report.exit_code == ExitCode.OK

    def test_solve(self, run_config, settings):
        report = cmd_solve(run_config, settings)
        assert len(report.rows) == 12
        assert report.summary["statuses"]["converged"] == 12
        assert not math.isnan(report.summary["per_instance"][0]["residual"])

    def test_kernel_export(self, run_config, tmp_path):
        report = cmd_kernel_export(run_config, tmp_path)
        assert [row["seed"] for row in report.rows] == [7, 8]
        _, kernel = kernel_from_document(read_json(tmp_path / "kernel_7.json"))
        np.testing.assert_allclose(kernel.entries, build_instance(run_config).kernel.entries)

    def test_command_table(self):
        assert set(COMMANDS) == {"certify", "verify-bounds", "sharpness", "lemmas", "solve"}


def _family(config: RunConfig, family: str) -> RunConfig:
    """The radial cloud of ``run_config`` or a Riesz kernel on a 1-D grid."""
    if family == "radial":
        return config
    return _with(
        config,
        space={"kind": "grid", "n": 8, "dim": 1, "start": 0.0, "stop": 1.0},
        kernel={"family": "riesz", "alpha": 0.5, "diagonal": "cell_average", "scale": 0.1},
    )


@pytest.mark.integration
class TestEstimatesAgainstSolutions:

    @pytest.mark.parametrize("family", ["radial", "riesz"])
    @pytest.mark.parametrize("q", [0.3, 0.5, 1.0, 1.5, 2.0])
    @pytest.mark.parametrize("h_kind", ["ones", "random"])
    def test_increasing_lower_bounds_hold(self, run_config, settings, family, q, h_kind):
        config = _with(
            _family(run_config, family),
            nonlinearity={"kind": "power", "q": q},
            h={"kind": h_kind},
        )
        report = cmd_verify_bounds(config, settings)
        assert report.exit_code == ExitCode.OK, report.failures
        assert report.summary["violations"] == 0
        assert report.summary["contradicted_conditions"] == 0
        expected = "with_h" if h_kind == "random" else "lower_power"
        assert {p["theorem"] for p in report.summary["per_instance"]} == {expected}
        if family == "radial" and (q <= 1.0 or h_kind == "ones"):
            assert report.summary["converged_points"] == report.summary["points"]
            assert report.summary["min_margin"] >= -1e-9

    @pytest.mark.parametrize("family", ["radial", "riesz"])
    @pytest.mark.parametrize("q", [-0.5, -2.0])
    def test_decreasing_upper_bounds_hold(self, run_config, settings, family, q):
        config = _with(_family(run_config, family), nonlinearity={"kind": "power", "q": q})
        report = cmd_verify_bounds(config, settings)
        assert report.exit_code == ExitCode.OK, report.failures
        assert report.summary["violations"] == 0
        assert report.summary["contradicted_conditions"] == 0
        assert {p["theorem"] for p in report.summary["per_instance"]} == {"upper_power_negative"}

    def test_random_h_uses_the_domination_constant(self, run_config, settings):
        config = _with(run_config, h={"kind": "random"})
        report = cmd_verify_bounds(config, settings)
        for entry in report.summary["per_instance"]:
            assert entry["provenance"]["source"] == "kappa_h_ratio"
            assert entry["b"] >= 2.0 * entry["provenance"]["kappa"]


@pytest.mark.slow
@pytest.mark.integration
def test_volterra_sharpness_golden_config(settings):
    config = load_run_config(EXPERIMENTS_DIR / "sharpness_volterra.json")
    report = cmd_sharpness(config, settings)
    coarse, fine = report.rows
    assert coarse["n"] == 1000
    assert coarse["gap"] <= 2e-3
    assert fine["ratio"] >= 1.8
    assert report.exit_code == ExitCode.OK


@pytest.mark.slow
@pytest.mark.integration
@pytest.mark.parametrize(
    ("name", "command"),
    [
        ("bounds_radial.json", cmd_verify_bounds),
        ("bounds_riesz_h.json", cmd_verify_bounds),
        ("bounds_decreasing.json", cmd_verify_bounds),
        ("homogeneous.json", cmd_verify_bounds),
        ("certify.json", cmd_certify),
        ("lemmas.json", cmd_lemma_suite),
    ],
)
def test_shipped_configs_run_clean(settings, name, command):
    report = command(load_run_config(EXPERIMENTS_DIR / name), settings)
    assert report.exit_code == ExitCode.OK, report.failures
    assert not report.failures
