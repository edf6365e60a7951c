"""
Tests for run configuration loading and the process settings.
"""

from pathlib import Path

import pytest

from potential_bounds.core.config import (
    BPolicy,
    KernelFamily,
    LabSettings,
    RunConfig,
    get_settings,
    load_run_config,
)
from potential_bounds.core.exceptions import ConfigurationError
from potential_bounds.measure_kernel import DiagonalPolicy
from potential_bounds.nonlinearity import NonlinearityKind

EXPERIMENTS = Path(__file__).resolve().parents[1] / "config" / "experiments"


@pytest.mark.unit
class TestRunConfig:

    def test_defaults(self):
        config = load_run_config()
        assert config.kernel.family is KernelFamily.RADIAL
        assert config.kernel.diagonal is DiagonalPolicy.CELL_AVERAGE
        assert config.solver.tol == 1e-10
        assert config.solver.b_policy is BPolicy.CERTIFIED_FROM_KAPPA

    @pytest.mark.parametrize("path", sorted(EXPERIMENTS.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_experiments_validate(self, path):
        config = load_run_config(path)
        assert config.name == path.stem

    def test_overrides_are_merged(self, tmp_path):
        source = tmp_path / "run.json"
        source.write_text('{"seed": 3, "space": {"n": 5, "dim": 2}}', encoding="utf-8")
        config = load_run_config(source, {"seed": 11, "space": {"n": 9}, "output": {"out_dir": None}})
        assert config.seed == 11
        assert config.space.n == 9
        assert config.space.dim == 2
        assert config.output.out_dir is None

    def test_yaml_documents(self, tmp_path):
        source = tmp_path / "run.yaml"
        source.write_text("name: yaml_run\nnonlinearity:\n  kind: power\n  q: -1.0\n", encoding="utf-8")
        config = load_run_config(source)
        assert config.name == "yaml_run"
        assert config.nonlinearity.build().kind is NonlinearityKind.POWER_DECREASING

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / "absent.json")

    @pytest.mark.parametrize(
        "document",
        [
            '{"space": {"n": 0}}',
            '{"kernel": {"family": "custom"}}',
            '{"solver": {"b_policy": "user_supplied"}}',
            '{"unknown": 1}',
            '{"h": {"low": 2.0, "high": 1.0}}',
            '[1, 2]',
            '{not json',
        ],
    )
    def test_invalid_documents(self, tmp_path, document):
        source = tmp_path / "bad.json"
        source.write_text(document, encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_run_config(source)

    def test_invalid_nonlinearity_reports_configuration_error(self):
        config = RunConfig.model_validate({"nonlinearity": {"kind": "power", "q": 0.0}})
        with pytest.raises(ConfigurationError):
            config.nonlinearity.build()

    def test_seeded_generator(self):
        config = RunConfig(seed=5)
        assert config.rng().uniform() == config.with_seed(5).rng().uniform()
        assert config.with_seed(6).seed == 6


@pytest.mark.unit
class TestLabSettings:

    def test_file_then_environment(self, tmp_path, monkeypatch):
        source = tmp_path / "lab.yaml"
        source.write_text("lab:\n  log_level: DEBUG\n  max_concurrent_instances: 2\n", encoding="utf-8")
        get_settings.cache_clear()
        settings = get_settings(source)
        assert settings.log_level == "DEBUG"
        assert settings.max_concurrent_instances == 2

        monkeypatch.setenv("POTENTIAL_BOUNDS_MAX_CONCURRENT_INSTANCES", "8")
        get_settings.cache_clear()
        assert get_settings(source).max_concurrent_instances == 8
        get_settings.cache_clear()

    def test_invalid_settings(self, tmp_path):
        source = tmp_path / "lab.yaml"
        source.write_text("lab:\n  max_concurrent_instances: 0\n", encoding="utf-8")
        get_settings.cache_clear()
        with pytest.raises(ConfigurationError):
            get_settings(source)
        get_settings.cache_clear()

    def test_defaults(self):
        assert LabSettings().log_format in ("console", "json")
