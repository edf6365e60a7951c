"""
Command-line interface.

Every subcommand reads one run configuration (``--config``), applies the
flags on top of it, runs the experiment and writes its report. Exit codes:
0 all checks pass, 2 bound violation or failed instance, 3 principle
violation, 4 configuration error.
"""

from pathlib import Path
from typing import Any, Callable, Dict, Optional

import typer
from rich.console import Console

from .core.config import LabSettings, OutputFormat, RunConfig, get_settings, load_run_config
from .core.exceptions import ConfigurationError, PrincipleViolationError
from .core.log import configure_logging, get_logger
from .harness.experiments import COMMANDS, cmd_kernel_export
from .harness.reports import ExitCode, ExperimentReport

app = typer.Typer(
    name="potential-bounds",
    help="Pointwise bounds for nonlinear integral inequalities: certification, verification and lemma oracles.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)
logger = get_logger(__name__)

ConfigOption = typer.Option(None, "--config", "-c", help="Run configuration (JSON or YAML).")
SeedOption = typer.Option(None, "--seed", help="Base seed; instance i uses seed + i.")
OutOption = typer.Option(None, "--out", help="Output directory.")
FormatOption = typer.Option(None, "--format", help="Report files to write.", case_sensitive=False)
InstancesOption = typer.Option(None, "--instances", min=1, help="Number of seeded instances.")
LogLevelOption = typer.Option(None, "--log-level", help="Log level (defaults to the lab settings).")


def _overrides(
    seed: Optional[int],
    out: Optional[Path],
    fmt: Optional[OutputFormat],
    instances: Optional[int],
) -> Dict[str, Any]:
    return {
        "seed": seed,
        "instances": instances,
        "output": {"out_dir": None if out is None else str(out), "format": None if fmt is None else fmt.value},
    }


def _prepare(
    config_path: Optional[Path],
    overrides: Dict[str, Any],
    log_level: Optional[str],
) -> tuple[RunConfig, LabSettings]:
    settings = get_settings()
    configure_logging(log_level or settings.log_level, settings.log_format)
    return load_run_config(config_path, overrides), settings


def _out_dir(config: RunConfig, settings: LabSettings) -> Path:
    return Path(config.output.out_dir) if config.output.out_dir is not None else settings.out_dir


def _finish(report: ExperimentReport, config: RunConfig, settings: LabSettings) -> None:
    report.write(_out_dir(config, settings), config.output.format)
    report.render(console)
    raise typer.Exit(code=report.exit_code)


def _execute(
    command: str,
    config_path: Optional[Path],
    seed: Optional[int],
    out: Optional[Path],
    fmt: Optional[OutputFormat],
    instances: Optional[int],
    log_level: Optional[str],
    runner: Optional[Callable[[RunConfig, LabSettings], ExperimentReport]] = None,
) -> None:
    try:
        config, settings = _prepare(config_path, _overrides(seed, out, fmt, instances), log_level)
        if runner is None:
            report = COMMANDS[command](config, settings)
        else:
            report = runner(config, settings)
    except ConfigurationError as e:
        err_console.print(f"[red]configuration error:[/red] {e}")
        if e.details:
            err_console.print(e.details)
        logger.error("configuration_error", command=command, **e.to_dict())
        raise typer.Exit(code=int(ExitCode.CONFIG_ERROR))
    except PrincipleViolationError as e:
        err_console.print(f"[red]principle violation:[/red] {e}")
        raise typer.Exit(code=int(ExitCode.PRINCIPLE_VIOLATION))
    _finish(report, config, settings)


@app.command()
def certify(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    instances: Optional[int] = InstancesOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Quasi-metric constant, Ptolemy constant, certified b and the exhaustive WMP verdict."""
    _execute("certify", config, seed, out, fmt, instances, log_level)


@app.command("verify-bounds")
def verify_bounds(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    instances: Optional[int] = InstancesOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Solve every instance and check the pointwise estimate at each converged point."""
    _execute("verify-bounds", config, seed, out, fmt, instances, log_level)


@app.command()
def sharpness(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    instances: Optional[int] = InstancesOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Gap between solution and estimate on refined Volterra grids."""
    _execute("sharpness", config, seed, out, fmt, instances, log_level)


@app.command()
def lemmas(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    instances: Optional[int] = InstancesOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Layer-cake, key-lemma, psi-ladder and power-iterate inequalities."""
    _execute("lemmas", config, seed, out, fmt, instances, log_level)


@app.command()
def solve(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    instances: Optional[int] = InstancesOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Picard solutions with per-point status."""
    _execute("solve", config, seed, out, fmt, instances, log_level)


@app.command("kernel-export")
def kernel_export(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    instances: Optional[int] = InstancesOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Write the space and kernel of each instance as a JSON document."""

    def runner(run: RunConfig, settings: LabSettings) -> ExperimentReport:
        return cmd_kernel_export(run, _out_dir(run, settings))

    _execute("kernel-export", config, seed, out, fmt, instances, log_level, runner)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
