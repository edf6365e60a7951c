"""
Experiment reports: JSON document, CSV per-point table and a console summary.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.table import Table

from ..core.config import OutputFormat
from ..core.log import get_logger
from ..core.serialization import to_jsonable, write_csv, write_json

logger = get_logger(__name__)


class ExitCode(IntEnum):
    """Process exit codes of the command line."""
    OK = 0
    BOUND_VIOLATION = 2
    PRINCIPLE_VIOLATION = 3
    CONFIG_ERROR = 4


def combine_exit_codes(*codes: int) -> int:
    """Most severe code wins: CONFIG_ERROR (4) > PRINCIPLE_VIOLATION (3) > BOUND_VIOLATION (2) > OK (0)."""
    present = {int(c) for c in codes}
    for code in (ExitCode.CONFIG_ERROR, ExitCode.PRINCIPLE_VIOLATION, ExitCode.BOUND_VIOLATION):
        if int(code) in present:
            return int(code)
    return int(ExitCode.OK)


@dataclass
class ExperimentReport:
    """
    Result of one command.

    ``rows`` is the per-point table written as CSV; ``summary`` carries the
    aggregate figures (minimum margin, violation count, b used, kappa).
    ``timings`` are wall-clock seconds and are left out of
    ``deterministic_dict``.
    """
    command: str
    config: Dict[str, Any]
    columns: List[str] = field(default_factory=list)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    instances: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    exit_code: int = int(ExitCode.OK)

    @property
    def passed(self) -> bool:
        return self.exit_code == ExitCode.OK

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable(
            {
                "command": self.command,
                "exit_code": self.exit_code,
                "config": self.config,
                "summary": self.summary,
                "instances": self.instances,
                "failures": self.failures,
                "rows": self.rows,
                "timings": self.timings,
            }
        )

    def deterministic_dict(self) -> Dict[str, Any]:
        data = self.to_dict()
        data.pop("timings")
        for instance in data["instances"]:
            instance.pop("execution_time", None)
        return data

    def write(self, out_dir: Path, fmt: OutputFormat = OutputFormat.BOTH) -> List[Path]:
        """Write ``<command>.json`` and/or ``<command>.csv`` into ``out_dir``."""
        out_dir = Path(out_dir)
        stem = self.command.replace("-", "_")
        written: List[Path] = []
        if fmt in (OutputFormat.JSON, OutputFormat.BOTH):
            written.append(write_json(out_dir / f"{stem}.json", self.to_dict()))
        if fmt in (OutputFormat.CSV, OutputFormat.BOTH):
            written.append(write_csv(out_dir / f"{stem}.csv", self.rows, self.columns))
        logger.info("report_written", command=self.command, files=[str(p) for p in written])
        return written

    def render(self, console: Optional[Console] = None) -> None:
        """Print the summary and failures as rich tables."""
        console = console or Console()
        table = Table(title=f"{self.command} ({'pass' if self.passed else 'exit ' + str(self.exit_code)})")
        table.add_column("metric", style="cyan")
        table.add_column("value", justify="right")
        for key, value in to_jsonable(self.summary).items():
            table.add_row(str(key), _cell(value))
        console.print(table)
        if self.failures:
            failures = Table(title="failures", style="red")
            for column in ("seed", "kind", "detail"):
                failures.add_column(column)
            for failure in self.failures[:20]:
                failures.add_row(
                    str(failure.get("seed", "")), str(failure.get("kind", "")), str(failure.get("detail", ""))
                )
            console.print(failures)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)) and len(value) > 6:
        return f"[{len(value)} values]"
    return str(value)
