"""
Experiments behind the command-line surface.

Each experiment builds one seeded instance per worker, runs its numerical
checks there and merges the outcomes into a single ExperimentReport.
"""

import math
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ..bounds import (
    ConditionStatus,
    evaluate_bounds,
    iterated_power_bound,
    lower_bound_power,
    power_iterate_inequality_check,
)
from ..core.config import (
    BPolicy,
    HKind,
    KernelFamily,
    LabSettings,
    RunConfig,
    SpaceKind,
    get_settings,
)
from ..core.exceptions import ConfigurationError, ValidationError
from ..core.log import get_logger
from ..core.serialization import write_json
from ..measure_kernel import (
    Kernel,
    MeasureSpace,
    apply,
    kernel_to_document,
    modify_w,
    volterra_kernel,
)
from ..nonlinearity import Nonlinearity
from ..principles import (
    EXHAUSTIVE_LIMIT,
    KernelTransform,
    QuasiMetricReport,
    WmpStrategy,
    WmpVerdict,
    certified_b,
    minimal_wmp_constant,
    needs_finite_diagonal,
    quasimetric_constant,
    verify_domination,
    verify_wmp,
)
from ..solver import (
    SolveResult,
    SolveStatus,
    homogeneous_picard,
    iter_psi_check,
    iterate_f,
    key_lemma_check,
    layer_cake_check,
    picard_decreasing,
    picard_increasing,
)
from .instances import Instance, build_instance
from .orchestrator import run_instances
from .reports import ExitCode, ExperimentReport, combine_exit_codes

logger = get_logger(__name__)

RESIDUAL_TOL = 1e-9
PSI_LADDER_TOL = 1e-6
SCALING_TOL = 1e-8
SCALING_FACTOR = 2.0
KAPPA_W_LIMIT = 64
LAYER_CAKE_EXPONENTS = (1.5, 2.0, 3.0)
POWER_ITERATE_EXPONENTS = (0.5, 2.0, 3.0)

# families whose maximum-principle constant is known without kappa
KNOWN_B = {KernelFamily.VOLTERRA: 1.0, KernelFamily.ZERO: 1.0}


def _quasi_metric_report(kernel: Kernel, include_ptolemy: bool = False) -> Optional[QuasiMetricReport]:
    try:
        return quasimetric_constant(kernel, include_ptolemy=include_ptolemy)
    except ValidationError:
        return None


def resolve_b(
    instance: Instance,
    config: RunConfig,
    use_h: bool = True,
) -> Tuple[float, Dict[str, Any]]:
    """
    Pick the maximum-principle constant for an instance.

    With a non-constant h the constant has to cover the domination principle
    for (K, h): the exhaustive policy computes it exactly, the kappa policy
    uses b * max(h) / min(h) (and 8 kappa^3 for h = K nu when smaller).

    Returns:
        (b, provenance) where provenance records policy, kappa and source

    Raises:
        ConfigurationError: If the kernel admits no certified constant
    """
    kernel, space = instance.kernel, instance.space
    policy = config.solver.b_policy
    with_h = use_h and not instance.h_is_one
    info: Dict[str, Any] = {"policy": policy.value, "kappa": None}

    if policy is BPolicy.USER_SUPPLIED:
        b = float(config.solver.b)  # type: ignore[arg-type]
        info["source"] = "user"
        if kernel.n <= EXHAUSTIVE_LIMIT:
            # a user-supplied constant is only trusted after the exhaustive check
            if with_h:
                verify_domination(kernel, space, instance.h, b).raise_if_violated()
            else:
                verify_wmp(kernel, space, b).raise_if_violated()
            info["source"] = "user_verified"
        return b, info

    if policy is BPolicy.EXHAUSTIVE_LP and kernel.n <= EXHAUSTIVE_LIMIT:
        if with_h:
            b = verify_domination(kernel, space, instance.h, 1.0).b_lower_witness
            info["source"] = "exhaustive_domination"
        else:
            b = minimal_wmp_constant(kernel, space)
            info["source"] = "exhaustive_wmp"
        if math.isinf(b):
            raise ConfigurationError(
                "The kernel violates the maximum principle for every b", details={"kernel": kernel.name}
            )
        return b, info
    if policy is BPolicy.EXHAUSTIVE_LP:
        logger.warning("exhaustive_b_unavailable", n=kernel.n, limit=EXHAUSTIVE_LIMIT, fallback="kappa")

    family = config.kernel.family
    report = None if family in KNOWN_B else _quasi_metric_report(kernel)
    if report is None:
        if family not in KNOWN_B:
            raise ConfigurationError(
                "certified_from_kappa needs a symmetric kernel with finite positive off-diagonal entries; "
                "use exhaustive_lp or user_supplied",
                details={"kernel": kernel.name},
            )
        b = KNOWN_B[family]
        info["source"] = f"known_{family.value}"
    else:
        if needs_finite_diagonal(kernel):
            logger.warning("kappa_with_excluded_diagonal", kernel=kernel.name)
        b = certified_b(report)
        info.update(kappa=report.kappa, source="kappa")
    if with_h:
        h = instance.h
        scaled = b * float(h.max() / h.min())
        if config.h.kind is HKind.POTENTIAL and report is not None:
            scaled = min(scaled, certified_b(report, KernelTransform.W_MODIFIED))
        b = scaled
        info["source"] += "_h_ratio"
    return b, info


def _failure(seed: int, kind: str, detail: Any) -> Dict[str, Any]:
    return {"seed": seed, "kind": kind, "detail": detail}


class Experiment(ABC):
    """
    Base class for the seeded experiment sweeps.

    Subclasses implement ``run_instance`` (executed in worker threads) and
    ``merge`` (executed in order on the calling thread).
    """

    command: str = ""
    columns: List[str] = []

    def __init__(self, config: RunConfig, settings: Optional[LabSettings] = None):
        self.config = config
        self.settings = settings or get_settings()
        self.validate()

    def validate(self) -> None:
        """Reject configurations the experiment cannot run."""

    def seeds(self) -> List[int]:
        return [self.config.seed + i for i in range(self.config.instances)]

    def instance(self, seed: int) -> Instance:
        return build_instance(self.config.with_seed(seed))

    @abstractmethod
    def run_instance(self, seed: int) -> Dict[str, Any]:
        """Numerical work for one seed."""

    @abstractmethod
    def merge(self, report: ExperimentReport, seed: int, outcome: Dict[str, Any]) -> None:
        """Fold one instance outcome into the report."""

    def finalize(self, report: ExperimentReport) -> None:
        """Compute summary figures once every instance is merged."""

    def run(self) -> ExperimentReport:
        report = ExperimentReport(
            command=self.command,
            config=self.config.model_dump(mode="json"),
            columns=list(self.columns),
        )
        started = time.perf_counter()
        results = run_instances(self.seeds(), self.run_instance, self.settings.max_concurrent_instances)
        codes = [int(ExitCode.OK)]
        for result in results:
            report.instances.append(result.to_dict())
            if result.ok:
                self.merge(report, result.seed, result.value)
            else:
                report.failures.append(
                    _failure(result.seed, "error", f"{result.error_type}: {result.error_message}")
                )
                codes.append(int(ExitCode.BOUND_VIOLATION))
        self.finalize(report)
        codes.extend(f.get("exit_code", int(ExitCode.BOUND_VIOLATION)) for f in report.failures)
        report.exit_code = combine_exit_codes(*codes)
        report.timings = {
            "total": time.perf_counter() - started,
            "instances": float(sum(r.execution_time for r in results)),
        }
        logger.info(
            "experiment_finished",
            command=self.command,
            instances=len(results),
            exit_code=report.exit_code,
            failures=len(report.failures),
        )
        return report


def _solve(instance: Instance, config: RunConfig, kernel: Optional[Kernel] = None) -> SolveResult:
    kernel = kernel or instance.kernel
    g, solver = instance.g, config.solver
    if config.nonlinearity.homogeneous:
        return homogeneous_picard(kernel, instance.space, float(g.q), max_iter=solver.max_iter)  # type: ignore[arg-type]
    if g.increasing:
        return picard_increasing(
            kernel, instance.space, g, h=instance.h, tol=solver.tol, max_iter=solver.max_iter
        )
    return picard_decreasing(
        kernel, instance.space, g, h=instance.h, tol=solver.tol, max_iter=solver.max_iter, theta=solver.theta
    )


def _check_nonlinearity_and_h(config: RunConfig) -> None:
    spec = config.nonlinearity
    g = spec.build()
    if spec.homogeneous:
        if not (g.is_power and 0.0 < float(g.q) < 1.0):  # type: ignore[arg-type]
            raise ConfigurationError("The homogeneous problem needs a power nonlinearity with 0 < q < 1")
        if config.h.kind is not HKind.ONES:
            raise ConfigurationError("The homogeneous problem has no h term")
    elif not g.is_power and config.h.kind is not HKind.ONES:
        raise ConfigurationError("Non-constant h needs a power nonlinearity")


class VerifyBoundsExperiment(Experiment):
    """Solve each instance and measure every point against its estimate."""

    command = "verify-bounds"
    columns = ["seed", "point", "pot", "u", "bound", "condition", "margin", "flag", "status"]

    def validate(self) -> None:
        _check_nonlinearity_and_h(self.config)

    def run_instance(self, seed: int) -> Dict[str, Any]:
        instance = self.instance(seed)
        config = self.config.with_seed(seed)
        homogeneous = config.nonlinearity.homogeneous
        b, provenance = resolve_b(instance, config, use_h=not homogeneous)
        result = _solve(instance, config)
        g, space, kernel = instance.g, instance.space, instance.kernel

        if homogeneous or instance.h_is_one:
            pots = apply(kernel, space, np.ones(space.n))
            bound = evaluate_bounds(pots, b, g, homogeneous=homogeneous)
        else:
            pots = apply(kernel, space, np.power(instance.h, float(g.q)))  # type: ignore[arg-type]
            bound = evaluate_bounds(pots, b, g, h=instance.h)
        converged = result.converged
        bound = bound.with_reference(result.u, converged)
        contradicted = int(sum(
            1 for i, c in enumerate(bound.conditions) if converged[i] and c is ConditionStatus.VIOLATED
        ))

        scaling_error = None
        if homogeneous:
            scaled = _solve(instance, config, kernel.scaled(SCALING_FACTOR))
            q = float(g.q)  # type: ignore[arg-type]
            expected = SCALING_FACTOR ** (1.0 / (1.0 - q)) * result.u
            both = converged & scaled.converged & (expected > 0)
            scaling_error = (
                float(np.max(np.abs(scaled.u[both] - expected[both]) / expected[both])) if both.any() else 0.0
            )

        rows = bound.to_rows()
        for i, row in enumerate(rows):
            row["seed"] = seed
            row["status"] = result.statuses[i]
        return {
            "b": b,
            "provenance": provenance,
            "theorem": bound.theorem.value,
            "rows": rows,
            "violations": bound.violation_count,
            "contradicted_conditions": contradicted,
            "min_margin": bound.min_margin,
            "converged": int(converged.sum()),
            "diverged": result.count(SolveStatus.DIVERGED),
            "no_positive_solution": result.count(SolveStatus.NO_POSITIVE_SOLUTION),
            "not_converged": result.count(SolveStatus.OSCILLATING),
            "scaling_error": scaling_error,
        }

    def merge(self, report: ExperimentReport, seed: int, outcome: Dict[str, Any]) -> None:
        report.rows.extend(outcome.pop("rows"))
        report.summary.setdefault("per_instance", []).append({"seed": seed, **outcome})
        if outcome["violations"]:
            report.failures.append(_failure(seed, "bound_violation", f"{outcome['violations']} points"))
        if outcome["contradicted_conditions"]:
            report.failures.append(
                _failure(seed, "necessary_condition", f"{outcome['contradicted_conditions']} points")
            )
        if outcome["scaling_error"] is not None and outcome["scaling_error"] > SCALING_TOL:
            report.failures.append(_failure(seed, "scaling_covariance", outcome["scaling_error"]))

    def finalize(self, report: ExperimentReport) -> None:
        per_instance = report.summary.get("per_instance", [])
        margins = [p["min_margin"] for p in per_instance if not math.isnan(p["min_margin"])]
        bs = [p["b"] for p in per_instance]
        kappas = [p["provenance"]["kappa"] for p in per_instance if p["provenance"]["kappa"] is not None]
        report.summary.update(
            instances=len(report.instances),
            points=len(report.rows),
            converged_points=sum(p["converged"] for p in per_instance),
            diverged_points=sum(p["diverged"] for p in per_instance),
            no_positive_solution_points=sum(p["no_positive_solution"] for p in per_instance),
            violations=sum(p["violations"] for p in per_instance),
            contradicted_conditions=sum(p["contradicted_conditions"] for p in per_instance),
            min_margin=min(margins) if margins else math.nan,
            b_min=min(bs) if bs else math.nan,
            b_max=max(bs) if bs else math.nan,
            kappa_max=max(kappas) if kappas else None,
        )


class CertifyExperiment(Experiment):
    """Quasi-metric constants, certified b and the exhaustive maximum-principle verdict."""

    command = "certify"
    columns = [
        "seed", "n", "kappa", "ptolemy", "four_kappa_sq", "b_certified", "b_w_modified",
        "max_kappa_w", "wmp_verdict", "b_minimal", "domination_verdict",
    ]

    def run_instance(self, seed: int) -> Dict[str, Any]:
        instance = self.instance(seed)
        kernel, space = instance.kernel, instance.space
        report = _quasi_metric_report(kernel, include_ptolemy=True)
        if report is None:
            raise ConfigurationError("certify needs a quasi-metric kernel", details={"kernel": kernel.name})
        b = certified_b(report)
        four_kappa_sq = 4.0 * report.kappa ** 2

        max_kappa_w = None
        if kernel.n <= KAPPA_W_LIMIT:
            values = []
            for w in range(kernel.n):
                modified, _ = modify_w(kernel, w)
                if modified.n >= 3:
                    values.append(quasimetric_constant(modified, include_ptolemy=False).kappa)
            max_kappa_w = max(values) if values else None

        wmp = verify_wmp(
            kernel, space, b, WmpStrategy.EXHAUSTIVE_LP, self.config.solver.wmp_budget, seed
        ) if kernel.n <= EXHAUSTIVE_LIMIT else verify_wmp(
            kernel, space, b, WmpStrategy.RANDOMIZED, self.config.solver.wmp_budget, seed
        )
        domination = None
        if not instance.h_is_one and kernel.n <= EXHAUSTIVE_LIMIT:
            b_h, _ = resolve_b(instance, self.config.with_seed(seed))
            domination = verify_domination(kernel, space, instance.h, b_h)
        return {
            "quasi_metric": report.to_dict(),
            "row": {
                "seed": seed,
                "n": kernel.n,
                "kappa": report.kappa,
                "ptolemy": report.ptolemy_constant,
                "four_kappa_sq": four_kappa_sq,
                "b_certified": b,
                "b_w_modified": certified_b(report, KernelTransform.W_MODIFIED),
                "max_kappa_w": max_kappa_w,
                "wmp_verdict": wmp.verdict,
                "b_minimal": wmp.b_lower_witness,
                "domination_verdict": None if domination is None else domination.verdict,
            },
            "wmp": wmp.to_dict(),
            "domination": None if domination is None else domination.to_dict(),
        }

    def merge(self, report: ExperimentReport, seed: int, outcome: Dict[str, Any]) -> None:
        row = outcome["row"]
        report.rows.append(row)
        report.summary.setdefault("per_instance", []).append(
            {"seed": seed, "quasi_metric": outcome["quasi_metric"], "wmp": outcome["wmp"],
             "domination": outcome["domination"]}
        )
        principle = int(ExitCode.PRINCIPLE_VIOLATION)
        if outcome["wmp"]["verdict"] == WmpVerdict.VIOLATED.value:
            report.failures.append({**_failure(seed, "wmp_violated", row["b_certified"]), "exit_code": principle})
        if outcome["domination"] is not None and outcome["domination"]["verdict"] == WmpVerdict.VIOLATED.value:
            report.failures.append({**_failure(seed, "domination_violated", None), "exit_code": principle})
        if row["ptolemy"] is not None and row["ptolemy"] > row["four_kappa_sq"] + RESIDUAL_TOL:
            report.failures.append({**_failure(seed, "ptolemy_exceeds", row["ptolemy"]), "exit_code": principle})
        if row["max_kappa_w"] is not None and row["max_kappa_w"] > row["four_kappa_sq"] + RESIDUAL_TOL:
            report.failures.append(
                {**_failure(seed, "kappa_w_exceeds", row["max_kappa_w"]), "exit_code": principle}
            )

    def finalize(self, report: ExperimentReport) -> None:
        kappas = [r["kappa"] for r in report.rows]
        report.summary.update(
            instances=len(report.instances),
            kappa_max=max(kappas) if kappas else None,
            b_certified_max=max((r["b_certified"] for r in report.rows), default=None),
            wmp_violations=sum(1 for r in report.rows if r["wmp_verdict"] is WmpVerdict.VIOLATED),
        )


class SharpnessExperiment(Experiment):
    """
    Gap between the Picard solution and the lower estimate on Volterra grids.

    With b = 1 the estimate is exact for the continuum problem u' = g(u), so
    the gap measures discretization error only; the grid is refined
    ``solver.refinements`` times (n -> 2(n - 1) + 1) to expose its order.
    """

    command = "sharpness"
    columns = ["n", "step", "gap", "ratio", "oracle_gap", "min_margin", "iterations"]

    def validate(self) -> None:
        if self.config.kernel.family is not KernelFamily.VOLTERRA or self.config.space.kind is not SpaceKind.GRID:
            raise ConfigurationError("sharpness runs the Volterra kernel on a 1-D grid")
        g = self.config.nonlinearity.build()
        if not (g.is_power and float(g.q) > 0):  # type: ignore[arg-type]
            raise ConfigurationError("sharpness needs a power nonlinearity with q > 0")

    def seeds(self) -> List[int]:
        return [self.config.seed]

    def _level(self, n: int, g: Nonlinearity) -> Dict[str, Any]:
        spec = self.config.space
        space = MeasureSpace.uniform_grid(n, spec.start, spec.stop, spec.weighting)
        kernel = volterra_kernel(space)
        q = float(g.q)  # type: ignore[arg-type]
        result = picard_increasing(
            kernel, space, g, h=1.0, tol=self.config.solver.tol, max_iter=self.config.solver.max_iter
        )
        pots = apply(kernel, space, np.ones(n))
        bound = np.array([lower_bound_power(float(p), 1.0, q).value for p in pots])
        mask = result.converged & np.isfinite(bound)
        margin = result.u[mask] - bound[mask]
        gap = float(np.max(np.abs(margin) / bound[mask])) if mask.any() else math.nan
        oracle_gap = None
        if q == 1.0:
            x = space.coords[:, 0]
            exact = np.exp(x - spec.start)
            oracle_gap = float(np.max(np.abs(result.u - exact) / exact))
        return {
            "n": n,
            "step": (spec.stop - spec.start) / (n - 1) if n > 1 else spec.stop - spec.start,
            "gap": gap,
            "oracle_gap": oracle_gap,
            "min_margin": float(np.min(margin / (1.0 + np.abs(result.u[mask])))) if mask.any() else math.nan,
            "iterations": result.iterations,
        }

    def run_instance(self, seed: int) -> Dict[str, Any]:
        g = self.config.nonlinearity.build()
        n = self.config.space.n
        levels = []
        for _ in range(self.config.solver.refinements + 1):
            levels.append(self._level(n, g))
            n = 2 * (n - 1) + 1
        for previous, level in zip(levels, levels[1:]):
            level["ratio"] = previous["gap"] / level["gap"] if level["gap"] > 0 else math.inf
        levels[0]["ratio"] = None
        return {"levels": levels}

    def merge(self, report: ExperimentReport, seed: int, outcome: Dict[str, Any]) -> None:
        report.rows.extend(outcome["levels"])
        for level in outcome["levels"]:
            if level["min_margin"] < -RESIDUAL_TOL:
                report.failures.append(_failure(seed, "bound_violation", f"n={level['n']}"))

    def finalize(self, report: ExperimentReport) -> None:
        if not report.rows:
            return
        ratios = [r["ratio"] for r in report.rows if r.get("ratio") is not None]
        report.summary.update(
            gap=report.rows[0]["gap"],
            finest_gap=report.rows[-1]["gap"],
            oracle_gap=report.rows[0]["oracle_gap"],
            min_ratio=min(ratios) if ratios else None,
            b=1.0,
        )


class LemmaSuiteExperiment(Experiment):
    """Layer-cake, key-lemma, psi-ladder and power-iterate inequalities per instance."""

    command = "lemmas"
    columns = ["seed", "check", "parameter", "min_residual", "trials", "passed"]

    def _layer_cake(self, rng: np.random.Generator, n: int) -> List[Dict[str, Any]]:
        trials = self.config.solver.layer_cake_trials
        worst = {r: math.inf for r in LAYER_CAKE_EXPONENTS}
        for trial in range(trials):
            r = LAYER_CAKE_EXPONENTS[trial % len(LAYER_CAKE_EXPONENTS)]
            omega = MeasureSpace(rng.uniform(0.05, 1.0, size=n))
            f = rng.standard_normal(n)
            check = layer_cake_check(omega, f, lambda t, r=r: np.power(t, r - 1.0))
            worst[r] = min(worst[r], check.residual / (1.0 + abs(check.lhs)))
        per_r = max(1, trials // len(LAYER_CAKE_EXPONENTS))
        return [
            {"check": "layer_cake", "parameter": r, "min_residual": worst[r], "trials": per_r, "tol": RESIDUAL_TOL}
            for r in LAYER_CAKE_EXPONENTS
            if trials
        ]

    def run_instance(self, seed: int) -> Dict[str, Any]:
        instance = self.instance(seed)
        config = self.config.with_seed(seed)
        kernel, space, g = instance.kernel, instance.space, instance.g
        b, provenance = resolve_b(instance, config, use_h=False)
        rng = np.random.default_rng(seed)
        checks = self._layer_cake(rng, space.n)

        key = key_lemma_check(kernel, space, b, lambda t: np.power(t, 2.0))
        checks.append({
            "check": "key_lemma",
            "parameter": 2.0,
            "min_residual": float(np.min(key.residual / (1.0 + np.abs(key.lhs)))),
            "trials": space.n,
            "tol": RESIDUAL_TOL,
        })

        depth = config.solver.lemma_depth
        psi = iter_psi_check(kernel, space, g, b, depth, config.solver.grid_size)
        scale = 1.0 + np.abs(np.vstack(psi.trace.levels))
        with np.errstate(invalid="ignore"):
            relative = psi.residuals / scale
        finite = relative[~np.isnan(relative)]
        checks.append({
            "check": "iter_psi",
            "parameter": depth,
            "min_residual": float(finite.min()) if finite.size else math.nan,
            "trials": int((~psi.skipped).sum()),
            "tol": PSI_LADDER_TOL,
        })

        for r in POWER_ITERATE_EXPONENTS:
            check = power_iterate_inequality_check(kernel, space, r, b)
            with np.errstate(invalid="ignore"):
                relative = check.residual / (1.0 + np.abs(check.lhs))
            finite = relative[np.isfinite(relative)]
            checks.append({
                "check": "power_iterate",
                "parameter": r,
                "min_residual": float(finite.min()) if finite.size else math.nan,
                "trials": int(finite.size),
                "tol": RESIDUAL_TOL,
            })

        if g.is_power and float(g.q) > 0:  # type: ignore[arg-type]
            checks.append(self._iterated_power(kernel, space, b, float(g.q), depth))  # type: ignore[arg-type]

        for check in checks:
            value = check["min_residual"]
            check["passed"] = bool(math.isnan(value) or value >= -check["tol"])
            check["seed"] = seed
        return {"b": b, "provenance": provenance, "checks": checks}

    @staticmethod
    def _iterated_power(kernel: Kernel, space: MeasureSpace, b: float, q: float, depth: int) -> Dict[str, Any]:
        trace = iterate_f(kernel, space, lambda t: np.power(t, q), depth, label=f"t^{q:g}")
        f0 = trace.levels[0]
        worst = math.inf
        for k, level in enumerate(trace.levels):
            for i in range(space.n):
                if not (math.isfinite(f0[i]) and math.isfinite(level[i])):
                    continue
                bound = iterated_power_bound(float(f0[i]), b, q, k).value
                worst = min(worst, (level[i] - bound) / (1.0 + abs(level[i])))
        return {
            "check": "iterated_power",
            "parameter": q,
            "min_residual": worst if math.isfinite(worst) else math.nan,
            "trials": (depth + 1) * space.n,
            "tol": RESIDUAL_TOL,
        }

    def merge(self, report: ExperimentReport, seed: int, outcome: Dict[str, Any]) -> None:
        for check in outcome["checks"]:
            report.rows.append(check)
            if not check["passed"]:
                report.failures.append(
                    _failure(seed, check["check"], f"parameter={check['parameter']} residual={check['min_residual']:.3e}")
                )
        report.summary.setdefault("b", []).append(outcome["b"])

    def finalize(self, report: ExperimentReport) -> None:
        worst: Dict[str, float] = {}
        for row in report.rows:
            value = row["min_residual"]
            if not math.isnan(value):
                worst[row["check"]] = min(worst.get(row["check"], math.inf), value)
        report.summary.update(
            instances=len(report.instances),
            checks=len(report.rows),
            failed_checks=sum(1 for r in report.rows if not r["passed"]),
            worst_residuals=worst,
        )


class SolveExperiment(Experiment):
    """Picard solutions only; no estimates."""

    command = "solve"
    columns = ["seed", "point", "x", "u", "status", "residual"]

    def validate(self) -> None:
        _check_nonlinearity_and_h(self.config)

    def run_instance(self, seed: int) -> Dict[str, Any]:
        instance = self.instance(seed)
        result = _solve(instance, self.config.with_seed(seed))
        rows = result.to_rows(instance.space)
        for row in rows:
            row["seed"] = seed
        return {"rows": rows, "result": result.to_dict()}

    def merge(self, report: ExperimentReport, seed: int, outcome: Dict[str, Any]) -> None:
        report.rows.extend(outcome["rows"])
        result = outcome["result"]
        report.summary.setdefault("per_instance", []).append({
            "seed": seed,
            "method": result["method"],
            "iterations": result["iterations"],
            "residual": result["residual"],
            "counts": result["counts"],
        })

    def finalize(self, report: ExperimentReport) -> None:
        counts: Dict[str, int] = {}
        for entry in report.summary.get("per_instance", []):
            for status, count in entry["counts"].items():
                counts[status] = counts.get(status, 0) + count
        report.summary.update(instances=len(report.instances), points=len(report.rows), statuses=counts)


def cmd_certify(config: RunConfig, settings: Optional[LabSettings] = None) -> ExperimentReport:
    return CertifyExperiment(config, settings).run()


def cmd_verify_bounds(config: RunConfig, settings: Optional[LabSettings] = None) -> ExperimentReport:
    """Solve, evaluate the configured estimate and report margins; exit 2 on any violation."""
    return VerifyBoundsExperiment(config, settings).run()


def cmd_sharpness(config: RunConfig, settings: Optional[LabSettings] = None) -> ExperimentReport:
    return SharpnessExperiment(config, settings).run()


def cmd_lemma_suite(config: RunConfig, settings: Optional[LabSettings] = None) -> ExperimentReport:
    return LemmaSuiteExperiment(config, settings).run()


def cmd_solve(config: RunConfig, settings: Optional[LabSettings] = None) -> ExperimentReport:
    return SolveExperiment(config, settings).run()


def cmd_kernel_export(config: RunConfig, out_dir: Path) -> ExperimentReport:
    """Write the instance document of every seed to ``out_dir/kernel_<seed>.json``."""
    report = ExperimentReport(command="kernel-export", config=config.model_dump(mode="json"), columns=["seed", "path", "n", "kernel"])
    started = time.perf_counter()
    for i in range(config.instances):
        seeded = config.with_seed(config.seed + i)
        instance = build_instance(seeded)
        path = write_json(Path(out_dir) / f"kernel_{seeded.seed}.json", kernel_to_document(instance.kernel, instance.space))
        report.rows.append({"seed": seeded.seed, "path": str(path), "n": instance.space.n, "kernel": instance.kernel.name})
    report.summary = {"instances": config.instances, "files": [r["path"] for r in report.rows]}
    report.timings = {"total": time.perf_counter() - started}
    return report


COMMANDS: Dict[str, Callable[..., ExperimentReport]] = {
    "certify": cmd_certify,
    "verify-bounds": cmd_verify_bounds,
    "sharpness": cmd_sharpness,
    "lemmas": cmd_lemma_suite,
    "solve": cmd_solve,
}
