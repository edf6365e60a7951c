"""
Closed-form pointwise bounds and their necessary conditions.

Every scalar bound returns a ``PointBound``: the value, the status of the
necessary condition and an optional flag. Conditions are strict inequalities;
a value within 1e-12 of its threshold is classified as violated and flagged
"boundary". A violated condition reports +inf for lower bounds (no finite
super-solution exists there) and 0 for upper bounds (no positive
sub-solution exists there).
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core.exceptions import DomainError, NecessaryConditionError
from .core.log import get_logger
from .core.serialization import to_jsonable
from .measure_kernel import Kernel, MeasureSpace, apply
from .nonlinearity import (
    F_decreasing,
    F_inverse,
    Nonlinearity,
    iteration_constant_log,
)

logger = get_logger(__name__)

BOUNDARY_TOL = 1e-12
MARGIN_TOL = 1e-9
_LOG_MAX = math.log(np.finfo(float).max)


class ConditionStatus(str, Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    NOT_APPLICABLE = "not_applicable"


class BoundSide(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


class BoundForm(str, Enum):
    """Which estimate produced a report."""
    LOWER_GENERAL = "lower_general"
    LOWER_POWER = "lower_power"
    UPPER_GENERAL = "upper_general"
    UPPER_POWER_NEGATIVE = "upper_power_negative"
    WITH_H = "with_h"
    HOMOGENEOUS_SUBLINEAR = "homogeneous_sublinear"
    LINEAR_EXPONENTIAL = "linear_exponential"


class IterateDirection(str, Enum):
    """Orientation of [G1]^r against r b^(r-1) G[(G1)^(r-1)]."""
    AT_MOST = "at_most"  # r >= 1
    AT_LEAST = "at_least"  # 0 < r <= 1


class PointBound(NamedTuple):
    value: float
    condition: ConditionStatus
    flag: Optional[str] = None


class InequalityCheck(NamedTuple):
    """Both sides of a pointwise inequality and the oriented residual (>= 0 when it holds)."""
    lhs: Any
    rhs: Any
    residual: Any


def _check_inputs(pot: float, b: float) -> None:
    if math.isnan(pot) or pot < 0:
        raise DomainError(f"Potential values must be nonnegative, got {pot}")
    if math.isnan(b) or b < 1.0:
        raise DomainError(f"The maximum-principle constant must satisfy b >= 1, got {b}")


def _strictly_below(value: float, threshold: float) -> Tuple[ConditionStatus, Optional[str]]:
    tolerance = BOUNDARY_TOL * max(1.0, abs(threshold))
    if value < threshold - tolerance:
        return ConditionStatus.HOLDS, None
    if abs(value - threshold) <= tolerance:
        return ConditionStatus.VIOLATED, "boundary"
    return ConditionStatus.VIOLATED, None


def _power_lift(s: float, q: float) -> float:
    """(1 + (1 - q) s)^(1 / (1 - q)) - 1 (and e^s - 1 at q = 1), without cancellation."""
    with np.errstate(over="ignore"):
        if q == 1.0:
            return float(np.expm1(s))
        return float(np.expm1(np.log1p((1.0 - q) * s) / (1.0 - q)))


def lower_bound_general(pot: float, b: float, g: Nonlinearity) -> PointBound:
    """u >= 1 + b (F^{-1}(pot / b) - 1), provided pot / b < F(inf)."""
    if not g.increasing:
        raise DomainError("lower_bound_general needs an increasing nonlinearity")
    _check_inputs(pot, b)
    limit = g.f_limit
    if math.isinf(pot):
        if math.isfinite(limit) or (g.is_power and float(g.q) >= 1.0):  # type: ignore[arg-type]
            return PointBound(math.inf, ConditionStatus.VIOLATED, "infinite_potential")
        return PointBound(math.inf, ConditionStatus.NOT_APPLICABLE, "infinite_potential")
    if math.isinf(limit):
        condition, flag = ConditionStatus.NOT_APPLICABLE, None
    else:
        condition, flag = _strictly_below(pot / b, limit)
        if condition is ConditionStatus.VIOLATED:
            return PointBound(math.inf, condition, flag)
    try:
        value = 1.0 + b * (F_inverse(g, pot / b) - 1.0)
    except NecessaryConditionError:
        return PointBound(math.inf, ConditionStatus.VIOLATED, "boundary")
    return PointBound(value, condition, flag)


def lower_bound_power(pot: float, b: float, q: float) -> PointBound:
    """u >= 1 + b [(1 + (1 - q) pot / b)^(1 / (1 - q)) - 1]; q = 1 gives 1 + b (e^(pot / b) - 1)."""
    if not q > 0:
        raise DomainError(f"lower_bound_power needs q > 0, got {q}")
    _check_inputs(pot, b)
    if math.isinf(pot):
        status = ConditionStatus.VIOLATED if q >= 1.0 else ConditionStatus.NOT_APPLICABLE
        return PointBound(math.inf, status, "infinite_potential")
    s = pot / b
    condition, flag = ConditionStatus.NOT_APPLICABLE, None
    if q > 1.0:
        condition, flag = _strictly_below(s, 1.0 / (q - 1.0))
        if condition is ConditionStatus.VIOLATED:
            return PointBound(math.inf, condition, flag)
    return PointBound(1.0 + b * _power_lift(s, q), condition, flag)


def upper_bound_general(pot: float, b: float, g: Nonlinearity) -> PointBound:
    """u <= 1 - b [1 - F^{-1}(pot / b)], provided pot / b < F(1 - 1 / b)."""
    if g.increasing:
        raise DomainError("upper_bound_general needs a decreasing nonlinearity")
    _check_inputs(pot, b)
    if math.isinf(pot):
        return PointBound(0.0, ConditionStatus.VIOLATED, "infinite_potential")
    condition, flag = _strictly_below(pot / b, F_decreasing(g, 1.0 - 1.0 / b))
    if condition is ConditionStatus.VIOLATED:
        return PointBound(0.0, condition, flag or "no_positive_solution")
    value = 1.0 - b * (1.0 - F_inverse(g, pot / b))
    return PointBound(max(value, 0.0), condition, flag)


def upper_bound_power_negative(pot: float, b: float, q: float) -> PointBound:
    """u <= 1 - b [1 - (1 - (1 - q) pot / b)^(1 / (1 - q))] for q < 0."""
    if not q < 0:
        raise DomainError(f"upper_bound_power_negative needs q < 0, got {q}")
    _check_inputs(pot, b)
    if math.isinf(pot):
        return PointBound(0.0, ConditionStatus.VIOLATED, "infinite_potential")
    threshold = (b / (1.0 - q)) * (1.0 - (1.0 - 1.0 / b) ** (1.0 - q))
    condition, flag = _strictly_below(pot, threshold)
    if condition is ConditionStatus.VIOLATED:
        return PointBound(0.0, condition, flag or "no_positive_solution")
    base = 1.0 - (1.0 - q) * pot / b
    value = 1.0 - b * (1.0 - base ** (1.0 / (1.0 - q)))
    return PointBound(max(value, 0.0), condition, flag)


def bounds_with_h(pot_hq: float, h_at_x: float, b: float, q: float) -> PointBound:
    """
    The h-scaled estimates: h(x) times the h = 1 bound at pot = G(h^q sigma)(x) / h(x).

    q > 0 gives a lower bound, q < 0 an upper bound.
    """
    if not (math.isfinite(h_at_x) and h_at_x > 0):
        raise DomainError(f"h(x) must be finite and positive, got {h_at_x}")
    if q == 0:
        raise DomainError("bounds_with_h needs q != 0")
    scaled = pot_hq / h_at_x
    point = lower_bound_power(scaled, b, q) if q > 0 else upper_bound_power_negative(scaled, b, q)
    return PointBound(h_at_x * point.value, point.condition, point.flag)


def linear_exponential_bound(pot_h: float, h_at_x: float, b: float) -> PointBound:
    """u >= h(x) exp(G(h sigma)(x) / (b h(x))), a weaker consequence of the q = 1 estimate."""
    if not (math.isfinite(h_at_x) and h_at_x > 0):
        raise DomainError(f"h(x) must be finite and positive, got {h_at_x}")
    _check_inputs(pot_h, b)
    with np.errstate(over="ignore"):
        value = h_at_x * float(np.exp(pot_h / (b * h_at_x)))
    return PointBound(value, ConditionStatus.NOT_APPLICABLE, None)


def homogeneous_sublinear_bound(pot: float, b: float, q: float) -> PointBound:
    """u >= (1 - q)^(1 / (1 - q)) b^(-q / (1 - q)) pot^(1 / (1 - q)) for 0 < q < 1."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"homogeneous_sublinear_bound needs 0 < q < 1, got {q}")
    _check_inputs(pot, b)
    if pot == 0.0:
        return PointBound(0.0, ConditionStatus.NOT_APPLICABLE)
    if math.isinf(pot):
        return PointBound(math.inf, ConditionStatus.NOT_APPLICABLE, "infinite_potential")
    p = 1.0 / (1.0 - q)
    log_value = p * math.log1p(-q) - q * p * math.log(b) + p * math.log(pot)
    if log_value > _LOG_MAX:
        return PointBound(math.inf, ConditionStatus.NOT_APPLICABLE)
    return PointBound(math.exp(log_value), ConditionStatus.NOT_APPLICABLE)


def iterated_power_bound(f0_at_x: float, b: float, q: float, k: int) -> PointBound:
    """
    Lower bound f0^(1 + q + ... + q^k) / (c(q, k) b^(q + ... + q^k)) on f_k(x).

    When the quotient cannot be represented the trivial lower bound 0 is
    returned with flag "overflow".
    """
    if not q > 0:
        raise DomainError(f"iterated_power_bound needs q > 0, got {q}")
    _check_inputs(f0_at_x, b)
    if k == 0:
        return PointBound(f0_at_x, ConditionStatus.NOT_APPLICABLE)
    if f0_at_x == 0.0:
        return PointBound(0.0, ConditionStatus.NOT_APPLICABLE)
    exponent = float(k + 1) if q == 1.0 else (q ** (k + 1) - 1.0) / (q - 1.0)
    log_c = math.lgamma(k + 2) if q == 1.0 else iteration_constant_log(q, k)
    log_value = exponent * math.log(f0_at_x) - log_c - (exponent - 1.0) * math.log(b)
    if not math.isfinite(log_value) or log_value > _LOG_MAX:
        logger.warning("iterated_power_bound_overflow", q=q, k=k, f0=f0_at_x)
        return PointBound(0.0, ConditionStatus.NOT_APPLICABLE, "overflow")
    return PointBound(math.exp(log_value), ConditionStatus.NOT_APPLICABLE)


def power_iterate_inequality_check(
    kernel: Kernel,
    space: MeasureSpace,
    r: float,
    b: float,
    direction: Optional[IterateDirection] = None,
) -> InequalityCheck:
    """
    [G1]^r against r b^(r-1) G[(G1)^(r-1)] at every point.

    The residual is RHS - LHS for r >= 1 and LHS - RHS for r <= 1, so it is
    nonnegative wherever the inequality holds. ``direction`` defaults to the
    one r determines; at r = 1 both are accepted.
    """
    if not r > 0:
        raise DomainError(f"power_iterate_inequality_check needs r > 0, got {r}")
    if direction is not None:
        direction = IterateDirection(direction)
        if (direction is IterateDirection.AT_MOST and r < 1.0) or (
            direction is IterateDirection.AT_LEAST and r > 1.0
        ):
            raise DomainError(
                f"The inequality {direction.value} only holds on the other side of r = 1, got r = {r}"
            )
    if b < 1.0:
        raise DomainError(f"The maximum-principle constant must satisfy b >= 1, got {b}")
    g1 = apply(kernel, space, np.ones(space.n))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lhs = np.power(g1, r)
        rhs = r * b ** (r - 1.0) * apply(kernel, space, np.power(g1, r - 1.0))
        residual = rhs - lhs if r >= 1.0 else lhs - rhs
    return InequalityCheck(lhs, rhs, residual)


@dataclass(frozen=True)
class BoundReport:
    """Per-point bound values with condition statuses and optional margins."""
    theorem: BoundForm
    side: BoundSide
    nonlinearity: str
    b: float
    pots: np.ndarray
    values: np.ndarray
    conditions: List[ConditionStatus]
    flags: List[Optional[str]]
    h: Optional[np.ndarray] = None
    reference: Optional[np.ndarray] = None
    margins: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def with_reference(self, u: Sequence[float], converged: Optional[Sequence[bool]] = None) -> "BoundReport":
        """
        Attach a reference solution. Margins are u - bound for lower bounds and
        bound - u for upper bounds; points outside ``converged`` get NaN.
        """
        reference = np.asarray(u, dtype=float)
        mask = np.ones(self.n, dtype=bool) if converged is None else np.asarray(converged, dtype=bool)
        with np.errstate(invalid="ignore"):
            raw = reference - self.values if self.side is BoundSide.LOWER else self.values - reference
        margins = np.where(mask, raw, np.nan)
        return replace(self, reference=reference, margins=margins)

    def violation_mask(self, tol: float = MARGIN_TOL) -> np.ndarray:
        if self.margins is None or self.reference is None:
            return np.zeros(self.n, dtype=bool)
        scale = 1.0 + np.abs(self.reference)
        with np.errstate(invalid="ignore"):
            return ~np.isnan(self.margins) & (self.margins < -tol * scale)

    @property
    def violation_count(self) -> int:
        return int(self.violation_mask().sum())

    @property
    def min_margin(self) -> float:
        if self.margins is None or np.isnan(self.margins).all():
            return math.nan
        return float(np.nanmin(self.margins))

    def condition_count(self, status: ConditionStatus) -> int:
        return sum(1 for c in self.conditions if c is status)

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for i in range(self.n):
            rows.append({
                "point": i,
                "pot": self.pots[i],
                "u": None if self.reference is None else self.reference[i],
                "bound": self.values[i],
                "condition": self.conditions[i],
                "margin": None if self.margins is None else self.margins[i],
                "flag": self.flags[i] or "",
            })
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "theorem": self.theorem,
            "side": self.side,
            "nonlinearity": self.nonlinearity,
            "b": self.b,
            "summary": {
                "min_margin": self.min_margin,
                "violations": self.violation_count,
                "conditions_violated": self.condition_count(ConditionStatus.VIOLATED),
            },
            "points": self.to_rows(),
        })


def _select_form(g: Nonlinearity, h: Optional[np.ndarray], homogeneous: bool) -> BoundForm:
    if homogeneous:
        return BoundForm.HOMOGENEOUS_SUBLINEAR
    if h is not None:
        return BoundForm.WITH_H
    if g.increasing:
        return BoundForm.LOWER_POWER if g.is_power else BoundForm.LOWER_GENERAL
    return BoundForm.UPPER_POWER_NEGATIVE if g.is_power else BoundForm.UPPER_GENERAL


def evaluate_bounds(
    pots: Sequence[float],
    b: float,
    g: Nonlinearity,
    h: Optional[Sequence[float]] = None,
    homogeneous: bool = False,
    form: Optional[BoundForm] = None,
) -> BoundReport:
    """
    Evaluate one estimate at every point.

    Args:
        pots: G1(x) per point, or G(h^q sigma)(x) (G(h sigma)(x) for the
            linear-exponential form) when ``h`` is given
        b: Maximum-principle constant
        g: Nonlinearity
        h: Inhomogeneity; selects the h-scaled estimates
        homogeneous: Use the estimate for u >= G(u^q sigma), 0 < q < 1
        form: Explicit estimate, overriding the automatic choice
    """
    potentials = np.asarray(pots, dtype=float)
    weight = None if h is None else np.asarray(h, dtype=float)
    chosen = BoundForm(form) if form is not None else _select_form(g, weight, homogeneous)
    needs_power = chosen in (
        BoundForm.LOWER_POWER,
        BoundForm.UPPER_POWER_NEGATIVE,
        BoundForm.WITH_H,
        BoundForm.HOMOGENEOUS_SUBLINEAR,
    )
    if needs_power and not g.is_power:
        raise DomainError(f"The {chosen.value} estimate needs a power nonlinearity")
    if chosen in (BoundForm.WITH_H, BoundForm.LINEAR_EXPONENTIAL) and weight is None:
        raise DomainError(f"The {chosen.value} estimate needs h")
    q = float(g.q) if g.is_power else math.nan  # type: ignore[arg-type]

    points: List[PointBound] = []
    for i, pot in enumerate(potentials):
        pot = float(pot)
        if chosen is BoundForm.LOWER_GENERAL:
            points.append(lower_bound_general(pot, b, g))
        elif chosen is BoundForm.LOWER_POWER:
            points.append(lower_bound_power(pot, b, q))
        elif chosen is BoundForm.UPPER_GENERAL:
            points.append(upper_bound_general(pot, b, g))
        elif chosen is BoundForm.UPPER_POWER_NEGATIVE:
            points.append(upper_bound_power_negative(pot, b, q))
        elif chosen is BoundForm.WITH_H:
            points.append(bounds_with_h(pot, float(weight[i]), b, q))  # type: ignore[index]
        elif chosen is BoundForm.LINEAR_EXPONENTIAL:
            points.append(linear_exponential_bound(pot, float(weight[i]), b))  # type: ignore[index]
        else:
            points.append(homogeneous_sublinear_bound(pot, b, q))

    side = BoundSide.LOWER
    if chosen in (BoundForm.UPPER_GENERAL, BoundForm.UPPER_POWER_NEGATIVE) or (
        chosen is BoundForm.WITH_H and q < 0
    ):
        side = BoundSide.UPPER

    report = BoundReport(
        theorem=chosen,
        side=side,
        nonlinearity=g.descriptor,
        b=float(b),
        pots=potentials,
        values=np.array([p.value for p in points], dtype=float),
        conditions=[p.condition for p in points],
        flags=[p.flag for p in points],
        h=weight,
    )
    logger.debug(
        "bounds_evaluated",
        theorem=chosen.value,
        n=report.n,
        violated_conditions=report.condition_count(ConditionStatus.VIOLATED),
    )
    return report
