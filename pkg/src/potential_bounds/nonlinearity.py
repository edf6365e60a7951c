"""
The nonlinearity g and the scalar objects derived from it.

For an increasing g on [1, inf):
    F(t) = int_1^t ds / g(s),   a = F(inf),   psi(t) = g(t / b + 1)
For a decreasing g on (0, 1]:
    F(t) = int_t^1 ds / g(s),                 psi(t) = g(1 - t / b)

The psi ladder psi_0(t) = t, psi_{k+1}(t) = int_0^t psi(psi_k(s)) ds increases
to psi_inf, which solves psi_inf' = psi(psi_inf), psi_inf(0) = 0 and has the
closed form b (F^{-1}(t / b) - 1) (increasing) or b (1 - F^{-1}(t / b))
(decreasing).
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, solve_ivp
from scipy.optimize import brentq
from scipy.special import logsumexp

from .core.exceptions import (
    ConvergenceError,
    DomainError,
    NecessaryConditionError,
    ValidationError,
)
from .core.log import get_logger
from .core.serialization import decode_float_array, to_jsonable

logger = get_logger(__name__)

Scalar = Union[float, np.ndarray]

QUAD_EPSREL = 1e-10
LIMIT_INCREMENT_TOL = 1e-12
LIMIT_HORIZON = 1e12
INVERSE_XTOL = 1e-12
PSI_PATH_RTOL = 1e-8
DEFAULT_GRID_SIZE = 4096


class NonlinearityKind(str, Enum):
    POWER_INCREASING = "power_increasing"
    POWER_DECREASING = "power_decreasing"
    GENERAL_INCREASING = "general_increasing"
    GENERAL_DECREASING = "general_decreasing"

    @property
    def increasing(self) -> bool:
        return self in (NonlinearityKind.POWER_INCREASING, NonlinearityKind.GENERAL_INCREASING)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """
    Monotone nonlinearity g normalized by g(1) >= 1.

    Power kinds carry ``q``; general kinds carry either a monotone tabulation
    (``table_t``, ``table_g``; linear interpolation between nodes, log-log
    extrapolation past the end nodes) or a vectorized callable.
    """
    kind: NonlinearityKind
    q: Optional[float] = None
    table_t: Optional[np.ndarray] = None
    table_g: Optional[np.ndarray] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        kind = NonlinearityKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is NonlinearityKind.POWER_INCREASING:
            if self.q is None or not self.q > 0:
                raise ValidationError("Increasing power nonlinearity needs q > 0", details={"q": self.q})
        elif kind is NonlinearityKind.POWER_DECREASING:
            if self.q is None or not self.q < 0:
                raise ValidationError("Decreasing power nonlinearity needs q < 0", details={"q": self.q})
        elif self.func is None:
            self._validate_table()
        else:
            self._validate_callable()

    def _validate_table(self) -> None:
        if self.table_t is None or self.table_g is None:
            raise ValidationError("General nonlinearity needs a tabulation or a callable")
        t = np.array(self.table_t, dtype=float).reshape(-1)
        g = np.array(self.table_g, dtype=float).reshape(-1)
        if t.shape != g.shape or t.size < 2:
            raise ValidationError("Tabulation needs matching t and g arrays with at least two nodes")
        if not (np.isfinite(t).all() and np.isfinite(g).all()) or (g <= 0).any():
            raise ValidationError("Tabulated g must be finite and positive")
        if not (np.diff(t) > 0).all():
            raise ValidationError("Tabulation nodes must be strictly increasing")
        step = np.diff(g)
        if self.kind.increasing:
            if t[0] > 1.0:
                raise ValidationError("Increasing tabulation must cover t = 1")
            if (step < 0).any():
                raise ValidationError("Tabulated g is not nondecreasing")
        else:
            if t[0] < 0.0 or t[-1] < 1.0:
                raise ValidationError("Decreasing tabulation must lie in [0, 1] and cover t = 1")
            if (step > 0).any():
                raise ValidationError("Tabulated g is not nonincreasing")
        t.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "table_t", t)
        object.__setattr__(self, "table_g", g)
        self._check_normalization()

    def _validate_callable(self) -> None:
        if self.kind.increasing:
            samples = np.geomspace(1.0, 1e6, 257)
        else:
            samples = np.geomspace(1e-6, 1.0, 257)
        values = self(samples)
        if not (np.isfinite(values).all() and (values > 0).all()):
            raise ValidationError("Callable g must be finite and positive on its domain")
        step = np.diff(values)
        scale = 1e-12 * np.maximum(1.0, np.abs(values[:-1]))
        if self.kind.increasing and (step < -scale).any():
            raise ValidationError("Callable g is not nondecreasing on sampled points")
        if not self.kind.increasing and (step > scale).any():
            raise ValidationError("Callable g is not nonincreasing on sampled points")
        self._check_normalization()

    def _check_normalization(self) -> None:
        g1 = float(self(np.array([1.0]))[0])
        if g1 < 1.0:
            raise ValidationError("Nonlinearity must satisfy g(1) >= 1", details={"g(1)": g1})

    @property
    def increasing(self) -> bool:
        return self.kind.increasing

    @property
    def is_power(self) -> bool:
        return self.kind in (NonlinearityKind.POWER_INCREASING, NonlinearityKind.POWER_DECREASING)

    @property
    def descriptor(self) -> str:
        if self.is_power:
            return f"power(q={self.q:g})"
        return self.label or self.kind.value

    @cached_property
    def f_limit(self) -> float:
        """F(inf) for increasing kinds, F(0) for decreasing kinds."""
        if self.increasing:
            return _increasing_limit(self)
        return F_decreasing(self, 0.0)

    def __call__(self, s: Scalar) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.is_power:
            with np.errstate(divide="ignore"):
                return np.power(s, self.q)
        if self.func is not None:
            values = np.asarray(self.func(s), dtype=float)
            if values.shape != s.shape:
                values = np.vectorize(lambda v: float(self.func(v)))(s)  # type: ignore[misc]
            return values
        return self._interpolate(s)

    def _interpolate(self, points: np.ndarray) -> np.ndarray:
        t, g = self.table_t, self.table_g
        s = np.atleast_1d(points)
        values = np.interp(s, t, g)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.increasing:
                slope = math.log(g[-1] / g[-2]) / math.log(t[-1] / t[-2])
                tail = s > t[-1]
                values[tail] = g[-1] * np.power(s[tail] / t[-1], slope)
            elif t[0] > 0.0:
                slope = math.log(g[1] / g[0]) / math.log(t[1] / t[0])
                head = s < t[0]
                values[head] = g[0] * np.power(s[head] / t[0], slope)
        return values.reshape(points.shape)

    @classmethod
    def power(cls, q: float) -> "Nonlinearity":
        if q > 0:
            return cls(NonlinearityKind.POWER_INCREASING, q=float(q))
        if q < 0:
            return cls(NonlinearityKind.POWER_DECREASING, q=float(q))
        raise ValidationError("Power exponent q = 0 is neither increasing nor decreasing")

    @classmethod
    def tabulated(
        cls, t: Any, g: Any, increasing: bool = True, label: str = ""
    ) -> "Nonlinearity":
        kind = NonlinearityKind.GENERAL_INCREASING if increasing else NonlinearityKind.GENERAL_DECREASING
        return cls(kind, table_t=np.asarray(t, dtype=float), table_g=np.asarray(g, dtype=float), label=label)

    @classmethod
    def from_callable(
        cls, func: Callable[[np.ndarray], np.ndarray], increasing: bool = True, label: str = "callable"
    ) -> "Nonlinearity":
        kind = NonlinearityKind.GENERAL_INCREASING if increasing else NonlinearityKind.GENERAL_DECREASING
        return cls(kind, func=func, label=label)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Nonlinearity":
        kind = str(data.get("kind", "")).lower()
        try:
            if kind in ("power", "power_increasing", "power_decreasing"):
                return cls.power(float(data["q"]))
            if kind in ("general_increasing", "general_decreasing"):
                return cls.tabulated(
                    decode_float_array(data["t"]),
                    decode_float_array(data["g"]),
                    increasing=kind == "general_increasing",
                    label=str(data.get("label", "")),
                )
        except KeyError as e:
            raise ValidationError(f"Nonlinearity document is missing {e}") from e
        raise ValidationError(f"Unknown nonlinearity kind: {data.get('kind')!r}")

    def to_dict(self) -> Dict[str, Any]:
        if self.is_power:
            return {"kind": "power", "q": self.q}
        if self.func is not None:
            return {"kind": self.kind.value, "label": self.label}
        return to_jsonable({"kind": self.kind.value, "t": self.table_t, "g": self.table_g, "label": self.label})


def _require(g: Nonlinearity, increasing: bool, operation: str) -> None:
    if g.increasing != increasing:
        expected = "an increasing" if increasing else "a decreasing"
        raise DomainError(f"{operation} needs {expected} nonlinearity, got {g.kind.value}")


def _log_integral(g: Nonlinearity, lo: float, hi: float) -> float:
    """int_lo^hi ds / g(s) for 1 <= lo <= hi, integrated in y = log s."""
    if hi <= lo:
        return 0.0
    value, _ = quad(
        lambda y: math.exp(y) / float(g(np.array([math.exp(y)]))[0]),
        math.log(lo),
        math.log(hi),
        epsrel=QUAD_EPSREL,
        epsabs=0.0,
        limit=200,
    )
    return float(value)


def F_increasing(g: Nonlinearity, t: float) -> float:
    """F(t) = int_1^t ds / g(s) for t >= 1."""
    _require(g, True, "F_increasing")
    if math.isnan(t) or t < 1.0:
        raise DomainError(f"F_increasing is defined for t >= 1, got {t}")
    if math.isinf(t):
        return g.f_limit
    if g.is_power:
        q = float(g.q)  # type: ignore[arg-type]
        if q == 1.0:
            return math.log(t)
        return math.expm1((1.0 - q) * math.log(t)) / (1.0 - q)
    return _log_integral(g, 1.0, t)


def F_increasing_limit(g: Nonlinearity) -> float:
    """a = F(inf) in (0, inf]."""
    _require(g, True, "F_increasing_limit")
    return g.f_limit


def _increasing_limit(g: Nonlinearity) -> float:
    if g.is_power:
        q = float(g.q)  # type: ignore[arg-type]
        return math.inf if q <= 1.0 else 1.0 / (q - 1.0)
    total, horizon = 0.0, 1.0
    while True:
        increment = _log_integral(g, horizon, 2.0 * horizon)
        total += increment
        horizon *= 2.0
        if increment < LIMIT_INCREMENT_TOL:
            logger.debug("f_limit_converged", nonlinearity=g.descriptor, horizon=horizon, value=total)
            return total
        if horizon >= LIMIT_HORIZON:
            logger.debug("f_limit_diverged", nonlinearity=g.descriptor, horizon=horizon)
            return math.inf


def F_decreasing(g: Nonlinearity, t: float) -> float:
    """F(t) = int_t^1 ds / g(s) for 0 <= t <= 1."""
    _require(g, False, "F_decreasing")
    if math.isnan(t) or not 0.0 <= t <= 1.0:
        raise DomainError(f"F_decreasing is defined on [0, 1], got {t}")
    if g.is_power:
        q = float(g.q)  # type: ignore[arg-type]
        return (1.0 - t ** (1.0 - q)) / (1.0 - q)
    value, _ = quad(
        lambda s: 1.0 / float(g(np.array([s]))[0]), t, 1.0, epsrel=QUAD_EPSREL, epsabs=0.0, limit=200
    )
    return float(value)


def F_inverse(g: Nonlinearity, tau: float) -> float:
    """
    The unique t with F(t) = tau.

    Raises:
        DomainError: If tau < 0
        NecessaryConditionError: If tau >= F(inf) (increasing) or tau > F(0)
            (decreasing)
    """
    if math.isnan(tau) or tau < 0.0:
        raise DomainError(f"F_inverse needs tau >= 0, got {tau}")
    limit = g.f_limit
    if g.increasing:
        if tau >= limit:
            raise NecessaryConditionError(
                "tau lies at or beyond F(inf)",
                details={"tau": tau, "limit": limit, "nonlinearity": g.descriptor},
            )
        if tau == 0.0:
            return 1.0
        if g.is_power:
            q = float(g.q)  # type: ignore[arg-type]
            if q == 1.0:
                return math.exp(tau)
            return math.exp(math.log1p((1.0 - q) * tau) / (1.0 - q))
        hi = 2.0
        while F_increasing(g, hi) < tau:
            hi *= 2.0
        return float(brentq(lambda t: F_increasing(g, t) - tau, 1.0, hi, xtol=INVERSE_XTOL, rtol=1e-15))

    if tau > limit:
        raise NecessaryConditionError(
            "tau lies beyond F(0)",
            details={"tau": tau, "limit": limit, "nonlinearity": g.descriptor},
        )
    if tau == 0.0:
        return 1.0
    if g.is_power:
        q = float(g.q)  # type: ignore[arg-type]
        base = 1.0 - (1.0 - q) * tau
        return 0.0 if base <= 0.0 else base ** (1.0 / (1.0 - q))
    if tau == limit:
        return 0.0
    return float(brentq(lambda t: F_decreasing(g, t) - tau, 0.0, 1.0, xtol=INVERSE_XTOL, rtol=1e-15))


def psi(g: Nonlinearity, b: float, t: Scalar) -> Scalar:
    """psi(t) = g(t / b + 1) (increasing) or g(1 - t / b) (decreasing, t <= b)."""
    if b < 1.0:
        raise DomainError(f"The maximum-principle constant must satisfy b >= 1, got {b}")
    values = np.asarray(t, dtype=float)
    if np.isnan(values).any() or (values < 0).any():
        raise DomainError("psi is defined for t >= 0")
    if g.increasing:
        result = g(values / b + 1.0)
    else:
        if (values > b).any():
            raise DomainError(f"psi of a decreasing nonlinearity needs t <= b = {b}")
        result = g(np.maximum(1.0 - values / b, 0.0))
    return float(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class PsiLadder:
    """
    Tabulated psi_0 .. psi_K on a uniform grid of [0, t_max].

    Entries past ``valid_t_max[k]`` are NaN: a decreasing nonlinearity leaves
    its domain there and the level is truncated.
    """
    b: float
    grid: np.ndarray
    levels: List[np.ndarray]
    valid_t_max: List[float]
    nonlinearity: str

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def __call__(self, k: int, t: Scalar) -> Scalar:
        level = self.levels[k]
        valid = ~np.isnan(level)
        values = np.interp(t, self.grid[valid], level[valid])
        beyond = np.asarray(t) > self.valid_t_max[k]
        values = np.where(beyond, np.nan, values)
        return float(values) if np.ndim(values) == 0 else values

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "b": self.b,
            "nonlinearity": self.nonlinearity,
            "grid": self.grid,
            "levels": self.levels,
            "valid_t_max": self.valid_t_max,
        })


def psi_ladder(
    g: Nonlinearity,
    b: float,
    K: int,
    t_max: float,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> PsiLadder:
    """
    Build psi_0 .. psi_K by cumulative trapezoid quadrature.

    Args:
        g: Nonlinearity
        b: Maximum-principle constant (>= 1)
        K: Number of levels above psi_0
        t_max: Right end of the tabulation grid
        grid_size: Number of uniform grid nodes
    """
    if K < 0:
        raise DomainError("The ladder depth K must be nonnegative")
    if not t_max > 0 or grid_size < 2:
        raise DomainError("psi_ladder needs t_max > 0 and at least two grid nodes")
    grid = np.linspace(0.0, t_max, grid_size)
    levels = [grid.copy()]
    valid_t_max = [float(t_max)]

    for k in range(K):
        current = levels[k]
        integrand = np.full(grid_size, np.nan)
        usable = ~np.isnan(current)
        if not g.increasing:
            usable &= current <= b
        integrand[usable] = np.asarray(psi(g, b, current[usable]), dtype=float)
        finite = np.isfinite(integrand)
        prefix = grid_size if finite.all() else int(np.argmin(finite))

        nxt = np.full(grid_size, np.nan)
        if prefix >= 1:
            nxt[:prefix] = cumulative_trapezoid(integrand[:prefix], grid[:prefix], initial=0.0)
            nxt[:prefix] = np.maximum(nxt[:prefix], current[:prefix])
        levels.append(nxt)
        valid_t_max.append(float(grid[prefix - 1]) if prefix >= 1 else 0.0)
        if prefix < grid_size:
            logger.debug("psi_ladder_truncated", level=k + 1, valid_t_max=valid_t_max[-1])

    return PsiLadder(
        b=float(b), grid=grid, levels=levels, valid_t_max=valid_t_max, nonlinearity=g.descriptor
    )


def _closed_form_psi_inf(g: Nonlinearity, b: float, t: float) -> float:
    if g.increasing:
        return b * (F_inverse(g, t / b) - 1.0)
    return b * (1.0 - F_inverse(g, t / b))


def psi_infinity_paths(g: Nonlinearity, b: float, t: Scalar) -> Tuple[np.ndarray, np.ndarray]:
    """
    psi_inf at the given points computed by the closed form and by integrating
    psi_inf' = psi(psi_inf), psi_inf(0) = 0 with an eighth-order Runge-Kutta
    scheme.

    Returns:
        (closed_form, ode) arrays of the same shape as ``t``
    """
    points = np.atleast_1d(np.asarray(t, dtype=float))
    if np.isnan(points).any() or (points < 0).any():
        raise DomainError("psi_infinity is defined for t >= 0")
    closed = np.array([_closed_form_psi_inf(g, b, float(s)) for s in points])

    ode = np.zeros_like(points)
    horizon = float(points.max())
    if horizon > 0.0:
        order = np.argsort(points)

        def rhs(_s: float, y: np.ndarray) -> List[float]:
            value = max(float(y[0]), 0.0)
            if not g.increasing:
                value = min(value, b)
            return [float(np.asarray(psi(g, b, value)))]

        solution = solve_ivp(
            rhs,
            (0.0, horizon),
            [0.0],
            method="DOP853",
            t_eval=points[order],
            rtol=1e-12,
            atol=1e-14,
        )
        if not solution.success:
            raise ConvergenceError(
                f"psi_inf integration failed: {solution.message}",
                details={"nonlinearity": g.descriptor, "b": b},
            )
        ode[order] = solution.y[0]
    return closed.reshape(np.shape(t)), ode.reshape(np.shape(t))


def psi_infinity(g: Nonlinearity, b: float, t: Scalar) -> Scalar:
    """
    psi_inf(t), cross-checked between its closed form and the ODE.

    Raises:
        NecessaryConditionError: If t / b lies outside F^{-1}'s domain
        ConvergenceError: If the two computations disagree beyond 1e-8 relative
    """
    closed, ode = psi_infinity_paths(g, b, t)
    gap = np.abs(closed - ode)
    allowed = PSI_PATH_RTOL * np.maximum(np.abs(closed), np.abs(ode))
    if (gap > allowed).any():
        worst = int(np.argmax(np.atleast_1d(gap - allowed)))
        raise ConvergenceError(
            "psi_inf closed form and ODE integration disagree",
            details={
                "nonlinearity": g.descriptor,
                "b": b,
                "closed_form": float(np.atleast_1d(closed)[worst]),
                "ode": float(np.atleast_1d(ode)[worst]),
            },
        )
    return float(closed) if np.ndim(closed) == 0 else closed


def iteration_constant_log(q: float, k: int) -> float:
    """log c(q, k) with c(q, k) = prod_{j=1}^k (1 + q + ... + q^j)^(q^(k-j))."""
    if not q > 0:
        raise DomainError(f"iteration constant needs q > 0, got {q}")
    if k < 0:
        raise DomainError("iteration constant needs k >= 0")
    log_q = math.log(q)
    total = 0.0
    with np.errstate(over="ignore"):
        for j in range(1, k + 1):
            log_sum = float(logsumexp(np.arange(j + 1) * log_q))
            total += float(np.exp((k - j) * log_q)) * log_sum
    return total


class IterationConstant(NamedTuple):
    """c(q, k) and an optional flag ("overflow" when the value is not representable)."""
    value: float
    flag: Optional[str] = None

    @property
    def overflow(self) -> bool:
        return self.flag == "overflow"


def iteration_constant_c(q: float, k: int) -> IterationConstant:
    """c(q, k); (k + 1)! for q = 1. Overflow gives +inf with flag "overflow"."""
    if q == 1.0:
        if k < 0:
            raise DomainError("iteration constant needs k >= 0")
        try:
            return IterationConstant(float(math.factorial(k + 1)))
        except OverflowError:
            logger.warning("iteration_constant_overflow", q=q, k=k)
            return IterationConstant(math.inf, "overflow")
    log_c = iteration_constant_log(q, k)
    if log_c > math.log(np.finfo(float).max):
        logger.warning("iteration_constant_overflow", q=q, k=k, log_c=log_c)
        return IterationConstant(math.inf, "overflow")
    return IterationConstant(math.exp(log_c))
