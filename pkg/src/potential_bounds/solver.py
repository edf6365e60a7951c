"""
Ground-truth solvers and inequality oracles.

Picard schemes produce the reference solutions the bounds are checked
against:

    increasing g:  u_{n+1} = G(g(u_n) sigma) + h      from u_0 = h (minimal solution)
    decreasing g:  u_{n+1} = h - G(g(u_n) sigma)      from u_0 = h (maximal solution)
    homogeneous:   u_{n+1} = G(u_n^q sigma)            from a positive seed

The oracles evaluate both sides of the layer-cake inequality, the key
lemma, the psi-ladder comparison and the power-iterate inequality.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from .bounds import InequalityCheck
from .core.exceptions import DomainError, MonotonicityError, ValidationError
from .core.log import get_logger
from .core.serialization import to_jsonable
from .measure_kernel import Kernel, MeasureSpace, extended_matvec
from .nonlinearity import Nonlinearity, psi_ladder

logger = get_logger(__name__)

Phi = Callable[[np.ndarray], np.ndarray]

DIVERGENCE_CEILING = 1e100
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
STALL_WINDOW = 100
MONOTONE_SLACK = 1e-12


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    OSCILLATING = "oscillating"
    NO_POSITIVE_SOLUTION = "no_positive_solution"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class IterationTrace:
    """f_0 .. f_K of f_{k+1} = G(phi(f_k)); NaN marks a domain exit of phi."""
    levels: List[np.ndarray]
    phi: str
    kernel: str
    domain_exit: np.ndarray
    diverged: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


@dataclass(frozen=True)
class SolveResult:
    u: np.ndarray
    iterations: int
    statuses: List[SolveStatus]
    residual: float
    defects: np.ndarray
    method: str
    tol: float
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> np.ndarray:
        return np.array([s is SolveStatus.CONVERGED for s in self.statuses], dtype=bool)

    def count(self, status: SolveStatus) -> int:
        return sum(1 for s in self.statuses if s is status)

    def to_rows(self, space: MeasureSpace) -> List[Dict[str, Any]]:
        rows = []
        for i in range(self.u.shape[0]):
            rows.append({
                "point": i,
                "x": None if space.coords is None else space.coords[i],
                "u": self.u[i],
                "status": self.statuses[i],
                "residual": self.defects[i],
            })
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "method": self.method,
            "iterations": self.iterations,
            "tol": self.tol,
            "residual": self.residual,
            "u": self.u,
            "statuses": self.statuses,
            "counts": {status.value: self.count(status) for status in SolveStatus},
            "extras": self.extras,
        })


def _measure_weights(space: MeasureSpace, sigma: Optional[Sequence[float]]) -> np.ndarray:
    if sigma is None:
        return np.asarray(space.weights)
    weights = np.asarray(sigma, dtype=float).reshape(-1)
    if weights.shape[0] != space.n:
        raise ValidationError("sigma length does not match the space")
    if not np.isfinite(weights).all() or (weights < 0).any():
        raise ValidationError("sigma must be finite and nonnegative")
    return weights


def _check_kernel(kernel: Kernel, space: MeasureSpace) -> None:
    if kernel.n != space.n:
        raise ValidationError(
            "Kernel and space dimensions do not agree",
            details={"kernel_n": kernel.n, "space_n": space.n},
        )


def shifted_phi(g: Nonlinearity) -> Phi:
    """phi(t) = g(t + 1) for increasing g, g(1 - t) for decreasing g (NaN for t > 1)."""
    if g.increasing:
        return lambda t: g(np.asarray(t, dtype=float) + 1.0)

    def phi(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = t <= 1.0
        values = np.full(t.shape, np.nan)
        values[inside] = g(1.0 - t[inside])
        return values

    return phi


def iterate_f(
    kernel: Kernel,
    space: MeasureSpace,
    phi: Phi,
    K: int,
    sigma: Optional[Sequence[float]] = None,
    label: str = "phi",
) -> IterationTrace:
    """
    f_0 = G1, f_{k+1} = G(phi(f_k)) for k < K, evaluated exactly.

    A NaN returned by phi marks a domain exit; it propagates only to points
    that see the exiting point through a nonzero kernel entry.
    """
    if K < 0:
        raise DomainError("iterate_f needs K >= 0")
    _check_kernel(kernel, space)
    weights = _measure_weights(space, sigma)
    levels = [extended_matvec(kernel.entries, weights.copy())]
    for _ in range(K):
        with np.errstate(invalid="ignore", over="ignore"):
            values = np.asarray(phi(levels[-1]), dtype=float)
        if (values < 0).any():
            raise ValidationError("phi must be nonnegative")
        levels.append(extended_matvec(kernel.entries, values * weights))
    stacked = np.vstack(levels)
    return IterationTrace(
        levels=levels,
        phi=label,
        kernel=kernel.name,
        domain_exit=np.isnan(stacked).any(axis=0),
        diverged=np.isinf(stacked).any(axis=0),
    )


def layer_cake_check(omega: MeasureSpace, f: Sequence[float], phi: Phi) -> InequalityCheck:
    """
    int_0^{omega(Omega)} phi(t) dt  <=  sum_y phi(omega{z : f(z) <= f(y)}) omega_y.

    Sublevel masses come from sorting f; the left side from adaptive quadrature.
    """
    values = np.asarray(f, dtype=float).reshape(-1)
    if values.shape[0] != omega.n:
        raise ValidationError("f length does not match the space")
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(omega.weights[order])
    positions = np.searchsorted(values[order], values, side="right") - 1
    sublevel = cumulative[positions]
    rhs = float(np.sum(np.asarray(phi(sublevel), dtype=float) * omega.weights))
    lhs, _ = quad(lambda t: float(np.asarray(phi(np.array([t])))[0]), 0.0, omega.total_mass, epsrel=1e-12, limit=200)
    return InequalityCheck(float(lhs), rhs, rhs - float(lhs))


def key_lemma_check(
    kernel: Kernel,
    space: MeasureSpace,
    b: float,
    phi: Phi,
    x: Optional[int] = None,
    sigma: Optional[Sequence[float]] = None,
) -> InequalityCheck:
    """int_0^{G1(x)} phi(t) dt  <=  G[phi(b G1)](x), at one point or at all points."""
    if b < 1.0:
        raise DomainError(f"The maximum-principle constant must satisfy b >= 1, got {b}")
    _check_kernel(kernel, space)
    weights = _measure_weights(space, sigma)
    g1 = extended_matvec(kernel.entries, weights.copy())
    rhs = extended_matvec(kernel.entries, np.asarray(phi(b * g1), dtype=float) * weights)
    points = range(space.n) if x is None else [x]
    lhs = np.array([
        quad(lambda t: float(np.asarray(phi(np.array([t])))[0]), 0.0, float(g1[i]), epsrel=1e-12, limit=200)[0]
        for i in points
    ])
    if x is not None:
        return InequalityCheck(float(lhs[0]), float(rhs[x]), float(rhs[x] - lhs[0]))
    return InequalityCheck(lhs, rhs, rhs - lhs)


@dataclass(frozen=True)
class PsiComparison:
    """Residuals f_k(x) - psi_k(f_0(x)) per level and point; NaN where skipped."""
    residuals: np.ndarray
    skipped: np.ndarray
    trace: IterationTrace

    @property
    def min_residual(self) -> float:
        finite = self.residuals[~np.isnan(self.residuals)]
        return float(finite.min()) if finite.size else math.nan


def iter_psi_check(
    kernel: Kernel,
    space: MeasureSpace,
    g: Nonlinearity,
    b: float,
    K: int,
    grid_size: int = 4096,
    sigma: Optional[Sequence[float]] = None,
) -> PsiComparison:
    """
    Compare f_k = G(phi(f_{k-1})) with the psi ladder evaluated at f_0.

    Points where f_0 leaves the ladder's valid range (decreasing g) are
    skipped and reported in ``skipped``.
    """
    trace = iterate_f(kernel, space, shifted_phi(g), K, sigma, label=f"shift({g.descriptor})")
    f0 = trace.levels[0]
    finite = np.isfinite(f0)
    t_max = float(f0[finite].max()) if finite.any() else 0.0
    residuals = np.full((K + 1, space.n), np.nan)
    if t_max <= 0.0:
        residuals[:, finite] = 0.0
        return PsiComparison(residuals, ~finite, trace)
    ladder = psi_ladder(g, b, K, t_max, grid_size)
    for k in range(K + 1):
        with np.errstate(invalid="ignore"):
            residuals[k] = trace.levels[k] - np.asarray(ladder(k, np.where(finite, f0, 0.0)))
        residuals[k, ~finite] = np.nan
    skipped = np.isnan(residuals).any(axis=0)
    if skipped.any():
        logger.debug("iter_psi_points_skipped", kernel=kernel.name, skipped=int(skipped.sum()))
    return PsiComparison(residuals, skipped, trace)


def _defect_status(
    u: np.ndarray, defects: np.ndarray, tol: float, finished: bool
) -> List[SolveStatus]:
    statuses = []
    for value, defect in zip(u, defects):
        if np.isinf(value) and value > 0:
            statuses.append(SolveStatus.DIVERGED)
        elif defect <= tol * (1.0 + abs(value)):
            statuses.append(SolveStatus.CONVERGED)
        else:
            statuses.append(SolveStatus.OSCILLATING)
    if not finished:
        logger.warning("picard_not_converged", oscillating=statuses.count(SolveStatus.OSCILLATING))
    return statuses


def _settled(defects: np.ndarray, u: np.ndarray, tol: float) -> np.ndarray:
    """Relative stopping test shared by the loop and the per-point status."""
    with np.errstate(invalid="ignore"):
        return defects <= tol * np.abs(u)


def _sup_defect(defects: np.ndarray, statuses: List[SolveStatus]) -> float:
    mask = np.array([s is SolveStatus.CONVERGED for s in statuses], dtype=bool)
    return float(defects[mask].max()) if mask.any() else math.nan


def picard_increasing(
    kernel: Kernel,
    space: MeasureSpace,
    g: Nonlinearity,
    h: Union[float, Sequence[float]] = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    sigma: Optional[Sequence[float]] = None,
    ceiling: float = DIVERGENCE_CEILING,
) -> SolveResult:
    """
    Minimal solution of u = G(g(u) sigma) + h by monotone iteration from h.

    Raises:
        MonotonicityError: If an iterate decreases anywhere
    """
    if not g.increasing:
        raise DomainError("picard_increasing needs an increasing nonlinearity")
    _check_kernel(kernel, space)
    weights = _measure_weights(space, sigma)
    base = np.broadcast_to(np.asarray(h, dtype=float), (space.n,)).copy()
    if not np.isfinite(base).all() or (base < 0).any():
        raise DomainError("h must be finite and nonnegative")
    if not g.is_power and (base < 1.0).any():
        raise DomainError("A general increasing nonlinearity needs h >= 1")

    def step(u: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return extended_matvec(kernel.entries, g(u) * weights) + base

    u = base.copy()
    finished = False
    iterations = 0
    defects = np.zeros(space.n)
    for iterations in range(1, max_iter + 1):
        new = step(u)
        new[new > ceiling] = np.inf
        with np.errstate(invalid="ignore"):
            decreased = new < u - MONOTONE_SLACK * (1.0 + np.abs(u))
            defects = np.where(np.isinf(new), 0.0, np.abs(new - u))
        if decreased.any():
            worst = int(np.argmax(decreased))
            raise MonotonicityError(
                "Picard iterate decreased",
                details={"point": worst, "previous": float(u[worst]), "next": float(new[worst])},
            )
        finite = np.isfinite(new)
        settled = np.array_equal(finite, np.isfinite(u))
        if settled and (defects[finite] <= tol * (1.0 + np.abs(u[finite]))).all():
            finished = True
            break
        u = new

    statuses = _defect_status(u, defects, tol, finished)
    result = SolveResult(
        u=u,
        iterations=iterations,
        statuses=statuses,
        residual=_sup_defect(defects, statuses),
        defects=defects,
        method="picard_increasing",
        tol=tol,
    )
    logger.debug(
        "picard_increasing_done",
        kernel=kernel.name,
        nonlinearity=g.descriptor,
        iterations=iterations,
        diverged=result.count(SolveStatus.DIVERGED),
    )
    return result


def picard_decreasing(
    kernel: Kernel,
    space: MeasureSpace,
    g: Nonlinearity,
    h: Union[float, Sequence[float]] = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    sigma: Optional[Sequence[float]] = None,
    theta: float = 1.0,
) -> SolveResult:
    """
    Maximal positive solution of u = h - G(g(u) sigma), iterating from h.

    The map is order-preserving for decreasing g, so the iterates are
    nonincreasing and every positive solution lies below all of them. A
    point whose iterate reaches a nonpositive value therefore has no
    positive solution; it is frozen at -inf and contributes g = +inf to the
    points it interacts with. The even and odd subsequences are tracked and
    the relaxation factor theta is halved whenever their gap stalls for 100
    iterations. A point converges when its fixed-point defect is within tol.
    """
    if g.increasing:
        raise DomainError("picard_decreasing needs a decreasing nonlinearity")
    if not 0.0 < theta <= 1.0:
        raise DomainError("Damping factor theta must lie in (0, 1]")
    _check_kernel(kernel, space)
    weights = _measure_weights(space, sigma)
    base = np.broadcast_to(np.asarray(h, dtype=float), (space.n,)).copy()
    if not np.isfinite(base).all() or (base <= 0).any():
        raise DomainError("h must be finite and strictly positive")

    def step(u: np.ndarray) -> np.ndarray:
        dead = ~(u > 0)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            values = np.where(dead, np.inf, g(np.where(dead, 1.0, u)))
        return base - extended_matvec(kernel.entries, values * weights)

    u = base.copy()
    even, odd = u.copy(), None
    best_gap, stalled, damping = np.inf, 0, theta
    finished = False
    iterations = 0
    defects = np.zeros(space.n)
    for iterations in range(1, max_iter + 1):
        target = step(u)
        new = np.where(np.isinf(target), target, (1.0 - damping) * u + damping * target)
        new[~(new > 0)] = -np.inf
        alive = np.isfinite(u) & np.isfinite(new)
        if (new[alive] > u[alive] + MONOTONE_SLACK * (1.0 + np.abs(u[alive]))).any():
            raise MonotonicityError("Decreasing Picard iterate increased")
        if iterations % 2 == 0:
            even = new.copy()
        else:
            odd = new.copy()
        with np.errstate(invalid="ignore"):
            defects = np.where(alive, np.abs(target - u), 0.0)
        if odd is not None:
            both = np.isfinite(even) & np.isfinite(odd)
            gap = float(np.max(np.abs(even[both] - odd[both]), initial=0.0))
            scale = 1.0 + np.abs(u[alive])
            newly_dead = np.isfinite(u) & ~np.isfinite(new)
            if (defects[alive] <= tol * scale).all() and not newly_dead.any():
                finished = True
                break
            if gap < best_gap * (1.0 - 1e-3):
                best_gap, stalled = gap, 0
            else:
                stalled += 1
                if stalled >= STALL_WINDOW and damping > 2.0 ** -10:
                    damping /= 2.0
                    stalled = 0
                    logger.debug("picard_decreasing_damped", theta=damping, gap=gap)
        u = new

    statuses = []
    for i, value in enumerate(u):
        if not value > 0:
            statuses.append(SolveStatus.NO_POSITIVE_SOLUTION)
        elif defects[i] <= tol * (1.0 + abs(value)):
            statuses.append(SolveStatus.CONVERGED)
        else:
            statuses.append(SolveStatus.OSCILLATING)
    if not finished:
        logger.warning("picard_not_converged", method="picard_decreasing", iterations=iterations)
    defects = np.where(np.isfinite(u), defects, np.nan)
    result = SolveResult(
        u=u,
        iterations=iterations,
        statuses=statuses,
        residual=_sup_defect(defects, statuses),
        defects=defects,
        method="picard_decreasing",
        tol=tol,
        extras={"theta": damping},
    )
    logger.debug(
        "picard_decreasing_done",
        kernel=kernel.name,
        nonlinearity=g.descriptor,
        iterations=iterations,
        no_positive=result.count(SolveStatus.NO_POSITIVE_SOLUTION),
    )
    return result


def homogeneous_picard(
    kernel: Kernel,
    space: MeasureSpace,
    q: float,
    seed: Optional[Sequence[float]] = None,
    tol: float = 1e-13,
    max_iter: int = DEFAULT_MAX_ITER,
    sigma: Optional[Sequence[float]] = None,
) -> SolveResult:
    """
    Positive fixed point of u = G(u^q sigma), 0 < q < 1, from a positive seed.

    Points with G1 = 0 are degenerate (the iteration sends them to 0).
    Convergence is measured relative to |u|.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"homogeneous_picard needs 0 < q < 1, got {q}")
    _check_kernel(kernel, space)
    weights = _measure_weights(space, sigma)
    g1 = extended_matvec(kernel.entries, weights.copy())
    degenerate = ~(g1 > 0)
    u = np.ones(space.n) if seed is None else np.asarray(seed, dtype=float).copy()
    if u.shape[0] != space.n or not (np.isfinite(u) & (u > 0)).all():
        raise DomainError("The seed must be finite and strictly positive")

    finished = False
    iterations = 0
    defects = np.zeros(space.n)
    for iterations in range(1, max_iter + 1):
        new = extended_matvec(kernel.entries, np.power(u, q) * weights)
        with np.errstate(invalid="ignore"):
            defects = np.abs(new - u)
        u = new
        if _settled(defects, u, tol)[~degenerate].all():
            finished = True
            break

    statuses = []
    settled = _settled(defects, u, tol)
    for i in range(space.n):
        if degenerate[i]:
            statuses.append(SolveStatus.DEGENERATE)
        elif np.isinf(u[i]):
            statuses.append(SolveStatus.DIVERGED)
        elif settled[i]:
            statuses.append(SolveStatus.CONVERGED)
        else:
            statuses.append(SolveStatus.OSCILLATING)
    if degenerate.all():
        logger.warning("homogeneous_picard_degenerate", kernel=kernel.name)
    elif not finished:
        logger.warning("picard_not_converged", method="homogeneous_picard", iterations=iterations)
    return SolveResult(
        u=u,
        iterations=iterations,
        statuses=statuses,
        residual=_sup_defect(defects, statuses),
        defects=defects,
        method="homogeneous_picard",
        tol=tol,
    )
