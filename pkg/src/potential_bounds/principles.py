"""
Kernel-side hypotheses behind every bound.

* Weak maximum principle with constant b:
      Gf <= 1 on {f > 0}  ==>  Gf <= b everywhere.
  On a finite space this is a union of linear programs indexed by the
  support S of f; each is solved exactly for n <= 16.
* Weak domination principle: the same with 1 replaced by a weight h.
* Quasi-metric constant kappa of d = 1/K and the Ptolemy constant; a
  quasi-metric kernel satisfies the maximum principle with b = 2 kappa and
  its w-modification with b = 8 kappa^3.
"""

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .core.exceptions import DomainError, PrincipleViolationError, ValidationError
from .core.log import get_logger
from .core.serialization import to_jsonable
from .measure_kernel import (
    DiagonalPolicy,
    Kernel,
    Measure,
    MeasureSpace,
    apply,
    extended_matvec,
    modify_h,
)
from .simplex import LPStatus, maximize

logger = get_logger(__name__)

CERTIFY_SLACK = 1e-9
EXHAUSTIVE_LIMIT = 16


class WmpVerdict(str, Enum):
    CERTIFIED = "certified"
    SATISFIED_ON_TESTS = "satisfied_on_tests"
    VIOLATED = "violated"


class WmpStrategy(str, Enum):
    EXHAUSTIVE_LP = "exhaustive_lp"
    RANDOMIZED = "randomized"


class KernelTransform(str, Enum):
    PLAIN = "plain"
    W_MODIFIED = "w_modified"


@dataclass(frozen=True)
class WmpWitness:
    """f supported on S with Gf <= 1 on S and Gf(x) = value > b."""
    support: List[int]
    f: np.ndarray
    x: int
    value: float

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({"support": self.support, "f": self.f, "x": self.x, "value": self.value})


@dataclass(frozen=True)
class WmpReport:
    verdict: WmpVerdict
    b_tested: float
    b_lower_witness: float
    strategy: WmpStrategy
    witness: Optional[WmpWitness] = None
    supports_checked: int = 0
    kernel: str = ""

    @property
    def violated(self) -> bool:
        return self.verdict is WmpVerdict.VIOLATED

    def raise_if_violated(self) -> "WmpReport":
        """Hard failure for callers that cannot continue past a witness."""
        if self.violated:
            raise PrincipleViolationError(
                f"Maximum principle fails for {self.kernel} at b={self.b_tested:g}",
                details={"b_lower_witness": self.b_lower_witness, "witness": None if self.witness is None else self.witness.to_dict()},
            )
        return self

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "verdict": self.verdict,
            "b_tested": self.b_tested,
            "b_lower_witness": self.b_lower_witness,
            "strategy": self.strategy,
            "witness": self.witness,
            "supports_checked": self.supports_checked,
            "kernel": self.kernel,
        })


@dataclass(frozen=True)
class QuasiMetricReport:
    kappa: float
    ptolemy_constant: Optional[float]
    witness_triple: Optional[Tuple[int, int, int]]
    witness_quadruple: Optional[Tuple[int, int, int, int]]
    n: int
    vacuous: bool = False
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "kappa": self.kappa,
            "ptolemy_constant": self.ptolemy_constant,
            "witness_triple": self.witness_triple,
            "witness_quadruple": self.witness_quadruple,
            "n": self.n,
            "vacuous": self.vacuous,
            "flags": self.flags,
        })


def distance_matrix(kernel: Kernel) -> np.ndarray:
    """
    d = 1/K with 1/inf = 0 and 1/0 = inf. A zero diagonal entry is an excluded
    singularity and reads as d(x, x) = 0.
    """
    entries = kernel.entries
    with np.errstate(divide="ignore"):
        d = np.where(entries == 0.0, np.inf, 1.0 / np.where(entries == 0.0, 1.0, entries))
    d[np.isinf(entries)] = 0.0
    diagonal = np.diag_indices(kernel.n)
    d[diagonal] = np.where(entries[diagonal] == 0.0, 0.0, d[diagonal])
    return d


def _require_quasi_metric_path(kernel: Kernel) -> np.ndarray:
    if not kernel.symmetric:
        raise ValidationError("Quasi-metric constants need a symmetric kernel", details={"kernel": kernel.name})
    off = kernel.entries[~np.eye(kernel.n, dtype=bool)]
    if off.size and not ((off > 0) & np.isfinite(off)).all():
        raise ValidationError(
            "Quasi-metric constants need finite positive off-diagonal entries",
            details={"kernel": kernel.name},
        )
    return distance_matrix(kernel)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """numerator / denominator with 0/0 = 0 and finite/inf = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = numerator / denominator
    ratio[(numerator == 0.0) | np.isinf(denominator)] = 0.0
    return ratio


def _kappa(d: np.ndarray) -> Tuple[float, Tuple[int, int, int]]:
    n = d.shape[0]
    best, triple = -math.inf, (0, 0, 0)
    for z in range(n):
        ratio = _ratio(d, d[:, z][:, np.newaxis] + d[:, z][np.newaxis, :])
        flat = int(np.argmax(ratio))
        if ratio.flat[flat] > best:
            best = float(ratio.flat[flat])
            triple = (flat // n, flat % n, z)
    return best, triple


def _ptolemy(d: np.ndarray) -> Tuple[float, Tuple[int, int, int, int]]:
    n = d.shape[0]
    best, quadruple = 0.0, (0, 0, 0, 0)
    # the ratio is invariant under x <-> y and z <-> w
    for z in range(n):
        for w in range(z, n):
            numerator = d * d[z, w]
            denominator = np.outer(d[:, w], d[:, z]) + np.outer(d[:, z], d[:, w])
            ratio = _ratio(numerator, denominator)
            flat = int(np.argmax(ratio))
            if ratio.flat[flat] > best:
                best = float(ratio.flat[flat])
                quadruple = (flat // n, flat % n, z, w)
    return best, quadruple


def quasimetric_constant(kernel: Kernel, include_ptolemy: bool = True) -> QuasiMetricReport:
    """
    kappa = max over ordered triples (x, y, z) of d(x, y) / (d(x, z) + d(y, z)).

    Degenerate triples are included, so a positive stored diagonal is taken
    into account. With fewer than three points the constant is reported as
    1/2 and flagged vacuous.

    Raises:
        ValidationError: If the kernel is not symmetric with finite positive
            off-diagonal entries
    """
    d = _require_quasi_metric_path(kernel)
    n = kernel.n
    flags: List[str] = []
    if n < 3:
        logger.warning("quasimetric_constant_vacuous", kernel=kernel.name, n=n)
        return QuasiMetricReport(0.5, 0.0, None, None, n, vacuous=True, flags=["vacuous_triples", "vacuous_quadruples"])

    kappa, triple = _kappa(d)
    kappa = max(kappa, 0.5)
    ptolemy_value: Optional[float] = None
    quadruple: Optional[Tuple[int, int, int, int]] = None
    if include_ptolemy:
        if n < 4:
            flags.append("vacuous_quadruples")
            ptolemy_value = 0.0
        else:
            ptolemy_value, quadruple = _ptolemy(d)
    logger.debug("quasimetric_constant", kernel=kernel.name, n=n, kappa=kappa, ptolemy=ptolemy_value)
    return QuasiMetricReport(kappa, ptolemy_value, triple, quadruple, n, flags=flags)


def ptolemy_constant(kernel: Kernel) -> float:
    """max over quadruples of d(x,y) d(z,w) / (d(x,w) d(y,z) + d(x,z) d(y,w)); 0.0 when n < 4."""
    d = _require_quasi_metric_path(kernel)
    if kernel.n < 4:
        logger.warning("ptolemy_constant_vacuous", kernel=kernel.name, n=kernel.n)
        return 0.0
    return _ptolemy(d)[0]


def certified_b(
    report: Union[QuasiMetricReport, float],
    transformed: Union[KernelTransform, str] = KernelTransform.PLAIN,
) -> float:
    """b = 2 kappa for a quasi-metric kernel, 8 kappa^3 for its w-modification."""
    kappa = report.kappa if isinstance(report, QuasiMetricReport) else float(report)
    if KernelTransform(transformed) is KernelTransform.W_MODIFIED:
        return 8.0 * kappa ** 3
    return 2.0 * kappa


def mutual_energy(kernel: Kernel, mu: Union[Measure, Any], nu: Union[Measure, Any]) -> float:
    """E(mu, nu) = sum_ij mu_i K[i][j] nu_j under the inf * 0 = 0 convention."""
    left = mu if isinstance(mu, Measure) else Measure(np.asarray(mu, dtype=float))
    right = nu if isinstance(nu, Measure) else Measure(np.asarray(nu, dtype=float))
    if left.n != kernel.n or right.n != kernel.n:
        raise ValidationError("Measure and kernel dimensions do not agree")
    potential = extended_matvec(kernel.entries, right.values)
    with np.errstate(invalid="ignore"):
        products = left.values * potential
    products[left.values == 0.0] = 0.0
    return float(products.sum())


def _integration_matrix(kernel: Kernel, weights: np.ndarray) -> np.ndarray:
    """A[i, j] = K[i, j] w_j with inf * 0 = 0."""
    with np.errstate(invalid="ignore"):
        matrix = kernel.entries * weights[np.newaxis, :]
    matrix[:, weights == 0.0] = 0.0
    return matrix


def _finalize_witness(
    kernel: Kernel, space: MeasureSpace, support: List[int], f: np.ndarray, x: int
) -> WmpWitness:
    """Rescale f so that apply(K, f) <= 1 holds on the support exactly as computed."""
    values = f.copy()
    for _ in range(4):
        on_support = apply(kernel, space, values)[support].max()
        if on_support <= 1.0:
            break
        values = values / on_support
        values *= 1.0 - 4.0 * np.finfo(float).eps
    return WmpWitness(support=list(support), f=values, x=int(x), value=float(apply(kernel, space, values)[x]))


def _unbounded_witness(
    kernel: Kernel, space: MeasureSpace, support: List[int], column: int, x: int, b: float
) -> WmpWitness:
    f = np.zeros(space.n)
    coefficient = kernel.entries[x, column] * space.weights[column]
    f[column] = 1.0 if math.isinf(coefficient) else 2.0 * (b + 1.0) / coefficient
    return _finalize_witness(kernel, space, support, f, x)


def _exhaustive(kernel: Kernel, space: MeasureSpace, b: float) -> WmpReport:
    n = kernel.n
    A = _integration_matrix(kernel, space.weights)
    best, best_witness = 0.0, None
    unbounded: Optional[WmpWitness] = None
    checked = 0

    for size in range(1, n + 1):
        for support_tuple in itertools.combinations(range(n), size):
            support = list(support_tuple)
            if (space.weights[support] == 0.0).any():
                continue
            block = A[np.ix_(support, support)]
            if not np.isfinite(block).all():
                continue
            checked += 1
            zero_columns = ~(block > 0.0).any(axis=0)
            bounded = ~zero_columns
            outside = [x for x in range(n) if x not in support_tuple]
            for x in outside:
                c = A[x, support]
                if np.isinf(c).any() or (c[zero_columns] > 0.0).any():
                    if unbounded is None:
                        bad = np.isinf(c) | (zero_columns & (c > 0.0))
                        unbounded = _unbounded_witness(kernel, space, support, support[int(np.argmax(bad))], x, b)
                    continue
                result = maximize(c[bounded], block[:, bounded], np.ones(size))
                if result.status is LPStatus.UNBOUNDED:
                    continue
                if result.objective > best:
                    f = np.zeros(n)
                    f[np.asarray(support)[bounded]] = result.x
                    best = result.objective
                    best_witness = (support, f, x)

    if unbounded is not None:
        lower = math.inf
        witness: Optional[WmpWitness] = unbounded
    else:
        lower = max(1.0, best)
        witness = None
        if best > b + CERTIFY_SLACK and best_witness is not None:
            witness = _finalize_witness(kernel, space, *best_witness)

    verdict = WmpVerdict.VIOLATED if witness is not None else WmpVerdict.CERTIFIED
    return WmpReport(
        verdict=verdict,
        b_tested=b,
        b_lower_witness=lower,
        strategy=WmpStrategy.EXHAUSTIVE_LP,
        witness=witness,
        supports_checked=checked,
        kernel=kernel.name,
    )


def _randomized(kernel: Kernel, space: MeasureSpace, b: float, budget: int, seed: int) -> WmpReport:
    n = kernel.n
    rng = np.random.default_rng(seed)
    best, best_witness = 0.0, None
    trials = 0

    def supports():
        for i in range(n):
            yield [i]
        for _ in range(budget):
            size = int(rng.integers(1, n + 1))
            yield sorted(rng.choice(n, size=size, replace=False).tolist())

    for support in supports():
        trials += 1
        f = np.zeros(n)
        f[support] = rng.exponential(1.0, size=len(support)) if len(support) > 1 else 1.0
        potential = apply(kernel, space, f)
        scale = potential[support].max()
        mask = np.ones(n, dtype=bool)
        mask[support] = False
        if not mask.any():
            continue
        if scale <= 0.0:
            if (potential[mask] > 0.0).any():
                x = int(np.flatnonzero(mask)[np.argmax(potential[mask])])
                column = int(np.flatnonzero(f)[0])
                witness = _unbounded_witness(kernel, space, support, column, x, b)
                return WmpReport(WmpVerdict.VIOLATED, b, math.inf, WmpStrategy.RANDOMIZED, witness, trials, kernel.name)
            continue
        ratios = np.where(mask, potential / scale, -np.inf)
        x = int(np.argmax(ratios))
        if ratios[x] > best:
            best = float(ratios[x])
            best_witness = (support, f / scale, x)

    if best > b + CERTIFY_SLACK and best_witness is not None:
        witness = _finalize_witness(kernel, space, *best_witness)
        return WmpReport(WmpVerdict.VIOLATED, b, witness.value, WmpStrategy.RANDOMIZED, witness, trials, kernel.name)
    return WmpReport(
        WmpVerdict.SATISFIED_ON_TESTS, b, max(1.0, best), WmpStrategy.RANDOMIZED, None, trials, kernel.name
    )


def verify_wmp(
    kernel: Kernel,
    space: MeasureSpace,
    b: float,
    strategy: Union[WmpStrategy, str] = WmpStrategy.EXHAUSTIVE_LP,
    budget: int = 2000,
    seed: int = 0,
) -> WmpReport:
    """
    Check the weak maximum principle with constant b.

    Args:
        kernel: Kernel K
        space: Space supplying the weights of G
        b: Constant under test (>= 1)
        strategy: EXHAUSTIVE_LP (n <= 16; falls back to RANDOMIZED above) or RANDOMIZED
        budget: Number of random supports for the randomized search
        seed: Seed of the randomized search

    Returns:
        WmpReport; ``certified`` only from the exhaustive strategy
    """
    if math.isnan(b) or b < 1.0:
        raise DomainError(f"The maximum-principle constant must satisfy b >= 1, got {b}")
    if kernel.n != space.n:
        raise ValidationError("Kernel and space dimensions do not agree")
    chosen = WmpStrategy(strategy)
    if chosen is WmpStrategy.EXHAUSTIVE_LP and kernel.n > EXHAUSTIVE_LIMIT:
        logger.warning("wmp_exhaustive_too_large", kernel=kernel.name, n=kernel.n, limit=EXHAUSTIVE_LIMIT)
        chosen = WmpStrategy.RANDOMIZED
    if kernel.n == 1:
        return WmpReport(WmpVerdict.CERTIFIED, b, 1.0, WmpStrategy.EXHAUSTIVE_LP, None, 1, kernel.name)

    if chosen is WmpStrategy.EXHAUSTIVE_LP:
        report = _exhaustive(kernel, space, b)
    else:
        report = _randomized(kernel, space, b, budget, seed)
    logger.debug(
        "wmp_checked",
        kernel=kernel.name,
        n=kernel.n,
        b=b,
        verdict=report.verdict.value,
        b_lower_witness=report.b_lower_witness,
    )
    return report


def minimal_wmp_constant(kernel: Kernel, space: MeasureSpace) -> float:
    """The smallest b for which the exhaustive check certifies (n <= 16)."""
    if kernel.n > EXHAUSTIVE_LIMIT:
        raise DomainError(f"Exhaustive enumeration is limited to n <= {EXHAUSTIVE_LIMIT}")
    return verify_wmp(kernel, space, 1.0, WmpStrategy.EXHAUSTIVE_LP).b_lower_witness


def _positive_weight(h: Any, n: int) -> np.ndarray:
    weight = np.asarray(h, dtype=float).reshape(-1)
    if weight.shape[0] != n:
        raise ValidationError("h length does not match the kernel")
    if not (np.isfinite(weight) & (weight > 0)).all():
        raise ValidationError("h must be finite and strictly positive")
    return weight


def verify_domination(
    kernel: Kernel,
    space: MeasureSpace,
    h: Any,
    b: float,
    strategy: Union[WmpStrategy, str] = WmpStrategy.EXHAUSTIVE_LP,
    budget: int = 2000,
    seed: int = 0,
) -> WmpReport:
    """
    Weak domination principle: Gf <= h on {f > 0} ==> Gf <= b h.

    Dividing by h turns it into the maximum principle for
    K~[i][j] = K[i][j] w_j / h_i with unit weights.
    """
    weight = _positive_weight(h, kernel.n)
    entries = _integration_matrix(kernel, space.weights) / weight[:, np.newaxis]
    normalized = Kernel(entries, symmetric=False, name=f"{kernel.name}/h", diagonal_policy=kernel.diagonal_policy)
    unit = MeasureSpace(np.ones(kernel.n), space.coords)
    return verify_wmp(normalized, unit, b, strategy, budget, seed)


def verify_modified_wmp(
    kernel: Kernel,
    h: Any,
    b: float,
    strategy: Union[WmpStrategy, str] = WmpStrategy.EXHAUSTIVE_LP,
    budget: int = 2000,
    seed: int = 0,
) -> WmpReport:
    """Maximum principle of K^h = K / (h(x) h(y)) acting on measures (unit weights)."""
    weight = _positive_weight(h, kernel.n)
    modified = modify_h(kernel, weight)
    return verify_wmp(modified, MeasureSpace(np.ones(kernel.n)), b, strategy, budget, seed)


def needs_finite_diagonal(kernel: Kernel) -> bool:
    """True when a zero diagonal stands for an excluded singularity."""
    return kernel.diagonal_policy is DiagonalPolicy.EXCLUDE
