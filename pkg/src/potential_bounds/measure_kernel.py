"""
Finite measure spaces, measures and the kernel calculus.

A kernel G(x, dy) on a finite space is a dense nonnegative matrix K over the
extended reals [0, +inf] together with the weights of the ambient measure:

    (Gf)_i = sum_j K[i, j] * f_j * w_j        (apply: integrates against weights)
    (G nu)_i = sum_j K[i, j] * nu_j           (potential: the charge carries its own mass)

Extended arithmetic follows one contract everywhere: inf * 0 = 0,
inf + finite = inf, and nothing here ever produces -inf.
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from .core.exceptions import DomainError, ValidationError
from .core.log import get_logger
from .core.serialization import decode_float_array, to_jsonable

logger = get_logger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]
Profile = Callable[[np.ndarray], np.ndarray]


class DiagonalPolicy(str, Enum):
    """How a singular kernel's self-interaction enters discrete sums."""
    EXCLUDE = "exclude"
    CAP = "cap"
    CELL_AVERAGE = "cell_average"


class Point(NamedTuple):
    id: int
    coords: Optional[np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _as_vector(values: ArrayLike, name: str, length: Optional[int] = None) -> np.ndarray:
    vector = np.array(values, dtype=float).reshape(-1)
    if length is not None and vector.shape[0] != length:
        raise ValidationError(
            f"{name} has length {vector.shape[0]}, expected {length}",
            details={"name": name, "length": int(vector.shape[0]), "expected": length},
        )
    if np.isnan(vector).any():
        raise ValidationError(f"{name} contains NaN entries")
    return vector


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """Finite point set with optional coordinates and nonnegative point masses."""
    weights: np.ndarray
    coords: Optional[np.ndarray] = None

    def __post_init__(self):
        weights = _as_vector(self.weights, "weights")
        if weights.size == 0:
            raise ValidationError("A measure space needs at least one point")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValidationError("Weights must be finite and nonnegative")
        if not (weights > 0).any():
            raise ValidationError("At least one weight must be positive")
        object.__setattr__(self, "weights", _frozen(weights))

        if self.coords is not None:
            coords = np.array(self.coords, dtype=float)
            if coords.ndim == 1:
                coords = coords.reshape(-1, 1)
            if coords.ndim != 2 or coords.shape[0] != weights.shape[0] or coords.shape[1] < 1:
                raise ValidationError(
                    "Coordinates must be an n x d array with uniform dimension d >= 1",
                    details={"shape": list(coords.shape), "n": int(weights.shape[0])},
                )
            if not np.isfinite(coords).all():
                raise ValidationError("Coordinates must be finite")
            object.__setattr__(self, "coords", _frozen(coords))

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> Optional[int]:
        return None if self.coords is None else int(self.coords.shape[1])

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    @property
    def points(self) -> List[Point]:
        return [
            Point(i, None if self.coords is None else self.coords[i])
            for i in range(self.n)
        ]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def as_measure(self) -> "Measure":
        """The ambient measure sigma as a charge on the same points."""
        return Measure(self.weights.copy())

    def with_weights(self, weights: ArrayLike) -> "MeasureSpace":
        return MeasureSpace(_as_vector(weights, "weights", self.n), self.coords)

    def restrict(self, indices: Sequence[int]) -> "MeasureSpace":
        idx = np.asarray(indices, dtype=int)
        coords = None if self.coords is None else self.coords[idx]
        return MeasureSpace(self.weights[idx].copy(), coords)

    @classmethod
    def uniform_grid(
        cls,
        n: int,
        start: float = 0.0,
        stop: float = 1.0,
        weighting: str = "trapezoid",
    ) -> "MeasureSpace":
        """
        Uniform 1-D grid on [start, stop].

        Args:
            n: Number of nodes (>= 1)
            start: Left endpoint
            stop: Right endpoint (> start when n > 1)
            weighting: "trapezoid" (half weights at the ends) or "uniform"
                (every node carries one grid step)
        """
        if n < 1:
            raise ValidationError("Grid needs at least one node")
        if n == 1:
            return cls(np.array([max(stop - start, 1.0)]), np.array([[start]]))
        if stop <= start:
            raise ValidationError("Grid requires stop > start")
        coords = np.linspace(start, stop, n)
        step = (stop - start) / (n - 1)
        weights = np.full(n, step)
        if weighting == "trapezoid":
            weights[0] = weights[-1] = step / 2.0
        elif weighting != "uniform":
            raise ValidationError(f"Unknown grid weighting: {weighting}")
        return cls(weights, coords.reshape(-1, 1))

    @classmethod
    def random_cloud(
        cls,
        n: int,
        dim: int,
        rng: np.random.Generator,
        total_mass: float = 1.0,
        jitter_weights: bool = False,
    ) -> "MeasureSpace":
        """Seeded point cloud in the unit cube with equal (or jittered) masses."""
        if n < 1 or dim < 1:
            raise ValidationError("Point cloud needs n >= 1 and dim >= 1")
        coords = rng.uniform(0.0, 1.0, size=(n, dim))
        if jitter_weights:
            weights = rng.uniform(0.5, 1.5, size=n)
            weights *= total_mass / weights.sum()
        else:
            weights = np.full(n, total_mass / n)
        return cls(weights, coords)


@dataclass(frozen=True, eq=False)
class Measure:
    """Nonnegative charge on the points of a measure space."""
    values: np.ndarray

    def __post_init__(self):
        values = _as_vector(self.values, "measure")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValidationError("Measure entries must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def dirac(cls, n: int, point: int, mass: float = 1.0) -> "Measure":
        values = np.zeros(n)
        values[point] = mass
        return cls(values)


@dataclass(frozen=True, eq=False)
class Kernel:
    """
    Dense kernel matrix over [0, +inf].

    ``quasi_metric`` declares the kernel usable on the quasi-metric path:
    symmetric with finite positive off-diagonal entries, so that d = 1/K is
    finite and positive off the diagonal. ``diagonal_policy`` records how a
    singular diagonal was discretized (None when the diagonal is plain data).
    """
    entries: np.ndarray
    symmetric: bool = False
    name: str = "custom"
    quasi_metric: bool = False
    diagonal_policy: Optional[DiagonalPolicy] = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] == 0:
            raise ValidationError(
                "Kernel entries must form a nonempty square matrix",
                details={"shape": list(entries.shape)},
            )
        if np.isnan(entries).any():
            raise ValidationError("Kernel entries contain NaN", details={"kernel": self.name})
        if (entries < 0).any():
            raise ValidationError("Kernel entries must be nonnegative", details={"kernel": self.name})
        if self.symmetric and not np.array_equal(entries, entries.T):
            raise ValidationError(
                "Kernel declared symmetric but entries[i][j] != entries[j][i]",
                details={"kernel": self.name},
            )
        if self.quasi_metric:
            if not self.symmetric:
                raise ValidationError("A quasi-metric kernel must be symmetric")
            off = entries[~np.eye(entries.shape[0], dtype=bool)]
            if off.size and not ((off > 0) & np.isfinite(off)).all():
                raise ValidationError(
                    "A quasi-metric kernel needs finite positive off-diagonal entries",
                    details={"kernel": self.name},
                )
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @cached_property
    def finite(self) -> bool:
        return bool(np.isfinite(self.entries).all())

    def restrict(self, indices: Sequence[int]) -> "Kernel":
        idx = np.asarray(indices, dtype=int)
        return Kernel(
            self.entries[np.ix_(idx, idx)].copy(),
            symmetric=self.symmetric,
            name=self.name,
            quasi_metric=self.quasi_metric,
            diagonal_policy=self.diagonal_policy,
        )

    def scaled(self, factor: float) -> "Kernel":
        if factor <= 0 or not np.isfinite(factor):
            raise ValidationError("Kernel scale factor must be finite and positive")
        return Kernel(
            self.entries * factor,
            symmetric=self.symmetric,
            name=f"{factor:g}*{self.name}",
            quasi_metric=self.quasi_metric,
            diagonal_policy=self.diagonal_policy,
        )

    @classmethod
    def zeros(cls, n: int) -> "Kernel":
        return cls(np.zeros((n, n)), symmetric=True, name="zero")

    @classmethod
    def identity(cls, n: int) -> "Kernel":
        return cls(np.eye(n), symmetric=True, name="identity")

    @classmethod
    def from_distance(cls, distance: np.ndarray, name: str = "reciprocal-distance") -> "Kernel":
        """K = 1/d with 1/0 = +inf, so a zero diagonal becomes an infinite one."""
        d = np.array(distance, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError("Distance matrix must be square")
        if np.isnan(d).any() or (d < 0).any():
            raise ValidationError("Distances must be nonnegative")
        with np.errstate(divide="ignore"):
            entries = np.where(d == 0.0, np.inf, 1.0 / np.where(d == 0.0, 1.0, d))
        symmetric = bool(np.array_equal(entries, entries.T))
        off = entries[~np.eye(d.shape[0], dtype=bool)]
        quasi = symmetric and bool(((off > 0) & np.isfinite(off)).all())
        return cls(entries, symmetric=symmetric, name=name, quasi_metric=quasi)


def extended_matvec(entries: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Row sums of entries[i, j] * vector[j] with inf * 0 = 0."""
    if np.isfinite(entries).all() and np.isfinite(vector).all():
        return entries @ vector
    with np.errstate(invalid="ignore", over="ignore"):
        products = entries * vector[np.newaxis, :]
    products[(entries == 0.0) | (vector == 0.0)[np.newaxis, :]] = 0.0
    return products.sum(axis=1)


def _check_dimensions(kernel: Kernel, length: int, what: str) -> None:
    if kernel.n != length:
        raise ValidationError(
            f"Dimension mismatch: kernel is {kernel.n}x{kernel.n}, {what} has length {length}",
            details={"kernel_n": kernel.n, "length": length},
        )


def apply(kernel: Kernel, space: MeasureSpace, f: ArrayLike) -> np.ndarray:
    """(Gf)_i = sum_j K[i][j] f_j w_j for a nonnegative f (entries may be +inf)."""
    values = np.array(f, dtype=float).reshape(-1)
    _check_dimensions(kernel, values.shape[0], "f")
    _check_dimensions(kernel, space.n, "space")
    if np.isnan(values).any() or (values < 0).any():
        raise ValidationError("apply is defined on nonnegative functions only")
    return extended_matvec(kernel.entries, values * space.weights)


def potential(kernel: Kernel, nu: Union[Measure, ArrayLike]) -> np.ndarray:
    """(G nu)_i = sum_j K[i][j] nu_j."""
    measure = nu if isinstance(nu, Measure) else Measure(np.asarray(nu, dtype=float))
    _check_dimensions(kernel, measure.n, "measure")
    return extended_matvec(kernel.entries, measure.values)


def pairwise_distances(space: MeasureSpace) -> np.ndarray:
    if space.coords is None:
        raise ValidationError("This kernel family needs point coordinates")
    return cdist(space.coords, space.coords)


def _require_distinct(distances: np.ndarray) -> None:
    off = distances[~np.eye(distances.shape[0], dtype=bool)]
    if off.size and (off == 0.0).any():
        raise ValidationError("Coincident points: pairwise distance zero off the diagonal")


def riesz_cell_average_diagonal(space: MeasureSpace, alpha: float, dim: int) -> np.ndarray:
    """
    Cell averages of |x - y|^(alpha - dim) over a ball of radius rho around each
    point, rho being half the nearest-neighbour distance:
    mean = (dim / alpha) * rho^(alpha - dim).
    """
    distances = pairwise_distances(space)
    if space.n == 1:
        rho = 0.5
    else:
        masked = distances + np.diag(np.full(space.n, np.inf))
        rho = masked.min(axis=1) / 2.0
    return (dim / alpha) * np.power(rho, alpha - dim) * np.ones(space.n)


def riesz_kernel(
    space: MeasureSpace,
    alpha: float,
    dim: int,
    diagonal: DiagonalPolicy = DiagonalPolicy.EXCLUDE,
    ceiling: Optional[float] = None,
    diagonal_values: Optional[ArrayLike] = None,
) -> Kernel:
    """
    Riesz kernel K(x, y) = |x - y|^(alpha - dim), 0 < alpha < dim.

    Args:
        space: Space with coordinates of dimension ``dim``
        alpha: Riesz order
        dim: Ambient dimension
        diagonal: Discretization of the infinite self-interaction
        ceiling: Finite diagonal value for ``DiagonalPolicy.CAP``
        diagonal_values: Per-point values for ``DiagonalPolicy.CELL_AVERAGE``

    Raises:
        ValidationError: If coordinates are missing or of the wrong dimension
        DomainError: If alpha is outside (0, dim)
    """
    if space.coords is None or space.dim != dim:
        raise ValidationError(
            f"Riesz kernel needs coordinates of dimension {dim}",
            details={"space_dim": space.dim, "dim": dim},
        )
    if not 0.0 < alpha < dim:
        raise DomainError(f"Riesz order alpha={alpha} outside (0, {dim})")
    distances = pairwise_distances(space)
    _require_distinct(distances)
    eye = np.eye(space.n, dtype=bool)
    entries = np.ones_like(distances)
    entries[~eye] = np.power(distances[~eye], alpha - dim)

    policy = DiagonalPolicy(diagonal)
    if policy is DiagonalPolicy.EXCLUDE:
        entries[eye] = 0.0
    elif policy is DiagonalPolicy.CAP:
        if ceiling is None or not np.isfinite(ceiling) or ceiling <= 0:
            raise ValidationError("The cap policy needs a finite positive ceiling")
        entries[eye] = ceiling
    else:
        if diagonal_values is None:
            raise ValidationError("The cell-average policy needs caller-supplied diagonal values")
        values = _as_vector(diagonal_values, "diagonal_values", space.n)
        if not (np.isfinite(values) & (values > 0)).all():
            raise ValidationError("Cell-average diagonal values must be finite and positive")
        entries[eye] = values

    # exact symmetry; cdist is symmetric up to rounding
    entries = np.triu(entries) + np.triu(entries, 1).T
    return Kernel(
        entries,
        symmetric=True,
        name=f"riesz(alpha={alpha:g},dim={dim})",
        quasi_metric=True,
        diagonal_policy=policy,
    )


def radial_kernel(
    space: MeasureSpace,
    profile: Profile,
    name: str = "radial",
    samples: int = 257,
) -> Kernel:
    """
    Convolution kernel K(x, y) = k(|x - y|) for a positive nonincreasing profile.

    The profile is validated on every pairwise distance plus a uniform sample
    of [0, max distance].
    """
    distances = pairwise_distances(space)
    entries = _evaluate_profile(profile, distances)
    radii = np.union1d(np.unique(distances), np.linspace(0.0, float(distances.max()), samples))
    values = _evaluate_profile(profile, radii)
    if not (np.isfinite(values) & (values > 0)).all():
        raise ValidationError("Radial profile must be finite and strictly positive", details={"kernel": name})
    increases = np.diff(values)
    if (increases > 1e-14 * np.maximum(1.0, np.abs(values[:-1]))).any():
        worst = int(np.argmax(increases))
        raise ValidationError(
            "Radial profile is not nonincreasing",
            details={"r": float(radii[worst]), "r_next": float(radii[worst + 1])},
        )
    entries = np.triu(entries) + np.triu(entries, 1).T
    return Kernel(entries, symmetric=True, name=name, quasi_metric=True)


def _evaluate_profile(profile: Profile, radii: np.ndarray) -> np.ndarray:
    values = np.asarray(profile(radii), dtype=float)
    if values.shape != radii.shape:
        values = np.vectorize(lambda r: float(profile(r)))(radii)
    return values


def volterra_kernel(space: MeasureSpace) -> Kernel:
    """Lower-triangular kernel K[i][j] = 1 if x_j <= x_i: discretizes f -> int_0^x f."""
    if space.coords is None or space.dim != 1:
        raise ValidationError("Volterra kernel needs a 1-D grid")
    x = space.coords[:, 0]
    if space.n > 1 and not (np.diff(x) > 0).all():
        raise ValidationError("Volterra grid must be strictly increasing")
    entries = (x[np.newaxis, :] <= x[:, np.newaxis]).astype(float)
    return Kernel(entries, symmetric=False, name="volterra")


def _positive_vector(values: ArrayLike, name: str, length: int) -> np.ndarray:
    vector = _as_vector(values, name, length)
    if not (np.isfinite(vector) & (vector > 0)).all():
        raise ValidationError(f"{name} must be finite and strictly positive at every point")
    return vector


def modify_h(kernel: Kernel, h: ArrayLike) -> Kernel:
    """K^h(x, y) = K(x, y) / (h(x) h(y))."""
    weight = _positive_vector(h, "h", kernel.n)
    entries = kernel.entries / np.outer(weight, weight)
    return Kernel(
        entries,
        symmetric=kernel.symmetric,
        name=f"{kernel.name}^h",
        diagonal_policy=kernel.diagonal_policy,
    )


def modify_w(kernel: Kernel, w: int) -> Tuple[Kernel, np.ndarray]:
    """
    K_w(x, y) = K(x, y) / (K(x, w) K(y, w)) on Omega_w = {x : K(x, w) < +inf}.

    Under the excluded-diagonal policy a zero K(w, w) stands for the removed
    singularity, so w itself is left out of Omega_w.

    Returns:
        The modified kernel on Omega_w and the indices of Omega_w in the
        original space
    """
    if not kernel.symmetric:
        raise ValidationError("modify_w needs a symmetric kernel")
    if not 0 <= w < kernel.n:
        raise ValidationError(f"Point index {w} outside 0..{kernel.n - 1}")
    off = kernel.entries[~np.eye(kernel.n, dtype=bool)]
    if off.size and (off == 0).any():
        raise ValidationError("modify_w needs positive off-diagonal entries")
    column = kernel.entries[:, w]
    subspace = np.flatnonzero(np.isfinite(column) & (column > 0))
    if subspace.size == 0:
        raise ValidationError(f"Omega_w is empty for w={w}")
    restricted = modify_h(kernel.restrict(subspace), column[subspace])
    modified = Kernel(
        restricted.entries,
        symmetric=True,
        name=f"{kernel.name}_w={w}",
        quasi_metric=kernel.quasi_metric,
        diagonal_policy=kernel.diagonal_policy,
    )
    logger.debug("modify_w", kernel=kernel.name, w=w, subspace_size=int(subspace.size))
    return modified, subspace


def weighted_kernel_gh(kernel: Kernel, h: ArrayLike, q: float) -> Kernel:
    """G^h(x, dy) = h(y)^q / h(x) * G(x, dy)."""
    weight = _positive_vector(h, "h", kernel.n)
    entries = kernel.entries * np.power(weight, q)[np.newaxis, :] / weight[:, np.newaxis]
    return Kernel(entries, symmetric=False, name=f"{kernel.name}^(h,q={q:g})")


def kernel_to_document(kernel: Kernel, space: MeasureSpace) -> Dict[str, Any]:
    """Instance document: points, weights and kernel; +inf encoded as "inf"."""
    _check_dimensions(kernel, space.n, "space")
    return to_jsonable({
        "points": None if space.coords is None else space.coords,
        "weights": space.weights,
        "kernel": {
            "name": kernel.name,
            "entries": kernel.entries,
            "symmetric": kernel.symmetric,
            "quasi_metric": kernel.quasi_metric,
            "diagonal_policy": kernel.diagonal_policy,
        },
    })


def kernel_from_document(document: Dict[str, Any]) -> Tuple[MeasureSpace, Kernel]:
    try:
        weights = decode_float_array(document["weights"])
        points = document.get("points")
        coords = decode_float_array(points) if points else None
        spec = document["kernel"]
        policy = spec.get("diagonal_policy")
        kernel = Kernel(
            decode_float_array(spec["entries"]),
            symmetric=bool(spec.get("symmetric", False)),
            name=str(spec.get("name", "custom")),
            quasi_metric=bool(spec.get("quasi_metric", False)),
            diagonal_policy=DiagonalPolicy(policy) if policy else None,
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed kernel document: {e}") from e
    space = MeasureSpace(weights, coords)
    _check_dimensions(kernel, space.n, "space")
    return space, kernel
