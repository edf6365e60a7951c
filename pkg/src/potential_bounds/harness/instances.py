"""
Instance generation from a RunConfig.

An instance is deterministic under the config's seed: the space is drawn
first, then h, from one ``numpy.random.Generator``.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from ..core.config import HKind, KernelFamily, RadialProfileKind, RunConfig, SpaceKind
from ..core.exceptions import ConfigurationError, PotentialBoundsError
from ..core.log import get_logger
from ..core.serialization import read_json
from ..measure_kernel import (
    DiagonalPolicy,
    Kernel,
    Measure,
    MeasureSpace,
    kernel_from_document,
    potential,
    radial_kernel,
    riesz_cell_average_diagonal,
    riesz_kernel,
    volterra_kernel,
)
from ..nonlinearity import Nonlinearity

logger = get_logger(__name__)

Profile = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Instance:
    seed: int
    space: MeasureSpace
    kernel: Kernel
    h: np.ndarray
    g: Nonlinearity

    @property
    def h_is_one(self) -> bool:
        return bool(np.all(self.h == 1.0))


def radial_profile(kind: RadialProfileKind, length_scale: float = 1.0, exponent: float = 1.0, floor: float = 0.1) -> Profile:
    """Positive nonincreasing radial profiles r -> k(r)."""
    kind = RadialProfileKind(kind)
    if kind is RadialProfileKind.CONSTANT:
        return lambda r: np.ones_like(np.asarray(r, dtype=float))
    if kind is RadialProfileKind.EXPONENTIAL:
        return lambda r: np.exp(-np.asarray(r, dtype=float) / length_scale)
    if kind is RadialProfileKind.GAUSSIAN:
        return lambda r: np.exp(-((np.asarray(r, dtype=float) / length_scale) ** 2))
    if kind is RadialProfileKind.INVERSE_POWER:
        return lambda r: (1.0 + np.asarray(r, dtype=float) / length_scale) ** (-exponent)
    return lambda r: np.maximum(1.0 - np.asarray(r, dtype=float) / length_scale, floor)


def _build_space(config: RunConfig, rng: np.random.Generator) -> MeasureSpace:
    spec = config.space
    if spec.kind is SpaceKind.GRID:
        if spec.dim == 1:
            return MeasureSpace.uniform_grid(spec.n, spec.start, spec.stop, spec.weighting)
        side = int(round(spec.n ** (1.0 / spec.dim)))
        if side ** spec.dim != spec.n:
            raise ConfigurationError(
                f"A {spec.dim}-D grid needs n to be a perfect power, got n={spec.n}"
            )
        axis = MeasureSpace.uniform_grid(side, spec.start, spec.stop, spec.weighting)
        mesh = np.meshgrid(*([axis.coords[:, 0]] * spec.dim), indexing="ij")
        coords = np.column_stack([m.reshape(-1) for m in mesh])
        weight_mesh = np.meshgrid(*([axis.weights] * spec.dim), indexing="ij")
        weights = np.prod(np.column_stack([w.reshape(-1) for w in weight_mesh]), axis=1)
        return MeasureSpace(weights, coords)
    space = MeasureSpace.random_cloud(spec.n, spec.dim, rng, jitter_weights=spec.jitter_weights)
    if config.kernel.family is KernelFamily.VOLTERRA:
        order = np.argsort(space.coords[:, 0])
        space = space.restrict(order)
    return space


def _build_kernel(config: RunConfig, space: MeasureSpace) -> Kernel:
    spec = config.kernel
    if spec.family is KernelFamily.RIESZ:
        dim = space.dim or 1
        diagonal_values = None
        if spec.diagonal is DiagonalPolicy.CELL_AVERAGE:
            diagonal_values = riesz_cell_average_diagonal(space, spec.alpha, dim)
        kernel = riesz_kernel(space, spec.alpha, dim, spec.diagonal, spec.ceiling, diagonal_values)
    elif spec.family is KernelFamily.RADIAL:
        profile = radial_profile(spec.profile, spec.length_scale, spec.exponent, spec.floor)
        kernel = radial_kernel(space, profile, name=f"radial({spec.profile.value})")
    elif spec.family is KernelFamily.VOLTERRA:
        kernel = volterra_kernel(space)
    elif spec.family is KernelFamily.ZERO:
        kernel = Kernel.zeros(space.n)
    else:
        raise ConfigurationError("custom kernels are loaded with their own space")
    return kernel if spec.scale == 1.0 else kernel.scaled(spec.scale)


def _build_h(config: RunConfig, space: MeasureSpace, kernel: Kernel, rng: np.random.Generator) -> np.ndarray:
    spec = config.h
    if spec.kind is HKind.ONES:
        return np.ones(space.n)
    if spec.kind is HKind.RANDOM:
        return rng.uniform(spec.low, spec.high, size=space.n)
    nu = Measure(rng.uniform(0.0, 1.0, size=space.n) * space.weights)
    h = potential(kernel, nu)
    if not (np.isfinite(h) & (h > 0)).all():
        raise ConfigurationError("h = K nu is not finite and positive for this kernel")
    return h


def generate_instance(config: RunConfig) -> Tuple[MeasureSpace, Kernel]:
    """
    Build the (space, kernel) pair described by ``config``.

    Raises:
        ConfigurationError: For invalid families or parameters
    """
    instance = build_instance(config)
    return instance.space, instance.kernel


def build_instance(config: RunConfig, g: Optional[Nonlinearity] = None) -> Instance:
    """Build space, kernel, h and nonlinearity for one seed."""
    rng = config.rng()
    try:
        if config.kernel.family is KernelFamily.CUSTOM:
            space, kernel = kernel_from_document(read_json(config.kernel.path))
            if config.kernel.scale != 1.0:
                kernel = kernel.scaled(config.kernel.scale)
        else:
            space = _build_space(config, rng)
            kernel = _build_kernel(config, space)
        h = _build_h(config, space, kernel, rng)
        nonlinearity = g if g is not None else config.nonlinearity.build()
    except ConfigurationError:
        raise
    except PotentialBoundsError as e:
        raise ConfigurationError(f"Invalid instance parameters: {e}", details=e.details) from e
    logger.debug("instance_built", seed=config.seed, kernel=kernel.name, n=space.n)
    return Instance(seed=config.seed, space=space, kernel=kernel, h=h, g=nonlinearity)
