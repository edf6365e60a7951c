"""
Tests for the Picard solvers, the iteration trace and the inequality oracles.
"""

import math

import numpy as np
import pytest
from scipy.optimize import fsolve

from potential_bounds.core.exceptions import DomainError, ValidationError
from potential_bounds.measure_kernel import Kernel, MeasureSpace
from potential_bounds.nonlinearity import Nonlinearity
from potential_bounds.principles import minimal_wmp_constant
from potential_bounds.solver import (
    DEFAULT_MAX_ITER,
    SolveStatus,
    homogeneous_picard,
    iter_psi_check,
    iterate_f,
    key_lemma_check,
    layer_cake_check,
    picard_decreasing,
    picard_increasing,
    shifted_phi,
)


def _one_point(k: float) -> Kernel:
    return Kernel(np.array([[k]]), symmetric=True)


@pytest.mark.unit
class TestPicardIncreasing:

    def test_zero_kernel_returns_h(self, grid3):
        result = picard_increasing(Kernel.zeros(3), grid3, Nonlinearity.power(2), h=[1.0, 2.0, 3.0])
        np.testing.assert_array_equal(result.u, [1.0, 2.0, 3.0])
        assert result.iterations == 1
        assert result.converged.all()

    def test_single_point_quadratic(self, single_point):
        # u = 0.1 u^2 + 1
        result = picard_increasing(_one_point(0.1), single_point, Nonlinearity.power(2))
        assert result.u[0] == pytest.approx(1.1270166537925831, rel=1e-8)
        assert result.statuses == [SolveStatus.CONVERGED]

    def test_single_point_linear(self, single_point):
        result = picard_increasing(_one_point(0.5), single_point, Nonlinearity.power(1))
        assert result.u[0] == pytest.approx(2.0, rel=1e-8)

    def test_divergence(self, single_point):
        # u = 2 u^2 + 1 has no real solution
        result = picard_increasing(_one_point(2.0), single_point, Nonlinearity.power(2))
        assert result.statuses == [SolveStatus.DIVERGED]
        assert math.isinf(result.u[0])
        assert math.isnan(result.residual)

    def test_two_points_match_fsolve(self):
        entries = np.array([[0.1, 0.05], [0.02, 0.1]])
        space = MeasureSpace(np.ones(2))
        result = picard_increasing(Kernel(entries), space, Nonlinearity.power(2))
        reference = fsolve(lambda u: u - entries @ u ** 2 - 1.0, np.ones(2), xtol=1e-13)
        np.testing.assert_allclose(result.u, reference, rtol=1e-8)

    def test_needs_increasing_nonlinearity(self, single_point):
        with pytest.raises(DomainError):
            picard_increasing(_one_point(0.1), single_point, Nonlinearity.power(-1))

    def test_general_nonlinearity_needs_h_at_least_one(self, single_point):
        g = Nonlinearity.tabulated([1.0, 2.0], [1.0, 4.0])
        with pytest.raises(DomainError):
            picard_increasing(_one_point(0.1), single_point, g, h=0.5)

    def test_result_document(self, single_point):
        document = picard_increasing(_one_point(0.1), single_point, Nonlinearity.power(2)).to_dict()
        assert document["counts"]["converged"] == 1
        assert document["method"] == "picard_increasing"


@pytest.mark.unit
class TestPicardDecreasing:

    def test_maximal_root(self, single_point):
        # u + 0.09 / u = 1 has roots 0.1 and 0.9
        result = picard_decreasing(_one_point(0.09), single_point, Nonlinearity.power(-1))
        assert result.u[0] == pytest.approx(0.9, rel=1e-8)
        assert result.statuses == [SolveStatus.CONVERGED]

    def test_no_positive_solution(self, single_point):
        # u + 0.5 / u = 1 has no real root
        result = picard_decreasing(_one_point(0.5), single_point, Nonlinearity.power(-1))
        assert result.statuses == [SolveStatus.NO_POSITIVE_SOLUTION]
        assert not result.converged.any()

    def test_iterates_stay_below_h(self, radial_cloud):
        space, kernel = radial_cloud
        result = picard_decreasing(kernel.scaled(0.2), space, Nonlinearity.power(-1))
        assert result.converged.all()
        assert (result.u <= 1.0).all()
        assert (result.u > 0).all()

    def test_invalid_arguments(self, single_point):
        with pytest.raises(DomainError):
            picard_decreasing(_one_point(0.1), single_point, Nonlinearity.power(2))
        with pytest.raises(DomainError):
            picard_decreasing(_one_point(0.1), single_point, Nonlinearity.power(-1), theta=0.0)
        with pytest.raises(DomainError):
            picard_decreasing(_one_point(0.1), single_point, Nonlinearity.power(-1), h=0.0)


@pytest.mark.unit
class TestHomogeneousPicard:

    def test_single_point(self, single_point):
        # u = 2 u^(1/2)
        result = homogeneous_picard(_one_point(2.0), single_point, 0.5)
        assert result.u[0] == pytest.approx(4.0, rel=1e-10)

    def test_zero_kernel_is_degenerate(self, grid3):
        result = homogeneous_picard(Kernel.zeros(3), grid3, 0.5)
        assert result.count(SolveStatus.DEGENERATE) == 3

    def test_scaling(self, radial_cloud):
        space, kernel = radial_cloud
        base = homogeneous_picard(kernel, space, 0.5)
        doubled = homogeneous_picard(kernel.scaled(2.0), space, 0.5)
        assert base.converged.all()
        np.testing.assert_allclose(doubled.u, 4.0 * base.u, rtol=1e-9)

    def test_small_solution_is_not_converged_early(self, single_point):
        # iterates 1e-4, 1e-6, 1e-7, 3.2e-8, 1.8e-8 toward the fixed point 1e-8
        result = homogeneous_picard(_one_point(1e-4), single_point, 0.5, tol=1e-6, max_iter=5)
        assert result.iterations == 5
        assert result.statuses == [SolveStatus.OSCILLATING]

    def test_status_agrees_with_stopping_rule(self, single_point):
        result = homogeneous_picard(_one_point(1e-4), single_point, 0.5)
        assert result.statuses == [SolveStatus.CONVERGED]
        assert result.iterations < DEFAULT_MAX_ITER
        assert result.defects[0] <= result.tol * result.u[0]
        assert result.u[0] == pytest.approx(1e-8, rel=1e-10)

    def test_invalid_exponent_and_seed(self, single_point):
        with pytest.raises(DomainError):
            homogeneous_picard(_one_point(1.0), single_point, 1.0)
        with pytest.raises(DomainError):
            homogeneous_picard(_one_point(1.0), single_point, 0.5, seed=[0.0])


@pytest.mark.unit
class TestIteration:

    def test_scalar_recursion(self):
        space = MeasureSpace(np.array([0.5]))
        trace = iterate_f(_one_point(1.0), space, lambda t: 3.0 * np.asarray(t), 3)
        assert trace.depth == 3
        assert trace.levels[3][0] == pytest.approx(0.5 * 1.5 ** 3)

    def test_volterra_identity_phi(self, volterra_grid):
        space, kernel = volterra_grid
        trace = iterate_f(kernel, space, lambda t: np.asarray(t), 3)
        for k in range(4):
            assert trace.levels[k][-1] == pytest.approx(1.0 / math.factorial(k + 1), rel=1e-2)

    def test_shifted_phi(self):
        np.testing.assert_allclose(shifted_phi(Nonlinearity.power(2))(np.array([0.0, 1.0])), [1.0, 4.0])
        values = shifted_phi(Nonlinearity.power(-1))(np.array([0.5, 2.0]))
        assert values[0] == pytest.approx(2.0)
        assert math.isnan(values[1])

    def test_domain_exit_is_marked(self, single_point):
        trace = iterate_f(_one_point(2.0), single_point, shifted_phi(Nonlinearity.power(-1)), 2)
        assert trace.domain_exit[0]

    def test_negative_depth(self, grid3):
        with pytest.raises(DomainError):
            iterate_f(Kernel.identity(3), grid3, lambda t: t, -1)

    def test_negative_phi_rejected(self, grid3):
        with pytest.raises(ValidationError):
            iterate_f(Kernel.identity(3), grid3, lambda t: -np.asarray(t), 1)


@pytest.mark.unit
class TestOracles:

    def test_layer_cake_constant_phi(self, grid3):
        check = layer_cake_check(grid3, [0.3, 0.1, 0.2], lambda t: np.ones_like(np.asarray(t, dtype=float)))
        assert check.lhs == pytest.approx(check.rhs)
        assert check.residual == pytest.approx(0.0, abs=1e-12)

    def test_layer_cake_atoms(self):
        check = layer_cake_check(MeasureSpace(np.ones(2)), [1.0, 2.0], lambda t: np.asarray(t, dtype=float))
        assert check.lhs == pytest.approx(2.0)
        assert check.rhs == pytest.approx(3.0)

    def test_layer_cake_ties(self):
        check = layer_cake_check(MeasureSpace(np.ones(2)), [1.0, 1.0], lambda t: np.asarray(t, dtype=float))
        assert check.rhs == pytest.approx(4.0)

    def test_key_lemma_radial(self, radial_cloud):
        space, kernel = radial_cloud
        b = minimal_wmp_constant(kernel, space)
        check = key_lemma_check(kernel, space, b, lambda t: np.asarray(t, dtype=float) ** 2)
        assert (check.residual >= -1e-10 * (1.0 + np.abs(check.rhs))).all()
        single = key_lemma_check(kernel, space, b, lambda t: np.asarray(t, dtype=float) ** 2, x=0)
        assert single.residual == pytest.approx(check.residual[0])

    def test_key_lemma_volterra(self, volterra_grid):
        space, kernel = volterra_grid
        check = key_lemma_check(kernel, space, 1.0, lambda t: np.asarray(t, dtype=float))
        assert (check.residual >= -1e-12).all()

    def test_key_lemma_needs_b_at_least_one(self, grid3):
        with pytest.raises(DomainError):
            key_lemma_check(Kernel.identity(3), grid3, 0.5, lambda t: t)

    def test_iter_psi_ladder(self, radial_cloud):
        space, kernel = radial_cloud
        b = minimal_wmp_constant(kernel, space)
        comparison = iter_psi_check(kernel, space, Nonlinearity.power(2), b, 2, grid_size=2048)
        np.testing.assert_allclose(comparison.residuals[0], 0.0, atol=1e-12)
        assert comparison.min_residual >= -1e-6
        assert not comparison.skipped.any()
