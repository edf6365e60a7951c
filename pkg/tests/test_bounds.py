"""
Tests for the closed-form pointwise bounds and the bound reports.
"""

import math

import numpy as np
import pytest

from potential_bounds.bounds import (
    BoundForm,
    BoundSide,
    ConditionStatus,
    IterateDirection,
    bounds_with_h,
    evaluate_bounds,
    homogeneous_sublinear_bound,
    iterated_power_bound,
    linear_exponential_bound,
    lower_bound_general,
    lower_bound_power,
    power_iterate_inequality_check,
    upper_bound_general,
    upper_bound_power_negative,
)
from potential_bounds.core.exceptions import DomainError
from potential_bounds.core.serialization import dumps, loads
from potential_bounds.nonlinearity import Nonlinearity


@pytest.mark.unit
class TestLowerBounds:

    @pytest.mark.parametrize("q", [0.5, 1.0, 2.0])
    def test_zero_potential_gives_one(self, q):
        assert lower_bound_power(0.0, 3.0, q).value == pytest.approx(1.0)

    def test_exponential_case(self):
        point = lower_bound_power(1.0, 1.0, 1.0)
        assert point.value == pytest.approx(math.e)
        assert point.condition is ConditionStatus.NOT_APPLICABLE

    def test_superlinear_case(self):
        point = lower_bound_power(0.5, 1.0, 2.0)
        assert point.value == pytest.approx(2.0)
        assert point.condition is ConditionStatus.HOLDS
        assert lower_bound_power(1.0, 2.0, 2.0).value == pytest.approx(3.0)

    def test_condition_boundary_and_violation(self):
        boundary = lower_bound_power(1.0, 1.0, 2.0)
        assert boundary.condition is ConditionStatus.VIOLATED
        assert boundary.flag == "boundary"
        assert math.isinf(boundary.value)
        beyond = lower_bound_power(2.0, 1.0, 2.0)
        assert beyond.condition is ConditionStatus.VIOLATED
        assert beyond.flag is None

    def test_infinite_potential(self):
        assert lower_bound_power(math.inf, 1.0, 2.0).condition is ConditionStatus.VIOLATED
        sublinear = lower_bound_power(math.inf, 1.0, 0.5)
        assert sublinear.condition is ConditionStatus.NOT_APPLICABLE
        assert math.isinf(sublinear.value)

    def test_below_single_point_solution(self):
        # u = 0.1 u^2 + 1 has minimal root 1.12702; G1 = 0.1 and b = 1
        root = (1.0 - math.sqrt(0.6)) / 0.2
        assert lower_bound_power(0.1, 1.0, 2.0).value <= root

    def test_general_matches_power(self):
        t = np.geomspace(1.0, 1e3, 400)
        tabulated = Nonlinearity.tabulated(t, t ** 2)
        assert lower_bound_general(0.5, 1.0, tabulated).value == pytest.approx(2.0, rel=1e-3)
        assert lower_bound_general(0.5, 1.0, Nonlinearity.power(2)).value == pytest.approx(2.0)
        assert lower_bound_general(1.5, 1.0, tabulated).condition is ConditionStatus.VIOLATED

    @pytest.mark.parametrize(("pot", "b"), [(-1.0, 1.0), (1.0, 0.5), (math.nan, 1.0)])
    def test_invalid_inputs(self, pot, b):
        with pytest.raises(DomainError):
            lower_bound_power(pot, b, 2.0)


@pytest.mark.unit
class TestUpperBounds:

    def test_above_single_point_solution(self):
        # u + 0.09 / u = 1 has maximal root 0.9
        point = upper_bound_power_negative(0.09, 1.0, -1.0)
        assert point.value == pytest.approx(math.sqrt(0.82))
        assert point.value >= 0.9
        assert point.condition is ConditionStatus.HOLDS

    def test_no_positive_solution(self):
        boundary = upper_bound_power_negative(0.5, 1.0, -1.0)
        assert boundary.condition is ConditionStatus.VIOLATED
        assert boundary.flag == "boundary"
        assert boundary.value == 0.0
        beyond = upper_bound_power_negative(0.6, 1.0, -1.0)
        assert beyond.flag == "no_positive_solution"

    def test_general_matches_power(self):
        g = Nonlinearity.power(-1)
        general = upper_bound_general(0.5, 2.0, g)
        assert general.value == pytest.approx(upper_bound_power_negative(0.5, 2.0, -1.0).value)
        assert general.value == pytest.approx(1.0 - 2.0 * (1.0 - math.sqrt(0.5)))

    def test_wrong_direction(self):
        with pytest.raises(DomainError):
            upper_bound_general(0.1, 1.0, Nonlinearity.power(2))
        with pytest.raises(DomainError):
            upper_bound_power_negative(0.1, 1.0, 2.0)


@pytest.mark.unit
class TestScaledBounds:

    def test_with_h_scales_the_unit_bound(self):
        point = bounds_with_h(2.0 * 0.5, 2.0, 1.0, 2.0)
        assert point.value == pytest.approx(2.0 * lower_bound_power(0.5, 1.0, 2.0).value)

    def test_with_h_negative_exponent(self):
        point = bounds_with_h(0.18, 2.0, 1.0, -1.0)
        assert point.value == pytest.approx(2.0 * upper_bound_power_negative(0.09, 1.0, -1.0).value)

    def test_linear_exponential_is_weaker(self):
        for pot in np.linspace(0.0, 3.0, 13):
            for h in (0.5, 1.0, 2.0):
                for b in (1.0, 2.0, 4.0):
                    weak = linear_exponential_bound(pot, h, b).value
                    strong = bounds_with_h(pot, h, b, 1.0).value
                    assert weak <= strong * (1.0 + 1e-12)

    def test_homogeneous_sublinear(self):
        assert homogeneous_sublinear_bound(1.0, 1.0, 0.5).value == pytest.approx(0.25)
        assert homogeneous_sublinear_bound(0.0, 1.0, 0.5).value == 0.0
        # u = 2 u^(1/2) has the positive solution 4
        assert homogeneous_sublinear_bound(2.0, 1.0, 0.5).value <= 4.0
        with pytest.raises(DomainError):
            homogeneous_sublinear_bound(1.0, 1.0, 1.0)


@pytest.mark.unit
class TestIteratedPower:

    def test_values(self):
        assert iterated_power_bound(2.0, 1.0, 1.0, 0).value == 2.0
        assert iterated_power_bound(2.0, 1.0, 1.0, 2).value == pytest.approx(8.0 / 6.0)
        assert iterated_power_bound(2.0, 1.0, 2.0, 1).value == pytest.approx(8.0 / 3.0)
        assert iterated_power_bound(2.0, 2.0, 2.0, 1).value == pytest.approx(8.0 / (3.0 * 4.0))
        assert iterated_power_bound(0.0, 1.0, 2.0, 3).value == 0.0

    def test_overflow_flag(self):
        point = iterated_power_bound(1e300, 1.0, 2.0, 5)
        assert point.flag == "overflow"
        assert point.value == 0.0

    @pytest.mark.parametrize("r", [0.5, 2.0, 3.0])
    def test_power_iterate_on_volterra(self, volterra_grid, r):
        space, kernel = volterra_grid
        check = power_iterate_inequality_check(kernel, space, r, 1.0)
        assert (check.residual >= -1e-12 * (1.0 + np.abs(check.lhs))).all()

    def test_power_iterate_domain(self, volterra_grid):
        space, kernel = volterra_grid
        with pytest.raises(DomainError):
            power_iterate_inequality_check(kernel, space, 0.0, 1.0)

    def test_power_iterate_direction(self, volterra_grid):
        space, kernel = volterra_grid
        implied = power_iterate_inequality_check(kernel, space, 2.0, 1.0)
        explicit = power_iterate_inequality_check(kernel, space, 2.0, 1.0, IterateDirection.AT_MOST)
        np.testing.assert_array_equal(implied.residual, explicit.residual)
        power_iterate_inequality_check(kernel, space, 1.0, 1.0, "at_least")
        with pytest.raises(DomainError):
            power_iterate_inequality_check(kernel, space, 2.0, 1.0, IterateDirection.AT_LEAST)
        with pytest.raises(DomainError):
            power_iterate_inequality_check(kernel, space, 0.5, 1.0, IterateDirection.AT_MOST)


@pytest.mark.unit
class TestBoundReport:

    def test_form_selection(self):
        pots = [0.1, 0.2]
        assert evaluate_bounds(pots, 1.0, Nonlinearity.power(2)).theorem is BoundForm.LOWER_POWER
        upper = evaluate_bounds(pots, 1.0, Nonlinearity.power(-1))
        assert upper.theorem is BoundForm.UPPER_POWER_NEGATIVE
        assert upper.side is BoundSide.UPPER
        assert evaluate_bounds(pots, 1.0, Nonlinearity.power(2), h=[1.0, 2.0]).theorem is BoundForm.WITH_H
        homogeneous = evaluate_bounds(pots, 1.0, Nonlinearity.power(0.5), homogeneous=True)
        assert homogeneous.theorem is BoundForm.HOMOGENEOUS_SUBLINEAR
        negative_h = evaluate_bounds(pots, 1.0, Nonlinearity.power(-1), h=[1.0, 2.0])
        assert negative_h.side is BoundSide.UPPER

    def test_power_forms_need_power_nonlinearity(self):
        tabulated = Nonlinearity.tabulated([1.0, 2.0], [1.0, 4.0])
        with pytest.raises(DomainError):
            evaluate_bounds([0.1], 1.0, tabulated, h=[1.0])
        with pytest.raises(DomainError):
            evaluate_bounds([0.1], 1.0, Nonlinearity.power(1), form=BoundForm.LINEAR_EXPONENTIAL)

    def test_margins_and_violations(self):
        report = evaluate_bounds([0.0, 0.0], 1.0, Nonlinearity.power(1))
        close = report.with_reference([1.0, 1.0 - 1e-12])
        assert close.violation_count == 0
        assert close.min_margin == pytest.approx(-1e-12, abs=1e-15)
        broken = report.with_reference([0.5, 1.0])
        assert broken.violation_count == 1
        assert broken.violation_mask().tolist() == [True, False]

    def test_upper_margins_are_oriented(self):
        report = evaluate_bounds([0.09], 1.0, Nonlinearity.power(-1)).with_reference([0.9])
        assert report.margins[0] == pytest.approx(math.sqrt(0.82) - 0.9)
        assert report.violation_count == 0

    def test_unconverged_points_are_skipped(self):
        report = evaluate_bounds([0.0, 0.0], 1.0, Nonlinearity.power(1)).with_reference([0.0, 2.0], [False, True])
        assert math.isnan(report.margins[0])
        assert report.violation_count == 0

    def test_rows_and_document(self):
        report = evaluate_bounds([0.5, 2.0], 1.0, Nonlinearity.power(2)).with_reference([2.5, 10.0])
        rows = report.to_rows()
        assert set(rows[0]) == {"point", "pot", "u", "bound", "condition", "margin", "flag"}
        assert rows[1]["condition"] is ConditionStatus.VIOLATED
        assert report.condition_count(ConditionStatus.VIOLATED) == 1
        document = loads(dumps(report.to_dict()))
        assert document["points"][1]["bound"] == "inf"
        assert document["theorem"] == "lower_power"
