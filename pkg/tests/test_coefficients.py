"""Mitigation-weight families: closed forms, window fits, multivariate sets."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from lkik.coefficients import (
    MAX_RATIONAL_ORDER,
    CoefficientError,
    adaptive_coefficients,
    fit_residual,
    general_mve_coefficients,
    mve_program_coefficients,
    runtime_cost,
    sampling_overhead,
    taylor_coefficients,
)


def closed_form_weight(order: int, j: int) -> Fraction:
    """Independent evaluation of the inverse-square-root expansion weight."""
    dfact = 1
    for k in range(2 * order + 1, 0, -2):
        dfact *= k
    return (
        Fraction((-1) ** j)
        * dfact
        / (2**order * (2 * j + 1) * math.factorial(j) * math.factorial(order - j))
    )


class TestTaylorWeights:
    def test_order_one(self):
        cs = taylor_coefficients(1)
        assert cs.exact == [Fraction(3, 2), Fraction(-1, 2)]

    def test_order_two(self):
        cs = taylor_coefficients(2)
        assert cs.exact == [Fraction(15, 8), Fraction(-5, 4), Fraction(3, 8)]
        assert cs.gamma == 3.5

    def test_order_zero_is_identity(self):
        assert taylor_coefficients(0).exact == [Fraction(1)]

    @given(st.integers(min_value=0, max_value=MAX_RATIONAL_ORDER))
    @settings(max_examples=31, deadline=None)
    def test_closed_form(self, order):
        cs = taylor_coefficients(order)
        assert cs.exact == [closed_form_weight(order, j) for j in range(order + 1)]

    @given(st.integers(min_value=0, max_value=12))
    @settings(max_examples=13, deadline=None)
    def test_moment_cancellation_identities(self, order):
        # sum a_j = 1 and sum a_j (2j+1)^m = 0 for m = 1..order, exactly.
        exact = taylor_coefficients(order).exact
        assert sum(exact) == 1
        for m in range(1, order + 1):
            assert sum(a * (2 * j + 1) ** m for j, a in enumerate(exact)) == 0

    def test_odd_power_cancellation_symbolic(self):
        # Under the scalar noise model (noise 1+eps applied 2j+1 times), the
        # combination reproduces the ideal value up to O(eps^(order+1)).
        eps = sympy.Symbol("eps")
        for order in (1, 2, 3):
            exact = taylor_coefficients(order).exact
            total = sum(
                sympy.Rational(a.numerator, a.denominator) * (1 + eps) ** (2 * j + 1)
                for j, a in enumerate(exact)
            )
            series = sympy.expand(total - 1)
            poly = sympy.Poly(series, eps)
            for power in range(order + 1):
                assert poly.coeff_monomial(eps**power) == 0
            assert poly.coeff_monomial(eps ** (order + 1)) != 0

    def test_order_cap(self):
        with pytest.raises(CoefficientError):
            taylor_coefficients(MAX_RATIONAL_ORDER + 1)
        with pytest.raises(CoefficientError):
            taylor_coefficients(-1)

    def test_float_weights_match_exact(self):
        cs = taylor_coefficients(9)
        assert np.allclose(cs.weights, [float(a) for a in cs.exact], rtol=1e-15)


class TestAdaptiveWeights:
    def test_degenerates_to_closed_form_near_one(self):
        fitted = adaptive_coefficients(3, 1 - 1e-4)
        closed = taylor_coefficients(3)
        assert np.allclose(fitted.weights, closed.weights, atol=1e-12)

    def test_records_window_edge(self):
        assert adaptive_coefficients(2, 0.7).g == 0.7

    def test_weight_sum_recorded_not_forced(self):
        cs = adaptive_coefficients(2, 0.5)
        assert cs.weight_sum == pytest.approx(sum(cs.weights))
        assert cs.weight_sum != 1.0  # the fit trades the endpoint for the window

    def test_optimal_on_window(self):
        # The fit minimizes the squared misfit to lambda^(-1/2) on [g, 1]:
        # any coordinate perturbation must not improve it.
        g = 0.6
        cs = adaptive_coefficients(2, g)
        base = fit_residual(cs.weights, g)
        for k in range(len(cs.weights)):
            for step in (1e-3, -1e-3):
                bumped = list(cs.weights)
                bumped[k] += step
                assert fit_residual(bumped, g) >= base - 1e-12

    def test_beats_closed_form_on_its_window(self):
        g = 0.5
        fitted = adaptive_coefficients(2, g)
        closed = taylor_coefficients(2)
        assert fit_residual(fitted.weights, g) < fit_residual(closed.weights, g)

    def test_rejects_bad_window(self):
        with pytest.raises(CoefficientError):
            adaptive_coefficients(2, 0.0)
        with pytest.raises(CoefficientError):
            adaptive_coefficients(2, 1.5)


class TestMultivariateWeights:
    def test_first_order_entries(self):
        cs = mve_program_coefficients(3, 1)
        assert cs.entries[0].exact == Fraction(5, 2)  # 1 + L/2
        assert [e.exact for e in cs.entries[1:]] == [Fraction(-1, 2)] * 3
        assert cs.entries[1].amplification == (3, 1, 1)

    def test_first_order_overhead_linear_in_layers(self):
        for layers in range(1, 11):
            cs = mve_program_coefficients(layers, 1)
            assert cs.gamma == pytest.approx(1 + layers)
            assert cs.gamma_linear_theory == pytest.approx(1 + (layers + 1) / 2)

    def test_second_order_overhead_quadratic_in_layers(self):
        for layers in range(1, 11):
            cs = mve_program_coefficients(layers, 2)
            gamma = sum(abs(e.exact) for e in cs.entries)
            assert gamma == 1 + Fraction(layers * (layers + 4), 2)

    def test_weight_sum_is_one_exactly(self):
        for layers, order in [(1, 1), (4, 1), (1, 2), (4, 2)]:
            cs = mve_program_coefficients(layers, order)
            assert sum(e.exact for e in cs.entries) == 1

    def test_general_route_matches_closed_form(self):
        for layers in (1, 2, 3, 5):
            for order in (1, 2):
                closed = mve_program_coefficients(layers, order)
                series = general_mve_coefficients(layers, order)
                closed_map = {e.amplification: e.exact for e in closed.entries}
                series_map = {e.amplification: e.exact for e in series.entries}
                assert closed_map == series_map

    def test_single_layer_reduces_to_taylor(self):
        for order in (1, 2, 3):
            mve = general_mve_coefficients(1, order)
            slt = taylor_coefficients(order)
            got = {e.amplification[0]: e.exact for e in mve.entries}
            assert got == {2 * j + 1: a for j, a in enumerate(slt.exact)}

    def test_multivariate_cancellation_symbolic(self):
        # The weighted sum over amplified products matches the inverse
        # square root of the per-layer noise up to total degree > order:
        # sum_i w_i prod_l x_l^j_l  =  prod_l x_l^(-1/2) + O(eps^(order+1)).
        layers, order = 2, 2
        cs = mve_program_coefficients(layers, order)
        eps = sympy.symbols(f"e0:{layers}")
        combo = sympy.Integer(0)
        for entry in cs.entries:
            term = sympy.Rational(entry.exact.numerator, entry.exact.denominator)
            for l, factor in enumerate(entry.amplification):
                term *= (1 + eps[l]) ** ((factor - 1) // 2)
            combo += term
        target = sympy.prod((1 + e) ** sympy.Rational(-1, 2) for e in eps)
        diff = combo - target
        for e in eps:
            diff = diff.series(e, 0, order + 2).removeO()
        diff = sympy.expand(diff)
        poly = sympy.Poly(diff, *eps)
        for monom, coeff in zip(poly.monoms(), poly.coeffs()):
            if sum(monom) <= order:
                assert coeff == 0, (monom, coeff)
        assert any(sum(m) == order + 1 and c != 0 for m, c in zip(poly.monoms(), poly.coeffs()))

    def test_rejects_unsupported_program_order(self):
        with pytest.raises(CoefficientError):
            mve_program_coefficients(3, 5)


class TestOverheads:
    def test_gamma_and_square(self):
        gamma, gamma_sq = sampling_overhead([1.875, -1.25, 0.375])
        assert gamma == pytest.approx(3.5)
        assert gamma_sq == pytest.approx(12.25)

    def test_runtime_cost_single_layer_order_one(self):
        # gamma = 2, depths (1, 3) -> mean depth 3/2, cost gamma^2 * mean = 6.
        cs = taylor_coefficients(1)
        cost = runtime_cost(cs.weights, [1.0, 3.0])
        assert cost["gamma"] == pytest.approx(2.0)
        assert cost["mean_depth"] == pytest.approx(1.5)
        assert cost["cost"] == pytest.approx(6.0)

    def test_multivariate_equals_single_layer_at_one_layer(self):
        slt = taylor_coefficients(2)
        mve = mve_program_coefficients(1, 2)
        slt_cost = runtime_cost(slt.weights, [2 * j + 1 for j in range(3)])
        mve_cost = runtime_cost(
            [e.weight for e in mve.entries],
            [float(np.mean(e.amplification)) for e in mve.entries],
        )
        assert slt_cost["cost"] == pytest.approx(mve_cost["cost"])

    def test_multivariate_costs_more_for_two_layers(self):
        for order in (1, 2):
            slt = taylor_coefficients(order)
            mve = mve_program_coefficients(2, order)
            slt_cost = runtime_cost(
                slt.weights, [2 * j + 1 for j in range(order + 1)]
            )
            mve_cost = runtime_cost(
                [e.weight for e in mve.entries],
                [float(np.mean(e.amplification)) for e in mve.entries],
            )
            assert mve_cost["cost"] > slt_cost["cost"]

    def test_mismatched_lengths(self):
        with pytest.raises(CoefficientError):
            runtime_cost([1.0, -0.5], [1.0])
