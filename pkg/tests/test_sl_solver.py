import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatcoeff.coefficient import CoefficientM, DomainError
from heatcoeff.oracles import transfer_matrix
from heatcoeff.sl_solver import (IterationError, SolverConfig, check_pointwise_properties,
                                 default_resolution, fixed_point_residual, growth_lower_bound,
                                 growth_ratio, make_grid, monotonicity_in_k2, solve_volterra)

# transfer-matrix oracle for q = {1 on [0, .5), 4 on [.5, 1]}, k = 2
TWO_PIECE_U1 = 7.936516655537135
TWO_PIECE_DU1 = 31.228825975873505


def rel(a, b):
    return abs(a / b - 1.0)


def test_cosh_constant_one():
    sol = solve_volterra(CoefficientM.constant(1.0), 1.0)
    assert sol.u[0] == 1.0 and sol.du[0] == 0.0
    assert rel(sol.u[-1], 1.5430806348152437) <= 1e-8
    assert rel(sol.du[-1], 1.1752011936438014) <= 1e-8


def test_cosh_constant_four():
    sol = solve_volterra(CoefficientM.constant(4.0), 1.0)
    assert rel(sol.u[-1], 3.7621956910836314) <= 1e-8


def test_two_piece_matches_frozen_transfer_matrix():
    q = CoefficientM.piecewise_constant([0, 0.5, 1], [1, 4])
    sol = solve_volterra(q, 2.0)
    assert 0.5 in sol.grid
    assert rel(sol.u[-1], TWO_PIECE_U1) <= 1e-8
    assert rel(sol.du[-1], TWO_PIECE_DU1) <= 1e-8
    assert transfer_matrix([0, 0.5, 1], [1, 4], 2.0) == pytest.approx((TWO_PIECE_U1, TWO_PIECE_DU1), rel=1e-14)


def test_bad_k():
    with pytest.raises(DomainError):
        solve_volterra(CoefficientM.constant(1.0), 0.0)
    with pytest.raises(DomainError):
        solve_volterra(CoefficientM.constant(1.0), -1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(n=1)
    with pytest.raises(ValueError):
        SolverConfig(eps_v=0.0)
    with pytest.raises(ValueError):
        SolverConfig(method="newton")


def test_explicit_grid_must_hold_breakpoints():
    q = CoefficientM.piecewise_constant([0, 0.3, 1], [1, 2])
    with pytest.raises(DomainError):
        solve_volterra(q, 1.0, grid=np.linspace(0, 1, 11))


def test_make_grid_alignment():
    g = make_grid([0, 0.123, 1], 100)
    assert g[0] == 0.0 and g[-1] == 1.0 and 0.123 in g
    assert np.all(np.diff(g) > 0)


def test_default_resolution():
    assert default_resolution(1.0, 1.0) == max(200, math.ceil(math.sqrt(1 / 12e-8)))
    assert default_resolution(0.1, 0.25) == 200
    assert default_resolution(0.5, 0.25) == 361
    assert default_resolution(1000.0, 4.0) == 2_000_000


def test_picard_agrees_with_march():
    q = CoefficientM.piecewise_constant([0, 0.5, 1], [1, 4])
    cfg_p = SolverConfig(n=400, method="picard", eps_v=1e-13)
    cfg_m = SolverConfig(n=400)
    a, b = solve_volterra(q, 1.5, cfg_p), solve_volterra(q, 1.5, cfg_m)
    assert a.iterations > 0
    assert np.max(np.abs(a.log_u - b.log_u)) <= 1e-12
    assert a.residual <= 1e-12


def test_picard_nonconvergence():
    with pytest.raises(IterationError):
        solve_volterra(CoefficientM.constant(4.0), 30.0, SolverConfig(n=400, method="picard", max_iter=20))


def test_fixed_point_residual_march():
    sol = solve_volterra(CoefficientM.piecewise_constant([0, 0.5, 1], [1, 4]), 5.0)
    assert fixed_point_residual(sol) <= 1e-12


def test_log_form_large_k():
    q = CoefficientM.constant(4.0)
    sol = solve_volterra(q, 1000.0)
    assert sol.log_form
    assert math.isinf(sol.u[-1])
    # log cosh(2000) = 2000 - log 2 up to e^-4000
    assert rel(sol.log_u[-1], 2000.0 - math.log(2.0)) <= 1e-6
    assert np.all(np.isfinite(sol.log_u))


def test_second_order_convergence():
    q = CoefficientM.constant(1.0)
    errs = []
    for n in (100, 200, 400):
        sol = solve_volterra(q, 4.0, SolverConfig(n=n))
        errs.append(np.max(np.abs(np.expm1(sol.log_u - np.log(np.cosh(4.0 * sol.grid))))))
    assert 3.6 <= errs[0] / errs[1] <= 4.4
    assert 3.6 <= errs[1] / errs[2] <= 4.4


def test_pointwise_properties_simple():
    rep = check_pointwise_properties(solve_volterra(CoefficientM.constant(1.0), 1.0))
    assert rep.passed
    assert min(rep.min_u_minus_1, rep.min_du, rep.min_second_difference) >= -1e-10


def test_monotonicity_examples():
    one = CoefficientM.constant(1.0)
    assert monotonicity_in_k2(one, 1.0, 2.0, 1.0)
    assert monotonicity_in_k2(one, 1.0, 2.0, 0.0)
    with pytest.raises(DomainError):
        monotonicity_in_k2(one, 2.0, 1.0, 0.5)


def test_growth_ratio_examples():
    one = CoefficientM.constant(1.0)
    r = growth_ratio(one, 0.0, 1.0, 2.0)
    assert rel(r, math.cosh(2.0)) <= 1e-8
    assert r >= growth_lower_bound(1.0, 0.0, 1.0, 2.0) == 3.0
    close = growth_ratio(one, 0.5 - 1e-6, 0.5, 2.0)
    assert close == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(DomainError):
        growth_ratio(one, 0.6, 0.5, 1.0)


def test_growth_sweep_and_decay():
    q = CoefficientM([0, 0.4, 1], [[1.0, 1.0], [3.0]], c0=1.0, c1=3.0)
    inverse = []
    for k in (1.0, 4.0, 16.0, 64.0):
        r = growth_ratio(q, 0.2, 0.8, k, log=True)
        assert r >= math.log(growth_lower_bound(q.c0, 0.2, 0.8, k)) - 1e-8
        inverse.append(-r)
    assert np.all(np.diff(inverse) < 0)
    assert inverse[-1] < math.log(1e-10)


# -- properties ---------------------------------------------------------------

@st.composite
def coefficients(draw, max_pieces=3):
    m = draw(st.integers(1, max_pieces))
    cuts = sorted(draw(st.lists(st.floats(0.05, 0.95), min_size=m - 1, max_size=m - 1, unique=True)))
    if any(b - a < 0.01 for a, b in zip([0.0] + cuts, cuts + [1.0])):
        cuts = []
    bp = [0.0] + cuts + [1.0]
    vals = draw(st.lists(st.floats(0.25, 4.0), min_size=len(bp) - 1, max_size=len(bp) - 1))
    return bp, vals


@given(coefficients(), st.sampled_from([0.5, 5.0, 50.0]))
@settings(max_examples=30, deadline=None)
def test_pointwise_properties_random(qspec, k):
    q = CoefficientM.piecewise_constant(*qspec)
    assert check_pointwise_properties(solve_volterra(q, k), tol=1e-8).passed


@given(coefficients(max_pieces=4), st.floats(0.5, 10.0))
@settings(max_examples=25, deadline=None)
def test_transfer_matrix_equivalence(qspec, k):
    bp, vals = qspec
    sol = solve_volterra(CoefficientM.piecewise_constant(bp, vals), k)
    u, du = transfer_matrix(bp, vals, k)
    assert abs(math.expm1(sol.log_u[-1] - math.log(u))) <= 1e-6
    assert abs(math.expm1(sol.log_du[-1] - math.log(du))) <= 1e-6


@given(coefficients(), st.floats(0.1, 10.0), st.floats(1.01, 3.0), st.floats(0.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_monotone_in_k2_random(qspec, k1, factor, x):
    q = CoefficientM.piecewise_constant(*qspec)
    assert monotonicity_in_k2(q, k1, k1 * factor, x)


@given(coefficients(), st.floats(0.0, 0.9), st.floats(0.05, 1.0), st.floats(0.5, 30.0))
@settings(max_examples=25, deadline=None)
def test_growth_bound_random(qspec, y, span, k):
    x = min(1.0, y + span)
    q = CoefficientM.piecewise_constant(*qspec)
    r = growth_ratio(q, y, x, k, log=True)
    assert r >= math.log(growth_lower_bound(q.c0, y, x, k)) - 1e-8
