import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatcoeff.coefficient import CoefficientM
from heatcoeff.heat_forward import sine_source
from heatcoeff.inverse import (ModelSpec, ParameterBoundError, distinguishability_test, fd_jacobian,
                               levenberg_marquardt, reconstruct, residual)
from heatcoeff.spectral_reduction import SpectralData, default_kgrid, spectral_data

SRC = sine_source(1.0)
KS = np.geomspace(0.5, 5.0, 12)
TWO_PIECE_Q = CoefficientM.piecewise_constant([0, 0.5, 1], [1, 2])


def synthetic(q, ks=KS):
    """Spectral-path data for the coefficient q = 1/a."""
    return spectral_data(q.reciprocal(), SRC, ks)


@pytest.fixture(scope="module")
def two_piece_data():
    return synthetic(TWO_PIECE_Q)


def test_constant_round_trip():
    data = synthetic(CoefficientM.constant(1.0))
    res = reconstruct(data, ModelSpec([0, 1], init_values=[2.0]))
    assert res.converged
    assert res.physical[0] == pytest.approx(1.0, abs=1e-6)
    assert res.estimate.eval(0.3) == pytest.approx(1.0, abs=1e-6)


def test_residual_zero_at_truth(two_piece_data):
    spec = ModelSpec([0, 0.5, 1])
    r = residual(spec.encode([1.0, 2.0]), two_piece_data, spec)
    assert r.shape == (KS.size,)
    assert np.max(np.abs(r)) <= 1e-6
    # the k^2 f block only measures data consistency
    r2 = residual(spec.encode([1.0, 2.0]), two_piece_data, spec, source=SRC)
    assert r2.shape == (2 * KS.size,) and np.max(np.abs(r2)) <= 1e-12


@pytest.mark.parametrize("c", [0.5, 0.9, 1.1, 3.0])
def test_residual_sign_constant_family(c):
    # g ~ coth(k sqrt(c)) / (k sqrt(c)) decreases in c, so model - data has the sign of c* - c
    data = synthetic(CoefficientM.constant(1.0))
    spec = ModelSpec([0, 1])
    r = residual(spec.encode([c]), data, spec)
    assert np.all(np.sign(r) == -np.sign(c - 1.0))


def test_residual_sensitivity():
    data = synthetic(TWO_PIECE_Q, default_kgrid())
    spec = ModelSpec([0, 0.5, 1])
    assert np.linalg.norm(residual(spec.encode([1.01, 2.0]), data, spec)) >= 1e-3
    assert np.linalg.norm(residual(spec.encode([1.0, 2.02]), data, spec)) >= 1e-3


def test_parameter_bounds():
    spec = ModelSpec([0, 1], c0=0.5, c1=2.0)
    with pytest.raises(ParameterBoundError):
        spec.encode([2.5])
    with pytest.raises(ValueError):
        ModelSpec([0, 1], c0=2.0, c1=1.0)
    assert np.all((spec.decode_values(np.array([-800.0, 800.0])) >= 0.5))


def test_breakpoint_map_round_trip():
    spec = ModelSpec([0, 0.2, 0.7, 1], free_breakpoints=True)
    theta = spec.encode([1, 2, 3])
    assert spec.n_params == 5
    assert np.allclose(spec.physical(theta), [1, 2, 3, 0.2, 0.7])
    bp = spec.decode_breakpoints(np.r_[theta[:3], 40.0, -40.0])
    assert np.all(np.diff(bp) >= spec.min_gap * (1 - 1e-12))


def test_from_dict():
    spec = ModelSpec.from_dict({"n_pieces": 3, "degree": 1, "c0": 0.5, "c1": 3.0})
    assert spec.breakpoints == pytest.approx([0, 1 / 3, 2 / 3, 1])
    assert spec.n_values == 6 and spec.init_values == [1.75] * 6


def test_jacobian_forward_vs_centered(two_piece_data):
    spec = ModelSpec([0, 0.5, 1])
    rng = np.random.default_rng(0)
    x = rng.normal(size=2)
    fun = lambda th: residual(th, two_piece_data, spec)
    fwd = fd_jacobian(fun, x, rel_step=1e-6)
    ctr = fd_jacobian(fun, x, rel_step=5e-7, centered=True)
    assert np.max(np.abs(fwd - ctr)) <= 1e-5 * np.max(np.abs(ctr))


def test_lm_on_rosenbrock():
    fun = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])
    x, r, J, hist, it, ok, reason = levenberg_marquardt(fun, [-1.2, 1.0], rel_step=1e-8)
    assert ok and np.allclose(x, [1, 1], atol=1e-6)
    assert np.all(np.diff(hist) <= 0)


def test_two_piece_known_breakpoint(two_piece_data):
    res = reconstruct(two_piece_data, ModelSpec([0, 0.5, 1], init_values=[1.5, 1.5]))
    assert res.converged
    assert np.allclose(res.physical, [1, 2], rtol=1e-6)
    assert np.all(np.diff(res.history) <= 0)
    assert res.covariance.shape == (2, 2)
    doc = res.to_dict()
    assert {"coefficient", "misfit", "iterations", "converged", "residual_history"} <= set(doc)


def test_three_piece_round_trip():
    q = CoefficientM.piecewise_constant([0, 0.3, 0.7, 1], [2.0, 0.7, 1.5])
    data = synthetic(q, np.geomspace(0.5, 10, 16))
    res = reconstruct(data, ModelSpec([0, 0.3, 0.7, 1], init_values=[1.0, 1.0, 1.0]))
    assert res.converged
    assert np.allclose(res.physical, [2.0, 0.7, 1.5], rtol=1e-4)


def test_noise_robustness(two_piece_data):
    rng = np.random.default_rng(1)
    noisy = SpectralData(two_piece_data.k, two_piece_data.g * (1 + 0.01 * rng.standard_normal(KS.size)),
                         two_piece_data.lf)
    res = reconstruct(noisy, ModelSpec([0, 0.5, 1], init_values=[1.5, 1.5]))
    assert np.max(np.abs(res.physical / np.array([1.0, 2.0]) - 1)) <= 0.05


def test_distinguishability_examples():
    ks = np.geomspace(0.5, 20, 20)
    one = CoefficientM.constant(1.0)
    rep = distinguishability_test(one, CoefficientM.constant(1.1), ks)
    assert rep.max_separation > 1e-2 and not rep.identical
    same = distinguishability_test(one, CoefficientM.constant(1.0), ks)
    assert same.max_separation == 0.0 and same.identical
    assert np.all(same.functional == 0.0)


def test_separation_monotone_in_norm():
    ks = np.geomspace(0.5, 20, 10)
    one = CoefficientM.constant(1.0)
    seps = [distinguishability_test(one, CoefficientM.constant(1 + d), ks).max_separation
            for d in (0.01, 0.05, 0.2, 1.0)]
    assert np.all(np.diff(seps) > 0)


@given(st.floats(0.25, 4.0), st.floats(0.25, 4.0), st.floats(0.2, 0.8), st.floats(0.05, 1.0))
@settings(max_examples=20, deadline=None)
def test_distinct_pairs_separate(v1, v2, xb, shift):
    q1 = CoefficientM.piecewise_constant([0, xb, 1], [v1, v2], c0=0.25, c1=5.0)
    q2 = CoefficientM.piecewise_constant([0, xb, 1], [v1, min(v2 + shift, 5.0)], c0=0.25, c1=5.0)
    rep = distinguishability_test(q1, q2, np.geomspace(0.5, 20, 12))
    assert not rep.identical and rep.max_separation > 1e-4
