import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hjisynth import closed_loop as cl
from hjisynth.basis import basis_cardinality, enumerate_basis, eval_basis, eval_basis_gradient
from hjisynth.galerkin import ControlSystem, assemble_F, build_tables
from hjisynth.pde import chebyshev_grid, clenshaw_curtis_weights, differentiation_matrix
from hjisynth.separable import (
    Hyperrectangle,
    SeparableMap,
    SeparableScalar,
    eval_factor,
    eval_separable,
    monomial,
    scaled_exponential,
)
from hjisynth.synthesis import ValueFunction

finite = st.floats(-2, 2, allow_nan=False)
SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(st.integers(1, 8), st.integers(1, 6))
def test_cardinality_is_binomial(d, M):
    assert basis_cardinality(d, M) == math.comb(d + M, M) - 1
    b = enumerate_basis(d, M)
    degrees = [sum(mi) for mi in b.indices]
    assert degrees == sorted(degrees)
    assert len(set(b.indices)) == b.n


@SETTINGS
@given(st.integers(1, 4), st.integers(1, 5), st.data())
def test_gradient_matches_finite_difference(d, M, data):
    b = enumerate_basis(d, M)
    x = np.array(data.draw(st.lists(st.floats(-1.5, 1.5), min_size=d, max_size=d)))
    G = eval_basis_gradient(b, x)
    h = 1e-5
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        fd = (eval_basis(b, x + e) - eval_basis(b, x - e)) / (2 * h)
        np.testing.assert_allclose(G[:, k], fd, atol=1e-6 * max(1.0, np.abs(fd).max()))


@SETTINGS
@given(st.lists(st.tuples(st.floats(-3, 3), st.integers(0, 4), st.floats(-1, 1)), min_size=1, max_size=3),
       st.lists(finite, min_size=3, max_size=3))
def test_separable_is_product_of_factors(spec, x):
    x = np.array(x)
    factors = {k: scaled_exponential(c, r, p) for k, (c, p, r) in enumerate(spec)}
    s = SeparableScalar.from_sparse(3, [(1.0, factors)])
    expected = np.prod([eval_factor(f, x[k]) for k, f in factors.items()])
    assert eval_separable(s, x) == np.float64(expected) or math.isclose(eval_separable(s, x), expected, rel_tol=1e-12,
                                                                          abs_tol=1e-300)


@SETTINGS
@given(st.integers(1, 14), st.data())
def test_differentiation_exact_for_random_polynomials(d, data):
    g = chebyshev_grid(d)
    coef = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=d + 2, max_size=d + 2)))
    p = np.polynomial.Polynomial(coef)
    x = g.full_nodes
    np.testing.assert_allclose(differentiation_matrix(g) @ p(x), p.deriv()(x), atol=1e-10 * (1 + np.abs(coef).sum()) * d**2)


@SETTINGS
@given(st.integers(1, 40))
def test_clenshaw_curtis_weights_positive_and_sum(N):
    w = clenshaw_curtis_weights(N)
    assert np.all(w > 0)
    assert math.isclose(w.sum(), 2.0, rel_tol=1e-13)
    np.testing.assert_allclose(w, w[::-1], atol=1e-15)


def _linear_system(a):
    f = SeparableMap((SeparableScalar.from_sparse(1, [(a, {0: monomial(1)})]),))
    return ControlSystem(f, (SeparableMap.constant_vector([1.0]),), (),
                         SeparableScalar.from_sparse(1, [(1.0, {0: monomial(2)})]), np.eye(1), np.zeros((0, 0)),
                         Hyperrectangle.cube(1, 1.0))


@SETTINGS
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), st.integers(1, 6))
def test_drift_matrix_is_linear_in_f(a, M):
    b = enumerate_basis(1, M)
    F1 = assemble_F(build_tables(_linear_system(1.0), b))
    Fa = assemble_F(build_tables(_linear_system(a), b))
    np.testing.assert_allclose(Fa, a * F1, rtol=1e-12, atol=1e-14)


@SETTINGS
@given(arrays(np.float64, 9, elements=st.floats(-1e6, 1e6)), st.floats(0.01, 100))
def test_value_function_round_trip_is_bitwise(tmp_path_factory, c, gamma):
    from hjisynth.io import load_value_function, save_value_function

    V = ValueFunction(enumerate_basis(3, 2), c, Hyperrectangle.cube(3, 2.0), gamma)
    path = tmp_path_factory.mktemp("v") / "v.hjv"
    W = load_value_function(save_value_function(V, path))
    assert W.c.tobytes() == V.c.tobytes() and W.gamma_used == gamma


@SETTINGS
@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=5, unique=True), st.data())
def test_piecewise_signal_is_right_continuous(bps, data):
    bps = sorted(bps)
    vals = data.draw(st.lists(st.floats(-5, 5), min_size=len(bps) + 1, max_size=len(bps) + 1))
    sig = cl.DisturbanceSignal.piecewise(bps, vals)
    assert sig(0.0)[0] == vals[0]
    for i, b in enumerate(bps):
        assert sig(b)[0] == vals[i + 1]
        assert sig(np.nextafter(b, -np.inf))[0] == vals[i]


@SETTINGS
@given(st.floats(-3, 2), st.floats(0.1, 1.0))
def test_linear_simulation_matches_exponential(a, x0):
    # stays below the blow-up guard (10 x the unit half-width)
    sys = _linear_system(a)
    tr = cl.simulate(sys, lambda x: np.zeros(1), cl.ZERO_SIGNAL, [x0], 1.0, 1e-3)
    assert math.isclose(tr.states[-1, 0], x0 * math.exp(a), rel_tol=1e-9)


@SETTINGS
@given(st.floats(0.1, 5), st.floats(-2, 2), st.floats(0.5, 3))
def test_cost_scales_quadratically_with_initial_state(scale, a_neg, T):
    sys = _linear_system(-abs(a_neg) - 0.1)
    law = lambda x: -0.5 * x[:1]  # noqa: E731
    base = cl.cost_integral(cl.simulate(sys, law, cl.ZERO_SIGNAL, [1.0], T, 1e-2), sys).total_J
    scaled = cl.cost_integral(cl.simulate(sys, law, cl.ZERO_SIGNAL, [scale], T, 1e-2), sys).total_J
    assert math.isclose(scaled, scale**2 * base, rel_tol=1e-9)
