import math
import warnings

import numpy as np
import pytest

from hjisynth.pde import (
    PRESETS,
    InitialCondition,
    ParabolicProblem,
    apply_boundary_conditions,
    burgers_nosource,
    burgers_source,
    chebyshev_grid,
    clenshaw_curtis_weights,
    differentiation_matrix,
    discretize,
    indicator_vector,
    make_problem,
)
from hjisynth.separable import Interval


def test_grid_nodes():
    assert chebyshev_grid(1).nodes == pytest.approx([0.0], abs=1e-15)
    r = math.sqrt(2) / 2
    np.testing.assert_allclose(chebyshev_grid(3).nodes, [-r, 0.0, r], atol=1e-15)
    for d in range(1, 12):
        x = chebyshev_grid(d).nodes
        np.testing.assert_allclose(x, -x[::-1], atol=1e-15)
        assert np.all(np.diff(x) > 0)


def test_grid_on_other_interval():
    g = chebyshev_grid(4, Interval(0.0, 2.0))
    assert g.full_nodes[0] == pytest.approx(0.0) and g.full_nodes[-1] == pytest.approx(2.0)
    assert g.quad_weights.sum() == pytest.approx(2.0)


def test_clenshaw_curtis_weights_integrate_polynomials():
    for N in (2, 5, 8, 13):
        w = clenshaw_curtis_weights(N)
        x = -np.cos(np.pi * np.arange(N + 1) / N)
        for k in range(N + 1):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert w @ x**k == pytest.approx(exact, abs=1e-13)


@pytest.mark.parametrize("d", [1, 3, 6, 12])
def test_differentiation_exact_on_polynomials(d):
    g = chebyshev_grid(d)
    D = differentiation_matrix(g)
    x = g.full_nodes
    np.testing.assert_allclose(D @ np.ones_like(x), 0.0, atol=1e-12)
    np.testing.assert_allclose(D @ x, 1.0, atol=1e-12)
    for k in range(2, d + 2):
        np.testing.assert_allclose(D @ x**k, k * x ** (k - 1), atol=1e-10)


def test_dirichlet_reduction_is_interior_block():
    g = chebyshev_grid(3)
    D = differentiation_matrix(g)
    A, Dr = apply_boundary_conditions(D @ D, D, g, "dirichlet")
    np.testing.assert_allclose(A, (D @ D)[1:-1, 1:-1])
    np.testing.assert_allclose(Dr, D[1:-1, 1:-1])


def test_dirichlet_laplacian_eigenfunction():
    g = chebyshev_grid(12)
    D = differentiation_matrix(g)
    A, _ = apply_boundary_conditions(D @ D, D, g, "dirichlet")
    s = np.sin(np.pi * g.nodes)
    np.testing.assert_allclose(A @ s, -np.pi**2 * s, atol=1e-6 * np.pi**2)


def test_neumann_kernel_contains_constants():
    g = chebyshev_grid(8)
    D = differentiation_matrix(g)
    A, Dr = apply_boundary_conditions(D @ D, D, g, "neumann")
    np.testing.assert_allclose(A @ np.ones(8), 0.0, atol=1e-10)
    np.testing.assert_allclose(Dr @ np.ones(8), 0.0, atol=1e-10)


def test_neumann_reconstruction_has_zero_end_slopes():
    ds = discretize(make_problem("test3_cubic_channel"), 7)
    x = np.random.default_rng(0).normal(size=7)
    full = ds.full_state(x)
    D = differentiation_matrix(ds.grid)
    slopes = D @ full
    assert abs(slopes[0]) < 1e-10 and abs(slopes[-1]) < 1e-10


def test_indicator_examples():
    g = chebyshev_grid(3)
    np.testing.assert_array_equal(indicator_vector(g, Interval(-1, 1)), np.ones(3))
    np.testing.assert_array_equal(indicator_vector(g, Interval(0.5, 0.8)), [0, 0, 1])
    with pytest.warns(UserWarning):
        v = indicator_vector(g, Interval(-1.0, -0.9))
    np.testing.assert_array_equal(v, 0.0)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_has_origin_equilibrium(name):
    ds = discretize(make_problem(name), 6)
    np.testing.assert_allclose(ds.system.f_eval(np.zeros(6)), 0.0, atol=1e-15)


def test_running_cost_of_ones_is_interval_length():
    # the cost weights are the interior Clenshaw-Curtis weights; the two end
    # weights are 1/(N^2 - 1) each for even N = d + 1
    ds = discretize(burgers_nosource(1), 9)
    assert ds.system.ell_eval(np.ones(9)) == pytest.approx(2.0 - 2.0 / 99.0, rel=1e-13)
    assert ds.grid.quad_weights.sum() == pytest.approx(2.0, abs=1e-14)


def test_separability_term_counts():
    d = 6
    # advection contributes d terms per row and the linear part d terms (dense A)
    assert discretize(burgers_source(), d).system.f.n_f == 2 * d + 1
    assert discretize(burgers_nosource(1), d).system.f.n_f == 2 * d


@pytest.mark.parametrize("name", sorted(PRESETS))
@pytest.mark.filterwarnings("ignore:support")
def test_separable_drift_matches_dense(name):
    ds = discretize(make_problem(name), 5)
    X = np.random.default_rng(3).uniform(-2, 2, size=(20, 5))
    sys = ds.system
    for x in X:
        dense = ds.rhs_dense(x, u=0.3, w=-0.7)
        sep = sys.f_eval(x) + sys.g_eval(x)[:, 0] * 0.3 + sys.h_eval(x)[:, 0] * -0.7
        np.testing.assert_allclose(sep, dense, rtol=1e-12, atol=1e-12)


def test_initial_conditions():
    xi = np.array([-0.5, 0.0, 0.5])
    np.testing.assert_array_equal(InitialCondition("sign")(xi), [-1, 0, 1])
    np.testing.assert_allclose(InitialCondition("bump", 3.0)(np.array([0.0])), [3.0])
    np.testing.assert_allclose(InitialCondition("zeldovich")(np.array([0.0])), [1.0])
    np.testing.assert_array_equal(InitialCondition("zero")(xi), 0.0)
    with pytest.raises(ValueError):
        InitialCondition("nope")(xi)


def test_problem_validation():
    with pytest.raises(ValueError):
        ParabolicProblem(sigma=0.0)
    with pytest.raises(ValueError):
        ParabolicProblem(sigma=1.0, reaction="logistic")
    with pytest.raises(ValueError):
        ParabolicProblem(sigma=1.0, control_support=Interval(-2.0, 0.0))
    with pytest.raises(ValueError):
        make_problem("test9")


def test_support_cases_change_channels():
    d = 6
    b1 = discretize(burgers_nosource(1), d)
    b3 = discretize(burgers_nosource(3), d)
    np.testing.assert_array_equal(b1.B, 1.0)
    np.testing.assert_array_equal(b3.C, 1.0)
    assert b1.C.sum() < d and b3.B.sum() < d
