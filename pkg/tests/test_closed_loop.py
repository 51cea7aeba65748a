import csv
import math

import numpy as np
import pytest

from hjisynth import closed_loop as cl
from hjisynth.galerkin import ControlSystem
from hjisynth.pde import burgers_nosource, discretize
from hjisynth.separable import Hyperrectangle, SeparableMap, SeparableScalar, monomial


def scalar_system(a=-1.0, h=1.0, cubic=False):
    terms = [(a, {0: monomial(1)})] + ([(-1.0, {0: monomial(3)})] if cubic else [])
    f = SeparableMap((SeparableScalar.from_sparse(1, terms),))
    return ControlSystem(
        f, (SeparableMap.constant_vector([1.0]),), (SeparableMap.constant_vector([h]),),
        SeparableScalar.from_sparse(1, [(1.0, {0: monomial(2)})]), np.eye(1), np.eye(1), Hyperrectangle.cube(1, 2.0),
    )


def zero_law(x):
    return np.zeros(1)


def test_linear_decay():
    tr = cl.simulate(scalar_system(), zero_law, cl.ZERO_SIGNAL, [1.0], 5.0, 1e-3)
    assert tr.states[-1, 0] == pytest.approx(math.exp(-5.0), abs=1e-6)
    assert tr.horizon == pytest.approx(5.0)
    assert not tr.blew_up


def test_origin_stays_put():
    tr = cl.simulate(scalar_system(a=1.0), lambda x: -3 * x[:1], cl.ZERO_SIGNAL, [0.0], 2.0)
    np.testing.assert_array_equal(tr.states, 0.0)


def _forced_exact(t, x0=1.0):
    # x' = -x + sin(3t)
    return math.exp(-t) * (x0 + 0.3) + (math.sin(3 * t) - 3 * math.cos(3 * t)) / 10


def test_rk4_order():
    sys = scalar_system(a=-1.0)
    sig = cl.DisturbanceSignal.sinusoid(1.0, 3.0)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        tr = cl.simulate(sys, zero_law, sig, [1.0], 2.0, dt, auto_step=False)
        errs.append(abs(tr.states[-1, 0] - _forced_exact(2.0)))
    assert errs[0] / errs[1] >= 14 and errs[1] / errs[2] >= 14


def test_step_is_shrunk_for_stiff_loops():
    sys = scalar_system(a=-1.0)
    dt = cl.stable_step(sys, lambda x: -5000 * x[:1], np.array([1.0]), 1e-3)
    assert dt * 5001 == pytest.approx(1.0, rel=1e-3)


def test_blowup_detection():
    tr = cl.simulate(scalar_system(a=0.0, cubic=False), zero_law, cl.DisturbanceSignal.constant(100.0), [0.0], 5.0)
    assert tr.blew_up and tr.horizon < 5.0
    assert np.max(np.abs(tr.states[-1])) > 20.0
    assert cl.verdict(tr) == cl.BLOWUP
    assert math.isinf(cl.cost_integral(tr, scalar_system()).total_J)


def test_disturbance_signals():
    s = cl.DisturbanceSignal.sinusoid(0.1, 10.0)
    assert s(0.3)[0] == pytest.approx(0.1 * math.sin(3.0))
    wc = cl.piecewise_wc()
    assert wc(0.0)[0] == 30 and wc(0.0999)[0] == 30
    assert wc(0.1)[0] == 10 and wc(0.5)[0] == 10
    assert wc(0.5000001)[0] == 0.5 and wc(7.0)[0] == 0.5
    rep = cl.DisturbanceSignal.replay([0.0, 1.0], [0.0, 2.0], kappa=-0.5)
    assert rep(0.5)[0] == pytest.approx(-0.5) and rep(3.0)[0] == pytest.approx(-1.0)
    comp = cl.DisturbanceSignal.composite(cl.DisturbanceSignal.feedback(lambda x: 2 * x[:1]), 0.9, 1.0, 2.0)
    assert comp(0.25, np.array([1.0]))[0] == pytest.approx(1.8 + math.sin(0.5))
    with pytest.raises(ValueError):
        cl.DisturbanceSignal.piecewise([1.0, 0.5], [0, 1, 2])


def test_norm_series_and_costs():
    ds = discretize(burgers_nosource(1), 6)
    zero = cl.Trajectory(np.linspace(0, 1, 11), np.zeros((11, 6)), np.zeros((11, 1)), np.zeros((11, 1)))
    np.testing.assert_array_equal(cl.l2_norm_series(zero, ds.grid), 0.0)
    c = cl.cost_integral(zero, ds.system)
    assert c.state_cost == c.control_cost == c.total_J == 0.0
    ones = cl.Trajectory(np.linspace(0, 1, 3), np.ones((3, 6)), np.zeros((3, 1)), np.zeros((3, 1)))
    np.testing.assert_allclose(cl.l2_norm_series(ones, ds.grid), ds.grid.interior_weights.sum())
    tr = cl.simulate(scalar_system(), zero_law, cl.ZERO_SIGNAL, [1.0], 2.0)
    series = cl.l2_norm_series(tr, np.ones(1))
    assert np.all(np.diff(series) < 0)


def test_cost_integral_against_closed_form():
    # x' = -x with u = 0: int_0^T x^2 = (1 - e^{-2T})/2
    sys = scalar_system()
    tr = cl.simulate(sys, zero_law, cl.ZERO_SIGNAL, [1.0], 3.0, 1e-3)
    assert cl.cost_integral(tr, sys).state_cost == pytest.approx((1 - math.exp(-6)) / 2, rel=1e-6)


def test_cost_is_additive_over_time_splits():
    sys = scalar_system(a=0.5)
    law = lambda x: -2.0 * x[:1]  # noqa: E731
    full = cl.simulate(sys, law, cl.DisturbanceSignal.constant(0.3), [1.0], 2.0, 1e-3, auto_step=False)
    half = len(full) // 2
    parts = [cl.Trajectory(full.times[s], full.states[s], full.controls[s], full.disturbances[s])
             for s in (slice(0, half + 1), slice(half, None))]
    for g in (math.inf, 1.5):
        tot = cl.cost_integral(full, sys, g)
        a, b = (cl.cost_integral(p, sys, g) for p in parts)
        assert a.total_J + b.total_J == pytest.approx(tot.total_J, rel=1e-12)
    assert cl.cost_integral(full, sys, 1.5).disturbance_credit > 0


def test_record_and_replay_fidelity():
    sys = scalar_system(a=0.5)
    law = lambda x: -2.0 * x[:1]  # noqa: E731
    rec = cl.record_feedback_signal(sys, law, [1.0], 2.0, 1e-3)
    tr = cl.simulate(sys, law, cl.ZERO_SIGNAL, [1.0], 2.0, 1e-3)
    np.testing.assert_allclose(rec.values[:, 0], tr.controls[:, 0])
    replay = rec.as_disturbance()
    # replay the recorded control as an open-loop input through the control channel
    open_loop = cl.simulate(sys, lambda x: np.zeros(1), cl.ZERO_SIGNAL, [1.0], 2.0, 1e-3)
    assert open_loop.states[-1, 0] > tr.states[-1, 0]
    mid = tr.times[len(tr) // 2]
    assert replay(mid)[0] == pytest.approx(tr.controls[len(tr) // 2, 0])
    zero = cl.record_feedback_signal(sys, zero_law, [1.0], 1.0)
    np.testing.assert_array_equal(zero.values, 0.0)
    still = cl.record_feedback_signal(sys, law, [0.0], 1.0)
    np.testing.assert_array_equal(still.values, 0.0)


def test_compare_reports_tie_for_identical_laws(tmp_path):
    sys = scalar_system()
    law = lambda x: -x[:1]  # noqa: E731
    sc = [cl.Scenario("a", np.array([1.0])), cl.Scenario("b", np.array([-0.5]), cl.DisturbanceSignal.sinusoid(0.1, 5))]
    rep = cl.compare_hjb_hji(sys, law, law, sc, 10.0, 1e-2, weights=np.ones(1), jobs=2)
    assert [r.winner for r in rep.results] == ["tie", "tie"]
    assert rep.results[0].hjb.verdict == rep.results[0].hji.verdict == cl.STABILIZED
    rows = rep.rows()
    path = cl.write_rows_csv(tmp_path / "cmp.csv", rows)
    with path.open() as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_compare_serial_equals_parallel():
    sys = scalar_system(a=0.5)
    sc = [cl.Scenario(str(k), np.array([0.1 * k]), cl.DisturbanceSignal.constant(0.2)) for k in range(1, 5)]
    laws = (lambda x: -x[:1], lambda x: -3 * x[:1])
    r1 = cl.compare_hjb_hji(sys, *laws, sc, 1.0, 1e-2, jobs=1).rows()
    r4 = cl.compare_hjb_hji(sys, *laws, sc, 1.0, 1e-2, jobs=4).rows()
    assert r1 == r4


def test_trajectory_csv_columns(tmp_path):
    ds = discretize(burgers_nosource(1), 6)
    x0 = ds.initial_state()
    tr = cl.simulate(ds.system, lambda x: np.zeros(1), cl.ZERO_SIGNAL, x0, 0.05)
    path = cl.write_trajectory_csv(tmp_path / "t.csv", tr, ds.system)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t"] + [f"x_{i}" for i in range(1, 7)] + ["u", "w", "running_cost"]
    assert len(rows) == len(tr) + 1
    assert len(rows[1]) == 1 + 6 + 3


def test_verdict_thresholds():
    t = np.linspace(0, 1, 3)
    mk = lambda end: cl.Trajectory(t, np.array([[1.0], [0.5], [end]]), np.zeros((3, 1)), np.zeros((3, 1)))  # noqa: E731
    assert cl.verdict(mk(1e-3)) == cl.STABILIZED
    assert cl.verdict(mk(0.5)) == cl.NOT_STABILIZED
