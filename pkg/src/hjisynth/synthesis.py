"""Policy iteration for the HJB and HJI equations, feedback extraction and
bisection on the attenuation level."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .basis import MonomialBasis, eval_basis, eval_basis_gradient
from .galerkin import COND_WARN, ControlSystem, GalerkinSystem, IntegralTables, PolicyEvaluationError, build_tables
from .separable import Hyperrectangle

log = logging.getLogger(__name__)

INF = math.inf
DIVERGENCE_BOUND = 1e12


class ConvergenceError(RuntimeError):
    pass


class BracketError(ValueError):
    pass


@dataclass
class SynthesisConfig:
    epsilon: float = 1e-6
    max_outer: int = 200
    max_inner: int = 200
    gamma: float = INF
    # linear gain K0 (u0 = K0 x), or "small" for -0.01 g(0)^t, or "lqr"
    initial_control: object = "small"
    # run the disturbance loop on the first pass too (the initial control may
    # not stabilize the disturbed system)
    disturb_first_pass: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive (use math.inf for HJB)")


@dataclass
class PolicyIterationReport:
    outer_iterations: int = 0
    total_inner_iterations: int = 0
    update_norms: list = field(default_factory=list)
    inner_norms: list = field(default_factory=list)
    converged: bool = False
    failure: str | None = None
    condition_warnings: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def total_iterations(self) -> int:
        # control updates plus every policy evaluation inside the disturbance loop
        return self.outer_iterations + self.total_inner_iterations

    def as_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "total_inner_iterations": self.total_inner_iterations,
            "total_iterations": self.total_iterations,
            "update_norms": [float(x) for x in self.update_norms],
            "converged": self.converged,
            "failure": self.failure,
            "condition_warnings": [float(x) for x in self.condition_warnings],
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True, eq=False)
class ValueFunction:
    basis: MonomialBasis
    c: np.ndarray
    domain: Hyperrectangle
    gamma_used: float = INF

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.shape != (self.basis.n,):
            raise ValueError(f"coefficient vector has length {c.shape}, basis has {self.basis.n}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def __call__(self, x):
        return eval_basis(self.basis, x) @ self.c

    def gradient(self, x) -> np.ndarray:
        return np.einsum("...id,i->...d", eval_basis_gradient(self.basis, x), self.c)


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """``u = -1/2 R^{-1} g^t DV`` or ``w = 1/(2 gamma^2) P^{-1} h^t DV``."""

    kind: str
    value_function: ValueFunction
    weight: np.ndarray
    system: ControlSystem
    gamma: float = INF

    @cached_property
    def _weight_inv(self) -> np.ndarray:
        return np.linalg.inv(self.weight)

    @cached_property
    def _fixed_channel(self) -> np.ndarray | None:
        cols = self.system.g if self.kind == "control" else self.system.h
        if cols and all(c.is_constant for c in cols):
            return self._channel(np.zeros(self.system.d))
        return None

    def _channel(self, x) -> np.ndarray:
        return self.system.g_eval(x) if self.kind == "control" else self.system.h_eval(x)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind != "control" and (math.isinf(self.gamma) or not self.system.p):
            return np.zeros(x.shape[:-1] + (self.system.p,))
        DV = self.value_function.gradient(x)
        B = self._fixed_channel if self._fixed_channel is not None else self._channel(x)
        if self.kind == "control":
            return -0.5 * np.einsum("ab,...db,...d->...a", self._weight_inv, B, DV)
        C = B
        return np.einsum("ab,...db,...d->...a", self._weight_inv, C, DV) / (2 * self.gamma**2)


def feedback_control(V: ValueFunction, sys: ControlSystem) -> FeedbackLaw:
    return FeedbackLaw("control", V, sys.R, sys)


def feedback_disturbance(V: ValueFunction, sys: ControlSystem, gamma: float) -> FeedbackLaw:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return FeedbackLaw("disturbance", V, sys.P, sys, gamma)


def linearize(sys: ControlSystem, step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian of ``f`` and value of ``g`` at the origin (central differences)."""
    d = sys.d
    E = np.eye(d) * step
    A = (sys.f_eval(E) - sys.f_eval(-E)).T / (2 * step)
    return A, sys.g_eval(np.zeros(d))


def initial_gain(sys: ControlSystem, spec) -> np.ndarray:
    """Resolve ``SynthesisConfig.initial_control`` into a gain matrix ``K0``."""
    if isinstance(spec, str):
        A, B = linearize(sys)
        if spec == "small":
            return -0.01 * B.T
        if spec == "lqr":
            # l(x) ~ x^t Q x near the origin, so Q is half the Hessian
            Q = 0.5 * _ell_hessian(sys)
            X = sla.solve_continuous_are(A, B, Q, sys.R)
            return -np.linalg.solve(sys.R, B.T @ X)
        raise ValueError(f"unknown initial control {spec!r}")
    K = np.atleast_2d(np.asarray(spec, dtype=float))
    if K.shape != (sys.m, sys.d):
        raise ValueError(f"initial gain must have shape {(sys.m, sys.d)}")
    return K


def _ell_hessian(sys: ControlSystem, step: float = 1e-4) -> np.ndarray:
    d = sys.d
    E = np.eye(d) * step
    Q = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            Q[i, j] = (
                sys.ell_eval(E[i] + E[j]) - sys.ell_eval(E[i] - E[j]) - sys.ell_eval(E[j] - E[i]) + sys.ell_eval(-E[i] - E[j])
            ) / (4 * step**2)
    Q = 0.5 * (Q + Q.T)
    w, U = np.linalg.eigh(Q)
    return (U * np.maximum(w, 1e-8 * max(1.0, w.max()))) @ U.T


def hji_policy_iteration(sys: ControlSystem, basis: MonomialBasis, cfg: SynthesisConfig,
                         tables: IntegralTables | None = None) -> tuple[ValueFunction, PolicyIterationReport]:
    """Nested policy iteration: inner loop on the disturbance, outer on the control.

    The inner loop restarts from ``w = 0`` on every outer pass.  The initial
    linear control is only assumed to stabilize the undisturbed system, so the
    first pass evaluates it with ``w = 0`` alone; the disturbance loop starts
    once the control comes from a value function.  Stopping uses the
    Euclidean norm of successive coefficient vectors in both loops.
    With ``gamma = inf`` or no disturbance channel this is plain policy
    iteration for the HJB equation.
    """
    t0 = time.perf_counter()
    tab = tables if tables is not None else build_tables(sys, basis)
    gs = GalerkinSystem(tab)
    gamma = cfg.gamma
    eps = cfg.epsilon
    robust = sys.has_disturbance and not math.isinf(gamma)
    zero_w = [tab.disturbance_policy(np.zeros(basis.n), INF)[k] for k in range(sys.p)]
    u_pol = tab.linear_policy(initial_gain(sys, cfg.initial_control))
    report = PolicyIterationReport()
    # the initial linear policy has no value function; measure the first update from V = 0
    c_outer = np.zeros(basis.n)
    c = np.zeros(basis.n)

    for i in range(cfg.max_outer):
        w_pol = zero_w
        c_inner = None
        inner_ok = False
        for j in range(cfg.max_inner):
            try:
                c = gs.solve(u_pol, w_pol, gamma)
            except PolicyEvaluationError as exc:
                report.failure = f"singular policy evaluation (outer {i}, inner {j}): {exc}"
                break
            report.total_inner_iterations += 1
            if not np.all(np.isfinite(c)) or np.max(np.abs(c)) > DIVERGENCE_BOUND:
                report.failure = f"diverged (outer {i}, inner {j})"
                break
            if not robust or (i == 0 and not cfg.disturb_first_pass):
                inner_ok = True
                break
            if c_inner is not None:
                dn = float(np.linalg.norm(c - c_inner))
                report.inner_norms.append(dn)
                if dn < eps:
                    inner_ok = True
                    break
            c_inner = c
            w_pol = tab.disturbance_policy(c, gamma)
        report.outer_iterations = i + 1
        if not inner_ok:
            if report.failure is None:
                report.failure = f"inner loop did not converge in {cfg.max_inner} iterations (outer {i})"
            break
        norm = float(np.linalg.norm(c - c_outer))
        report.update_norms.append(norm)
        if norm < eps:
            report.converged = True
            break
        c_outer = c
        u_pol = tab.control_policy(c)
    else:
        report.failure = f"outer loop did not converge in {cfg.max_outer} iterations"

    report.condition_warnings = list(gs.condition_warnings)
    if report.condition_warnings:
        log.warning("%d policy evaluations had condition number above %.0e (max %.3g)",
                    len(report.condition_warnings), COND_WARN, max(report.condition_warnings))
    report.wall_time = time.perf_counter() - t0
    V = ValueFunction(basis, c if np.all(np.isfinite(c)) else np.zeros(basis.n), sys.domain, gamma)
    return V, report


def hjb_policy_iteration(sys: ControlSystem, basis: MonomialBasis, cfg: SynthesisConfig,
                         tables: IntegralTables | None = None) -> tuple[ValueFunction, PolicyIterationReport]:
    cfg = dataclasses.replace(cfg, gamma=INF)
    return hji_policy_iteration(sys, basis, cfg, tables)


def default_test_states(sys: ControlSystem, count: int = 4, scale: float = 0.5, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    half = 0.5 * (sys.domain.hi - sys.domain.lo)
    mid = 0.5 * (sys.domain.hi + sys.domain.lo)
    return mid + scale * half * rng.uniform(-1, 1, size=(count, sys.d))


def stabilization_check(sys: ControlSystem, u_law, initial_states, horizon: float = 10.0,
                        decay_tol: float = 0.1, dt: float | None = 1e-2) -> bool:
    """True iff every ``w = 0`` closed-loop trajectory stays in the domain and
    its norm at ``horizon`` is below ``decay_tol`` times the initial norm."""
    from .closed_loop import ZERO_SIGNAL, simulate

    lo, hi = sys.domain.lo, sys.domain.hi
    for x0 in np.atleast_2d(np.asarray(initial_states, dtype=float)):
        n0 = np.linalg.norm(x0)
        if n0 == 0:
            continue
        try:
            traj = simulate(sys, u_law, ZERO_SIGNAL, x0, horizon, dt, blowup_factor=1.0)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError):
            return False
        if traj.blew_up:
            return False
        X = traj.states
        if np.any(X < lo) or np.any(X > hi):
            return False
        if not np.linalg.norm(X[-1]) < decay_tol * n0:
            return False
    return True


@dataclass
class GammaProbe:
    gamma: float
    converged: bool
    stabilizing: bool | None  # None when the check was skipped
    iterations: int
    failure: str | None

    @property
    def feasible(self) -> bool:
        return self.converged and self.stabilizing is not False


@dataclass
class GammaStarResult:
    gamma_star: float
    lo: float
    hi: float
    trace: list[GammaProbe]
    warning: str | None = None

    def __float__(self) -> float:
        return self.gamma_star


def estimate_gamma_star(sys: ControlSystem, basis: MonomialBasis, cfg: SynthesisConfig,
                        bracket: tuple[float, float] = (1e-3, 10.0), bisect_tol: float = 1e-3,
                        initial_states=None, horizon: float = 10.0, decay_tol: float = 0.1,
                        tables: IntegralTables | None = None, dt: float | None = 1e-2,
                        check_stability: bool = True) -> GammaStarResult:
    """Bisection for the smallest gamma at which policy iteration converges to a
    stabilizing feedback.  ``bisect_tol`` is relative to the upper end.
    With ``check_stability=False`` convergence alone decides feasibility."""
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    tab = tables if tables is not None else build_tables(sys, basis)
    states = default_test_states(sys) if initial_states is None else initial_states
    trace: list[GammaProbe] = []

    def probe(gamma: float) -> GammaProbe:
        c = dataclasses.replace(cfg, gamma=gamma)
        V, rep = hji_policy_iteration(sys, basis, c, tab)
        stab = None if not check_stability else False
        if rep.converged and check_stability:
            stab = stabilization_check(sys, feedback_control(V, sys), states, horizon, decay_tol, dt)
        pr = GammaProbe(gamma, rep.converged, stab, rep.total_iterations, rep.failure)
        log.info("gamma=%.6g converged=%s stabilizing=%s", gamma, pr.converged, pr.stabilizing)
        trace.append(pr)
        return pr

    if not probe(hi).feasible:
        raise BracketError(f"upper bracket gamma={hi} is infeasible")
    if probe(lo).feasible:
        msg = f"lower bracket gamma={lo} is feasible; widen the bracket"
        warnings.warn(msg, stacklevel=2)
        return GammaStarResult(lo, lo, hi, trace, msg)
    while hi - lo > bisect_tol * hi:
        mid = 0.5 * (lo + hi)
        if probe(mid).feasible:
            hi = mid
        else:
            lo = mid
    return GammaStarResult(0.5 * (lo + hi), lo, hi, trace)
