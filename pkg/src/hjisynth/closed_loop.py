"""Closed-loop simulation, cost functionals and HJB/HJI comparisons."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .galerkin import ControlSystem

INF = math.inf
DEFAULT_DT = 1e-3
BLOWUP_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class DisturbanceSignal:
    """Time signal ``w(t)`` (optionally state dependent through a feedback law).

    kinds: ``zero``, ``sinusoid`` (eta sin(omega t)), ``piecewise_constant``,
    ``feedback_replay`` (recorded series, held past its end), ``feedback``
    (a live law of the state) and ``composite`` (kappa * base + eta sin(omega t)).
    """

    kind: str = "zero"
    eta: float = 0.0
    omega: float = 0.0
    breakpoints: tuple = ()
    values: tuple = ()
    times: np.ndarray | None = None
    series: np.ndarray | None = None
    law: Callable | None = None
    kappa: float = 1.0
    base: "DisturbanceSignal | None" = None
    label: str = ""

    def __post_init__(self):
        if self.kind == "piecewise_constant":
            b = np.asarray(self.breakpoints, dtype=float)
            if len(self.values) != len(b) + 1:
                raise ValueError("piecewise signal needs one more value than breakpoints")
            if np.any(np.diff(b) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
        elif self.kind == "feedback_replay":
            if self.times is None or self.series is None or len(self.times) != len(self.series):
                raise ValueError("replay needs matching times and series")
        elif self.kind == "feedback":
            if not callable(self.law):
                raise ValueError("feedback signal needs a law")
        elif self.kind == "composite":
            if self.base is None:
                raise ValueError("composite signal needs a base signal")
        elif self.kind not in ("zero", "sinusoid"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")

    @classmethod
    def sinusoid(cls, eta: float, omega: float) -> "DisturbanceSignal":
        return cls("sinusoid", eta=eta, omega=omega, label=f"{eta:g}sin({omega:g}t)")

    @classmethod
    def constant(cls, value: float) -> "DisturbanceSignal":
        return cls("piecewise_constant", values=(float(value),), label=f"const{value:g}")

    @classmethod
    def piecewise(cls, breakpoints, values) -> "DisturbanceSignal":
        return cls("piecewise_constant", breakpoints=tuple(breakpoints), values=tuple(values))

    @classmethod
    def replay(cls, times, series, kappa: float = 1.0) -> "DisturbanceSignal":
        return cls("feedback_replay", times=np.asarray(times, float), series=np.asarray(series, float), kappa=kappa)

    @classmethod
    def feedback(cls, law: Callable, kappa: float = 1.0) -> "DisturbanceSignal":
        return cls("feedback", law=law, kappa=kappa)

    @classmethod
    def composite(cls, base: "DisturbanceSignal", kappa: float, eta: float, omega: float) -> "DisturbanceSignal":
        return cls("composite", base=base, kappa=kappa, eta=eta, omega=omega)

    def __call__(self, t: float, x=None) -> np.ndarray:
        k = self.kind
        if k == "zero":
            return np.zeros(1)
        if k == "sinusoid":
            return np.atleast_1d(self.eta * math.sin(self.omega * t))
        if k == "piecewise_constant":
            # value i on [b_{i-1}, b_i)
            i = int(np.searchsorted(np.asarray(self.breakpoints, float), t, side="right"))
            return np.atleast_1d(float(self.values[i]))
        if k == "feedback_replay":
            s = self.series.reshape(len(self.times), -1)
            return self.kappa * np.array([np.interp(t, self.times, s[:, j]) for j in range(s.shape[1])])
        if k == "feedback":
            return self.kappa * np.atleast_1d(self.law(x))
        return self.kappa * self.base(t, x) + self.eta * math.sin(self.omega * t)


ZERO_SIGNAL = DisturbanceSignal("zero")


def piecewise_wc() -> DisturbanceSignal:
    """30 on [0, 0.1), 10 on [0.1, 0.5], 0.5 afterwards."""
    return DisturbanceSignal(
        "piecewise_constant", breakpoints=(0.1, np.nextafter(0.5, 1.0)), values=(30.0, 10.0, 0.5), label="w_c"
    )


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    disturbances: np.ndarray
    blew_up: bool = False

    def __len__(self) -> int:
        return len(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def _zero_law(m: int):
    return lambda x: np.zeros(m)


def _closed_loop_radius(sys: ControlSystem, u_law, x: np.ndarray, step: float = 1e-6) -> float:
    d = sys.d
    g0 = sys.g_eval(x)

    def field(y):
        return sys.f_eval(y) + g0 @ np.atleast_1d(u_law(y))

    J = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        J[:, k] = (field(x + e) - field(x - e)) / (2 * step)
    if not np.all(np.isfinite(J)):
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(J))))


def stable_step(sys: ControlSystem, u_law, x0, dt: float | None = None) -> float:
    """``dt`` (default 1e-3) shrunk so that ``dt * rho <= 1`` for the closed-loop
    Jacobian at the origin and at ``x0``."""
    dt = DEFAULT_DT if dt is None else float(dt)
    law = u_law if u_law is not None else _zero_law(sys.m)
    rho = max(_closed_loop_radius(sys, law, np.zeros(sys.d)), _closed_loop_radius(sys, law, np.asarray(x0, float)))
    if rho * dt > 1.0:
        dt = 1.0 / rho
    return dt


def simulate(sys: ControlSystem, u_law, w_sig: DisturbanceSignal, x0, T: float, dt: float | None = None,
             blowup_factor: float = BLOWUP_FACTOR, auto_step: bool = True) -> Trajectory:
    """Fixed-step RK4 for ``x' = f(x) + g(x) u(x) + h(x) w(t, x)``.

    Integration stops early (``blew_up``) once a state is non-finite or its
    max-norm exceeds ``blowup_factor`` times the domain half-width.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (sys.d,):
        raise ValueError(f"initial state must have shape ({sys.d},)")
    if not T > 0:
        raise ValueError("horizon must be positive")
    u_law = u_law if u_law is not None else _zero_law(sys.m)
    w_sig = w_sig if w_sig is not None else ZERO_SIGNAL
    if dt is None or auto_step:
        dt = stable_step(sys, u_law, x, dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = int(math.ceil(T / dt - 1e-9))
    dt = T / steps
    limit = blowup_factor * float(np.max(0.5 * (sys.domain.hi - sys.domain.lo)))
    p = sys.p

    def w_at(t, y):
        if not p:
            return np.zeros(0)
        return np.broadcast_to(w_sig(t, y), (p,))

    origin = np.zeros(sys.d)
    G0 = sys.g_eval(origin) if all(c.is_constant for c in sys.g) else None
    H0 = sys.h_eval(origin) if p and all(c.is_constant for c in sys.h) else None

    def rhs(t, y):
        u = np.atleast_1d(u_law(y))
        out = sys.f_eval(y) + (G0 if G0 is not None else sys.g_eval(y)) @ u
        if p:
            out = out + (H0 if H0 is not None else sys.h_eval(y)) @ w_at(t, y)
        return out

    times = np.empty(steps + 1)
    X = np.empty((steps + 1, sys.d))
    U = np.empty((steps + 1, sys.m))
    W = np.empty((steps + 1, max(p, 1)))
    blew_up = False
    n = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(steps + 1):
            t = n * dt
            times[n] = t
            X[n] = x
            U[n] = np.atleast_1d(u_law(x))
            W[n] = w_at(t, x) if p else 0.0
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > limit or not np.all(np.isfinite(U[n])):
                blew_up = True
                break
            if n == steps:
                break
            k1 = rhs(t, x)
            k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
            k4 = rhs(t + dt, x + dt * k3)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    k = n + 1
    return Trajectory(times[:k], X[:k], U[:k], W[:k, :p] if p else W[:k, :0], blew_up)


def l2_norm_series(traj: Trajectory, weights) -> np.ndarray:
    """``sum_i w_i x_i(t)^2`` per time; ``weights`` may be a grid or a vector."""
    w = getattr(weights, "interior_weights", weights)
    w = np.asarray(w, dtype=float)
    if w.shape != (traj.states.shape[1],):
        raise ValueError("weights do not match the state dimension")
    return traj.states**2 @ w


@dataclass(frozen=True)
class CostBreakdown:
    state_cost: float
    control_cost: float
    disturbance_credit: float
    total_J: float
    horizon_T: float
    blew_up: bool = False

    def as_dict(self) -> dict:
        return {
            "state_cost": self.state_cost,
            "control_cost": self.control_cost,
            "disturbance_credit": self.disturbance_credit,
            "total_J": self.total_J,
            "horizon_T": self.horizon_T,
            "blew_up": self.blew_up,
        }


def running_cost(traj: Trajectory, sys: ControlSystem, gamma: float = INF) -> np.ndarray:
    """``l(x) + |u|_R^2 - gamma^2 |w|_P^2`` per recorded time."""
    ell = np.asarray(sys.ell_eval(traj.states), dtype=float)
    uR = np.einsum("ta,ab,tb->t", traj.controls, sys.R, traj.controls)
    out = ell + uR
    if sys.p and not math.isinf(gamma):
        out = out - gamma**2 * np.einsum("ta,ab,tb->t", traj.disturbances, sys.P, traj.disturbances)
    return out


def cost_integral(traj: Trajectory, sys: ControlSystem, gamma: float = INF) -> CostBreakdown:
    """Trapezoidal integrals over the recorded horizon; ``gamma = inf`` drops
    the disturbance credit (reporting ``J(u, w=0)``-style totals)."""
    t = traj.times
    ell = np.asarray(sys.ell_eval(traj.states), dtype=float)
    uR = np.einsum("ta,ab,tb->t", traj.controls, sys.R, traj.controls)
    state = float(trapezoid(ell, t)) if len(t) > 1 else 0.0
    control = float(trapezoid(uR, t)) if len(t) > 1 else 0.0
    credit = 0.0
    if sys.p and not math.isinf(gamma) and len(t) > 1:
        wP = np.einsum("ta,ab,tb->t", traj.disturbances, sys.P, traj.disturbances)
        credit = gamma**2 * float(trapezoid(wP, t))
    total = INF if traj.blew_up else state + control - credit
    return CostBreakdown(state, control, credit, total, traj.horizon, traj.blew_up)


@dataclass(frozen=True)
class RecordedSignal:
    times: np.ndarray
    values: np.ndarray

    def as_disturbance(self, kappa: float = 1.0) -> DisturbanceSignal:
        return DisturbanceSignal.replay(self.times, self.values, kappa)


def record_feedback_signal(sys: ControlSystem, law, x0, T: float, dt: float | None = None,
                           u_law=None) -> RecordedSignal:
    """Simulate with ``w = 0`` and record ``law(x(t))``.

    The loop is closed with ``u_law``, or with ``law`` itself when it is a
    control law and ``u_law`` is not given.
    """
    if u_law is None and getattr(law, "kind", "control") == "control":
        u_law = law
    traj = simulate(sys, u_law, ZERO_SIGNAL, x0, T, dt)
    vals = np.array([np.atleast_1d(law(x)) for x in traj.states])
    return RecordedSignal(traj.times, vals)


# -- comparisons -------------------------------------------------------------

STABILIZED = "stabilized"
NOT_STABILIZED = "not_stabilized"
BLOWUP = "blow_up"


def verdict(traj: Trajectory, decay_tol: float = 1e-2, abs_tol: float = 1e-8) -> str:
    if traj.blew_up:
        return BLOWUP
    n0 = float(np.linalg.norm(traj.states[0]))
    nT = float(np.linalg.norm(traj.states[-1]))
    return STABILIZED if nT <= max(decay_tol * n0, abs_tol) else NOT_STABILIZED


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    x0: np.ndarray
    signal: DisturbanceSignal = ZERO_SIGNAL


@dataclass
class LawOutcome:
    trajectory: Trajectory
    cost: CostBreakdown
    norm_series: np.ndarray
    verdict: str


@dataclass
class ScenarioResult:
    scenario: Scenario
    hjb: LawOutcome
    hji: LawOutcome

    @property
    def winner(self) -> str:
        a, b = self.hji.cost.total_J, self.hjb.cost.total_J
        if math.isclose(a, b, rel_tol=1e-9) or (math.isinf(a) and math.isinf(b)):
            return "tie"
        return "hji" if a < b else "hjb"


@dataclass
class ComparisonReport:
    results: list[ScenarioResult] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for r in self.results:
            row = {"scenario": r.scenario.name}
            for tag, o in (("hjb", r.hjb), ("hji", r.hji)):
                row[f"{tag}_state_cost"] = o.cost.state_cost
                row[f"{tag}_control_cost"] = o.cost.control_cost
                row[f"{tag}_total_J"] = o.cost.total_J
                row[f"{tag}_verdict"] = o.verdict
            row["winner"] = r.winner
            out.append(row)
        return out


def compare_hjb_hji(sys: ControlSystem, u_hjb, u_hji, scenarios: Sequence[Scenario], T: float,
                    dt: float | None = None, weights=None, jobs: int = 1,
                    decay_tol: float = 1e-2) -> ComparisonReport:
    """Run every scenario under both control laws.

    Costs are ``J(u, w=0)``-style (state plus control, no disturbance credit).
    ``weights`` defines the plotted norm series (defaults to the running cost).
    """

    def one(args):
        sc, law = args
        traj = simulate(sys, law, sc.signal, sc.x0, T, dt)
        cost = cost_integral(traj, sys, INF)
        series = l2_norm_series(traj, weights) if weights is not None else np.asarray(sys.ell_eval(traj.states))
        return LawOutcome(traj, cost, series, verdict(traj, decay_tol))

    tasks = [(sc, law) for sc in scenarios for law in (u_hjb, u_hji)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(one, tasks))
    else:
        outcomes = [one(t) for t in tasks]
    report = ComparisonReport()
    for i, sc in enumerate(scenarios):
        report.results.append(ScenarioResult(sc, outcomes[2 * i], outcomes[2 * i + 1]))
    return report


# -- CSV output -------------------------------------------------------------

def _channel_names(prefix: str, k: int) -> list[str]:
    return [prefix] if k == 1 else [f"{prefix}_{j + 1}" for j in range(k)]


def write_trajectory_csv(path, traj: Trajectory, sys: ControlSystem, gamma: float = INF) -> Path:
    """Columns ``t, x_1..x_d, u, w, running_cost``."""
    path = Path(path)
    d, m = traj.states.shape[1], traj.controls.shape[1]
    p = max(traj.disturbances.shape[1], 1)
    W = traj.disturbances if traj.disturbances.shape[1] else np.zeros((len(traj), 1))
    rc = running_cost(traj, sys, gamma)
    header = ["t"] + [f"x_{i + 1}" for i in range(d)] + _channel_names("u", m) + _channel_names("w", p) + ["running_cost"]
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k in range(len(traj)):
            wr.writerow([repr(float(v)) for v in (traj.times[k], *traj.states[k], *traj.controls[k], *W[k], rc[k])])
    return path


def write_rows_csv(path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if not rows:
            return path
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    return path
