"""Chebyshev collocation of 1D parabolic control problems.

The PDE

    X_t = sigma X_xx [+ X X_x] + r(X) + chi_w(xi) w + chi_u(xi) u

on an interval is sampled at the interior Chebyshev points and written as a
separable :class:`~hjisynth.galerkin.ControlSystem` in the interior values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .galerkin import ControlSystem
from .separable import (
    Hyperrectangle,
    Interval,
    SeparableMap,
    SeparableScalar,
    monomial,
    scaled_exponential,
)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

REACTIONS = ("none", "exp_source", "zeldovich", "cubic_damping")
CHANNELS = ("indicator", "linear", "cubic")


@dataclass(frozen=True)
class CollocationGrid:
    d: int
    full_nodes: np.ndarray
    quad_weights: np.ndarray
    interval: Interval

    @property
    def nodes(self) -> np.ndarray:
        return self.full_nodes[1:-1]

    @property
    def interior_weights(self) -> np.ndarray:
        return self.quad_weights[1:-1]


def clenshaw_curtis_weights(N: int) -> np.ndarray:
    """Weights on the N+1 points ``-cos(pi i / N)`` of [-1, 1]."""
    if N < 1:
        raise ValueError("need N >= 1")
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    inner = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[inner]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2 * v / N
    return w


def chebyshev_grid(d: int, interval: Interval = Interval(-1.0, 1.0)) -> CollocationGrid:
    """``d`` interior points ``-cos(pi i/(d+1))`` plus both endpoints, mapped onto ``interval``."""
    if d < 1:
        raise ValueError("need at least one interior node")
    N = d + 1
    t = -np.cos(np.pi * np.arange(N + 1) / N)
    t[0], t[-1] = -1.0, 1.0
    if N % 2 == 0:
        t[N // 2] = 0.0
    half = 0.5 * interval.width
    nodes = interval.lo + half * (t + 1.0)
    weights = half * clenshaw_curtis_weights(N)
    for a in (nodes, weights):
        a.setflags(write=False)
    return CollocationGrid(d, nodes, weights, interval)


def differentiation_matrix(grid: CollocationGrid) -> np.ndarray:
    """First-derivative matrix on ``grid.full_nodes`` (barycentric formula,
    diagonal from the negative row sum)."""
    x = grid.full_nodes
    N = len(x) - 1
    c = np.ones(N + 1)
    c[0] = c[N] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = np.outer(c, 1.0 / c) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def boundary_elimination(D_full: np.ndarray, bc: str) -> np.ndarray:
    """Matrix ``E`` with ``X_full = E @ X_interior`` under homogeneous ``bc``."""
    n = D_full.shape[0]
    d = n - 2
    E = np.zeros((n, d))
    E[1:-1] = np.eye(d)
    if bc == DIRICHLET:
        return E
    if bc != NEUMANN:
        raise ValueError(f"unknown boundary condition {bc!r}")
    ends = [0, n - 1]
    Mb = D_full[np.ix_(ends, ends)]
    if abs(np.linalg.det(Mb)) < 1e-14 * np.abs(Mb).max() ** 2:
        raise np.linalg.LinAlgError("singular Neumann boundary elimination")
    E[ends] = -np.linalg.solve(Mb, D_full[ends, 1:-1])
    return E


def apply_boundary_conditions(A_full: np.ndarray, D_full: np.ndarray, grid: CollocationGrid, bc: str):
    """Reduce full-grid operators to the interior unknowns."""
    E = boundary_elimination(D_full, bc)
    return A_full[1:-1] @ E, D_full[1:-1] @ E


def indicator_vector(grid: CollocationGrid, support: Interval) -> np.ndarray:
    v = support.contains(grid.nodes).astype(float)
    if not v.any():
        warnings.warn(f"support ({support.lo}, {support.hi}) contains no collocation node", stacklevel=2)
    return v


@dataclass(frozen=True)
class InitialCondition:
    """Named initial profiles: ``sign``, ``zeldovich`` or ``bump`` (scale * (xi^2-1)^2)."""

    kind: str = "sign"
    scale: float = 1.0

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "sign":
            return self.scale * np.sign(xi)
        if self.kind == "zeldovich":
            return self.scale * (np.cos(2 * np.pi * xi) * np.sin(np.pi * xi) + 1.0)
        if self.kind == "bump":
            return self.scale * (xi - 1.0) ** 2 * (xi + 1.0) ** 2
        if self.kind == "zero":
            return np.zeros_like(xi)
        raise ValueError(f"unknown initial condition {self.kind!r}")


@dataclass(frozen=True)
class ParabolicProblem:
    sigma: float
    advection: bool = False
    reaction: str = "none"
    # exp_source: coef * X * exp(rate * X)
    reaction_coef: float = 1.5
    reaction_rate: float = -0.1
    bc: str = DIRICHLET
    control_support: Interval = Interval(-1.0, 1.0)
    disturbance: str = "indicator"
    disturbance_support: Interval | None = Interval(-1.0, 1.0)
    spatial_domain: Interval = Interval(-1.0, 1.0)
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    R: float = 0.1
    P: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.reaction not in REACTIONS:
            raise ValueError(f"unsupported reaction {self.reaction!r}")
        if self.disturbance not in CHANNELS:
            raise ValueError(f"unsupported disturbance channel {self.disturbance!r}")
        if self.bc not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        sd = self.spatial_domain
        supports = [self.control_support]
        if self.disturbance == "indicator":
            if self.disturbance_support is None:
                raise ValueError("indicator channel needs a support")
            supports.append(self.disturbance_support)
        for s in supports:
            if s.lo < sd.lo or s.hi > sd.hi:
                raise ValueError(f"support ({s.lo}, {s.hi}) leaves the spatial domain")


@dataclass(frozen=True, eq=False)
class DiscretizedSystem:
    system: ControlSystem
    problem: ParabolicProblem
    grid: CollocationGrid
    A: np.ndarray
    D: np.ndarray
    B: np.ndarray
    C: np.ndarray | None
    Q: np.ndarray
    E: np.ndarray

    @property
    def d(self) -> int:
        return self.grid.d

    def initial_state(self, ic: InitialCondition | None = None) -> np.ndarray:
        return np.asarray((ic or self.problem.initial_condition)(self.grid.nodes), dtype=float)

    def full_state(self, x) -> np.ndarray:
        """Values on all grid points, boundary values reconstructed."""
        return np.asarray(x) @ self.E.T

    def reaction(self, x) -> np.ndarray:
        p, x = self.problem, np.asarray(x, dtype=float)
        if p.reaction == "exp_source":
            return p.reaction_coef * x * np.exp(p.reaction_rate * x)
        if p.reaction == "zeldovich":
            return x**2 - x**3
        if p.reaction == "cubic_damping":
            return -(x**3)
        return np.zeros_like(x)

    def channel(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.problem.disturbance == "linear":
            return x
        if self.problem.disturbance == "cubic":
            return x**3
        return np.broadcast_to(self.C, x.shape)

    def rhs_dense(self, x, u: float = 0.0, w: float = 0.0) -> np.ndarray:
        """Right-hand side evaluated directly from the matrices."""
        x = np.asarray(x, dtype=float)
        out = x @ self.A.T + self.reaction(x) + self.B * u + self.channel(x) * w
        if self.problem.advection:
            out = out + x * (x @ self.D.T)
        return out


def _drift_rows(A: np.ndarray, D: np.ndarray, p: ParabolicProblem) -> tuple[SeparableScalar, ...]:
    d = A.shape[0]
    rows = []
    for i in range(d):
        terms = [(A[i, k], {k: monomial(1)}) for k in range(d) if A[i, k] != 0.0]
        if p.advection:
            for k in range(d):
                if D[i, k] == 0.0:
                    continue
                if k == i:
                    terms.append((D[i, i], {i: monomial(2)}))
                else:
                    terms.append((1.0, {i: monomial(1), k: scaled_exponential(D[i, k], 0.0, 1)}))
        if p.reaction == "exp_source":
            terms.append((1.0, {i: scaled_exponential(p.reaction_coef, p.reaction_rate, 1)}))
        elif p.reaction == "zeldovich":
            terms.append((1.0, {i: monomial(2)}))
            terms.append((-1.0, {i: monomial(3)}))
        elif p.reaction == "cubic_damping":
            terms.append((-1.0, {i: monomial(3)}))
        rows.append(SeparableScalar.from_sparse(d, terms))
    return tuple(rows)


def _vector_column(v: np.ndarray) -> SeparableMap:
    return SeparableMap.constant_vector(list(map(float, v)))


def _state_column(d: int, power: int) -> SeparableMap:
    return SeparableMap(tuple(SeparableScalar.from_sparse(d, [(1.0, {i: monomial(power)})]) for i in range(d)))


def discretize(p: ParabolicProblem, d: int, half_width: float = 2.0) -> DiscretizedSystem:
    """Collocate ``p`` on ``d`` interior nodes; the value-function domain is
    the cube ``(-half_width, half_width)^d``."""
    grid = chebyshev_grid(d, p.spatial_domain)
    D_full = differentiation_matrix(grid)
    A, D = apply_boundary_conditions(p.sigma * D_full @ D_full, D_full, grid, p.bc)
    E = boundary_elimination(D_full, p.bc)
    B = indicator_vector(grid, p.control_support)
    w = grid.interior_weights
    Q = np.diag(w)
    f = SeparableMap(_drift_rows(A, D, p))
    if p.disturbance == "indicator":
        C = indicator_vector(grid, p.disturbance_support)
        h = (_vector_column(C),)
    else:
        C = None
        h = (_state_column(d, 1 if p.disturbance == "linear" else 3),)
    ell = SeparableScalar.from_sparse(d, [(w[i], {i: monomial(2)}) for i in range(d)])
    sys = ControlSystem(
        f, (_vector_column(B),), h, ell, np.array([[p.R]]), np.array([[p.P]]),
        Hyperrectangle.cube(d, half_width), name=p.name or "parabolic",
    )
    return DiscretizedSystem(sys, p, grid, A, D, B, C, Q, E)


# -- presets ---------------------------------------------------------------

# supports of the three disturbance/control placements for the no-source Burgers test
SUPPORT_CASES = {
    1: (Interval(0.5, 0.8), Interval(-1.0, 1.0)),
    2: (Interval(-1.0, -0.5), Interval(0.5, 0.8)),
    3: (Interval(-1.0, 1.0), Interval(0.5, 0.8)),
}


def burgers_nosource(case: int = 1) -> ParabolicProblem:
    w_supp, u_supp = SUPPORT_CASES[case]
    return ParabolicProblem(
        sigma=0.2, advection=True, bc=DIRICHLET, control_support=u_supp, disturbance_support=w_supp,
        initial_condition=InitialCondition("sign"), R=0.1, P=1.0, name=f"test1_nosource_case{case}",
    )


def burgers_source() -> ParabolicProblem:
    om = Interval(-0.8, 0.5)
    return ParabolicProblem(
        sigma=0.2, advection=True, reaction="exp_source", bc=DIRICHLET, control_support=om,
        disturbance_support=om, initial_condition=InitialCondition("sign"), R=0.01, P=1.0,
        name="test1_source",
    )


def zeldovich() -> ParabolicProblem:
    om = Interval(-0.8, 0.5)
    return ParabolicProblem(
        sigma=0.5, reaction="zeldovich", bc=NEUMANN, control_support=om, disturbance_support=om,
        initial_condition=InitialCondition("zeldovich"), R=0.01, P=1.0, name="test2_zeldovich",
    )


def allen_cahn_linear(kappa: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem(
        sigma=0.5, reaction="cubic_damping", bc=NEUMANN, control_support=Interval(-0.8, 0.5),
        disturbance="linear", disturbance_support=None, initial_condition=InitialCondition("bump", kappa),
        R=0.5, P=1.0, name="test3_linear_channel",
    )


def allen_cahn_cubic() -> ParabolicProblem:
    return ParabolicProblem(
        sigma=0.5, bc=NEUMANN, control_support=Interval(-0.8, 0.5), disturbance="cubic",
        disturbance_support=None, initial_condition=InitialCondition("bump", 3.0), R=0.01, P=1.0,
        name="test3_cubic_channel",
    )


PRESETS = {
    "test1_nosource": burgers_nosource,
    "test1_source": burgers_source,
    "test2_zeldovich": zeldovich,
    "test3_linear_channel": allen_cahn_linear,
    "test3_cubic_channel": allen_cahn_cubic,
}

# attenuation levels reported alongside the presets (used when gamma is not given)
PRESET_GAMMA = {
    "test1_nosource": 0.3937,
    "test1_source": 0.125,
    "test2_zeldovich": 0.125,
    "test3_linear_channel": 1.63,
    "test3_cubic_channel": 8.22,
}


def make_problem(name: str, **kw) -> ParabolicProblem:
    """Build a named preset; keyword arguments go to the preset builder."""
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return builder(**kw)
