"""One-dimensional HJI problem with a known value function.

With ``f = 0``, constant ``g``, ``h`` and ``V(x) = x^4 + x^2 e^x``, choosing

    l(x) = q/4 * V'(x)^2,   q = g^2/R - h^2/(gamma^2 P)

makes ``V`` solve the Isaacs equation for the min-max feedbacks
``u = -g V'/(2R)`` and ``w = h V'/(2 gamma^2 P)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import enumerate_basis
from .galerkin import ControlSystem
from .separable import Hyperrectangle, SeparableMap, SeparableScalar, scaled_exponential
from .synthesis import SynthesisConfig, feedback_control, hji_policy_iteration


@dataclass(frozen=True)
class OracleProblem:
    g: float = 1.0
    h: float = 0.1
    R: float = 1.0
    P: float = 1.0
    gamma: float = 2.0
    half_width: float = 1.0

    @property
    def q(self) -> float:
        return self.g**2 / self.R - self.h**2 / (self.gamma**2 * self.P)

    def system(self) -> ControlSystem:
        # V'^2 = (x^2 e^x + 2x e^x + 4x^3)^2 expanded into (coef, power, rate) terms
        terms = [(1, 4, 2), (4, 3, 2), (4, 2, 2), (8, 5, 1), (16, 4, 1), (16, 6, 0)]
        ell = SeparableScalar.from_sparse(
            1, [(1.0, {0: scaled_exponential(self.q / 4 * a, float(r), p)}) for a, p, r in terms]
        )
        return ControlSystem(
            SeparableMap.zero(1),
            (SeparableMap.constant_vector([self.g]),),
            (SeparableMap.constant_vector([self.h]),),
            ell,
            np.array([[self.R]]),
            np.array([[self.P]]),
            Hyperrectangle.cube(1, self.half_width),
            name="oracle_1d",
        )

    @staticmethod
    def value(x):
        x = np.asarray(x, dtype=float)
        return x**4 + x**2 * np.exp(x)

    @staticmethod
    def value_derivative(x):
        x = np.asarray(x, dtype=float)
        return 4 * x**3 + (2 * x + x**2) * np.exp(x)

    def control(self, x):
        return -0.5 * self.g * self.value_derivative(x) / self.R


@dataclass
class ConvergenceRow:
    degree: int
    error_V: float
    error_u: float
    iterations: int
    outer_iterations: int
    inner_solves: int
    converged: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def relative_l2(approx, exact, weights) -> float:
    return math.sqrt(float(weights @ (approx - exact) ** 2) / float(weights @ exact**2))


def convergence_table(degrees=(2, 4, 6, 8, 10), problem: OracleProblem | None = None,
                      epsilon: float = 1e-6, initial_control="small", n_quad: int = 200) -> list[ConvergenceRow]:
    """Relative L2 errors of ``V_n`` and ``u_n`` for each polynomial degree."""
    prob = problem or OracleProblem()
    sys = prob.system()
    t, w = np.polynomial.legendre.leggauss(n_quad)
    x = prob.half_width * t
    w = prob.half_width * w
    V_ex, u_ex = prob.value(x), prob.control(x)
    rows = []
    for M in degrees:
        cfg = SynthesisConfig(epsilon=epsilon, gamma=prob.gamma, initial_control=initial_control)
        V, rep = hji_policy_iteration(sys, enumerate_basis(1, M), cfg)
        u = feedback_control(V, sys)(x[:, None])[:, 0]
        rows.append(ConvergenceRow(
            M, relative_l2(V(x[:, None]), V_ex, w), relative_l2(u, u_ex, w), rep.total_iterations,
            rep.outer_iterations, rep.total_inner_iterations, rep.converged,
        ))
    return rows
