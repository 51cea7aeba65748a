"""Galerkin assembly of the policy-evaluation linear system.

For fixed feedbacks ``u`` and ``w`` the generalized HJI equation

    DV^t (f + g u + h w) + l + |u|_R^2 - gamma^2 |w|_P^2 = 0

is tested against every basis function, giving ``(F + H + G) c = b``.  Each
matrix term has the form ``<psi_j * s, phi_i>`` where ``psi_j`` is the
derivative of ``phi_j`` along one column of ``f``, ``g`` or ``h`` and ``s`` is
a scalar weight (1 for the drift, a policy component otherwise).  All of
these integrals split into products of 1D moments.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import MonomialBasis, eval_basis_gradient
from .expansion import REGISTRY, CompiledMap, Expansion, MomentTables, StackedExpansion
from .separable import (
    CUSTOM,
    Hyperrectangle,
    QuadratureRule,
    SeparableMap,
    SeparableScalar,
    default_quadrature_order,
)

log = logging.getLogger(__name__)

COND_WARN = 1e12


class PolicyEvaluationError(np.linalg.LinAlgError):
    def __init__(self, message: str, cond: float = math.inf):
        super().__init__(message)
        self.cond = cond


def _check_spd(name: str, A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
        raise ValueError(f"{name} must be a symmetric matrix")
    if A.size and np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return A


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """``x' = f(x) + g(x) u + h(x) w`` with running cost ``l(x) + |u|_R^2``.

    ``g`` and ``h`` are given column by column (one :class:`SeparableMap` per
    control or disturbance channel); ``h`` may be empty.
    """

    f: SeparableMap
    g: tuple[SeparableMap, ...]
    h: tuple[SeparableMap, ...]
    ell: SeparableScalar
    R: np.ndarray
    P: np.ndarray
    domain: Hyperrectangle
    name: str = ""

    def __post_init__(self):
        g = (self.g,) if isinstance(self.g, SeparableMap) else tuple(self.g)
        h = (self.h,) if isinstance(self.h, SeparableMap) else tuple(self.h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)
        d = self.f.d
        if self.f.out_dim != d:
            raise ValueError("drift must map R^d to R^d")
        for col in g + h:
            if col.d != d or col.out_dim != d:
                raise ValueError("channel columns must map R^d to R^d")
        if self.ell.d != d or self.domain.d != d:
            raise ValueError("running cost / domain dimension mismatch")
        if not g:
            raise ValueError("need at least one control channel")
        R = _check_spd("R", self.R)
        if R.shape[0] != len(g):
            raise ValueError("R must match the number of control channels")
        object.__setattr__(self, "R", R)
        P = np.atleast_2d(np.asarray(self.P, dtype=float)) if h else np.zeros((0, 0))
        if h:
            P = _check_spd("P", P)
            if P.shape[0] != len(h):
                raise ValueError("P must match the number of disturbance channels")
        object.__setattr__(self, "P", P)
        zero = np.zeros(d)
        if np.max(np.abs(self.f_eval(zero))) > 1e-12 or abs(float(self.ell_eval(zero))) > 1e-12:
            raise ValueError("need f(0) = 0 and l(0) = 0")

    @property
    def d(self) -> int:
        return self.f.d

    @property
    def m(self) -> int:
        return len(self.g)

    @property
    def p(self) -> int:
        return len(self.h)

    @cached_property
    def _f(self) -> CompiledMap:
        return CompiledMap.from_map(self.f)

    @cached_property
    def _g(self) -> list[CompiledMap]:
        return [CompiledMap.from_map(c) for c in self.g]

    @cached_property
    def _h(self) -> list[CompiledMap]:
        return [CompiledMap.from_map(c) for c in self.h]

    @cached_property
    def _ell(self) -> Expansion:
        return Expansion.from_separable(self.ell)

    @cached_property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @cached_property
    def P_inv(self) -> np.ndarray:
        return np.linalg.inv(self.P) if self.p else np.zeros((0, 0))

    def f_eval(self, x) -> np.ndarray:
        return self._f(x)

    def g_eval(self, x) -> np.ndarray:
        """Control matrix, shape (..., d, m)."""
        return np.stack([c(x) for c in self._g], axis=-1)

    def h_eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.p:
            return np.zeros(x.shape[:-1] + (self.d, 0))
        return np.stack([c(x) for c in self._h], axis=-1)

    def ell_eval(self, x):
        return self._ell(x)

    @cached_property
    def has_disturbance(self) -> bool:
        return any(np.any(c.coef != 0.0) for c in self._h)

    def fingerprint(self) -> str | None:
        """Stable hash of the system, or ``None`` when a custom callback is involved."""
        parts: list = [self.d, self.m, self.p]

        def scalar(s: SeparableScalar):
            for term in s.terms:
                for fac in term:
                    if fac.kind == CUSTOM:
                        raise LookupError
                    parts.append((fac.kind, fac.value, fac.power, fac.rate))
                parts.append("|")
            parts.append(";")

        try:
            for r in self.f.rows:
                scalar(r)
            for col in self.g + self.h:
                for r in col.rows:
                    scalar(r)
            scalar(self.ell)
        except LookupError:
            return None
        parts += [self.R.round(15).tolist(), self.P.round(15).tolist()]
        parts += [(iv.lo, iv.hi) for iv in self.domain.intervals]
        return hashlib.sha256(repr(parts).encode()).hexdigest()


def directional_derivatives(rows: Sequence[Expansion], basis: MonomialBasis) -> StackedExpansion:
    """Rows ``psi_j = sum_p v_p d(phi_j)/dx_p`` for the vector field ``v``."""
    nu = basis.powers
    d = basis.d
    R, C, E, K = [], [], [], []
    for p, vp in enumerate(rows):
        if len(vp) == 0:
            continue
        js = np.nonzero(nu[:, p])[0]
        if js.size == 0:
            continue
        shift = nu[js].copy()
        shift[:, p] -= 1
        T = len(vp)
        R.append(np.repeat(js, T))
        C.append((nu[js, p][:, None] * vp.coef[None, :]).ravel())
        E.append((shift[:, None, :] + vp.exps[None, :, :]).reshape(-1, d))
        K.append(np.broadcast_to(vp.keys[None], (js.size, T, d)).reshape(-1, d))
    if not R:
        return StackedExpansion.from_triplets([], [], np.zeros((0, d), np.int64), np.zeros((0, d), np.int64), basis.n)
    return StackedExpansion.from_triplets(
        np.concatenate(R), np.concatenate(C), np.concatenate(E), np.concatenate(K), basis.n
    )


def _signature(exps: np.ndarray, keys: np.ndarray) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    h.update(np.ascontiguousarray(exps).tobytes())
    h.update(np.ascontiguousarray(keys).tobytes())
    h.update(str(exps.shape).encode())
    return h.digest()


class IntegralTables:
    """Everything reusable across policy iterations for one system and basis.

    Holds the 1D moment tables, the directional-derivative expansions of the
    basis along ``f`` and along every ``g``/``h`` column, and caches of the
    moment products needed to contract those against policy expansions.
    """

    CACHE_ENTRIES = 12
    CHUNK = 4_000_000  # max floats per gathered block

    def __init__(self, sys: ControlSystem, basis: MonomialBasis, order: int | None = None):
        if basis.d != sys.d:
            raise ValueError(f"basis dimension {basis.d} != system dimension {sys.d}")
        self.sys = sys
        self.basis = basis
        self.order = default_quadrature_order(basis.M) if order is None else int(order)
        self.moments = MomentTables(sys.domain, self.order)
        self.psi_f = directional_derivatives([Expansion.from_separable(r) for r in sys.f.rows], basis)
        self.psi_g = [directional_derivatives([Expansion.from_separable(r) for r in c.rows], basis) for c in sys.g]
        self.psi_h = [directional_derivatives([Expansion.from_separable(r) for r in c.rows], basis) for c in sys.h]
        self.ell = Expansion.from_separable(sys.ell)
        self._lock = threading.Lock()
        self._pair_cache: OrderedDict = OrderedDict()
        self._F: np.ndarray | None = None
        self._ell_vector: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.basis.n

    # -- moment integrals -------------------------------------------------

    def integrate_against_basis(self, exps: np.ndarray, keys: np.ndarray) -> np.ndarray:
        """``I[u, i] = int atom_u * phi_i`` over the domain."""
        U = exps.shape[0]
        out = np.empty((U, self.n))
        step = max(1, self.CHUNK // max(1, self.n * self.basis.d))
        for s in range(0, U, step):
            out[s : s + step] = self.moments.gather(exps[s : s + step], keys[s : s + step], self.basis.powers)
        return out

    def project(self, s: Expansion) -> np.ndarray:
        """Vector ``<s, phi_i>``."""
        if len(s) == 0:
            return np.zeros(self.n)
        return self.integrate_against_basis(s.exps, s.keys).T @ s.coef

    def _pair_structure(self, psi: StackedExpansion, exps: np.ndarray, keys: np.ndarray):
        sig = (id(psi), _signature(exps, keys))
        with self._lock:
            hit = self._pair_cache.get(sig)
            if hit is not None:
                self._pair_cache.move_to_end(sig)
                return hit
        A, B, d = psi.n_atoms, exps.shape[0], self.basis.d
        E = (psi.exps[:, None, :] + exps[None, :, :]).reshape(-1, d)
        ka = np.broadcast_to(psi.keys[:, None, :], (A, B, d)).reshape(-1, d).copy()
        kb = np.broadcast_to(keys[None, :, :], (A, B, d)).reshape(-1, d).copy()
        Kc = REGISTRY.combine_arrays(ka, kb)
        uniq, inv = np.unique(np.concatenate([E, Kc], axis=1), axis=0, return_inverse=True)
        I_u = self.integrate_against_basis(uniq[:, :d].copy(), uniq[:, d:].copy())
        hit = (inv.reshape(A, B), I_u)
        with self._lock:
            self._pair_cache[sig] = hit
            while len(self._pair_cache) > self.CACHE_ENTRIES:
                self._pair_cache.popitem(last=False)
        return hit

    def weighted_gram(self, psi: StackedExpansion, s: Expansion) -> np.ndarray:
        """Matrix ``M[i, j] = <psi_j * s, phi_i>``."""
        n = self.n
        if psi.n_atoms == 0 or len(s) == 0 or not np.any(s.coef):
            return np.zeros((n, n))
        inv, I_u = self._pair_structure(psi, s.exps, s.keys)
        A, B = inv.shape
        S = sp.csr_matrix(
            (np.tile(s.coef, A), (np.repeat(np.arange(A), B), inv.ravel())), shape=(A, I_u.shape[0])
        )
        K = S @ I_u  # (A, n)
        return np.asarray((psi.T @ K).T)

    # -- fixed parts --------------------------------------------------------

    @property
    def F(self) -> np.ndarray:
        if self._F is None:
            self._F = self.weighted_gram(self.psi_f, Expansion.constant(self.basis.d, 1.0))
        return self._F

    @property
    def ell_vector(self) -> np.ndarray:
        if self._ell_vector is None:
            self._ell_vector = self.project(self.ell)
        return self._ell_vector

    def preload(self, F: np.ndarray, ell_vector: np.ndarray) -> None:
        if F.shape != (self.n, self.n) or ell_vector.shape != (self.n,):
            raise ValueError("cached table has the wrong shape")
        self._F = np.array(F, dtype=float)
        self._ell_vector = np.array(ell_vector, dtype=float)

    # -- policies -----------------------------------------------------------

    def channel_gradients(self, psi_list, c) -> list[Expansion]:
        """``[col_a^t DV for each column a]`` as expansions, for ``V = c . phi``."""
        return [psi.combine(c) for psi in psi_list]

    def control_policy(self, c) -> list[Expansion]:
        """``u = -1/2 R^{-1} g^t DV`` for ``V = c . phi``."""
        q = self.channel_gradients(self.psi_g, c)
        return _mix(q, -0.5 * self.sys.R_inv)

    def disturbance_policy(self, c, gamma: float) -> list[Expansion]:
        """``w = 1/(2 gamma^2) P^{-1} h^t DV``; empty list when no channel."""
        if not self.sys.p or math.isinf(gamma):
            return [Expansion.zero(self.basis.d) for _ in range(self.sys.p)]
        q = self.channel_gradients(self.psi_h, c)
        return _mix(q, self.sys.P_inv / (2.0 * gamma**2))

    def linear_policy(self, K) -> list[Expansion]:
        """``u = K x`` as expansions, one per row of ``K``."""
        K = np.atleast_2d(np.asarray(K, dtype=float))
        return [Expansion.linear(row) for row in K]

    def drift_matrix(self, psi_list, policy: Sequence[Expansion]) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for psi, s in zip(psi_list, policy):
            out += self.weighted_gram(psi, s)
        return out

    def rhs(self, u_policy: Sequence[Expansion], w_policy: Sequence[Expansion], gamma: float) -> np.ndarray:
        """Projection of ``-(l + |u|_R^2 - gamma^2 |w|_P^2)``."""
        b = -self.ell_vector.copy()
        b -= self.project(_quadratic_form(u_policy, self.sys.R, self.basis.d))
        if w_policy and not math.isinf(gamma):
            b += gamma**2 * self.project(_quadratic_form(w_policy, self.sys.P, self.basis.d))
        return b


def _mix(q: list[Expansion], W: np.ndarray) -> list[Expansion]:
    if len(q) == 1:
        return [q[0].scale(float(W[0, 0]))]
    out = []
    for a in range(W.shape[0]):
        acc = Expansion.zero(q[0].d)
        for b in range(W.shape[1]):
            if W[a, b] != 0.0:
                acc = acc + q[b].scale(float(W[a, b]))
        out.append(acc)
    return out


def _quadratic_form(v: Sequence[Expansion], W: np.ndarray, d: int) -> Expansion:
    acc = Expansion.zero(d)
    for a in range(len(v)):
        for b in range(len(v)):
            if W[a, b] != 0.0 and len(v[a]) and len(v[b]):
                acc = acc + (v[a] * v[b]).scale(float(W[a, b]))
    return acc


def build_tables(sys: ControlSystem, basis: MonomialBasis, quad: QuadratureRule | int | None = None,
                 cache=None) -> IntegralTables:
    """Precompute the reusable 1D integrals (and the drift matrix) for ``sys``.

    ``cache`` is an optional :class:`hjisynth.io.TableCache`.
    """
    order = quad.order if isinstance(quad, QuadratureRule) else quad
    tab = IntegralTables(sys, basis, order)
    if cache is not None and cache.load(tab):
        return tab
    tab.F, tab.ell_vector  # noqa: B018
    if cache is not None:
        cache.store(tab)
    return tab


def assemble_F(tab: IntegralTables) -> np.ndarray:
    return tab.F.copy()


def assemble_H(tab: IntegralTables, c_prev, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return tab.drift_matrix(tab.psi_h, tab.disturbance_policy(c_prev, gamma))


def assemble_G(tab: IntegralTables, c_ctrl) -> np.ndarray:
    return tab.drift_matrix(tab.psi_g, tab.control_policy(c_ctrl))


def assemble_rhs(tab: IntegralTables, c_ctrl, c_prev, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return tab.rhs(tab.control_policy(c_ctrl), tab.disturbance_policy(c_prev, gamma), gamma)


@dataclass
class GalerkinSystem:
    """Assembled pieces of ``(F + H(c_prev) + G(c_ctrl)) c = b``."""

    tables: IntegralTables
    condition_warnings: list = field(default_factory=list)

    @property
    def F(self) -> np.ndarray:
        return self.tables.F

    @property
    def ell_vector(self) -> np.ndarray:
        return self.tables.ell_vector

    def H(self, c_prev, gamma):
        return assemble_H(self.tables, c_prev, gamma)

    def G(self, c_ctrl):
        return assemble_G(self.tables, c_ctrl)

    def solve(self, u_policy, w_policy, gamma: float) -> np.ndarray:
        tab = self.tables
        L = tab.F + tab.drift_matrix(tab.psi_g, u_policy)
        if w_policy and not math.isinf(gamma):
            L = L + tab.drift_matrix(tab.psi_h, w_policy)
        b = tab.rhs(u_policy, w_policy, gamma)
        return self._solve(L, b)

    def _solve(self, L: np.ndarray, b: np.ndarray) -> np.ndarray:
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(b))):
            raise PolicyEvaluationError("non-finite Galerkin system")
        if not np.any(b):
            # homogeneous: c = 0 solves it (the minimum-norm solution if L is singular)
            return np.zeros_like(b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(L, check_finite=False)
        anorm = np.linalg.norm(L, 1)
        rcond = sla.lapack.dgecon(lu, anorm, norm="1")[0] if anorm > 0 else 0.0
        cond = math.inf if rcond == 0 else 1.0 / rcond
        if not np.isfinite(cond) or cond > 1e16:
            raise PolicyEvaluationError(f"singular policy-evaluation matrix (cond ~ {cond:.3g})", cond)
        if cond > COND_WARN:
            self.condition_warnings.append(cond)
            log.debug("ill-conditioned policy evaluation, cond ~ %.3g", cond)
        c = sla.lu_solve((lu, piv), b, check_finite=False)
        # one step of iterative refinement
        c = c + sla.lu_solve((lu, piv), b - L @ c, check_finite=False)
        return c


def solve_policy_evaluation(gs: GalerkinSystem, c_ctrl, c_prev, gamma: float) -> np.ndarray:
    tab = gs.tables
    w = tab.disturbance_policy(c_prev, gamma) if c_prev is not None else []
    return gs.solve(tab.control_policy(c_ctrl), w, gamma)


def residual_check(sys: ControlSystem, basis: MonomialBasis, c, c_ctrl, c_prev, gamma: float,
                   samples, rng: np.random.Generator | None = None, u_law=None) -> float:
    """Max pointwise residual of the policy-evaluation equation.

    ``samples`` is a point count (drawn uniformly from the domain) or an
    array of points.  ``u_law`` overrides the control derived from ``c_ctrl``.
    """
    if np.isscalar(samples):
        if samples < 1:
            raise ValueError("need at least one sample")
        rng = np.random.default_rng(0) if rng is None else rng
        X = sys.domain.sample(rng, int(samples))
    else:
        X = np.atleast_2d(np.asarray(samples, dtype=float))
    grad = eval_basis_gradient(basis, X)  # (N, n, d)
    DV = np.einsum("nid,i->nd", grad, np.asarray(c, dtype=float))
    G = sys.g_eval(X)
    if u_law is not None:
        u = np.array([np.atleast_1d(u_law(x)) for x in X])
    else:
        DVc = np.einsum("nid,i->nd", grad, np.asarray(c_ctrl, dtype=float))
        u = -0.5 * np.einsum("ab,nb->na", sys.R_inv, np.einsum("ndm,nd->nm", G, DVc))
    drift = sys.f_eval(X) + np.einsum("ndm,nm->nd", G, u)
    quad = np.einsum("na,ab,nb->n", u, sys.R, u)
    if sys.p and c_prev is not None and not math.isinf(gamma):
        Hm = sys.h_eval(X)
        DVp = np.einsum("nid,i->nd", grad, np.asarray(c_prev, dtype=float))
        w = np.einsum("ab,nb->na", sys.P_inv, np.einsum("ndp,nd->np", Hm, DVp)) / (2 * gamma**2)
        drift = drift + np.einsum("ndp,np->nd", Hm, w)
        quad = quad - gamma**2 * np.einsum("na,ab,nb->n", w, sys.P, w)
    r = np.einsum("nd,nd->n", DV, drift) + sys.ell_eval(X) + quad
    return float(np.max(np.abs(r)))
