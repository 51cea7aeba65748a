"""Vectorized algebra for sums of ``coef * x**alpha * prod_k E_k(x_k)``.

Polynomial parts of every factor are folded into the exponent array
``alpha``; what remains per coordinate is a non-polynomial factor ``E_k``
(an exponential, a user callback, or a product of those) identified by an
integer key from :data:`REGISTRY`.  Key ``0`` is the absent factor.

Products of such terms stay in the same family, and their integrals over a
hyperrectangle factor into 1D moments ``int x**a E(x) dx``, which is what
makes Galerkin assembly tractable in high dimension.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .separable import (
    CONSTANT,
    CUSTOM,
    MONOMIAL,
    SCALED_EXPONENTIAL,
    Factor1D,
    Hyperrectangle,
    SeparableMap,
    SeparableScalar,
    gauss_legendre,
)


class KeyRegistry:
    """Interns non-polynomial 1D factors as ``(rate, callbacks)`` pairs.

    A key evaluates to ``exp(rate * x) * prod(cb(x) for cb in callbacks)``.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._descs: list[tuple[float, tuple]] = [(0.0, ())]
        self._index: dict = {(0.0, ()): 0}
        self._combined: dict[tuple[int, int], int] = {}

    def intern(self, rate: float, callbacks: tuple = ()) -> int:
        cbs = tuple(sorted(callbacks, key=id))
        desc = (float(rate) + 0.0, cbs)
        ident = (desc[0], tuple(id(c) for c in cbs))
        with self._lock:
            key = self._index.get(ident)
            if key is None:
                key = len(self._descs)
                self._descs.append(desc)
                self._index[ident] = key
            return key

    def describe(self, key: int) -> tuple[float, tuple]:
        return self._descs[key]

    def combine(self, a: int, b: int) -> int:
        if a == 0:
            return b
        if b == 0:
            return a
        pair = (min(a, b), max(a, b))
        key = self._combined.get(pair)
        if key is None:
            ra, ca = self._descs[a]
            rb, cb = self._descs[b]
            key = self.intern(ra + rb, ca + cb)
            self._combined[pair] = key
        return key

    def combine_arrays(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.where(a == 0, b, a)
        both = (a != 0) & (b != 0)
        if np.any(both):
            pairs = np.stack([a[both], b[both]], axis=-1)
            uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
            keys = np.array([self.combine(int(p), int(q)) for p, q in uniq], dtype=out.dtype)
            out[both] = keys[inv.ravel()]
        return out

    def is_custom(self, key: int) -> bool:
        return bool(self._descs[key][1])

    def evaluate(self, key: int, x: np.ndarray) -> np.ndarray:
        rate, cbs = self._descs[key]
        out = np.exp(rate * x) if rate != 0.0 else np.ones_like(x, dtype=float)
        for cb in cbs:
            out = out * np.asarray(cb(x), dtype=float)
        return out


REGISTRY = KeyRegistry()


def _factor_parts(f: Factor1D) -> tuple[float, int, int]:
    """Split a factor into (coefficient, polynomial power, key)."""
    if f.kind == CONSTANT:
        return f.value, 0, 0
    if f.kind == MONOMIAL:
        return 1.0, f.power, 0
    if f.kind == SCALED_EXPONENTIAL:
        key = REGISTRY.intern(f.rate) if f.rate != 0.0 else 0
        return f.value, f.power, key
    assert f.kind == CUSTOM
    return 1.0, 0, REGISTRY.intern(0.0, (f.fn,))


@dataclass(frozen=True)
class Expansion:
    coef: np.ndarray  # (N,)
    exps: np.ndarray  # (N, d) int64
    keys: np.ndarray  # (N, d) int64

    @property
    def d(self) -> int:
        return self.exps.shape[1]

    def __len__(self) -> int:
        return self.coef.shape[0]

    @classmethod
    def zero(cls, d: int) -> "Expansion":
        return cls(np.zeros(0), np.zeros((0, d), np.int64), np.zeros((0, d), np.int64))

    @classmethod
    def constant(cls, d: int, value: float) -> "Expansion":
        if value == 0.0:
            return cls.zero(d)
        return cls(np.array([float(value)]), np.zeros((1, d), np.int64), np.zeros((1, d), np.int64))

    @classmethod
    def linear(cls, weights) -> "Expansion":
        w = np.asarray(weights, dtype=float)
        d = w.shape[0]
        return cls(w.copy(), np.eye(d, dtype=np.int64), np.zeros((d, d), np.int64)).canonical()

    @classmethod
    def monomials(cls, coef, exps) -> "Expansion":
        exps = np.asarray(exps, dtype=np.int64)
        return cls(np.asarray(coef, dtype=float), exps, np.zeros_like(exps)).canonical()

    @classmethod
    def from_separable(cls, s: SeparableScalar) -> "Expansion":
        n = s.n_terms
        coef = np.ones(n)
        exps = np.zeros((n, s.d), np.int64)
        keys = np.zeros((n, s.d), np.int64)
        for t, term in enumerate(s.terms):
            for k, f in enumerate(term):
                c, p, key = _factor_parts(f)
                coef[t] *= c
                exps[t, k] = p
                keys[t, k] = key
        return cls(coef, exps, keys).canonical()

    def canonical(self) -> "Expansion":
        if len(self) == 0:
            return self
        rows = np.concatenate([self.exps, self.keys], axis=1)
        uniq, inv = np.unique(rows, axis=0, return_inverse=True)
        coef = np.zeros(uniq.shape[0])
        np.add.at(coef, inv.ravel(), self.coef)
        keep = coef != 0.0
        d = self.d
        return Expansion(coef[keep], uniq[keep, :d].copy(), uniq[keep, d:].copy())

    def __add__(self, other: "Expansion") -> "Expansion":
        return Expansion(
            np.concatenate([self.coef, other.coef]),
            np.concatenate([self.exps, other.exps]),
            np.concatenate([self.keys, other.keys]),
        ).canonical()

    def __neg__(self) -> "Expansion":
        return self.scale(-1.0)

    def __sub__(self, other: "Expansion") -> "Expansion":
        return self + (-other)

    def scale(self, c: float) -> "Expansion":
        return Expansion(self.coef * c, self.exps, self.keys)

    def __mul__(self, other):
        if not isinstance(other, Expansion):
            return self.scale(float(other))
        if len(self) == 0 or len(other) == 0:
            return Expansion.zero(self.d)
        coef = np.outer(self.coef, other.coef).ravel()
        exps = (self.exps[:, None, :] + other.exps[None, :, :]).reshape(-1, self.d)
        ka = np.broadcast_to(self.keys[:, None, :], (len(self), len(other), self.d)).reshape(-1, self.d)
        kb = np.broadcast_to(other.keys[None, :, :], (len(self), len(other), self.d)).reshape(-1, self.d)
        keys = REGISTRY.combine_arrays(ka.copy(), kb.copy())
        return Expansion(coef, exps, keys).canonical()

    __rmul__ = __mul__

    def shift(self, alpha) -> "Expansion":
        """Multiply by the monomial ``x**alpha``."""
        return Expansion(self.coef, self.exps + np.asarray(alpha, dtype=np.int64), self.keys)

    @property
    def is_polynomial(self) -> bool:
        return not np.any(self.keys)

    def __call__(self, x) -> np.ndarray:
        return evaluate_terms(self.coef, self.exps, self.keys, x)


def evaluate_terms(coef, exps, keys, x) -> np.ndarray:
    """Per-term values summed; ``x`` of shape (d,) or (N, d)."""
    return term_values(coef, exps, keys, x).sum(axis=-1)


def term_values(coef, exps, keys, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    vals = x[..., None, :] ** exps  # (..., T, d)
    if np.any(keys):
        for key in np.unique(keys[keys != 0]):
            mask = keys == key
            fx = REGISTRY.evaluate(int(key), x)  # (..., d)
            vals = np.where(mask, vals * fx[..., None, :], vals)
    return coef * vals.prod(axis=-1)


class CompiledMap:
    """Fast evaluator for a list of separable rows (vector field or matrix column)."""

    def __init__(self, rows: list[Expansion], d: int):
        self.out_dim = len(rows)
        self.d = d
        self.rows = rows
        if rows:
            self.coef = np.concatenate([r.coef for r in rows])
            self.exps = np.concatenate([r.exps for r in rows])
            self.keys = np.concatenate([r.keys for r in rows])
            self.row_index = np.concatenate([np.full(len(r), i) for i, r in enumerate(rows)])
        else:
            self.coef = np.zeros(0)
            self.exps = np.zeros((0, d), np.int64)
            self.keys = np.zeros((0, d), np.int64)
            self.row_index = np.zeros(0, np.int64)
        self._constant = None
        if not np.any(self.exps) and not np.any(self.keys):
            const = np.zeros(self.out_dim)
            np.add.at(const, self.row_index, self.coef)
            self._constant = const

    @classmethod
    def from_map(cls, m: SeparableMap) -> "CompiledMap":
        return cls([Expansion.from_separable(r) for r in m.rows], m.d)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._constant is not None:
            return np.broadcast_to(self._constant, x.shape[:-1] + (self.out_dim,)).copy()
        tv = term_values(self.coef, self.exps, self.keys, x)  # (..., T)
        out = np.zeros(x.shape[:-1] + (self.out_dim,))
        if x.ndim == 1:
            np.add.at(out, self.row_index, tv)
        else:
            for i in range(self.out_dim):
                out[..., i] = tv[..., self.row_index == i].sum(axis=-1)
        return out


class MomentTables:
    """Cached 1D moments ``int_{Omega_k} x**a E_key(x) dx``.

    Quadrature order is at least ``order`` and raised so that every requested
    polynomial moment is integrated exactly.
    """

    def __init__(self, domain: Hyperrectangle, order: int):
        self.domain = domain
        self.order = int(order)
        self._lock = threading.Lock()
        self._tables: dict[tuple[int, int], np.ndarray] = {}

    def moments(self, k: int, key: int, max_power: int) -> np.ndarray:
        tab = self._tables.get((k, key))
        if tab is not None and tab.shape[0] > max_power:
            return tab
        with self._lock:
            tab = self._tables.get((k, key))
            if tab is None or tab.shape[0] <= max_power:
                size = max(max_power + 1, 2 * self.order, 0 if tab is None else 2 * tab.shape[0])
                tab = self._compute(k, key, size - 1)
                self._tables[(k, key)] = tab
            return tab

    def _compute(self, k: int, key: int, max_power: int) -> np.ndarray:
        iv = self.domain.intervals[k]
        order = max(self.order, max_power // 2 + 2)
        q = gauss_legendre(order, iv)
        ex = REGISTRY.evaluate(key, q.nodes) if key else np.ones_like(q.nodes)
        if not np.all(np.isfinite(ex)):
            raise FloatingPointError(f"non-finite factor values on coordinate {k}")
        pw = q.nodes[None, :] ** np.arange(max_power + 1)[:, None]
        tab = pw @ (q.weights * ex)
        tab.setflags(write=False)
        return tab

    def gather(self, exps: np.ndarray, keys: np.ndarray, shift: np.ndarray) -> np.ndarray:
        """``I[u, i] = prod_k m_k[keys[u,k]](exps[u,k] + shift[i,k])``."""
        U, d = exps.shape
        out = np.ones((U, shift.shape[0]))
        for k in range(d):
            col_keys = keys[:, k]
            pmax = int(exps[:, k].max(initial=0) + shift[:, k].max(initial=0))
            idx = exps[:, k][:, None] + shift[None, :, k]
            for key in np.unique(col_keys):
                tab = self.moments(k, int(key), pmax)
                rows = col_keys == key
                out[rows] *= tab[idx[rows]]
        return out


@dataclass
class StackedExpansion:
    """Rows ``psi_j = sum_a T[j, a] atom_a`` over a shared atom set."""

    T: sp.csr_matrix  # (rows, A)
    exps: np.ndarray  # (A, d)
    keys: np.ndarray  # (A, d)

    @property
    def n_atoms(self) -> int:
        return self.exps.shape[0]

    @classmethod
    def from_triplets(cls, rows, coef, exps, keys, n_rows: int) -> "StackedExpansion":
        d = exps.shape[1] if exps.ndim == 2 else 0
        if len(coef) == 0:
            return cls(sp.csr_matrix((n_rows, 0)), np.zeros((0, d), np.int64), np.zeros((0, d), np.int64))
        atoms = np.concatenate([exps, keys], axis=1)
        uniq, inv = np.unique(atoms, axis=0, return_inverse=True)
        T = sp.coo_matrix((coef, (rows, inv.ravel())), shape=(n_rows, uniq.shape[0])).tocsr()
        T.sum_duplicates()
        T.eliminate_zeros()
        return cls(T, uniq[:, :d].copy(), uniq[:, d:].copy())

    def combine(self, c: np.ndarray) -> Expansion:
        """The expansion ``sum_j c_j psi_j``."""
        coef = self.T.T @ np.asarray(c, dtype=float)
        # atoms are already unique; keeping zeros keeps the atom set stable
        return Expansion(np.asarray(coef).ravel(), self.exps, self.keys)
