"""Separable scalar and vector fields built from univariate factors.

A separable scalar on R^d is a sum of terms, each term a product of ``d``
univariate factors (one per coordinate).  Coordinates a term does not depend
on carry the ``constant(1)`` placeholder so every term has exactly ``d``
factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

CONSTANT = "constant"
MONOMIAL = "monomial"
SCALED_EXPONENTIAL = "scaled_exponential"
CUSTOM = "custom"


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"invalid interval ({self.lo}, {self.hi})")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x > self.lo) & (x < self.hi)


@dataclass(frozen=True)
class Hyperrectangle:
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        if len(self.intervals) < 1:
            raise ValueError("hyperrectangle needs at least one interval")

    @classmethod
    def cube(cls, d: int, half_width: float) -> "Hyperrectangle":
        return cls(tuple(Interval(-half_width, half_width) for _ in range(d)))

    @property
    def d(self) -> int:
        return len(self.intervals)

    @property
    def lo(self) -> np.ndarray:
        return np.array([iv.lo for iv in self.intervals])

    @property
    def hi(self) -> np.ndarray:
        return np.array([iv.hi for iv in self.intervals])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.d))


@dataclass(frozen=True, eq=False)
class Factor1D:
    """One univariate factor.

    ``scaled_exponential`` means ``scale * x**power * exp(rate * x)``.
    Equality is by value except for ``custom`` factors, which compare by
    identity of the callback.
    """

    kind: str
    value: float = 1.0
    power: int = 0
    rate: float = 0.0
    fn: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in (CONSTANT, MONOMIAL, SCALED_EXPONENTIAL, CUSTOM):
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.kind in (MONOMIAL, SCALED_EXPONENTIAL) and (self.power < 0 or int(self.power) != self.power):
            raise ValueError("monomial power must be a non-negative integer")
        if not math.isfinite(self.value):
            raise ValueError("factor constant must be finite")
        if self.kind == CUSTOM and not callable(self.fn):
            raise ValueError("custom factor needs a callable")

    def _key(self):
        return (self.kind, self.value, self.power, self.rate, id(self.fn) if self.fn else None)

    def __eq__(self, other):
        return isinstance(other, Factor1D) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    @property
    def is_unit(self) -> bool:
        return self.kind == CONSTANT and self.value == 1.0

    def __call__(self, x):
        return eval_factor(self, x)


def constant(value: float) -> Factor1D:
    return Factor1D(CONSTANT, value=float(value))


def monomial(power: int) -> Factor1D:
    return Factor1D(MONOMIAL, power=int(power))


def scaled_exponential(scale: float, rate: float, power: int = 0) -> Factor1D:
    return Factor1D(SCALED_EXPONENTIAL, value=float(scale), power=int(power), rate=float(rate))


def custom(fn: Callable) -> Factor1D:
    return Factor1D(CUSTOM, fn=fn)


ONE = constant(1.0)


def eval_factor(f: Factor1D, x):
    """Evaluate a factor at a scalar or array ``x``."""
    x = np.asarray(x, dtype=float)
    if f.kind == CONSTANT:
        return np.full_like(x, f.value)[()] if x.ndim else f.value
    if f.kind == MONOMIAL:
        return x**f.power
    if f.kind == SCALED_EXPONENTIAL:
        return f.value * x**f.power * np.exp(f.rate * x)
    try:
        out = f.fn(x)
    except Exception as exc:  # noqa: BLE001
        raise EvaluationError(f"custom factor failed: {exc}") from exc
    return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class SeparableScalar:
    terms: tuple[tuple[Factor1D, ...], ...]
    d: int

    def __post_init__(self):
        terms = tuple(tuple(t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        for t in terms:
            if len(t) != self.d:
                raise ValueError(f"term has {len(t)} factors, expected {self.d}")

    @classmethod
    def zero(cls, d: int) -> "SeparableScalar":
        return cls((), d)

    @classmethod
    def from_sparse(cls, d: int, terms: Sequence[tuple[float, Mapping[int, Factor1D]]]) -> "SeparableScalar":
        """Build from ``(coefficient, {coordinate: factor})`` pairs.

        The coefficient is folded into a constant factor on the first
        coordinate that has no explicit factor (or multiplied into coordinate 0).
        """
        full = []
        for coef, factors in terms:
            if coef == 0.0:
                continue
            row = [ONE] * d
            for k, fac in factors.items():
                if not 0 <= k < d:
                    raise ValueError(f"coordinate {k} out of range for d={d}")
                row[k] = fac
            if coef != 1.0:
                free = [k for k in range(d) if k not in factors]
                if free:
                    row[free[0]] = constant(coef)
                else:
                    row[0] = _scale_factor(row[0], coef)
            full.append(tuple(row))
        return cls(tuple(full), d)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def __add__(self, other: "SeparableScalar") -> "SeparableScalar":
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        return SeparableScalar(self.terms + other.terms, self.d)

    def __call__(self, x):
        return eval_separable(self, x)


def _scale_factor(f: Factor1D, c: float) -> Factor1D:
    if f.kind == CONSTANT:
        return constant(f.value * c)
    if f.kind == MONOMIAL:
        return scaled_exponential(c, 0.0, f.power)
    if f.kind == SCALED_EXPONENTIAL:
        return scaled_exponential(f.value * c, f.rate, f.power)
    fn = f.fn
    return custom(lambda x: c * fn(x))


@dataclass(frozen=True)
class SeparableMap:
    """Vector field whose components are separable scalars."""

    rows: tuple[SeparableScalar, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise ValueError("map needs at least one row")
        if len({r.d for r in rows}) != 1:
            raise ValueError("all rows must share the same input dimension")

    @classmethod
    def constant_vector(cls, values: Sequence[float]) -> "SeparableMap":
        d = len(values)
        return cls(tuple(SeparableScalar.from_sparse(d, [(float(v), {})]) for v in values))

    @classmethod
    def zero(cls, d: int, out: int | None = None) -> "SeparableMap":
        return cls(tuple(SeparableScalar.zero(d) for _ in range(d if out is None else out)))

    @property
    def d(self) -> int:
        return self.rows[0].d

    @property
    def out_dim(self) -> int:
        return len(self.rows)

    @property
    def n_f(self) -> int:
        return max(r.n_terms for r in self.rows)

    @property
    def is_constant(self) -> bool:
        return all(f.kind == CONSTANT for r in self.rows for t in r.terms for f in t)

    def __call__(self, x) -> np.ndarray:
        return np.array([eval_separable(r, x) for r in self.rows])


def eval_separable(s: SeparableScalar, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.d,):
        raise ValueError(f"expected point of dimension {s.d}, got shape {x.shape}")
    total = 0.0
    for term in s.terms:
        p = 1.0
        for k, fac in enumerate(term):
            p *= float(eval_factor(fac, x[k]))
        total += p
    return total


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def gauss_legendre(order: int, iv: Interval) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes mapped onto ``iv``."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    t, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * iv.width
    nodes = iv.lo + half * (t + 1.0)
    nodes.setflags(write=False)
    weights = half * w
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, order)


def default_quadrature_order(M: int) -> int:
    return max(2 * M + 4, 16)


def integrate_factor_product(factors: Sequence[Factor1D], iv: Interval, q: QuadratureRule) -> float:
    """Integrate the product of ``factors`` over ``iv`` with rule ``q``.

    ``q`` must already be mapped onto ``iv``.
    """
    if not (np.all(q.nodes > iv.lo) and np.all(q.nodes < iv.hi)):
        raise ValueError("quadrature nodes are not inside the interval")
    vals = np.ones_like(q.nodes)
    for f in factors:
        vals = vals * eval_factor(f, q.nodes)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("non-finite factor value at a quadrature node")
    return q.integrate(vals)
