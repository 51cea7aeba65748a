"""Total-degree monomial basis without the constant term."""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np

MultiIndex = tuple[int, ...]
ORDERING = "grlex"


def basis_cardinality(d: int, M: int) -> int:
    if d < 1 or M < 1:
        raise ValueError("need d >= 1 and M >= 1")
    n = sum(comb(d + m - 1, m) for m in range(1, M + 1))
    if n > sys.maxsize:
        raise OverflowError(f"basis with d={d}, M={M} has {n} elements")
    return n


def _degree_block(d: int, m: int):
    # combinations_with_replacement emits exponents in descending lex order
    for combo in itertools.combinations_with_replacement(range(d), m):
        powers = [0] * d
        for k in combo:
            powers[k] += 1
        yield tuple(powers)


@dataclass(frozen=True)
class MonomialBasis:
    d: int
    M: int
    indices: tuple[MultiIndex, ...]

    @cached_property
    def powers(self) -> np.ndarray:
        p = np.array(self.indices, dtype=np.int64).reshape(len(self.indices), self.d)
        p.setflags(write=False)
        return p

    @property
    def n(self) -> int:
        return len(self.indices)

    @cached_property
    def position(self) -> dict[MultiIndex, int]:
        return {mi: i for i, mi in enumerate(self.indices)}

    def __len__(self) -> int:
        return len(self.indices)


def enumerate_basis(d: int, M: int) -> MonomialBasis:
    basis_cardinality(d, M)
    indices = tuple(mi for m in range(1, M + 1) for mi in _degree_block(d, m))
    return MonomialBasis(d, M, indices)


def _check_points(b: MonomialBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (b.d,):
        raise ValueError(f"expected points of dimension {b.d}, got shape {x.shape}")
    return x


def _power_table(x: np.ndarray, M: int) -> np.ndarray:
    # x[..., k] ** p for p = 0..M, shape (..., d, M+1)
    return x[..., None] ** np.arange(M + 1)


def eval_basis(b: MonomialBasis, x) -> np.ndarray:
    """Basis values at one point (shape (n,)) or many points (shape (N, n))."""
    x = _check_points(b, x)
    pw = _power_table(x, b.M)
    k = np.arange(b.d)
    # pw[..., k, powers[i, k]] -> (..., n, d)
    vals = pw[..., k[None, :], b.powers]
    return vals.prod(axis=-1)


def eval_basis_gradient(b: MonomialBasis, x) -> np.ndarray:
    """Gradient matrix: shape (n, d) for one point, (N, n, d) for many."""
    x = _check_points(b, x)
    pw = _power_table(x, b.M)
    k = np.arange(b.d)
    vals = pw[..., k[None, :], b.powers]  # (..., n, d)
    dpow = np.maximum(b.powers - 1, 0)
    dvals = b.powers * pw[..., k[None, :], dpow]
    # product over all coordinates except k, without dividing
    ones = np.ones(vals.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, vals[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, vals[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return dvals * left * right


def partial_derivative_index(mi: MultiIndex, k: int) -> tuple[int, MultiIndex | None]:
    """Symbolic derivative d/dx_k of x**mi; ``(0, None)`` marks a zero result."""
    if not 0 <= k < len(mi):
        raise ValueError(f"coordinate {k} out of range")
    nu = mi[k]
    if nu == 0:
        return 0, None
    out = list(mi)
    out[k] -= 1
    return nu, tuple(out)
