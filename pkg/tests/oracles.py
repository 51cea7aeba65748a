"""Independent reference computations used by the tests.

Everything here works on point values only (dense tensor-product Gauss
quadrature, plain Lyapunov solves), never on the package's moment tables.
"""

import itertools

import numpy as np
import scipy.linalg as sla

from hjisynth.basis import eval_basis, eval_basis_gradient


def tensor_gauss(domain, n):
    t, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = [], []
    for lo, hi in zip(domain.lo, domain.hi):
        nodes.append(0.5 * (hi - lo) * t + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    X = np.array(list(itertools.product(*nodes)))
    W = np.array([np.prod(c) for c in itertools.product(*weights)])
    return X, W


def dense_galerkin(sys, basis, c_ctrl, c_prev, gamma, n=24):
    """F, G, H and b from pointwise evaluation on a tensor grid."""
    X, W = tensor_gauss(sys.domain, n)
    phi = eval_basis(basis, X)  # (N, n)
    dphi = eval_basis_gradient(basis, X)  # (N, n, d)
    f = sys.f_eval(X)  # (N, d)
    g = sys.g_eval(X)  # (N, d, m)
    h = sys.h_eval(X)  # (N, d, p)
    dV_ctrl = dphi.transpose(0, 2, 1) @ c_ctrl  # (N, d)
    u = -0.5 * np.einsum("ab,nb->na", sys.R_inv, np.einsum("nda,nd->na", g, dV_ctrl))
    if c_prev is None or np.isinf(gamma) or sys.p == 0:
        w = np.zeros((X.shape[0], sys.p))
    else:
        dV_prev = dphi.transpose(0, 2, 1) @ c_prev
        w = np.einsum("ab,nb->na", sys.P_inv, np.einsum("nda,nd->na", h, dV_prev)) / (2 * gamma**2)
    Wphi = phi * W[:, None]
    F = Wphi.T @ np.einsum("njd,nd->nj", dphi, f)
    G = Wphi.T @ np.einsum("njd,nd->nj", dphi, np.einsum("nda,na->nd", g, u))
    H = Wphi.T @ np.einsum("njd,nd->nj", dphi, np.einsum("nda,na->nd", h, w)) if sys.p else np.zeros_like(F)
    cost = sys.ell_eval(X) + np.einsum("na,ab,nb->n", u, sys.R, u)
    if sys.p and not np.isinf(gamma):
        cost = cost - gamma**2 * np.einsum("na,ab,nb->n", w, sys.P, w)
    b = -Wphi.T @ cost
    return F, G, H, b


def newton_kleinman(A, B, Q, R, K0=None, tol=1e-13, max_iter=100):
    """Stabilizing ARE solution X of A^t X + X A - X B R^-1 B^t X + Q = 0."""
    d = A.shape[0]
    K = np.zeros((B.shape[1], d)) if K0 is None else K0
    X_old = None
    for _ in range(max_iter):
        Acl = A + B @ K
        X = sla.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        K = -np.linalg.solve(R, B.T @ X)
        if X_old is not None and np.max(np.abs(X - X_old)) < tol:
            break
        X_old = X
    return X


def quadratic_coefficients(X, basis):
    """Coefficients of x^t X x in a degree-2 monomial basis."""
    c = np.zeros(basis.n)
    for i, mi in enumerate(basis.indices):
        nz = [k for k, p in enumerate(mi) if p]
        if sum(mi) != 2:
            continue
        if len(nz) == 1:
            c[i] = X[nz[0], nz[0]]
        else:
            c[i] = 2 * X[nz[0], nz[1]]
    return c
