"""Extremal Rayleigh quotients of symmetric positive semi-definite pencils.

For a pencil (A, B) the supremum of x^T A x / x^T B x is infinite as soon as
some x in ker B has x^T A x > 0; this is reported as a value of ``inf`` with
that x as witness, not raised as an error.

The dense path is the reference implementation. Above ``dense_limit``
unknowns an ARPACK Lanczos iteration on a sparse LU factorization of the
denominator is used instead; it requires the denominator to be nonsingular.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInput, NumericalFailure

__all__ = ["DENSE_LIMIT", "EigenReport", "inf_quotient", "kernel", "sup_quotient"]

DENSE_LIMIT = 4000
KERNEL_TOL = 1e-10
INFINITE_TOL = 1e-8


@dataclass
class EigenReport:
    """Result of an extremal quotient computation.

    ``value`` is the extremal generalized eigenvalue (a squared constant) or
    ``math.inf``. ``kernel_dim`` counts the kernel directions that were set
    aside (of B for sup, of A for inf). ``vector`` is the extremal vector for
    finite results and the kernel witness for infinite ones.
    """

    value: float
    kernel_dim: int
    residual: float
    vector: np.ndarray | None = None
    deflated: int = 0
    path: str = "dense"

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def _dense(M) -> np.ndarray:
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _check_pencil(A, B):
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"pencil matrices must be square and equal in size, got {A.shape}, {B.shape}")
    if A.shape[0] < 1:
        raise InvalidInput("empty pencil")


def _sign_fix(x: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(x)))
    return -x if x[k] < 0 else x


def kernel(B, tol: float = KERNEL_TOL) -> np.ndarray:
    """Orthonormal basis of eigenvectors of B with eigenvalue <= tol * lambda_max."""
    Bd = _dense(B)
    w, V = np.linalg.eigh(Bd)
    top = max(float(w[-1]), 0.0)
    return V[:, w <= tol * top] if top > 0 else V


def _complement(n: int, deflate, inner):
    """Orthonormal Q spanning {x : W^T M x = 0}; None when nothing is deflated."""
    if deflate is None:
        return None
    W = np.asarray(deflate.toarray() if sp.issparse(deflate) else deflate, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[1] == 0:
        return None
    if W.shape[0] != n:
        raise InvalidInput(f"deflation basis has {W.shape[0]} rows, pencil has size {n}")
    MW = W if inner is None else np.asarray(inner @ W)
    return sla.null_space(MW.T)


def _residual(A, B, lam, x) -> float:
    return float(np.linalg.norm(A @ x - lam * (B @ x)) / np.linalg.norm(x))


def sup_quotient(A, B, deflate=None, inner=None, kernel_tol: float = KERNEL_TOL,
                 infinite_tol: float = INFINITE_TOL, dense_limit: int = DENSE_LIMIT) -> EigenReport:
    """Largest generalized eigenvalue of (A, B) off the kernel of B.

    Parameters
    ----------
    A, B : symmetric PSD matrices (dense or sparse)
    deflate : optional (n, k) basis removed first; the search is restricted to
        the ``inner``-orthogonal complement (Euclidean when ``inner`` is None)
    kernel_tol : relative eigenvalue threshold defining ker B
    infinite_tol : A-energy, relative to ||A||_F, above which a kernel vector
        of B makes the quotient infinite
    """
    _check_pencil(A, B)
    n = A.shape[0]
    if n > dense_limit and deflate is None:
        return _sup_iterative(A, B)
    Ad, Bd = _dense(A), _dense(B)
    Q = _complement(n, deflate, inner)
    if Q is not None:
        Ad, Bd = Q.T @ Ad @ Q, Q.T @ Bd @ Q
    lift = (lambda x: Q @ x) if Q is not None else (lambda x: x)
    deflated = 0 if Q is None else n - Q.shape[1]

    w, V = np.linalg.eigh(Bd)
    top = max(float(w[-1]), 0.0)
    ker = w <= kernel_tol * top if top > 0 else np.ones_like(w, dtype=bool)
    K, U = V[:, ker], V[:, ~ker]
    a_scale = float(np.linalg.norm(Ad))
    if K.shape[1]:
        mu, Y = np.linalg.eigh(K.T @ Ad @ K)
        if mu[-1] > infinite_tol * max(a_scale, np.finfo(float).tiny):
            x = _sign_fix(lift(K @ Y[:, -1]))
            return EigenReport(math.inf, K.shape[1], 0.0, x, deflated)
    if not U.shape[1]:
        return EigenReport(0.0, K.shape[1], 0.0, None, deflated)
    d = w[~ker]
    s = 1.0 / np.sqrt(d)
    C = (U.T @ Ad @ U) * s[:, None] * s[None, :]
    lam, Y = np.linalg.eigh(0.5 * (C + C.T))
    x = U @ (s * Y[:, -1])
    res = _residual(Ad, Bd, lam[-1], x)
    return EigenReport(float(lam[-1]), K.shape[1], res, _sign_fix(lift(x)), deflated)


def inf_quotient(A, B, deflate=None, inner=None, kernel_tol: float = KERNEL_TOL,
                 dense_limit: int = DENSE_LIMIT) -> EigenReport:
    """Smallest generalized eigenvalue of (A, B) off the kernel of A.

    ker A is removed (``inner``-orthogonally), then the minimum of
    x^T A x / x^T B x is 1 / max(x^T B x / x^T A x). Directions with
    x^T B x = 0 do not lower the infimum; if B vanishes on the whole
    complement the result is ``inf``.
    """
    _check_pencil(A, B)
    n = A.shape[0]
    if n > dense_limit and deflate is None:
        return _inf_iterative(A, B)
    Ad, Bd = _dense(A), _dense(B)
    Q = _complement(n, deflate, inner)
    if Q is not None:
        Ad, Bd = Q.T @ Ad @ Q, Q.T @ Bd @ Q
    deflated = 0 if Q is None else n - Q.shape[1]

    w, V = np.linalg.eigh(Ad)
    top = max(float(w[-1]), 0.0)
    ker = w <= kernel_tol * top if top > 0 else np.ones_like(w, dtype=bool)
    if ker.any() and inner is not None:
        # complement of ker A orthogonal in the given inner product
        Mi = inner if Q is None else Q.T @ _dense(inner) @ Q
        P = sla.null_space((np.asarray(Mi) @ V[:, ker]).T)
        Ad2 = P.T @ Ad @ P
        w2, V2 = np.linalg.eigh(0.5 * (Ad2 + Ad2.T))
        U, d = P @ V2, w2
    else:
        U, d = V[:, ~ker], w[~ker]
    if not U.shape[1]:
        return EigenReport(math.inf, int(ker.sum()), 0.0, None, deflated)
    s = 1.0 / np.sqrt(np.maximum(d, np.finfo(float).tiny))
    C = (U.T @ Bd @ U) * s[:, None] * s[None, :]
    mu, Y = np.linalg.eigh(0.5 * (C + C.T))
    if mu[-1] <= 0:
        return EigenReport(math.inf, int(ker.sum()), 0.0, None, deflated)
    lam = 1.0 / float(mu[-1])
    x = U @ (s * Y[:, -1])
    res = _residual(Ad, Bd, lam, x)
    lift = Q @ x if Q is not None else x
    return EigenReport(lam, int(ker.sum()), res, _sign_fix(lift), deflated)


def _factor(M):
    try:
        lu = spla.splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        raise NumericalFailure(f"sparse factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    cond = float(diag.max() / max(diag.min(), np.finfo(float).tiny))
    if diag.min() <= 1e-14 * diag.max():
        raise NumericalFailure("denominator is numerically singular; use the dense path", cond)
    return lu


def _extreme_pair(num, den):
    lu = _factor(den)
    n = num.shape[0]
    Minv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    # fixed pseudo-random start: a symmetric start vector can miss symmetry classes
    v0 = np.random.default_rng(0).standard_normal(n)
    lam, X = spla.eigsh(sp.csr_matrix(num), k=1, M=sp.csr_matrix(den), Minv=Minv,
                        which="LA", v0=v0, tol=1e-12, maxiter=20 * n)
    return float(lam[0]), X[:, 0]


def _sup_iterative(A, B) -> EigenReport:
    lam, x = _extreme_pair(A, B)
    return EigenReport(lam, 0, _residual(A, B, lam, x), _sign_fix(x), 0, "iterative")


def _inf_iterative(A, B) -> EigenReport:
    mu, x = _extreme_pair(B, A)
    lam = 1.0 / mu if mu > 0 else math.inf
    res = _residual(A, B, lam, x) if mu > 0 else 0.0
    return EigenReport(lam, 0, res, _sign_fix(x), 0, "iterative")
