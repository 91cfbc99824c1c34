"""Pointwise matrix algebra for gradients of vector fields.

Gradient convention: ``G[i, j] = d v_j / d x_i``, i.e. the transpose of the
Jacobian. All Frobenius norms below are transpose invariant, so the
convention only shows up in the signs of the rotation vector.

The rotation vector of a gradient has one entry per index pair ``(i, j)``,
``i < j``, in lexicographic order, with value ``G[i, j] - G[j, i]``. For
``N = 2`` this is the scalar ``d1 v2 - d2 v1``; for ``N = 3`` use
:func:`rotvec_to_curl3` to get the classical curl.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidDimension

__all__ = [
    "Decomposition",
    "PointwiseResiduals",
    "check_pointwise_identities",
    "decompose",
    "pair_index",
    "rot_generator",
    "rotvec_dim",
    "rotvec_of_gradient",
    "rotvec_to_curl3",
    "skw_of_rotvec",
]


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidDimension(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] < 2:
        raise InvalidDimension(f"dimension must be at least 2, got {A.shape[0]}")
    return A


def rotvec_dim(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(n: int) -> list[tuple[int, int]]:
    """Lexicographic list of pairs ``(i, j)``, ``i < j``."""
    return list(combinations(range(n), 2))


@dataclass(frozen=True)
class Decomposition:
    sym: np.ndarray
    skw: np.ndarray
    dev: np.ndarray
    devsym: np.ndarray
    trace: float


def decompose(A) -> Decomposition:
    """Split ``A`` into symmetric, skew, deviatoric and trace parts."""
    A = _square(A)
    n = A.shape[0]
    tr = float(np.trace(A))
    iso = (tr / n) * np.eye(n)
    sym = 0.5 * (A + A.T)
    return Decomposition(
        sym=sym,
        skw=0.5 * (A - A.T),
        dev=A - iso,
        devsym=sym - iso,
        trace=tr,
    )


def rotvec_of_gradient(G) -> np.ndarray:
    G = _square(G)
    i, j = np.triu_indices(G.shape[0], k=1)
    return G[i, j] - G[j, i]


def skw_of_rotvec(r, n: int) -> np.ndarray:
    """Inverse of ``rotvec_of_gradient`` on skew matrices."""
    r = np.asarray(r, dtype=float).reshape(-1)
    if n < 2:
        raise InvalidDimension(f"dimension must be at least 2, got {n}")
    if r.size != rotvec_dim(n):
        raise InvalidDimension(f"rotation vector of length {r.size} does not match N={n}")
    S = np.zeros((n, n))
    i, j = np.triu_indices(n, k=1)
    S[i, j] = 0.5 * r
    S[j, i] = -0.5 * r
    return S


def rot_generator(sigma, n: int | None = None) -> np.ndarray:
    """Skew matrix ``S`` whose linear field ``x -> S x`` has rotation ``sigma``.

    The field is divergence free with vanishing symmetric gradient. Entries
    are ``S[i, j] = -sigma_ij / 2`` for ``i < j``.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float)).reshape(-1)
    if n is None:
        # invert m = n(n-1)/2
        n = int(round((1 + np.sqrt(1 + 8 * sigma.size)) / 2))
    if rotvec_dim(n) != sigma.size:
        raise InvalidDimension(f"rotation vector of length {sigma.size} does not match N={n}")
    # gradient of x -> S x is S^T, so S = skw_of_rotvec(sigma)^T
    return skw_of_rotvec(sigma, n).T.copy()


def rotvec_to_curl3(r) -> np.ndarray:
    """Reorder a 3D rotation vector ``(r12, r13, r23)`` into ``curl v``."""
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size != 3:
        raise InvalidDimension("classical curl ordering exists only for N = 3")
    return np.array([r[2], -r[1], r[0]])


@dataclass(frozen=True)
class PointwiseResiduals:
    """Residuals of the four pointwise gradient identities.

    ``devsym_div_rot``: |G|^2 - |dev sym G|^2 - tr(G)^2/N - |rot|^2/2
    ``rot_cross``:      |G|^2 - |rot|^2 - <G, G^T>
    ``sym_cross``:      |G|^2 - 2|sym G|^2 + <G, G^T>
    ``skw_cross``:      |G|^2 - 2|skw G|^2 - <G, G^T>
    """

    devsym_div_rot: float
    rot_cross: float
    sym_cross: float
    skw_cross: float
    scale: float

    @property
    def max_abs(self) -> float:
        return max(abs(self.devsym_div_rot), abs(self.rot_cross),
                   abs(self.sym_cross), abs(self.skw_cross))

    def ok(self, rtol: float = 1e-12) -> bool:
        return self.max_abs <= rtol * self.scale


def check_pointwise_identities(G) -> PointwiseResiduals:
    G = _square(G)
    n = G.shape[0]
    d = decompose(G)
    r = rotvec_of_gradient(G)
    g2 = float(np.sum(G * G))
    cross = float(np.sum(G * G.T))
    rot2 = float(r @ r)
    return PointwiseResiduals(
        devsym_div_rot=g2 - float(np.sum(d.devsym ** 2)) - d.trace ** 2 / n - 0.5 * rot2,
        rot_cross=g2 - rot2 - cross,
        sym_cross=g2 - 2.0 * float(np.sum(d.sym ** 2)) + cross,
        skw_cross=g2 - 2.0 * float(np.sum(d.skw ** 2)) - cross,
        scale=1.0 + g2,
    )
