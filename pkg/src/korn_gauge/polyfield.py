"""Exact calculus on polynomial vector fields over simplicial meshes.

Integrals are exact up to rounding. A monomial is integrated over a
d-simplex T with vertices v_0..v_d via

    int_T x^e dx = d! |T| e! / (|e| + d)! * H_e(v_0, ..., v_d),

where H_e is the coefficient of t^e in prod_j 1 / (1 - v_j . t). This is the
barycentric rule int_T lambda^a = a! d! |T| / (|a| + d)! after expanding
x = sum_j lambda_j v_j with the multinomial theorem. H_e is computed for all
e at once, one linear recurrence per vertex. The same formula covers facets
embedded in R^N (d = N - 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.signal import convolve

from .errors import InvalidDimension, InvalidInput, MeshError, PreconditionError
from .meshkit import SimplicialMesh

__all__ = [
    "DEFAULT_DEGREE",
    "MAX_DEGREE",
    "EnergyIntegrals",
    "GrisvardResiduals",
    "KornH10Residuals",
    "Poly",
    "PolyVecField",
    "bc_field_family",
    "bubble",
    "energy_integrals",
    "integrate_mesh",
    "integrate_simplex",
    "simplex_moments",
    "surface_term_Ib",
    "verify_grisvard",
    "verify_h10_korn",
]

DEFAULT_DEGREE = 4
MAX_DEGREE = 8


class Poly:
    """Polynomial in ``n`` variables with dense coefficients.

    ``coef[e_1, ..., e_n]`` multiplies ``x_1^e_1 ... x_n^e_n``; the array is
    kept trimmed to the total degree of the polynomial.
    """

    __slots__ = ("coef",)

    def __init__(self, coef):
        c = np.asarray(coef, dtype=float)
        if c.ndim == 0:
            raise InvalidDimension("coefficient array needs one axis per variable")
        self.coef = _trim(c)

    @classmethod
    def constant(cls, n: int, value: float = 1.0) -> "Poly":
        return cls(np.full((1,) * n, float(value)))

    @classmethod
    def variable(cls, n: int, i: int) -> "Poly":
        c = np.zeros((2,) * n)
        idx = [0] * n
        idx[i] = 1
        c[tuple(idx)] = 1.0
        return cls(c)

    @classmethod
    def random(cls, n: int, degree: int, rng: np.random.Generator) -> "Poly":
        c = rng.standard_normal((degree + 1,) * n)
        c[_total_degree((degree + 1,) * n) > degree] = 0.0
        return cls(c)

    @property
    def nvars(self) -> int:
        return self.coef.ndim

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coef != 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coef) <= tol))

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise InvalidDimension("polynomials in different numbers of variables")
            return other
        return Poly.constant(self.nvars, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        shape = np.maximum(self.coef.shape, other.coef.shape)
        return Poly(_pad(self.coef, shape) + _pad(other.coef, shape))

    __radd__ = __add__

    def __neg__(self):
        return Poly(-self.coef)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.coef * float(other))
        other = self._coerce(other)
        return Poly(convolve(self.coef, other.coef, method="direct"))

    __rmul__ = __mul__

    def diff(self, i: int) -> "Poly":
        c = self.coef
        if c.shape[i] == 1:
            return Poly(np.zeros((1,) * self.nvars))
        k = np.arange(1, c.shape[i], dtype=float)
        shape = [1] * self.nvars
        shape[i] = -1
        return Poly(np.take(c, np.arange(1, c.shape[i]), axis=i) * k.reshape(shape))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nvars:
            raise InvalidDimension(f"points have {x.shape[-1]} coordinates, expected {self.nvars}")
        pts = x.reshape(-1, self.nvars)
        res = self.coef
        for i in range(self.nvars):
            pw = pts[:, i:i + 1] ** np.arange(self.coef.shape[i])
            res = np.einsum("mk,k...->m...", pw, res) if i == 0 else np.einsum("mk,mk...->m...", pw, res)
        return res.reshape(x.shape[:-1])

    def __repr__(self):
        return f"Poly(nvars={self.nvars}, degree={self.degree})"


def _total_degree(shape) -> np.ndarray:
    grids = np.indices(shape)
    return grids.sum(axis=0)


def _pad(c, shape):
    pad = [(0, int(s) - d) for s, d in zip(shape, c.shape)]
    return np.pad(c, pad)


def _trim(c):
    nz = np.argwhere(c != 0)
    if not len(nz):
        return np.zeros((1,) * c.ndim)
    deg = int(nz.sum(axis=1).max())
    sl = tuple(slice(0, min(deg + 1, s)) for s in c.shape)
    return np.ascontiguousarray(c[sl])


# --- exact simplex integration ------------------------------------------------


def simplex_moments(X, degree: int) -> np.ndarray:
    """Monomial moments of one or many simplices.

    Parameters
    ----------
    X : (..., d + 1, N) array of simplex vertices
    degree : highest total degree needed

    Returns
    -------
    (..., degree + 1, ..., degree + 1) array; entry ``e`` is ``int_T x^e``
    for ``|e| <= degree`` and zero otherwise.
    """
    X = np.asarray(X, dtype=float)
    lead = X.shape[:-2]
    kp1, n = X.shape[-2:]
    d = kp1 - 1
    q = int(degree)
    if d == n:
        meas = np.abs(np.linalg.det(X[..., 1:, :] - X[..., :1, :])) / math.factorial(d)
    else:
        E = X[..., 1:, :] - X[..., :1, :]
        gram = np.einsum("...ik,...jk->...ij", E, E)
        meas = np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / math.factorial(d)
    scale = float(np.max(np.abs(X))) if X.size else 1.0
    if np.any(meas <= 1e-14 * max(scale, 1.0) ** d):
        raise MeshError("degenerate simplex (zero measure)")

    tot = _total_degree((q + 1,) * n)
    H = np.zeros(lead + (q + 1,) * n)
    H[(Ellipsis,) + (0,) * n] = 1.0
    nl = len(lead)
    for j in range(kp1):
        v = [X[..., j, i].reshape(lead + (1,) * n) for i in range(n)]
        G = H.copy()
        # multiply by 1 / (1 - v_j . t): G_e = H_e + sum_i v_ji G_{e - u_i},
        # swept in order of increasing total degree
        for s_ in range(1, q + 1):
            acc = H.copy()
            for i in range(n):
                sh = np.zeros_like(G)
                dst = [slice(None)] * (nl + n)
                src = [slice(None)] * (nl + n)
                dst[nl + i] = slice(1, None)
                src[nl + i] = slice(0, -1)
                sh[tuple(dst)] = G[tuple(src)]
                acc += v[i] * sh
            layer = tot == s_
            G[..., layer] = acc[..., layer]
        H = G

    fact = np.vectorize(math.factorial, otypes=[float])
    efact = np.prod([fact(g) for g in np.indices((q + 1,) * n)], axis=0)
    w = np.where(tot <= q, efact * math.factorial(d) / fact(tot + d), 0.0)
    return H * w * meas.reshape(lead + (1,) * n)


def integrate_simplex(p: Poly, T) -> float:
    """Exact integral of ``p`` over the simplex with vertex rows ``T``."""
    T = np.asarray(T, dtype=float)
    if T.shape[-1] != p.nvars:
        raise InvalidDimension("simplex and polynomial live in different dimensions")
    q = p.degree
    M = simplex_moments(T, q)
    return float(np.sum(_pad(p.coef, (q + 1,) * p.nvars) * M))


@lru_cache(maxsize=64)
def _cell_moment_total(mesh: SimplicialMesh, degree: int) -> np.ndarray:
    M = simplex_moments(mesh.vertices[mesh.cells], degree)
    return M.sum(axis=0)


def integrate_mesh(p: Poly, mesh: SimplicialMesh) -> float:
    q = p.degree
    M = _cell_moment_total(mesh, q)
    return float(np.sum(_pad(p.coef, (q + 1,) * p.nvars) * M))


def _integrate_facets(p: Poly, mesh: SimplicialMesh, which) -> float:
    q = p.degree
    M = simplex_moments(mesh.vertices[mesh.facets[which]], q).sum(axis=0)
    return float(np.sum(_pad(p.coef, (q + 1,) * p.nvars) * M))


# --- vector fields ------------------------------------------------------------


@dataclass(frozen=True)
class PolyVecField:
    """Polynomial vector field with one :class:`Poly` per component."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        n = len(comps)
        if n < 2 or any(c.nvars != n for c in comps):
            raise InvalidDimension("a field in R^N needs N components in N variables")
        object.__setattr__(self, "components", comps)

    @classmethod
    def random(cls, dim: int, degree: int, rng: np.random.Generator) -> "PolyVecField":
        _check_degree(degree)
        return cls(tuple(Poly.random(dim, degree, rng) for _ in range(dim)))

    @classmethod
    def linear(cls, A, b=None) -> "PolyVecField":
        """Affine field ``x -> A x + b``."""
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        X = [Poly.variable(n, k) for k in range(n)]
        comps = []
        for j in range(n):
            c = Poly.constant(n, b[j])
            for k in range(n):
                c = c + A[j, k] * X[k]
            comps.append(c)
        return cls(tuple(comps))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    def __call__(self, x) -> np.ndarray:
        return np.stack([c(x) for c in self.components], axis=-1)

    def scale(self, p) -> "PolyVecField":
        return PolyVecField(tuple(p * c for c in self.components))

    def __add__(self, other: "PolyVecField") -> "PolyVecField":
        return PolyVecField(tuple(a + b for a, b in zip(self.components, other.components)))

    def grad(self) -> list[list[Poly]]:
        """``G[i][j] = d v_j / d x_i``."""
        return [[c.diff(i) for c in self.components] for i in range(self.dim)]

    def div(self) -> Poly:
        out = self.components[0].diff(0)
        for i in range(1, self.dim):
            out = out + self.components[i].diff(i)
        return out

    def rot(self) -> list[Poly]:
        G = self.grad()
        return [G[i][j] - G[j][i] for i, j in combinations(range(self.dim), 2)]


def _check_degree(degree):
    if degree < 0 or degree > MAX_DEGREE:
        raise InvalidInput(f"field degree must be in [0, {MAX_DEGREE}], got {degree}")


def _sumsq(polys) -> Poly:
    polys = list(polys)
    out = polys[0] * polys[0]
    for p in polys[1:]:
        out = out + p * p
    return out


@dataclass(frozen=True)
class EnergyIntegrals:
    grad2: float
    sym2: float
    devsym2: float
    div2: float
    rot2: float
    cross: float
    dim: int

    @property
    def devsym_identity(self) -> float:
        """grad2 - devsym2 - div2/N - rot2/2."""
        return self.grad2 - self.devsym2 - self.div2 / self.dim - 0.5 * self.rot2

    @property
    def rot_identity(self) -> float:
        """grad2 - rot2 - cross."""
        return self.grad2 - self.rot2 - self.cross


def energy_integrals(v: PolyVecField, mesh: SimplicialMesh) -> EnergyIntegrals:
    """Exact L2(Omega) norms of grad, sym/devsym grad, div and rot of ``v``."""
    if v.dim != mesh.dim:
        raise InvalidDimension("field and mesh dimensions differ")
    n = v.dim
    G = v.grad()
    div = v.div()
    S = [[0.5 * (G[i][j] + G[j][i]) for j in range(n)] for i in range(n)]
    D = [[S[i][j] - (div * (1.0 / n) if i == j else 0.0) for j in range(n)] for i in range(n)]
    cross = G[0][0] * G[0][0]
    for i in range(n):
        for j in range(n):
            if i or j:
                cross = cross + G[i][j] * G[j][i]
    return EnergyIntegrals(
        grad2=integrate_mesh(_sumsq(g for row in G for g in row), mesh),
        sym2=integrate_mesh(_sumsq(s for row in S for s in row), mesh),
        devsym2=integrate_mesh(_sumsq(d for row in D for d in row), mesh),
        div2=integrate_mesh(div * div, mesh),
        rot2=integrate_mesh(_sumsq(v.rot()), mesh),
        cross=integrate_mesh(cross, mesh),
        dim=n,
    )


def _facet_groups(mesh: SimplicialMesh):
    """Boundary facets grouped by (numerically) identical outward normal."""
    groups = {}
    for k, nu in enumerate(mesh.facet_normals):
        key = tuple(np.round(nu, 12) + 0.0)
        groups.setdefault(key, []).append(k)
    return [(mesh.facet_normals[idx[0]], np.array(idx)) for idx in groups.values()]


def surface_term_Ib(v: PolyVecField, mesh: SimplicialMesh) -> float:
    """Boundary integral of ``v_n div_G v_t - v_t . grad_G v_n`` over all facets.

    ``v_n = nu . v`` and ``v_t = v - v_n nu``; surface operators are the
    tangential projections ``P = I - nu nu^T`` of the ambient ones, which is
    exact on flat facets.
    """
    n = v.dim
    total = 0.0
    for nu, idx in _facet_groups(mesh):
        P = np.eye(n) - np.outer(nu, nu)
        vn = Poly.constant(n, 0.0)
        for i in range(n):
            vn = vn + nu[i] * v.components[i]
        vt = [v.components[j] - nu[j] * vn for j in range(n)]
        dvn = [vn.diff(i) for i in range(n)]
        grad_g_vn = [sum((P[i, k] * dvn[k] for k in range(n)), Poly.constant(n, 0.0))
                     for i in range(n)]
        div_g_vt = Poly.constant(n, 0.0)
        for i in range(n):
            for k in range(n):
                if P[i, k] != 0.0:
                    div_g_vt = div_g_vt + P[i, k] * vt[k].diff(i)
        integrand = vn * div_g_vt
        for i in range(n):
            integrand = integrand - vt[i] * grad_g_vn[i]
        total += _integrate_facets(integrand, mesh, idx)
    return total


@dataclass(frozen=True)
class GrisvardResiduals:
    """Residuals of the two flat-boundary integration-by-parts identities.

    ``sym_form``: |grad2 - I_b - (2 sym2 - div2)|
    ``rot_form``: |grad2 + I_b - (rot2 + div2)|
    """

    sym_form: float
    rot_form: float
    Ib: float
    scale: float

    @property
    def max_abs(self) -> float:
        return max(self.sym_form, self.rot_form)

    def ok(self, rtol: float = 1e-10) -> bool:
        return self.max_abs <= rtol * self.scale


def verify_grisvard(v: PolyVecField, mesh: SimplicialMesh) -> GrisvardResiduals:
    e = energy_integrals(v, mesh)
    Ib = surface_term_Ib(v, mesh)
    return GrisvardResiduals(
        sym_form=abs(e.grad2 - Ib - (2.0 * e.sym2 - e.div2)),
        rot_form=abs(e.grad2 + Ib - (e.rot2 + e.div2)),
        Ib=Ib,
        scale=1.0 + e.grad2,
    )


@dataclass(frozen=True)
class KornH10Residuals:
    gaffney: float
    korn: float
    margin: float
    equality_2d: bool
    scale: float

    def ok(self, rtol: float = 1e-10) -> bool:
        return max(self.gaffney, self.korn) <= rtol * self.scale


def _facet_sample_points(mesh: SimplicialMesh) -> np.ndarray:
    d = mesh.dim
    bary = [np.eye(d)[k] for k in range(d)] + [np.full(d, 1.0 / d)]
    bary += [np.array(b) / sum(b) for b in ([1, 2, 4][:d], [3, 1, 2][:d])]
    B = np.array(bary)
    X = mesh.vertices[mesh.facets]
    return np.einsum("pk,fkn->fpn", B, X).reshape(-1, mesh.dim)


def verify_h10_korn(v: PolyVecField, mesh: SimplicialMesh, trace_tol: float = 1e-12) -> KornH10Residuals:
    """Check the zero-trace Gaffney and Korn identities for ``v``.

    Requires ``v`` to vanish on the boundary; this is checked at sample points
    of every boundary facet.
    """
    vals = v(_facet_sample_points(mesh))
    coef_scale = max(1.0, max(float(np.max(np.abs(c.coef))) for c in v.components))
    if np.max(np.abs(vals)) > trace_tol * coef_scale:
        raise PreconditionError("field does not vanish on the boundary")
    e = energy_integrals(v, mesh)
    n = v.dim
    scale = 1.0 + e.grad2
    korn_rhs = 2.0 * e.devsym2 + (2.0 - n) / n * e.div2
    return KornH10Residuals(
        gaffney=abs(e.grad2 - e.rot2 - e.div2),
        korn=abs(e.grad2 - korn_rhs),
        margin=2.0 * e.devsym2 - e.grad2,
        equality_2d=bool(n == 2 and abs(e.grad2 - 2.0 * e.devsym2) <= 1e-12 * scale),
        scale=scale,
    )


# --- field families -----------------------------------------------------------


def _shape_dim(shape: str) -> int:
    dims = {"square": 2, "cube": 3}
    if shape not in dims:
        raise InvalidInput(f"field families exist for the unit square and cube, not {shape!r}")
    return dims[shape]


def _edge_factor(n: int, i: int) -> Poly:
    x = Poly.variable(n, i)
    return x * (1.0 - x)


def bubble(n: int) -> Poly:
    """``prod_i x_i (1 - x_i)``: vanishes on the boundary of the unit box."""
    out = Poly.constant(n, 1.0)
    for i in range(n):
        out = out * _edge_factor(n, i)
    return out


def bc_field_family(shape: str, bc: str, seed: int, degree: int = DEFAULT_DEGREE) -> PolyVecField:
    """Random polynomial field satisfying a boundary condition identically.

    ``normal``: component i carries the factor x_i(1 - x_i), so v . nu = 0 on
    every facet of the unit square/cube. ``tangential``: component j carries
    prod_{i != j} x_i(1 - x_i), so v x nu = 0. ``dirichlet``: every component
    carries the full bubble.
    """
    n = _shape_dim(shape)
    _check_degree(degree)
    rng = np.random.default_rng(seed)
    if bc == "normal":
        factors = [_edge_factor(n, j) for j in range(n)]
    elif bc == "tangential":
        factors = []
        for j in range(n):
            f = Poly.constant(n, 1.0)
            for i in range(n):
                if i != j:
                    f = f * _edge_factor(n, i)
            factors.append(f)
    elif bc == "dirichlet":
        factors = [bubble(n)] * n
    else:
        raise InvalidInput(f"unknown boundary condition {bc!r}")
    free = degree - max(f.degree for f in factors)
    if free < 0:
        raise InvalidInput(f"degree {degree} is too low for {bc} fields on the {shape}")
    return PolyVecField(tuple(f * Poly.random(n, free, rng) for f in factors))
