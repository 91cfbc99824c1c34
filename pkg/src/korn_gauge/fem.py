"""Vector Lagrange finite elements, quadratic forms and boundary constraints.

Degrees of freedom are numbered node-major: dof ``node * N + component``.
P1 nodes are the mesh vertices; P2 adds one node per edge (midpoint), in the
sorted edge order of :attr:`SimplicialMesh.edges`.

Every integrand is polynomial, and the quadrature rules are exact for it, so
the pointwise gradient identities carry over to the assembled matrices up to
rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .errors import GeometryMismatchError, InvalidInput
from .meshkit import SimplicialMesh
from .tensorcalc import pair_index, rot_generator, rotvec_dim

__all__ = [
    "FORM_KINDS",
    "ConstraintNullBasis",
    "FeSpace",
    "FormMatrix",
    "assemble",
    "build_constraints",
    "interpolate",
    "reduce",
    "rigid_motion_basis",
    "rigid_motions_in_constrained_space",
    "rot_moment_vector",
    "simplex_quadrature",
]

FORM_KINDS = ("GradGrad", "SymSym", "DevSymDevSym", "DivDiv", "RotRot", "Mass")
NORMAL_MODES = ("facet", "exact-circle")


def simplex_quadrature(dim: int, degree: int):
    """Collapsed Gauss-Jacobi rule on the reference simplex.

    Returns barycentric points ``(nq, dim + 1)`` and weights summing to the
    reference volume ``1 / dim!``; exact for total degree ``<= degree``.
    """
    m = max(1, math.ceil((degree + 1) / 2))
    # 1D rules on [0, 1] with weight (1 - u)^a
    rules = []
    for a in range(dim - 1, -1, -1):
        t, w = roots_jacobi(m, a, 0)
        rules.append(((1 + t) / 2, w / 2 ** (a + 1)))
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    # Duffy map: x_1 = u_1, x_k = u_k prod_{l<k} (1 - u_l)
    X = np.empty_like(U)
    rest = np.ones(len(U))
    for k in range(dim):
        X[:, k] = U[:, k] * rest
        rest = rest * (1 - U[:, k])
    bary = np.column_stack([1 - X.sum(axis=1), X])
    return bary, W


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous vector Lagrange space of order 1 or 2 on ``mesh``."""

    mesh: SimplicialMesh
    order: int = 1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise InvalidInput(f"element order must be 1 or 2, got {self.order}")

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @cached_property
    def _edge_index(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.mesh.edges)}

    @cached_property
    def local_edges(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.dim + 1), 2))

    @cached_property
    def nodes(self) -> np.ndarray:
        V = self.mesh.vertices
        if self.order == 1:
            return V
        E = self.mesh.edges
        return np.concatenate([V, 0.5 * (V[E[:, 0]] + V[E[:, 1]])])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dof(self) -> int:
        return self.n_nodes * self.dim

    def _edge_nodes(self, pairs) -> np.ndarray:
        nv = self.mesh.n_vertices
        idx = self._edge_index
        return np.array([nv + idx[(a, b) if a < b else (b, a)] for a, b in pairs], dtype=np.int64)

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """Local-to-global node map, vertices first, then local edges."""
        C = self.mesh.cells
        if self.order == 1:
            return C
        cols = []
        for a, b in self.local_edges:
            cols.append(self._edge_nodes(zip(C[:, a].tolist(), C[:, b].tolist())))
        return np.column_stack([C] + cols)

    @cached_property
    def facet_nodes(self) -> list[np.ndarray]:
        """Nodes lying on each boundary facet (closed facet)."""
        out = []
        for f in self.mesh.facets.tolist():
            nodes = list(f)
            if self.order == 2:
                nodes += self._edge_nodes(combinations(f, 2)).tolist()
            out.append(np.array(nodes, dtype=np.int64))
        return out

    @property
    def n_local(self) -> int:
        d = self.dim
        return d + 1 if self.order == 1 else (d + 1) * (d + 2) // 2

    # --- shape functions --------------------------------------------------------

    def shape_values(self, bary: np.ndarray) -> np.ndarray:
        """(nq, n_local) values at barycentric points."""
        if self.order == 1:
            return bary.copy()
        vert = bary * (2 * bary - 1)
        edge = np.stack([4 * bary[:, a] * bary[:, b] for a, b in self.local_edges], axis=1)
        return np.concatenate([vert, edge], axis=1)

    def shape_bary_derivs(self, bary: np.ndarray) -> np.ndarray:
        """(nq, n_local, dim + 1) derivatives with respect to the barycentrics."""
        nq, k = bary.shape
        if self.order == 1:
            return np.broadcast_to(np.eye(k), (nq, k, k)).copy()
        out = np.zeros((nq, self.n_local, k))
        for a in range(k):
            out[:, a, a] = 4 * bary[:, a] - 1
        for e, (a, b) in enumerate(self.local_edges):
            out[:, k + e, a] = 4 * bary[:, b]
            out[:, k + e, b] = 4 * bary[:, a]
        return out

    @cached_property
    def bary_gradients(self) -> np.ndarray:
        """(nc, dim + 1, dim) gradients of the barycentric coordinates per cell."""
        X = self.mesh.vertices[self.mesh.cells]
        E = X[:, 1:, :] - X[:, :1, :]
        Einv = np.linalg.inv(E)  # grad(lambda_k) = Einv[:, :, k - 1]
        g = np.transpose(Einv, (0, 2, 1))
        return np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)

    def shape_gradients(self, bary: np.ndarray) -> np.ndarray:
        """(nc, nq, n_local, dim) physical gradients."""
        dB = self.shape_bary_derivs(bary)
        return np.einsum("qak,ckx->cqax", dB, self.bary_gradients)

    def cell_dofs(self) -> np.ndarray:
        n = self.dim
        cn = self.cell_nodes
        return (cn[:, :, None] * n + np.arange(n)).reshape(len(cn), -1)

    # --- evaluation --------------------------------------------------------------

    def evaluate(self, coeffs, cells, bary) -> np.ndarray:
        """(len(cells), q, dim) field values at barycentric points ``bary`` (q, dim + 1)."""
        coeffs = np.asarray(coeffs, dtype=float).reshape(self.n_nodes, self.dim)
        phi = self.shape_values(np.atleast_2d(bary))
        local = coeffs[self.cell_nodes[np.atleast_1d(cells)]]
        return np.einsum("qa,mac->mqc", phi, local)


def interpolate(space: FeSpace, f) -> np.ndarray:
    """Nodal interpolant of ``f: (m, N) points -> (m, N) values``."""
    vals = np.asarray(f(space.nodes), dtype=float)
    if vals.shape != space.nodes.shape:
        raise InvalidInput(f"field returned shape {vals.shape}, expected {space.nodes.shape}")
    return vals.reshape(-1)


# --- assembly -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FormMatrix:
    kind: str
    matrix: sp.csr_matrix
    space: FeSpace = field(repr=False)

    def energy(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ (self.matrix @ u))


def _form_images(G: np.ndarray, kind: str, n: int) -> np.ndarray:
    """Apply the pointwise operator of ``kind`` to gradient tensors.

    ``G`` has shape (..., n, n) with G[..., i, j] = d_i v_j; returns the
    flattened images whose Euclidean inner product defines the form.
    """
    lead = G.shape[:-2]
    if kind == "GradGrad":
        return G.reshape(lead + (n * n,))
    if kind in ("SymSym", "DevSymDevSym"):
        S = 0.5 * (G + np.swapaxes(G, -1, -2))
        if kind == "DevSymDevSym":
            tr = np.trace(G, axis1=-2, axis2=-1)
            S = S - (tr / n)[..., None, None] * np.eye(n)
        return S.reshape(lead + (n * n,))
    if kind == "DivDiv":
        return np.trace(G, axis1=-2, axis2=-1)[..., None]
    if kind == "RotRot":
        i, j = np.triu_indices(n, k=1)
        return G[..., i, j] - G[..., j, i]
    raise InvalidInput(f"unknown form kind {kind!r}")


def assemble(space: FeSpace, kind: str) -> FormMatrix:
    """Assemble one of the quadratic forms as a sparse symmetric matrix.

    Kinds: GradGrad (|grad v|^2), SymSym (|sym grad v|^2), DevSymDevSym
    (|dev sym grad v|^2), DivDiv (|div v|^2), RotRot (|rot v|^2), Mass (|v|^2).
    """
    if kind not in FORM_KINDS:
        raise InvalidInput(f"unknown form kind {kind!r}; expected one of {FORM_KINDS}")
    mesh, n, p = space.mesh, space.dim, space.order
    vol = np.abs(mesh.cell_volumes) * math.factorial(n)  # |det E|
    if kind == "Mass":
        bary, w = simplex_quadrature(n, 2 * p)
        phi = space.shape_values(bary)
        local = np.einsum("q,qa,qb->ab", w, phi, phi)
        K = vol[:, None, None, None, None] * local[None, :, None, :, None] * np.eye(n)[None, None, :, None, :]
    else:
        bary, w = simplex_quadrature(n, 2 * (p - 1))
        dphi = space.shape_gradients(bary)  # (nc, nq, a, i)
        nloc = dphi.shape[2]
        # gradient of basis (a, c): G[i, j] = dphi_a[i] * delta_jc
        G = np.einsum("cqai,jk->cqakij", dphi, np.eye(n))
        img = _form_images(G, kind, n)  # (nc, nq, a, k, r)
        K = np.einsum("q,cqakr,cqbmr->cakbm", w, img, img) * vol[:, None, None, None, None]
        K = K.reshape(len(vol), nloc, n, nloc, n)
    nl = space.n_local * n
    K = K.reshape(len(vol), nl, nl)
    dofs = space.cell_dofs()
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    M = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(space.n_dof, space.n_dof)).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    M.sort_indices()
    return FormMatrix(kind, M, space)


def rot_moment_vector(space: FeSpace, k: int) -> np.ndarray:
    """Vector ``b`` with ``b . u = int rot_k(v_u)`` for pair index ``k``."""
    n = space.dim
    pairs = pair_index(n)
    if not 0 <= k < len(pairs):
        raise InvalidInput(f"rotation component {k} out of range")
    i, j = pairs[k]
    bary, w = simplex_quadrature(n, max(space.order - 1, 0))
    dphi = space.shape_gradients(bary)  # (nc, nq, a, x)
    vol = np.abs(space.mesh.cell_volumes) * math.factorial(n)
    # rot_ij of basis (a, c) = dphi_a[i] delta_cj - dphi_a[j] delta_ci
    loc = np.zeros(dphi.shape[0:1] + dphi.shape[2:3] + (n,))
    intg = np.einsum("q,cqax->cax", w, dphi) * vol[:, None, None]
    loc[:, :, j] += intg[:, :, i]
    loc[:, :, i] -= intg[:, :, j]
    b = np.zeros(space.n_dof)
    np.add.at(b, space.cell_dofs().ravel(), loc.reshape(-1))
    return b


# --- constraints --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConstraintNullBasis:
    """Orthonormal basis ``Z`` of the admissible coefficient vectors.

    ``node_basis[k]`` is an (N, m_k) matrix with orthonormal columns spanning
    the admissible directions at node k.
    """

    space: FeSpace
    node_basis: tuple
    Z: sp.csr_matrix
    normal_mode: str

    @property
    def n_dof(self) -> int:
        return self.Z.shape[0]

    @property
    def n_red(self) -> int:
        return self.Z.shape[1]

    @property
    def n_constrained(self) -> int:
        return self.n_dof - self.n_red

    def project(self, u) -> np.ndarray:
        return self.Z @ (self.Z.T @ u)

    def expand(self, y) -> np.ndarray:
        return self.Z @ y


def _canonical_sign(Q: np.ndarray) -> np.ndarray:
    for c in range(Q.shape[1]):
        col = Q[:, c]
        idx = np.argmax(np.abs(col) > 1e-12)
        if col[idx] < 0:
            Q[:, c] = -col
    return Q


def build_constraints(space: FeSpace, normal_mode: str = "facet", tol: float = 1e-9,
                      circle_tol: float = 1e-9) -> ConstraintNullBasis:
    """Null-space basis of the nodal boundary constraints.

    Each boundary node collects rows from all adjacent facets: a ``normal``
    facet contributes nu^T, a ``tangential`` facet I - nu nu^T, a
    ``dirichlet`` facet I, a ``free`` facet nothing. The row set is compressed
    by an SVD with relative threshold ``tol``. In ``exact-circle`` mode the
    facet normal is replaced by ``x / |x|`` at the node, which must lie on the
    unit circle within ``circle_tol``.
    """
    if normal_mode not in NORMAL_MODES:
        raise InvalidInput(f"unknown normal mode {normal_mode!r}")
    mesh, n = space.mesh, space.dim
    rows = [[] for _ in range(space.n_nodes)]
    for fi, (lab, nodes) in enumerate(zip(mesh.labels, space.facet_nodes)):
        if lab == "free":
            continue
        nu_f = mesh.facet_normals[fi]
        for node in nodes.tolist():
            if lab == "dirichlet":
                rows[node].append(np.eye(n))
                continue
            if normal_mode == "exact-circle":
                x = space.nodes[node]
                r = float(np.linalg.norm(x))
                if abs(r - 1.0) > circle_tol:
                    raise GeometryMismatchError(
                        f"boundary node {node} at radius {r:.12g} is off the unit circle")
                nu = x / r
            else:
                nu = nu_f
            if lab == "normal":
                rows[node].append(nu[None, :])
            else:
                rows[node].append(np.eye(n) - np.outer(nu, nu))
    bases = []
    for node_rows in rows:
        if not node_rows:
            bases.append(np.eye(n))
            continue
        C = np.concatenate(node_rows)
        _, s, Vt = np.linalg.svd(C)
        rank = int(np.sum(s > tol * s[0]))
        bases.append(_canonical_sign(Vt[rank:].T.copy()))
    data, ri, ci = [], [], []
    col = 0
    for node, B in enumerate(bases):
        m = B.shape[1]
        for c in range(m):
            ri += list(range(node * n, node * n + n))
            ci += [col + c] * n
            data += B[:, c].tolist()
        col += m
    Z = sp.csr_matrix((data, (ri, ci)), shape=(space.n_dof, col))
    Z.eliminate_zeros()
    return ConstraintNullBasis(space, tuple(bases), Z, normal_mode)


def reduce(M, Z: ConstraintNullBasis | sp.spmatrix | np.ndarray):
    """``Z^T M Z`` made exactly symmetric. Dense input gives dense output."""
    A = M.matrix if isinstance(M, FormMatrix) else M
    Zm = Z.Z if isinstance(Z, ConstraintNullBasis) else Z
    if A.shape[0] != A.shape[1] or A.shape[1] != Zm.shape[0]:
        raise InvalidInput(f"cannot reduce a {A.shape} matrix with a {Zm.shape} basis")
    R = Zm.T @ (A @ Zm)
    R = 0.5 * (R + R.T)
    return R.tocsr() if sp.issparse(R) else np.asarray(R)


# --- rigid motions ------------------------------------------------------------


def rigid_motion_basis(space: FeSpace) -> np.ndarray:
    """(n_dof, N + N(N-1)/2) coefficient vectors: translations, then rotations.

    Rotation k is the interpolant of ``x -> S x`` with ``S`` the generator of
    the k-th unit rotation vector; interpolation is exact for affine fields.
    """
    n = space.dim
    cols = []
    for c in range(n):
        t = np.zeros((space.n_nodes, n))
        t[:, c] = 1.0
        cols.append(t.ravel())
    for k in range(rotvec_dim(n)):
        S = rot_generator(np.eye(rotvec_dim(n))[k], n)
        cols.append((space.nodes @ S.T).ravel())
    return np.column_stack(cols)


def rigid_motions_in_constrained_space(basis: np.ndarray, Z: ConstraintNullBasis,
                                       tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of the rigid motions lying in ``range(Z)``.

    Returns an (n_dof, k) array, k = 0 when no rigid motion is admissible.
    """
    R = np.asarray(basis, dtype=float)
    Q, _ = np.linalg.qr(R)
    defect = Q - Z.project(Q)
    _, s, Vt = np.linalg.svd(defect, full_matrices=True)
    s = np.concatenate([s, np.zeros(Q.shape[1] - len(s))])
    keep = s <= tol
    return Q @ Vt[keep].T
