"""Simplicial meshes of polygons and polyhedra with labeled boundaries.

A mesh is immutable: vertex coordinates, cells and boundary facets are stored
as read-only arrays, and every operation that changes something returns a new
mesh. Facet normals are always recomputed from geometry.

Boundary labels are one of ``normal`` (v . nu = 0), ``tangential``
(v x nu = 0), ``dirichlet`` (v = 0) or ``free``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, permutations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInput, MeshError, MeshFormatError, UnsupportedElementError

__all__ = [
    "LABELS",
    "SimplicialMesh",
    "annulus",
    "convex_polygon",
    "cube",
    "generate",
    "import_gmsh22",
    "is_convex_2d",
    "label_boundary",
    "load_json",
    "lshape",
    "named_rule",
    "ngon",
    "prism",
    "random_convex_polygon",
    "refine",
    "save_json",
    "square",
]

LABELS = ("normal", "tangential", "dirichlet", "free")
_ALIASES = {"n": "normal", "t": "tangential", "d": "dirichlet", "f": "free"}


def _canonical_label(label: str) -> str:
    lab = _ALIASES.get(label, label)
    if lab not in LABELS:
        raise InvalidInput(f"unknown boundary label {label!r}; expected one of {LABELS}")
    return lab


def _readonly(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _simplex_volumes(X: np.ndarray) -> np.ndarray:
    """Signed volumes of simplices given as (m, d+1, d) coordinates."""
    d = X.shape[-1]
    E = X[:, 1:, :] - X[:, :1, :]
    return np.linalg.det(E) / math.factorial(d)


def _facet_measures(X: np.ndarray) -> np.ndarray:
    """Measures of (d-1)-simplices embedded in R^d, X of shape (m, d, d)."""
    E = X[:, 1:, :] - X[:, :1, :]
    k = E.shape[1]
    gram = np.einsum("mik,mjk->mij", E, E)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / math.factorial(k)


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Conforming simplicial mesh in 2 or 3 dimensions.

    Attributes
    ----------
    vertices : (nv, dim) float array
    cells : (nc, dim + 1) int array, positively oriented
    facets : (nf, dim) int array of boundary facets
    labels : tuple of str, one boundary label per facet
    meta : free-form provenance (generator shape, target h)
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    labels: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        V = _readonly(self.vertices, float)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise InvalidInput(f"vertices must have shape (nv, 2|3), got {V.shape}")
        d = V.shape[1]
        C = _readonly(np.asarray(self.cells).reshape(-1, d + 1), np.int64)
        F = _readonly(np.asarray(self.facets).reshape(-1, d), np.int64)
        labels = tuple(_canonical_label(x) for x in self.labels)
        if len(labels) != len(F):
            raise InvalidInput(f"{len(labels)} labels for {len(F)} boundary facets")
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "cells", C)
        object.__setattr__(self, "facets", F)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_cells(cls, vertices, cells, meta=None, default_label="free") -> "SimplicialMesh":
        """Build a mesh from raw cells: orient them and extract the boundary."""
        V = np.asarray(vertices, dtype=float)
        C = np.array(cells, dtype=np.int64)
        vol = _simplex_volumes(V[C])
        if np.any(np.abs(vol) <= 1e-14 * max(1.0, np.abs(vol).max(initial=0.0))):
            raise MeshError("degenerate cell with zero volume")
        neg = vol < 0
        C[neg, 0], C[neg, 1] = C[neg, 1].copy(), C[neg, 0].copy()
        F = _boundary_facets(C)
        return cls(V, C, F, (default_label,) * len(F), meta or {})

    # --- geometry -------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return _simplex_volumes(self.vertices[self.cells])

    @property
    def volume(self) -> float:
        return float(np.sum(self.cell_volumes))

    @cached_property
    def facet_cells(self) -> np.ndarray:
        """Index of the unique cell adjacent to each boundary facet."""
        d = self.dim
        lookup = {}
        for c, cell in enumerate(self.cells):
            for face in combinations(sorted(cell.tolist()), d):
                lookup.setdefault(face, []).append(c)
        out = np.empty(len(self.facets), dtype=np.int64)
        for k, f in enumerate(self.facets):
            owners = lookup.get(tuple(sorted(f.tolist())))
            if owners is None or len(owners) != 1:
                raise MeshError(f"boundary facet {f.tolist()} is not incident to exactly one cell")
            out[k] = owners[0]
        return out

    @cached_property
    def facet_centroids(self) -> np.ndarray:
        return self.vertices[self.facets].mean(axis=1)

    @cached_property
    def facet_measures(self) -> np.ndarray:
        return _facet_measures(self.vertices[self.facets])

    @property
    def boundary_measure(self) -> float:
        return float(np.sum(self.facet_measures))

    @cached_property
    def facet_normals(self) -> np.ndarray:
        X = self.vertices[self.facets]
        E = X[:, 1:, :] - X[:, :1, :]
        if self.dim == 2:
            n = np.stack([E[:, 0, 1], -E[:, 0, 0]], axis=1)
        else:
            n = np.cross(E[:, 0, :], E[:, 1, :])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        cc = self.vertices[self.cells[self.facet_cells]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, self.facet_centroids - cc) < 0
        n[flip] *= -1.0
        n.setflags(write=False)
        return n

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted unique edges (vertex pairs with i < j), lexicographic order."""
        d = self.dim
        pairs = [(a, b) for a, b in combinations(range(d + 1), 2)]
        E = np.concatenate([self.cells[:, [a, b]] for a, b in pairs])
        E.sort(axis=1)
        E = np.unique(E, axis=0)
        E.setflags(write=False)
        return E

    @cached_property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def with_labels(self, labels: Sequence[str]) -> "SimplicialMesh":
        return SimplicialMesh(self.vertices, self.cells, self.facets, tuple(labels), self.meta)

    def label_counts(self) -> dict[str, int]:
        return {lab: self.labels.count(lab) for lab in LABELS if lab in self.labels}

    def validate(self, tol: float = 1e-12) -> None:
        """Raise MeshError if an invariant is violated."""
        if np.any(self.cell_volumes <= 0):
            raise MeshError("cell with non-positive signed volume")
        topo = {tuple(f) for f in np.sort(_boundary_facets(self.cells), axis=1).tolist()}
        stored = [tuple(f) for f in np.sort(self.facets, axis=1).tolist()]
        if len(set(stored)) != len(stored) or set(stored) != topo:
            raise MeshError("boundary facets differ from the facets incident to one cell")
        n = self.facet_normals
        if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > tol):
            raise MeshError("facet normal is not unit")
        cc = self.vertices[self.cells[self.facet_cells]].mean(axis=1)
        if np.any(np.einsum("ij,ij->i", n, self.facet_centroids - cc) <= 0):
            raise MeshError("facet normal is not outward")

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "vertices": self.n_vertices,
            "cells": self.n_cells,
            "facets": len(self.facets),
            "volume": self.volume,
            "labels": self.label_counts(),
        }

    # --- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "boundary": [{"facet": f, "label": lab}
                         for f, lab in zip(self.facets.tolist(), self.labels)],
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, doc) -> "SimplicialMesh":
        try:
            dim = int(doc["dim"])
            vertices = np.array(doc["vertices"], dtype=float)
            cells = np.array(doc["cells"], dtype=np.int64)
            facets = np.array([b["facet"] for b in doc["boundary"]], dtype=np.int64)
            labels = [b["label"] for b in doc["boundary"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshFormatError(f"invalid mesh document: {exc}") from exc
        if dim not in (2, 3) or vertices.ndim != 2 or vertices.shape[1] != dim:
            raise MeshFormatError(f"vertex array does not match dim={dim}")
        if cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise MeshFormatError(f"cells must have {dim + 1} vertices each")
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise MeshFormatError("cell refers to a missing vertex")
        facets = facets.reshape(-1, dim)
        return cls(vertices, cells, facets, tuple(labels), doc.get("meta") or {})

    def content_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("meta", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _boundary_facets(cells: np.ndarray) -> np.ndarray:
    d = cells.shape[1] - 1
    faces = np.concatenate([np.delete(cells, k, axis=1) for k in range(d + 1)])
    key = np.sort(faces, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    return faces[np.sort(first[counts == 1])]


# --- generators ---------------------------------------------------------------


def _count(length: float, h: float) -> int:
    if not (h > 0 and math.isfinite(h)):
        raise InvalidInput(f"target edge length must be positive, got {h}")
    n = int(round(length / h))
    if n < 1:
        raise InvalidInput(f"h={h} is too large to mesh a feature of size {length}")
    return n


def _grid_triangles(n: int, keep=None):
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    V = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    cells = []
    for i in range(n):
        for j in range(n):
            if keep is not None and not keep((i + 0.5) / n, (j + 0.5) / n):
                continue
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            cells += [(a, b, c), (a, c, d)]
    return _compact(V, np.array(cells))


def _compact(V, C):
    used = np.unique(C)
    remap = np.full(len(V), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return V[used], remap[C]


def square(h: float) -> SimplicialMesh:
    V, C = _grid_triangles(_count(1.0, h))
    return SimplicialMesh.from_cells(V, C, {"shape": "square", "h": h})


def lshape(h: float) -> SimplicialMesh:
    """Unit square with the quadrant [1/2, 1]^2 removed."""
    n = 2 * _count(0.5, h)
    V, C = _grid_triangles(n, keep=lambda x, y: not (x > 0.5 and y > 0.5))
    return SimplicialMesh.from_cells(V, C, {"shape": "lshape", "h": h})


def annulus(h: float) -> SimplicialMesh:
    """Unit square with the square hole (1/4, 3/4)^2."""
    n = 4 * _count(0.25, h)

    def keep(x, y):
        return not (0.25 < x < 0.75 and 0.25 < y < 0.75)

    V, C = _grid_triangles(n, keep=keep)
    return SimplicialMesh.from_cells(V, C, {"shape": "annulus", "h": h})


def _ngon_points(n: int, k: int):
    """Center plus k concentric rings of n points; ring k on the unit circle."""
    t = 2.0 * np.pi * np.arange(n) / n
    ring = np.stack([np.cos(t), np.sin(t)], axis=1)
    V = [np.zeros((1, 2))] + [(l / k) * ring for l in range(1, k + 1)]
    V = np.concatenate(V)

    def vid(l, j):
        return 0 if l == 0 else 1 + (l - 1) * n + (j % n)

    cells = []
    for j in range(n):
        cells.append((0, vid(1, j), vid(1, j + 1)))
    for l in range(1, k):
        for j in range(n):
            a, b = vid(l, j), vid(l, j + 1)
            c, d = vid(l + 1, j + 1), vid(l + 1, j)
            cells += [(a, b, c), (a, c, d)]
    return V, np.array(cells)


def ngon(n: int, h: float) -> SimplicialMesh:
    """Regular n-gon inscribed in the unit circle.

    The mesh consists of concentric scaled copies of the polygon, so every
    boundary vertex lies on the unit circle (needed for exact-circle normals).
    """
    if n < 3:
        raise InvalidInput(f"n-gon requires n >= 3, got {n}")
    V, C = _ngon_points(n, _count(1.0, h))
    return SimplicialMesh.from_cells(V, C, {"shape": f"ngon:{n}", "h": h})


def convex_polygon(vertices, h: float, shape: str = "polygon") -> SimplicialMesh:
    """Mesh a convex polygon by a uniform lattice in each centroid fan sector."""
    P = np.asarray(vertices, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or len(P) < 3:
        raise InvalidInput("polygon needs at least 3 vertices in the plane")
    area = 0.5 * np.sum(P[:, 0] * np.roll(P[:, 1], -1) - np.roll(P[:, 0], -1) * P[:, 1])
    if area < 0:
        P = P[::-1]
    O = P.mean(axis=0)
    m = len(P)
    k = _count(float(np.max(np.linalg.norm(P - O, axis=1))), h)
    index, pts, cells = {}, [], []

    def vid(s, a, b):
        if a + b == 0:
            key = ("o",)
        elif b == 0:
            key = ("r", s % m, a)
        elif a == 0:
            key = ("r", (s + 1) % m, b)
        else:
            key = ("i", s, a, b)
        if key not in index:
            index[key] = len(pts)
            pts.append(O + (a / k) * (P[s % m] - O) + (b / k) * (P[(s + 1) % m] - O))
        return index[key]

    for s in range(m):
        for a in range(k):
            for b in range(k - a):
                cells.append((vid(s, a, b), vid(s, a + 1, b), vid(s, a, b + 1)))
                if a + b + 2 <= k:
                    cells.append((vid(s, a + 1, b), vid(s, a + 1, b + 1), vid(s, a, b + 1)))
    mesh = SimplicialMesh.from_cells(np.array(pts), np.array(cells), {"shape": shape, "h": h})
    return mesh


def random_convex_polygon(rng: np.random.Generator, n_min: int = 5, n_max: int = 9) -> np.ndarray:
    """Vertices of a random convex polygon: sorted angles on a rotated ellipse."""
    m = int(rng.integers(n_min, n_max + 1))
    while True:
        t = np.sort(rng.uniform(0.0, 2.0 * np.pi, m))
        gaps = np.diff(np.concatenate([t, [t[0] + 2.0 * np.pi]]))
        if gaps.min() > 0.25 and gaps.max() < np.pi * 0.9:
            break
    a, b = 1.0, rng.uniform(0.5, 1.0)
    phi = rng.uniform(0.0, np.pi)
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    return (np.stack([a * np.cos(t), b * np.sin(t)], axis=1)) @ R.T


def _kuhn_tets(idx, i, j, k):
    base = np.array([i, j, k])
    out = []
    for perm in permutations(range(3)):
        p = base.copy()
        verts = [idx[tuple(p)]]
        for axis in perm:
            p[axis] += 1
            verts.append(idx[tuple(p)])
        out.append(verts)
    return out


def cube(h: float) -> SimplicialMesh:
    """Unit cube, 6 Kuhn tetrahedra per grid cell."""
    n = _count(1.0, h)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    V = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    idx = np.arange((n + 1) ** 3).reshape(n + 1, n + 1, n + 1)
    cells = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                cells += _kuhn_tets(idx, i, j, k)
    return SimplicialMesh.from_cells(V, np.array(cells), {"shape": "cube", "h": h})


def prism(n: int, h: float) -> SimplicialMesh:
    """Regular n-gon (unit circumradius) extruded to height 1."""
    if n < 3:
        raise InvalidInput(f"prism requires n >= 3, got {n}")
    V2, C2 = _ngon_points(n, _count(1.0, h))
    layers = _count(1.0, h)
    nv = len(V2)
    zs = np.linspace(0.0, 1.0, layers + 1)
    V = np.concatenate([np.column_stack([V2, np.full(nv, z)]) for z in zs])
    cells = []
    for l in range(layers):
        lo, hi = l * nv, (l + 1) * nv
        for tri in C2:
            a, b, c = sorted(int(x) for x in tri)
            # quad-face diagonals run from the lower bottom index to the higher
            # top index, which neighbouring prisms agree on
            cells += [
                (lo + a, lo + b, lo + c, hi + c),
                (lo + a, lo + b, hi + b, hi + c),
                (lo + a, hi + a, hi + b, hi + c),
            ]
    return SimplicialMesh.from_cells(V, np.array(cells), {"shape": f"prism:{n}", "h": h})


def generate(shape: str, h: float) -> SimplicialMesh:
    """Build a mesh from a shape descriptor.

    Descriptors: ``square``, ``cube``, ``lshape``, ``annulus``, ``ngon:N``,
    ``prism:N``.
    """
    name, _, arg = str(shape).partition(":")
    name = name.strip().lower()
    simple = {"square": square, "cube": cube, "lshape": lshape, "l-shape": lshape,
              "annulus": annulus}
    if name in simple and not arg:
        return simple[name](h)
    if name in ("ngon", "prism"):
        try:
            n = int(arg)
        except ValueError:
            raise InvalidInput(f"shape {shape!r} needs an integer side count") from None
        return (ngon if name == "ngon" else prism)(n, h)
    raise InvalidInput(f"unknown shape {shape!r}")


# --- refinement ---------------------------------------------------------------


def refine(mesh: SimplicialMesh) -> SimplicialMesh:
    """Uniform refinement: 4 children per triangle, 8 per tetrahedron."""
    E = mesh.edges
    nv = mesh.n_vertices
    mid = {(int(a), int(b)): nv + k for k, (a, b) in enumerate(E)}
    V = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[E[:, 0]] + mesh.vertices[E[:, 1]])])

    def m(a, b):
        return mid[(a, b) if a < b else (b, a)]

    cells = []
    if mesh.dim == 2:
        for v0, v1, v2 in mesh.cells.tolist():
            a, b, c = m(v0, v1), m(v1, v2), m(v0, v2)
            cells += [(v0, a, c), (a, v1, b), (c, b, v2), (a, b, c)]
    else:
        for v0, v1, v2, v3 in mesh.cells.tolist():
            m01, m02, m03 = m(v0, v1), m(v0, v2), m(v0, v3)
            m12, m13, m23 = m(v1, v2), m(v1, v3), m(v2, v3)
            cells += [
                (v0, m01, m02, m03), (m01, v1, m12, m13),
                (m02, m12, v2, m23), (m03, m13, m23, v3),
                # inner octahedron cut along the m02-m13 diagonal
                (m01, m02, m03, m13), (m01, m02, m12, m13),
                (m02, m03, m13, m23), (m02, m12, m13, m23),
            ]
    C = np.array(cells, dtype=np.int64)
    vol = _simplex_volumes(V[C])
    neg = vol < 0
    C[neg, 0], C[neg, 1] = C[neg, 1].copy(), C[neg, 0].copy()

    facets, labels = [], []
    for f, lab in zip(mesh.facets.tolist(), mesh.labels):
        if mesh.dim == 2:
            a, b = f
            kids = [(a, m(a, b)), (m(a, b), b)]
        else:
            a, b, c = f
            ab, bc, ac = m(a, b), m(b, c), m(a, c)
            kids = [(a, ab, ac), (ab, b, bc), (ac, bc, c), (ab, bc, ac)]
        facets += kids
        labels += [lab] * len(kids)
    meta = dict(mesh.meta)
    if "h" in meta:
        meta["h"] = meta["h"] / 2
    meta["refined"] = meta.get("refined", 0) + 1
    return SimplicialMesh(V, C, np.array(facets), tuple(labels), meta)


# --- labeling -----------------------------------------------------------------


def label_boundary(mesh: SimplicialMesh, rule: Callable[[np.ndarray], str] | str) -> SimplicialMesh:
    """Relabel every boundary facet with ``rule(facet_centroid)``.

    ``rule`` may also be a single label (applied everywhere) or the name of a
    built-in predicate, see :func:`named_rule`.
    """
    if isinstance(rule, str):
        rule = named_rule(rule, mesh)
    return mesh.with_labels([rule(c) for c in mesh.facet_centroids])


def named_rule(name: str, mesh: SimplicialMesh) -> Callable[[np.ndarray], str]:
    """Built-in labeling predicates.

    ``normal``/``tangential``/``dirichlet``/``free``: uniform labels.
    ``left-t-rest-n``: facets on the plane x1 = min x1 tangential, others normal.
    ``west-t-east-n``: facets with centroid x1 below the bounding-box midpoint
    tangential, others normal.
    ``inner-n-outer-t``: facets on the outer bounding box tangential, the rest
    (holes) normal.
    """
    lo, hi = mesh.bbox
    tol = 1e-9 * max(1.0, float(np.max(hi - lo)))
    if name in LABELS or name in _ALIASES:
        lab = _canonical_label(name)
        return lambda c: lab
    if name == "left-t-rest-n":
        return lambda c: "tangential" if c[0] <= lo[0] + tol else "normal"
    if name == "west-t-east-n":
        midx = 0.5 * (lo[0] + hi[0])
        return lambda c: "tangential" if c[0] < midx else "normal"
    if name == "inner-n-outer-t":
        def rule(c):
            on_box = np.any(np.abs(c - lo) <= tol) or np.any(np.abs(c - hi) <= tol)
            return "tangential" if on_box else "normal"
        return rule
    raise InvalidInput(f"unknown labeling rule {name!r}")


# --- analysis -----------------------------------------------------------------


def is_convex_2d(mesh: SimplicialMesh, tol: float = 1e-12) -> bool:
    """Cross-product sign sweep over the boundary polygon."""
    if mesh.dim != 2:
        raise InvalidInput("convexity test is implemented for 2D meshes only")
    nxt = {}
    for k, (a, b) in enumerate(mesh.facets.tolist()):
        # orient each edge counter-clockwise using its outward normal
        t = mesh.vertices[b] - mesh.vertices[a]
        n = mesh.facet_normals[k]
        if t[0] * n[1] - t[1] * n[0] > 0:
            a, b = b, a
        nxt[a] = b
    start = next(iter(nxt))
    loop, v = [start], nxt[start]
    while v != start:
        loop.append(v)
        v = nxt[v]
    if len(loop) != len(nxt):
        return False  # several boundary loops: there is a hole
    P = mesh.vertices[loop]
    d1 = np.roll(P, -1, axis=0) - P
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return bool(np.all(cross >= -tol))


# --- file I/O -----------------------------------------------------------------


def save_json(mesh: SimplicialMesh, path) -> None:
    Path(path).write_text(json.dumps(mesh.to_dict(), indent=1) + "\n")


def load_json(path) -> SimplicialMesh:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(exc.msg, exc.lineno) from exc
    return SimplicialMesh.from_dict(doc)


_GMSH_NODES = {1: 2, 2: 3, 4: 4, 15: 1}


def import_gmsh22(path, tag_map: dict | None = None) -> SimplicialMesh:
    """Read a Gmsh MSH 2.2 ASCII file.

    Cells are the highest-dimensional elements (triangles or tetrahedra);
    line/triangle elements on the boundary carry labels through
    ``tag_map``, which maps physical tags (int) or physical names (str) to
    boundary labels. Unmapped boundary facets are ``free``; point elements
    are ignored.
    """
    tag_map = dict(tag_map or {})
    lines = Path(path).read_text().splitlines()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError("unexpected end of file", pos + 1)
        pos += 1
        return pos, lines[pos - 1].strip()

    def expect(tok):
        ln, s = take()
        if s != tok:
            raise MeshFormatError(f"expected {tok}, found {s!r}", ln)

    def ints(s, ln):
        try:
            return [int(x) for x in s.split()]
        except ValueError:
            raise MeshFormatError(f"expected integers, found {s!r}", ln) from None

    names, nodes, elems = {}, {}, []
    seen_format = False
    while pos < len(lines):
        ln, s = take()
        if not s:
            continue
        if s == "$MeshFormat":
            ln, s = take()
            parts = s.split()
            if len(parts) < 2 or not parts[0].startswith("2"):
                raise MeshFormatError(f"unsupported MSH version line {s!r}", ln)
            if parts[1] != "0":
                raise MeshFormatError("only ASCII MSH files are supported", ln)
            expect("$EndMeshFormat")
            seen_format = True
        elif s == "$PhysicalNames":
            ln, s = take()
            for _ in range(ints(s, ln)[0]):
                ln, s = take()
                parts = s.split(maxsplit=2)
                if len(parts) != 3:
                    raise MeshFormatError(f"bad physical name entry {s!r}", ln)
                names[int(parts[1])] = parts[2].strip('"')
            expect("$EndPhysicalNames")
        elif s == "$Nodes":
            ln, s = take()
            for _ in range(ints(s, ln)[0]):
                ln, s = take()
                parts = s.split()
                if len(parts) != 4:
                    raise MeshFormatError(f"bad node entry {s!r}", ln)
                try:
                    nodes[int(parts[0])] = [float(x) for x in parts[1:]]
                except ValueError:
                    raise MeshFormatError(f"bad node entry {s!r}", ln) from None
            expect("$EndNodes")
        elif s == "$Elements":
            ln, s = take()
            for _ in range(ints(s, ln)[0]):
                ln, s = take()
                vals = ints(s, ln)
                if len(vals) < 3:
                    raise MeshFormatError(f"bad element entry {s!r}", ln)
                etype, ntags = vals[1], vals[2]
                if etype not in _GMSH_NODES:
                    raise UnsupportedElementError(f"unsupported element type {etype}", ln)
                conn = vals[3 + ntags:]
                if len(conn) != _GMSH_NODES[etype]:
                    raise MeshFormatError(f"element type {etype} needs {_GMSH_NODES[etype]} nodes", ln)
                tag = vals[3] if ntags > 0 else 0
                elems.append((etype, tag, conn, ln))
            expect("$EndElements")
        elif s.startswith("$"):
            end = "$End" + s[1:]
            while True:
                _, t = take()
                if t == end:
                    break
        else:
            raise MeshFormatError(f"unexpected content {s!r}", ln)
    if not seen_format:
        raise MeshFormatError("missing $MeshFormat section")

    dim = 3 if any(e[0] == 4 for e in elems) else 2
    cell_type, facet_type = (4, 2) if dim == 3 else (2, 1)
    cells_raw = [e for e in elems if e[0] == cell_type]
    if not cells_raw:
        raise MeshFormatError("file contains no triangle or tetrahedron elements")
    ids = sorted({n for e in cells_raw for n in e[2]})
    for e in cells_raw:
        for n in e[2]:
            if n not in nodes:
                raise MeshFormatError(f"element refers to missing node {n}", e[3])
    remap = {n: k for k, n in enumerate(ids)}
    coords = np.array([nodes[n] for n in ids])
    if dim == 2:
        if np.any(np.abs(coords[:, 2]) > 1e-12):
            raise MeshFormatError("2D mesh has nonzero z coordinates")
        coords = coords[:, :2]
    cells = np.array([[remap[n] for n in e[2]] for e in cells_raw])
    mesh = SimplicialMesh.from_cells(coords, cells, {"shape": f"gmsh:{Path(path).name}"})

    facet_label = {}
    for etype, tag, conn, ln in elems:
        if etype != facet_type or any(n not in remap for n in conn):
            continue
        lab = tag_map.get(tag, tag_map.get(names.get(tag)))
        if lab is not None:
            facet_label[tuple(sorted(remap[n] for n in conn))] = _canonical_label(lab)
    labels = [facet_label.get(tuple(sorted(f)), "free") for f in mesh.facets.tolist()]
    return mesh.with_labels(labels)
