"""Korn, Gaffney and Grad constants of a discretized, boundary-labeled domain.

Every computation goes through a :class:`Discretization`, which caches the
assembled forms and the constraint basis, and ends in a
:class:`ConstantReport` whose JSON form is reproducible byte for byte
(timings aside) for fixed inputs.

The Maxwell regularity constant is not computed directly. Wherever it is
needed (the plug-in upper bound for the normal Korn constant), the Gaffney
supremum of ``|grad v|^2 / (|rot v|^2 + |div v|^2)`` stands in for it. On
polyhedra both equal 1.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, spectra
from .errors import InvalidInput, NumericalFailure, PreconditionError
from .meshkit import SimplicialMesh, label_boundary
from .tensorcalc import rotvec_dim

__all__ = [
    "SCHEMA_VERSION",
    "ConstantReport",
    "Discretization",
    "DvBound",
    "GradNumberSolution",
    "dv_bound_check",
    "form_identity_defects",
    "gaffney_ratios",
    "grad_number",
    "korn_constant",
    "korn_constant_no_bc",
    "witness_distance",
]

SCHEMA_VERSION = 1
KORN_BOUND_SLACK = 1e-8
PROXY_NOTE = "Maxwell constant proxied by the Gaffney supremum"


def _ms(t0: float) -> float:
    return round(1e3 * (time.perf_counter() - t0), 3)


class Discretization:
    """A mesh, a Lagrange space and a normal mode, with cached forms."""

    def __init__(self, mesh: SimplicialMesh, order: int = 1, normal_mode: str = "facet",
                 bc: str | None = None):
        if normal_mode not in fem.NORMAL_MODES:
            raise InvalidInput(f"unknown normal mode {normal_mode!r}")
        self.mesh = mesh
        self.space = fem.FeSpace(mesh, order)
        self.normal_mode = normal_mode
        self.bc = bc if bc is not None else _describe_labels(mesh)
        self._forms: dict[str, fem.FormMatrix] = {}
        self._reduced: dict[str, sp.csr_matrix] = {}
        self._Z: fem.ConstraintNullBasis | None = None
        self.timings: dict[str, float] = {}

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def dim(self) -> int:
        return self.mesh.dim

    def form(self, kind: str) -> fem.FormMatrix:
        if kind not in self._forms:
            t0 = time.perf_counter()
            self._forms[kind] = fem.assemble(self.space, kind)
            self.timings["assemble"] = self.timings.get("assemble", 0.0) + _ms(t0)
        return self._forms[kind]

    @property
    def constraints(self) -> fem.ConstraintNullBasis:
        if self._Z is None:
            t0 = time.perf_counter()
            self._Z = fem.build_constraints(self.space, self.normal_mode)
            self.timings["constraints"] = _ms(t0)
        return self._Z

    def reduced(self, kind: str) -> sp.csr_matrix:
        if kind not in self._reduced:
            self._reduced[kind] = fem.reduce(self.form(kind), self.constraints)
        return self._reduced[kind]

    def input_record(self) -> dict:
        meta = self.mesh.meta
        return {
            "mesh_hash": self.mesh.content_hash(),
            "shape": meta.get("shape"),
            "h": meta.get("h"),
            "bc": self.bc,
            "space": f"p{self.order}",
            "normal_mode": self.normal_mode,
        }


def _describe_labels(mesh: SimplicialMesh) -> str:
    used = sorted(set(mesh.labels))
    return used[0] if len(used) == 1 else "mixed"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    return x


@dataclass
class ConstantReport:
    """One named constant with the metadata needed to reproduce it.

    ``value`` is the constant itself (the square root of the extremal
    quotient), ``value_sq`` the quotient. Both may be ``inf``.
    """

    name: str
    value_sq: float
    input: dict
    n_dof: int
    n_red: int
    kernel_dim: int = 0
    residuals: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    timings_ms: dict = field(default_factory=dict)
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def value(self) -> float:
        return math.inf if math.isinf(self.value_sq) else math.sqrt(max(self.value_sq, 0.0))

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value_sq)

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "input": self.input,
            "result": {
                "name": self.name,
                "value": self.value,
                "value_sq_or_inf": self.value_sq,
                "kernel_dim": self.kernel_dim,
                "n_dof": self.n_dof,
                "n_red": self.n_red,
                "residuals": self.residuals,
                "flags": self.flags,
                "notes": list(self.notes),
            },
        }
        if timings:
            out["timings_ms"] = self.timings_ms
        return _jsonable(out)

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, indent=2)

    def csv_row(self) -> dict:
        inp = self.input
        return {"name": self.name, "shape": inp.get("shape"), "h": inp.get("h"),
                "bc": inp.get("bc"), "space": inp.get("space"),
                "normal_mode": inp.get("normal_mode"), "n_red": self.n_red,
                "value_sq": _jsonable(self.value_sq), "value": _jsonable(self.value),
                "kernel_dim": self.kernel_dim, "mesh_hash": inp.get("mesh_hash")}


def _as_disc(mesh_or_disc, order, normal_mode, bc=None) -> Discretization:
    if isinstance(mesh_or_disc, Discretization):
        return mesh_or_disc
    return Discretization(mesh_or_disc, order, normal_mode, bc)


def _report(disc: Discretization, name: str, er: spectra.EigenReport, t_solve: float,
            n_dof: int, n_red: int) -> ConstantReport:
    rep = ConstantReport(name=name, value_sq=er.value, input=disc.input_record(),
                         n_dof=n_dof, n_red=n_red, kernel_dim=er.kernel_dim,
                         residuals={"eigen": er.residual},
                         flags={"infinite": er.is_infinite, "solver": er.path},
                         timings_ms={**disc.timings, "solve": t_solve},
                         vector=er.vector)
    if er.deflated:
        rep.flags["deflated"] = er.deflated
    return rep


def witness_distance(disc: Discretization, u: np.ndarray, target: np.ndarray) -> float:
    """Mass-norm distance between the normalized field ``u`` and ``target``.

    With a single target column both are normalized and sign aligned; with
    several columns the distance from normalized ``u`` to their span is returned.
    """
    M = disc.form("Mass").matrix
    u = np.asarray(u, dtype=float)
    u = u / math.sqrt(float(u @ (M @ u)))
    T = np.asarray(target, dtype=float).reshape(len(u), -1)
    if T.shape[1] == 1:
        t = T[:, 0] / math.sqrt(float(T[:, 0] @ (M @ T[:, 0])))
        if float(u @ (M @ t)) < 0:
            t = -t
        d = u - t
    else:
        G = T.T @ (M @ T)
        d = u - T @ np.linalg.solve(G, T.T @ (M @ u))
    return math.sqrt(max(float(d @ (M @ d)), 0.0))


def korn_constant(mesh, order: int = 1, normal_mode: str = "facet", bc: str | None = None) -> ConstantReport:
    """Squared Korn constant ``sup |grad v|^2 / |sym grad v|^2`` on the constrained space.

    The name is ``c_kt`` when every constrained facet is tangential and
    ``c_kn`` otherwise. An admissible rigid motion makes the value infinite;
    the report then carries the mass-norm distance of the witness to the
    admissible rigid motions.
    """
    disc = _as_disc(mesh, order, normal_mode, bc)
    labels = set(disc.mesh.labels)
    if labels <= {"free"}:
        raise PreconditionError("no boundary constraint is active; use korn_constant_no_bc")
    name = "c_kt" if labels - {"free"} == {"tangential"} else "c_kn"
    Z = disc.constraints
    if Z.n_red == 0:
        raise PreconditionError("the constrained space is trivial (every node is clamped)")
    A, B = disc.reduced("GradGrad"), disc.reduced("SymSym")
    adm = fem.rigid_motions_in_constrained_space(fem.rigid_motion_basis(disc.space), Z)
    t0 = time.perf_counter()
    if adm.shape[1] and Z.n_red > spectra.DENSE_LIMIT:
        # too large for the dense kernel test; an admissible rigid motion with
        # nonzero gradient is already a witness of an infinite constant
        y = Z.Z.T @ adm
        energy = np.einsum("ik,ik->k", y, A @ y)
        k = int(np.argmax(energy))
        er = spectra.EigenReport(math.inf if energy[k] > 0 else 0.0, adm.shape[1], 0.0, y[:, k],
                                 path="rigid-motion")
    else:
        er = spectra.sup_quotient(A, B)
    rep = _report(disc, name, er, _ms(t0), Z.n_dof, Z.n_red)
    rep.flags["admissible_rigid_motions"] = int(adm.shape[1])
    rep.vector = Z.expand(er.vector)
    if er.is_infinite:
        u = rep.vector
        Mm = disc.form("Mass").matrix
        rep.residuals["witness_mass_norm"] = math.sqrt(float(u @ (Mm @ u)))
        if adm.shape[1]:
            rep.residuals["witness_rigid_distance"] = witness_distance(disc, u, adm)
    if disc.normal_mode == "facet":
        rep.flags["polyhedral_bound_satisfied"] = bool(er.value <= 2.0 + KORN_BOUND_SLACK)
    return rep


def korn_constant_no_bc(mesh, order: int = 1) -> ConstantReport:
    """Korn constant on the whole space with the rigid motions removed.

    Labels are ignored. The rigid motions are deflated in the L2 (mass)
    inner product, so the quotient is taken over the L2-orthogonal complement.
    """
    disc = _as_disc(mesh, order, "facet", "none")
    A, B = disc.form("GradGrad").matrix, disc.form("SymSym").matrix
    M = disc.form("Mass").matrix
    R = fem.rigid_motion_basis(disc.space)
    t0 = time.perf_counter()
    er = spectra.sup_quotient(A, B, deflate=R, inner=M)
    rep = _report(disc, "c_k", er, _ms(t0), disc.space.n_dof, disc.space.n_dof - R.shape[1])
    return rep


def gaffney_ratios(mesh, order: int = 1, normal_mode: str = "facet",
                   bc: str | None = None) -> tuple[ConstantReport, ConstantReport]:
    """Sup and inf of ``|grad v|^2 / (|rot v|^2 + |div v|^2)`` on the constrained space.

    A kernel of the denominator (discrete Neumann fields) is removed
    mass-orthogonally before either extreme is taken.
    """
    disc = _as_disc(mesh, order, normal_mode, bc)
    Z = disc.constraints
    if Z.n_red == 0:
        raise PreconditionError("the constrained space is trivial (every node is clamped)")
    G = disc.reduced("GradGrad")
    D = disc.reduced("RotRot") + disc.reduced("DivDiv")
    Mr = fem.reduce(disc.form("Mass"), Z)
    t0 = time.perf_counter()
    Kd = spectra.kernel(D) if Z.n_red <= spectra.DENSE_LIMIT else np.zeros((Z.n_red, 0))
    defl = Kd if Kd.shape[1] else None
    sup = spectra.sup_quotient(G, D, deflate=defl, inner=Mr)
    t_sup = _ms(t0)
    t0 = time.perf_counter()
    inf = spectra.inf_quotient(G, D, deflate=defl, inner=Mr)
    t_inf = _ms(t0)
    reps = []
    for name, er, t in (("gaffney_sup", sup, t_sup), ("gaffney_inf", inf, t_inf)):
        rep = _report(disc, name, er, t, Z.n_dof, Z.n_red)
        rep.flags["neumann_kernel_dim"] = int(Kd.shape[1])
        reps.append(rep)
    return reps[0], reps[1]


@dataclass
class GradNumberSolution:
    """Least-squares solutions ``v_sigma`` for the unit rotation vectors.

    ``coeffs[:, k]`` holds the full coefficient vector for ``sigma = e_k``.
    ``residuals[k]`` is ``|rot v - e_k|^2 + |div v|^2`` and ``M`` the Gram
    matrix of the solutions in the symmetric-gradient form.
    """

    coeffs: np.ndarray
    residuals: np.ndarray
    M: np.ndarray
    volume: float
    chain: dict
    report: ConstantReport

    @property
    def value(self) -> float:
        return self.report.value_sq

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))


def grad_number(mesh, order: int = 2) -> GradNumberSolution:
    """Grad's number ``min_sigma |sym grad v_sigma|^2 / |Omega|`` over unit sigma.

    ``v_sigma`` minimizes ``|rot v - sigma|^2 + |div v|^2`` over continuous
    piecewise polynomials with vanishing normal trace; the labels of ``mesh`` are
    replaced by normal labels. A small residual certifies that ``v_sigma``
    nearly solves ``rot v = sigma, div v = 0``.
    """
    if isinstance(mesh, Discretization):
        mesh = mesh.mesh
    disc = Discretization(label_boundary(mesh, "normal"), order, "facet", "normal")
    Z = disc.constraints
    if Z.n_red == 0:
        raise PreconditionError("the constrained space is trivial (every node is clamped)")
    n = disc.dim
    m = rotvec_dim(n)
    vol = disc.mesh.volume
    RD = (disc.reduced("RotRot") + disc.reduced("DivDiv")).tocsc()
    S = disc.form("SymSym").matrix
    GG = disc.form("GradGrad").matrix
    RR, DD = disc.form("RotRot").matrix, disc.form("DivDiv").matrix
    t0 = time.perf_counter()
    try:
        lu = spla.splu(RD)
    except RuntimeError as exc:
        raise NumericalFailure(f"least-squares system is singular: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    cond = float(piv.max() / max(piv.min(), np.finfo(float).tiny))
    if piv.min() <= 1e-13 * piv.max():
        raise NumericalFailure("least-squares system is singular (constant fields unconstrained)", cond)
    V = np.zeros((Z.n_dof, m))
    res = np.zeros(m)
    chain_rot, chain_sym = 0.0, 0.0
    for k in range(m):
        b = Z.Z.T @ fem.rot_moment_vector(disc.space, k)
        y = lu.solve(b)
        v = Z.expand(y)
        V[:, k] = v
        res[k] = float(y @ (RD @ y)) - 2.0 * float(b @ y) + vol
        g2, r2, d2, s2 = (float(v @ (F @ v)) for F in (GG, RR, DD, S))
        scale = max(g2, np.finfo(float).tiny)
        chain_rot = max(chain_rot, abs(g2 - r2 - d2) / scale)
        chain_sym = max(chain_sym, abs(g2 - 2.0 * s2 + d2) / scale)
    M = V.T @ (S @ V)
    M = 0.5 * (M + M.T)
    cg = float(np.linalg.eigvalsh(M)[0]) / vol
    t_solve = _ms(t0)
    rep = ConstantReport(
        name="c_g", value_sq=cg, input=disc.input_record(), n_dof=Z.n_dof, n_red=Z.n_red,
        residuals={"least_squares_max": float(res.max()),
                   "least_squares_rel": float(res.max() / vol),
                   "chain_grad_rot_div": chain_rot, "chain_grad_sym_div": chain_sym},
        flags={"residual_small": bool(res.max() <= 1e-3 * vol), "condition_pivot": cond},
        notes=["value_sq_or_inf holds c_g itself (not a square)"],
        timings_ms={**disc.timings, "solve": t_solve})
    chain = {"grad_rot_div": chain_rot, "grad_sym_div": chain_sym}
    return GradNumberSolution(V, res, M, vol, chain, rep)


@dataclass
class DvBound:
    """Both sides of ``c_kn^2 <= 2N (1 + c_mn^2)(1 + c_k^2)(1 + 1/c_g)``."""

    applicable: bool
    lhs: float | None
    rhs: float | None
    holds: bool | None
    dim: int
    note: str

    def to_dict(self) -> dict:
        return _jsonable({"applicable": self.applicable, "lhs": self.lhs, "rhs": self.rhs,
                          "holds": self.holds, "dim": self.dim, "note": self.note})


def dv_bound_check(c_kn: ConstantReport, c_k: ConstantReport, gaffney_sup: ConstantReport,
                   c_g: ConstantReport | GradNumberSolution, dim: int) -> DvBound:
    """Plug the discrete constants into the upper bound for the normal Korn constant.

    Any infinite (or, for Grad's number, non-positive) input makes the check
    not applicable. The discrete values only estimate the continuous
    constants, so the result is a consistency diagnostic.
    """
    if isinstance(c_g, GradNumberSolution):
        c_g = c_g.report
    vals = [c_kn.value_sq, c_k.value_sq, gaffney_sup.value_sq, c_g.value_sq]
    if any(math.isinf(v) for v in vals) or c_g.value_sq <= 0:
        return DvBound(False, None, None, None, dim, "an input constant is infinite or c_g <= 0")
    kn2, k2, mn2, cg = vals
    rhs = 2 * dim * (1 + mn2) * (1 + k2) * (1 + 1 / cg)
    return DvBound(True, kn2, rhs, bool(kn2 <= rhs), dim, PROXY_NOTE)


def form_identity_defects(disc: Discretization) -> dict:
    """Relative spectral-norm defects of the reduced Gaffney and deviatoric identities.

    ``gaffney``: |Z^T (GG - RR - DD) Z| / |Z^T GG Z|.
    ``devsym``:  |Z^T (GG - 2 DSDS - ((2 - N)/N) DD) Z| / |Z^T GG Z|.
    """
    n = disc.dim
    G = disc.reduced("GradGrad")
    E1 = G - disc.reduced("RotRot") - disc.reduced("DivDiv")
    E2 = G - 2.0 * disc.reduced("DevSymDevSym") - ((2.0 - n) / n) * disc.reduced("DivDiv")
    g = _spectral_norm(G)
    return {"gaffney": _spectral_norm(E1) / g, "devsym": _spectral_norm(E2) / g,
            "n_red": G.shape[0]}


def _spectral_norm(A) -> float:
    if A.shape[0] == 0:
        return 0.0
    if A.shape[0] <= 1500:
        return float(np.linalg.norm(A.toarray() if sp.issparse(A) else A, 2))
    v0 = np.random.default_rng(0).standard_normal(A.shape[0])
    return float(abs(spla.eigsh(A, k=1, which="LM", v0=v0, return_eigenvectors=False)[0]))
