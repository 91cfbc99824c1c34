import math

import numpy as np
import pytest

from korn_gauge import fem
from korn_gauge import meshkit as mk
from korn_gauge.errors import GeometryMismatchError, InvalidInput
from korn_gauge.tensorcalc import rot_generator
from korn_gauge.polyfield import PolyVecField, energy_integrals


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("deg", range(7))
def test_quadrature_exact_on_reference_monomials(dim, deg):
    bary, w = fem.simplex_quadrature(dim, deg)
    assert w.sum() == pytest.approx(1 / math.factorial(dim), abs=1e-15)
    pts = bary[:, 1:]
    for e in np.ndindex(*(deg + 1,) * dim):
        if sum(e) != deg:
            continue
        exact = math.prod(math.factorial(k) for k in e) / math.factorial(deg + dim)
        assert float(w @ np.prod(pts ** np.array(e), axis=1)) == pytest.approx(exact, abs=1e-15)


@pytest.mark.parametrize("order", [1, 2])
def test_patch_test_reproduces_polynomials(order):
    m = mk.lshape(0.25)
    S = fem.FeSpace(m, order)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 2))
    f = (lambda X: X @ A.T + 1.0) if order == 1 else (lambda X: np.stack([X[:, 0] ** 2, X[:, 0] * X[:, 1]], 1))
    u = fem.interpolate(S, f)
    bary = rng.dirichlet(np.ones(3), size=5)
    cells = np.arange(m.n_cells)
    vals = S.evaluate(u, cells, bary)
    X = np.einsum("pk,ckx->cpx", bary, m.vertices[m.cells])
    np.testing.assert_allclose(vals, f(X.reshape(-1, 2)).reshape(vals.shape), atol=1e-13)


@pytest.mark.parametrize("order", [1, 2])
def test_gradgrad_of_identity_field(order):
    S = fem.FeSpace(mk.square(1.0), order)
    u = fem.interpolate(S, lambda X: X)
    assert fem.assemble(S, "GradGrad").energy(u) == pytest.approx(2.0, abs=1e-14)
    assert fem.assemble(S, "DivDiv").energy(u) == pytest.approx(4.0, abs=1e-14)


def test_forms_agree_with_exact_polynomial_integrals():
    m = mk.annulus(0.25)
    S = fem.FeSpace(m, 2)
    rng = np.random.default_rng(4)
    v = PolyVecField.random(2, 2, rng)
    u = fem.interpolate(S, v)
    e = energy_integrals(v, m)
    for kind, ref in [("GradGrad", e.grad2), ("SymSym", e.sym2), ("DevSymDevSym", e.devsym2),
                      ("DivDiv", e.div2), ("RotRot", e.rot2)]:
        assert fem.assemble(S, kind).energy(u) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("shape,h", [("square", 0.25), ("cube", 0.5), ("prism:5", 0.5)])
@pytest.mark.parametrize("order", [1, 2])
def test_matrix_identities(shape, h, order):
    S = fem.FeSpace(mk.generate(shape, h), order)
    F = {k: fem.assemble(S, k).matrix for k in fem.FORM_KINDS}
    n = S.dim
    scale = abs(F["GradGrad"]).max()
    assert abs(F["GradGrad"] - F["SymSym"] - 0.5 * F["RotRot"]).max() <= 1e-12 * scale
    assert abs(F["SymSym"] - F["DevSymDevSym"] - F["DivDiv"] / n).max() <= 1e-12 * scale
    for M in F.values():
        assert abs(M - M.T).max() == 0.0
    assert np.linalg.eigvalsh(F["Mass"].toarray()).min() > 0


def test_random_vector_form_identity():
    S = fem.FeSpace(mk.cube(0.5), 2)
    rng = np.random.default_rng(1)
    G, Sy, R = (fem.assemble(S, k) for k in ("GradGrad", "SymSym", "RotRot"))
    for _ in range(5):
        u = rng.standard_normal(S.n_dof)
        assert abs(G.energy(u) - Sy.energy(u) - 0.5 * R.energy(u)) <= 1e-12 * G.energy(u)


@pytest.mark.parametrize("order", [1, 2])
def test_rigid_motions_in_sym_kernel(order):
    S = fem.FeSpace(mk.cube(0.5), order)
    R = fem.rigid_motion_basis(S)
    assert R.shape[1] == 6
    assert np.linalg.matrix_rank(R) == 6
    SS = fem.assemble(S, "SymSym").matrix
    assert np.abs(SS @ R).max() <= 1e-12


def test_invalid_kind():
    with pytest.raises(InvalidInput):
        fem.assemble(fem.FeSpace(mk.square(1.0), 1), "Laplace")
    with pytest.raises(InvalidInput):
        fem.FeSpace(mk.square(1.0), 3)


def _node_dims(Z):
    return [b.shape[1] for b in Z.node_basis]


def test_square_all_normal_p1_counts():
    m = mk.label_boundary(mk.square(0.25), "normal")
    S = fem.FeSpace(m, 1)
    Z = fem.build_constraints(S)
    corners = [i for i, X in enumerate(S.nodes) if np.all((X == 0) | (X == 1))]
    edges = [i for i, X in enumerate(S.nodes)
             if np.any((X == 0) | (X == 1)) and i not in corners]
    dims = _node_dims(Z)
    assert all(dims[i] == 0 for i in corners)
    assert all(dims[i] == 1 for i in edges)
    # the surviving direction is tangential
    for i in edges:
        nu = np.array([1.0, 0.0]) if S.nodes[i][0] in (0.0, 1.0) else np.array([0.0, 1.0])
        assert abs(nu @ Z.node_basis[i][:, 0]) < 1e-15
    assert Z.n_red == 2 * 9 + 12


def test_square_all_tangential_p1_counts():
    S = fem.FeSpace(mk.label_boundary(mk.square(0.25), "tangential"), 1)
    Z = fem.build_constraints(S)
    for i, X in enumerate(S.nodes):
        on = (X == 0) | (X == 1)
        if on.all():
            assert Z.node_basis[i].shape[1] == 0
        elif on.any():
            d = Z.node_basis[i][:, 0]
            assert abs(d[int(np.argmax(on))]) == pytest.approx(1.0)


def test_dirichlet_reduced_size_is_interior_dofs():
    m = mk.label_boundary(mk.square(0.25), "dirichlet")
    S = fem.FeSpace(m, 2)
    Z = fem.build_constraints(S)
    boundary = {int(k) for nodes in S.facet_nodes for k in nodes}
    assert Z.n_red == 2 * (S.n_nodes - len(boundary))
    A = fem.reduce(fem.assemble(S, "GradGrad"), Z)
    assert A.shape == (Z.n_red, Z.n_red)


def test_z_orthonormal_and_identity_reduce():
    m = mk.label_boundary(mk.lshape(0.25), "west-t-east-n")
    S = fem.FeSpace(m, 2)
    Z = fem.build_constraints(S)
    ZtZ = (Z.Z.T @ Z.Z).toarray()
    np.testing.assert_allclose(ZtZ, np.eye(Z.n_red), atol=1e-14)
    M = fem.assemble(S, "Mass").matrix
    I = np.eye(S.n_dof)
    np.testing.assert_array_equal(fem.reduce(M.toarray(), I), M.toarray())
    with pytest.raises(InvalidInput):
        fem.reduce(M, np.eye(3))


@pytest.mark.parametrize("shape,h", [("square", 0.5), ("cube", 1.0), ("annulus", 0.25)])
@pytest.mark.parametrize("rule", ["normal", "tangential", "west-t-east-n"])
@pytest.mark.parametrize("order", [1, 2])
def test_columns_satisfy_bc_on_facets(shape, h, rule, order):
    m = mk.label_boundary(mk.generate(shape, h), rule)
    S = fem.FeSpace(m, order)
    Z = fem.build_constraints(S)
    rng = np.random.default_rng(0)
    u = Z.expand(rng.standard_normal(Z.n_red))
    d = m.dim
    fb = rng.dirichlet(np.ones(d), size=6)
    for fi, (f, lab) in enumerate(zip(m.facets, m.labels)):
        c = m.facet_cells[fi]
        verts = list(m.cells[c])
        # barycentric coordinates of facet sample points inside the cell
        bary = np.zeros((len(fb), d + 1))
        for k, vtx in enumerate(f):
            bary[:, verts.index(vtx)] = fb[:, k]
        vals = S.evaluate(u, np.array([c]), bary)[0]
        nu = m.facet_normals[fi]
        if lab == "normal":
            assert np.abs(vals @ nu).max() <= 1e-13
        elif lab == "tangential":
            assert np.abs(vals - np.outer(vals @ nu, nu)).max() <= 1e-13


def test_exact_circle_rotation_admissible():
    m = mk.label_boundary(mk.ngon(12, 1 / 3), "normal")
    S = fem.FeSpace(m, 1)
    Zc = fem.build_constraints(S, "exact-circle")
    R = fem.rigid_motion_basis(S)
    rot = R[:, 2]
    bnodes = np.unique(m.facets)
    v = rot.reshape(-1, 2)[bnodes]
    assert np.abs(np.einsum("ij,ij->i", v, S.nodes[bnodes])).max() <= 1e-15
    assert np.linalg.norm(rot - Zc.project(rot)) <= 1e-12 * np.linalg.norm(rot)
    adm = fem.rigid_motions_in_constrained_space(R, Zc)
    assert adm.shape[1] == 1
    assert abs(abs(adm[:, 0] @ rot) - np.linalg.norm(rot)) <= 1e-12 * np.linalg.norm(rot)


def test_rigid_motions_facet_normals_and_free():
    m = mk.label_boundary(mk.square(0.25), "normal")
    S = fem.FeSpace(m, 1)
    R = fem.rigid_motion_basis(S)
    assert fem.rigid_motions_in_constrained_space(R, fem.build_constraints(S)).shape[1] == 0
    Sf = fem.FeSpace(mk.square(0.25), 1)
    assert fem.rigid_motions_in_constrained_space(R, fem.build_constraints(Sf)).shape[1] == 3


def test_exact_circle_rejects_off_circle_nodes():
    S = fem.FeSpace(mk.label_boundary(mk.ngon(12, 1 / 3), "normal"), 2)
    with pytest.raises(GeometryMismatchError):
        fem.build_constraints(S, "exact-circle")
    with pytest.raises(GeometryMismatchError):
        fem.build_constraints(fem.FeSpace(mk.label_boundary(mk.square(0.5), "n"), 1), "exact-circle")
    with pytest.raises(InvalidInput):
        fem.build_constraints(S, "wobbly")


def test_rot_moment_vector_matches_form_value():
    S = fem.FeSpace(mk.cube(0.5), 2)
    # linear field with rotation sigma has int rot_k = sigma_k |Omega|
    sigma = np.array([0.3, -1.0, 2.0])
    A = rot_generator(sigma)
    u = fem.interpolate(S, lambda X: X @ A.T)
    for k in range(3):
        assert fem.rot_moment_vector(S, k) @ u == pytest.approx(sigma[k], rel=1e-13)


def test_dof_numbering_deterministic():
    m = mk.cube(0.5)
    a, b = fem.FeSpace(m, 2), fem.FeSpace(m, 2)
    np.testing.assert_array_equal(a.cell_dofs(), b.cell_dofs())
    np.testing.assert_array_equal(a.nodes, b.nodes)
    assert a.n_dof == 3 * (m.n_vertices + len(m.edges))

