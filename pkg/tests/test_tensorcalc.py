import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from korn_gauge.errors import InvalidDimension
from korn_gauge.tensorcalc import (
    check_pointwise_identities,
    decompose,
    pair_index,
    rot_generator,
    rotvec_dim,
    rotvec_of_gradient,
    rotvec_to_curl3,
    skw_of_rotvec,
)


def _matrices(n):
    return arrays(np.float64, (n, n), elements=st.floats(-1e3, 1e3, allow_nan=False))


def test_identity_decomposition():
    d = decompose(np.eye(3))
    assert np.array_equal(d.sym, np.eye(3))
    assert not d.skw.any() and not d.dev.any() and not d.devsym.any()
    assert d.trace == 3.0


def test_rotation_field_gradient_is_skew():
    # v = (x2, -x1, 0); G[i, j] = d_i v_j
    G = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    d = decompose(G)
    assert not d.sym.any()
    assert d.trace == 0.0
    r = rotvec_of_gradient(G)
    np.testing.assert_array_equal(r, [-2.0, 0.0, 0.0])
    np.testing.assert_array_equal(rotvec_to_curl3(r), [0.0, 0.0, -2.0])


def test_scalar_rot_in_2d():
    G = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(rotvec_of_gradient(G), [1.0])


def test_symmetric_gradient_has_no_rotation():
    A = np.random.default_rng(1).standard_normal((4, 4))
    assert not rotvec_of_gradient(A + A.T).any()


@pytest.mark.parametrize("bad", [np.zeros((1, 1)), np.zeros((2, 3)), np.zeros(4)])
def test_dimension_errors(bad):
    with pytest.raises(InvalidDimension):
        decompose(bad)


def test_pair_index_is_lexicographic():
    assert pair_index(4) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert [rotvec_dim(n) for n in (2, 3, 4)] == [1, 3, 6]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_rot_generator_field_properties(n):
    rng = np.random.default_rng(n)
    sigma = rng.standard_normal(rotvec_dim(n))
    S = rot_generator(sigma)
    G = S.T  # gradient of x -> S x
    np.testing.assert_allclose(S, -S.T)
    np.testing.assert_allclose(rotvec_of_gradient(G), sigma, atol=1e-15)
    assert np.trace(G) == 0.0


def test_rot_generator_zero():
    assert not rot_generator(np.zeros(3)).any()


def test_skw_of_rotvec_length_mismatch():
    with pytest.raises(InvalidDimension):
        skw_of_rotvec(np.ones(2), 3)


@settings(max_examples=200, deadline=None)
@given(n=st.sampled_from([2, 3, 4]), data=st.data())
def test_decomposition_pythagoras(n, data):
    A = data.draw(_matrices(n))
    d = decompose(A)
    norm2 = np.sum(A * A)
    scale = 1.0 + norm2
    np.testing.assert_allclose(d.sym + d.skw, A, atol=1e-12 * (1 + np.abs(A).max()))
    assert abs(norm2 - np.sum(d.sym ** 2) - np.sum(d.skw ** 2)) <= 1e-14 * scale * 10
    assert abs(norm2 - np.sum(d.dev ** 2) - d.trace ** 2 / n) <= 1e-14 * scale * 10
    assert abs(np.sum(d.sym ** 2) - np.sum(d.devsym ** 2) - d.trace ** 2 / n) <= 1e-14 * scale * 10
    assert abs(np.trace(d.dev)) <= 1e-12 * (1 + abs(d.trace))


@settings(max_examples=200, deadline=None)
@given(n=st.sampled_from([2, 3, 4]), data=st.data())
def test_skew_roundtrip_and_rot_norm(n, data):
    A = data.draw(_matrices(n))
    S = 0.5 * (A - A.T)
    np.testing.assert_allclose(skw_of_rotvec(rotvec_of_gradient(S), n), S, atol=1e-12)
    r = rotvec_of_gradient(A)
    assert abs(np.sum(decompose(A).skw ** 2) - 0.5 * r @ r) <= 1e-13 * (1 + np.sum(A * A))


@settings(max_examples=300, deadline=None)
@given(n=st.sampled_from([2, 3, 4]), data=st.data())
def test_pointwise_identities_property(n, data):
    assert check_pointwise_identities(data.draw(_matrices(n))).ok(1e-12)


def test_pointwise_identities_detect_wrong_input():
    # the residual object must respond to a deliberately broken identity
    r = check_pointwise_identities(np.eye(2))
    assert r.ok()
    from dataclasses import replace
    assert not replace(r, rot_cross=1e-6).ok()
