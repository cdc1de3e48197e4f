import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieflow.datasets import make_rng
from lieflow.errors import ContractError, CutLocusError, DomainError, RangeError, SingularityError
from lieflow.liegroup import (
    GL2C,
    GL2R,
    SO2,
    SO3,
    AlgebraElement,
    DiscreteName,
    Field,
    GroupElement,
    GroupKind,
    GroupSpec,
    basis,
    discrete_group,
    euler_zyx,
    euler_zyx_to_matrix,
    expm_work,
    logm_work,
    mat_exp,
    mat_log,
    mollweide_project,
    polar_rotation,
    polar_rotation_work,
    rotation_to_angles,
    sample_prior,
    sample_prior_work,
)

ALL_SPECS = [SO2, SO3, GL2R, GL2C]


def _series_expm(A, terms=60):
    # plain power series; independent of the library's scaling and squaring
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def _complex(work):
    n = work.shape[-1] // 2
    return work[..., :n, :n] + 1j * work[..., n:, :n]


# --------------------------------------------------------------------------
# GroupSpec


@pytest.mark.parametrize(
    "kind,n,k,field",
    [("SO2", 2, 1, Field.Real), ("SO3", 3, 3, Field.Real), ("GL2RPlus", 2, 4, Field.Real), ("GL2C", 2, 8, Field.Complex)],
)
def test_group_spec_shapes(kind, n, k, field):
    spec = GroupSpec.of(kind)
    assert (spec.matrix_dim, spec.algebra_dim, spec.field) == (n, k, field)


def test_group_spec_rejects_inconsistent_fields():
    with pytest.raises(ContractError):
        GroupSpec(GroupKind.SO3, 2, Field.Real, 3)
    with pytest.raises(ContractError):
        GroupSpec(GroupKind.GL2RPlus, 2, Field.Complex, 4)


# --------------------------------------------------------------------------
# exp / log examples


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_exp_of_zero_is_identity(spec):
    g = mat_exp(AlgebraElement.zero(spec))
    assert np.array_equal(g.work, np.eye(spec.work_dim))


def test_so2_exp_quarter_turn():
    g = mat_exp(AlgebraElement(SO2, [math.pi / 2]))
    np.testing.assert_allclose(g.mat, [[0, -1], [1, 0]], atol=1e-15)


def test_gl2r_exp_diagonal_matches_series():
    A = np.diag([math.log(2), math.log(3)])
    g = mat_exp(AlgebraElement.from_work(GL2R, A))
    np.testing.assert_allclose(g.mat, _series_expm(A), rtol=1e-13)
    np.testing.assert_allclose(g.mat, np.diag([2.0, 3.0]), rtol=1e-13)


@pytest.mark.parametrize("spec", [GL2R, GL2C])
def test_gl_exp_relative_accuracy_against_series(spec):
    rng = make_rng(11)
    for _ in range(50):
        c = rng.normal(size=spec.algebra_dim)
        c *= rng.uniform(0, 10) / np.linalg.norm(c)
        A = AlgebraElement(spec, c).work
        got = expm_work(spec, A)
        ref = _series_expm(A, terms=200)
        assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


def test_exp_rejects_large_input():
    with pytest.raises(RangeError):
        expm_work(GL2R, np.eye(2) * 40)


def test_so3_exp_is_rotation_about_axis():
    g = mat_exp(AlgebraElement(SO3, [0.0, 0.0, 0.3]))
    np.testing.assert_allclose(g.mat[:2, :2], [[math.cos(0.3), -math.sin(0.3)], [math.sin(0.3), math.cos(0.3)]])
    assert g.mat[2, 2] == pytest.approx(1.0)


def test_log_identity_is_zero():
    for spec in ALL_SPECS:
        A = mat_log(GroupElement.identity(spec))
        assert np.allclose(A.coeffs, 0.0, atol=1e-14)


def test_so2_log_quarter_turn():
    g = GroupElement(SO2, [[0.0, -1.0], [1.0, 0.0]])
    assert mat_log(g).coeffs[0] == pytest.approx(math.pi / 2)


def test_so3_log_round_trip_at_angle_two():
    rng = make_rng(3)
    axes = rng.normal(size=(1000, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    G = expm_work(SO3, np.stack([AlgebraElement(SO3, 2.0 * a).work for a in axes]))
    A = logm_work(SO3, G)
    err = np.linalg.norm(expm_work(SO3, A) - G, axis=(-2, -1))
    assert err.max() <= 1e-8
    np.testing.assert_allclose(np.linalg.norm(np.stack([A[:, 2, 1], A[:, 0, 2], A[:, 1, 0]], -1), axis=1), 2.0)


def test_cut_locus_raises():
    with pytest.raises(CutLocusError):
        mat_log(GroupElement(SO2, [[-1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(CutLocusError):
        mat_log(GroupElement(SO3, np.diag([1.0, -1.0, -1.0])))


def test_gl_log_negative_axis_raises():
    with pytest.raises(DomainError):
        mat_log(GroupElement(GL2R, np.diag([-1.0, -2.0])))


def test_so3_log_near_pi_is_accurate():
    axis = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    th = math.pi - 1e-4
    G = expm_work(SO3, AlgebraElement(SO3, th * axis).work)
    A = logm_work(SO3, G)
    np.testing.assert_allclose(np.array([A[2, 1], A[0, 2], A[1, 0]]), th * axis, atol=1e-8)


# --------------------------------------------------------------------------
# properties


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_exp_log_round_trip_on_prior(spec):
    G = sample_prior_work(spec, make_rng(1, spec.algebra_dim), 1000)
    from lieflow.liegroup import in_log_domain

    G = G[in_log_domain(spec, G)]
    assert len(G) > 900
    err = np.linalg.norm(expm_work(spec, logm_work(spec, G)) - G, axis=(-2, -1))
    assert err.max() <= 1e-8


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_log_is_principal(spec):
    G = sample_prior_work(spec, make_rng(2), 200)
    A = logm_work(spec, G, check=False)
    if spec.kind == GroupKind.SO2:
        assert np.all(np.abs(A[:, 1, 0]) < math.pi)
    else:
        for a, g in zip(A, G):
            ev = np.linalg.eigvals(a if not spec.is_complex else _complex(a))
            assert np.all(np.abs(ev.imag) < math.pi + 1e-9)


@pytest.mark.parametrize("spec", ALL_SPECS)
@settings(max_examples=100, deadline=None)
@given(
    s=st.floats(-1.5, 1.5),
    t=st.floats(-1.5, 1.5),
    seed=st.integers(0, 2**31),
)
def test_one_parameter_subgroup(spec, s, t, seed):
    c = make_rng(seed).normal(size=spec.algebra_dim)
    c *= 3.0 * make_rng(seed, 1).random() / np.linalg.norm(c)
    A = AlgebraElement(spec, c).work
    lhs = expm_work(spec, s * A) @ expm_work(spec, t * A)
    rhs = expm_work(spec, (s + t) * A)
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(1.0, np.linalg.norm(rhs))


@pytest.mark.parametrize("spec", ALL_SPECS)
@settings(max_examples=50, deadline=None)
@given(coeffs=st.lists(st.floats(-5, 5), min_size=8, max_size=8))
def test_generator_linearity(spec, coeffs):
    c = np.array(coeffs[: spec.algebra_dim])
    A = AlgebraElement(spec, c)
    L = basis(spec)
    assert np.array_equal(A.mat, np.tensordot(c, L, axes=(0, 0)))
    np.testing.assert_allclose(AlgebraElement.from_work(spec, A.work).coeffs, c, atol=1e-12)
    if spec.is_compact:
        assert np.linalg.norm(A.mat + A.mat.T) <= 1e-10


def test_basis_is_fixed():
    assert np.array_equal(basis(SO2)[0], [[0, -1], [1, 0]])
    L = basis(SO3)
    for i in range(3):
        e = np.eye(3)[i]
        v = np.array([0.3, -0.2, 0.7])
        np.testing.assert_allclose(L[i] @ v, np.cross(e, v))


# --------------------------------------------------------------------------
# priors


def test_so2_prior_is_uniform():
    from scipy.stats import chisquare

    G = sample_prior_work(SO2, make_rng(5), 100_000)
    th = np.arctan2(G[:, 1, 0], G[:, 0, 0])
    assert abs(th.mean()) < 0.02
    counts, _ = np.histogram(th, bins=36, range=(-math.pi, math.pi))
    assert chisquare(counts).pvalue > 0.001


def test_so3_prior_has_zero_mean():
    G = sample_prior_work(SO3, make_rng(6), 100_000)
    assert np.abs(G.mean(0)).max() < 0.02


def test_gl2r_prior_positive_determinant():
    G = sample_prior_work(GL2R, make_rng(7), 1000)
    assert np.all(np.linalg.det(G) > 0)
    g = sample_prior(GL2R, make_rng(8))
    assert np.linalg.det(g.mat) > 0


def test_gl2c_prior_structure():
    G = sample_prior_work(GL2C, make_rng(9), 100)
    n = 2
    np.testing.assert_allclose(G[:, :n, :n], G[:, n:, n:], atol=1e-12)
    np.testing.assert_allclose(G[:, n:, :n], -G[:, :n, n:], atol=1e-12)


# --------------------------------------------------------------------------
# element invariants


def test_group_element_validation():
    with pytest.raises(ContractError):
        GroupElement(SO2, [[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(ContractError):
        GroupElement(GL2R, np.diag([1.0, -1.0]))
    with pytest.raises(ContractError):
        GroupElement(GL2C, np.zeros((2, 2, 2)))
    with pytest.raises(ContractError):
        GroupElement(SO3, np.eye(2))


def test_complex_multiplication_matches_numpy_complex():
    rng = make_rng(10)
    a = sample_prior(GL2C, rng)
    b = sample_prior(GL2C, rng)
    za = a.mat[0] + 1j * a.mat[1]
    zb = b.mat[0] + 1j * b.mat[1]
    c = a @ b
    np.testing.assert_allclose(c.mat[0] + 1j * c.mat[1], za @ zb, atol=1e-12)
    np.testing.assert_allclose((a.inverse() @ a).work, np.eye(4), atol=1e-12)


# --------------------------------------------------------------------------
# discrete tables


@pytest.mark.parametrize("name,order", [("C4", 4), ("D4", 8), ("Tet", 12), ("Oct", 24), ("Ico", 60)])
def test_discrete_table_group_axioms(name, order):
    tab = discrete_group(name)
    assert tab.order == order == len(tab.elements)
    W = tab.work_stack()
    eye = np.eye(W.shape[-1])
    assert min(np.linalg.norm(w - eye) for w in W) < 1e-12
    for a in W:
        prods = np.matmul(a, W)
        d = np.linalg.norm(prods[:, None] - W[None], axis=(-2, -1))
        assert np.all(d.min(axis=1) < 1e-8)
        inv = np.linalg.inv(a)
        assert np.linalg.norm(W - inv, axis=(-2, -1)).min() < 1e-8


def test_c4_angles():
    tab = discrete_group("C4")
    ang = sorted(np.mod([np.arctan2(e.mat[1, 0], e.mat[0, 0]) for e in tab.elements], 2 * math.pi))
    np.testing.assert_allclose(ang, [0, math.pi / 2, math.pi, 3 * math.pi / 2], atol=1e-12)


def test_tet_preserves_vertex_set_and_ico_preserves_icosahedron():
    from lieflow.liegroup import TET_VERTICES, icosahedron_vertices

    for e in discrete_group("Tet").elements:
        moved = TET_VERTICES @ e.mat.T
        assert np.linalg.norm(moved[:, None] - TET_VERTICES[None], axis=-1).min(1).max() < 1e-12
    V = icosahedron_vertices()
    for e in discrete_group("Ico").elements:
        moved = V @ e.mat.T
        assert np.linalg.norm(moved[:, None] - V[None], axis=-1).min(1).max() < 1e-9


def test_so2_around_z_axis():
    tab = discrete_group(DiscreteName.SO2aroundZ)
    assert tab.elements == () and np.array_equal(tab.axis, [0, 0, 1])


# --------------------------------------------------------------------------
# polar decomposition and angles


def test_polar_examples():
    R = sample_prior(SO3, make_rng(12))
    np.testing.assert_allclose(polar_rotation(R).mat, R.mat, atol=1e-12)
    np.testing.assert_allclose(polar_rotation(GroupElement(GL2R, np.diag([2.0, 0.5]))).mat, np.eye(2), atol=1e-14)


def test_polar_recovers_rotation_factor():
    rng = make_rng(13)
    R = sample_prior_work(SO3, rng, 200)
    M = R @ np.diag([1.3, 0.7, 1.0])
    np.testing.assert_allclose(polar_rotation_work(M), R, atol=1e-8)
    R2 = sample_prior_work(SO2, rng, 200)
    np.testing.assert_allclose(polar_rotation_work(R2 @ np.diag([1.3, 0.7])), R2, atol=1e-8)


def test_polar_handles_reflection_and_singular():
    M = np.diag([3.0, 2.0, -0.5])
    R = polar_rotation_work(M)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)
    with pytest.raises(SingularityError):
        polar_rotation_work(np.diag([1.0, 1e-12]))


def test_polar_is_left_rotation_invariant():
    rng = make_rng(14)
    M = rng.normal(size=(100, 3, 3))
    R = sample_prior_work(SO3, rng, 100)
    np.testing.assert_allclose(polar_rotation_work(R @ M), R @ polar_rotation_work(M), atol=1e-8)


def test_polar_is_nearest_rotation():
    # brute-force comparison against random rotations
    rng = make_rng(15)
    M = rng.normal(size=(3, 3))
    R = polar_rotation_work(M)
    best = np.linalg.norm(M - R)
    cands = sample_prior_work(SO3, rng, 20000)
    assert np.linalg.norm(M - cands, axis=(-2, -1)).min() >= best - 1e-12


def test_rotation_to_angles_examples():
    assert rotation_to_angles(GroupElement.identity(SO3))[:3] == (0.0, 0.0, 0.0)
    g = mat_exp(AlgebraElement(SO2, [1.234]))
    assert rotation_to_angles(g)[0] == pytest.approx(1.234, abs=1e-14)
    with pytest.raises(ContractError):
        rotation_to_angles(GroupElement.identity(GL2R))


def test_euler_round_trip():
    R = sample_prior_work(SO3, make_rng(16), 1000)
    yaw, pitch, roll, lock = euler_zyx(R)
    assert not lock.any()
    assert np.all(np.abs(pitch) <= math.pi / 2)
    back = euler_zyx_to_matrix(yaw, pitch, roll)
    np.testing.assert_allclose(back, R, atol=1e-8)
    y2, p2, r2, _ = euler_zyx(back)
    np.testing.assert_allclose(np.stack([y2, p2, r2]), np.stack([yaw, pitch, roll]), atol=1e-8)


def test_euler_gimbal_lock_convention():
    R = euler_zyx_to_matrix(0.4, math.pi / 2, 0.1)
    yaw, pitch, roll, lock = euler_zyx(R)
    assert lock and roll == 0.0
    np.testing.assert_allclose(euler_zyx_to_matrix(yaw, pitch, roll), R, atol=1e-8)


def test_mollweide_examples():
    assert mollweide_project(0.0, 0.0) == pytest.approx((0.0, 0.0))
    u, v = mollweide_project(0.0, math.pi / 2)
    assert (float(u), float(v)) == pytest.approx((0.0, math.sqrt(2)))
    u, v = mollweide_project(math.pi, 0.0)
    assert (float(u), float(v)) == pytest.approx((2 * math.sqrt(2), 0.0))


@settings(max_examples=100, deadline=None)
@given(lon=st.floats(-math.pi, math.pi), lat=st.floats(-math.pi / 2, math.pi / 2))
def test_mollweide_is_odd_in_longitude_and_equal_area_equation(lon, lat):
    u1, v1 = mollweide_project(lon, lat)
    u2, v2 = mollweide_project(-lon, lat)
    assert float(u2) == pytest.approx(-float(u1), abs=1e-12)
    assert float(v2) == pytest.approx(float(v1), abs=1e-12)
    theta = math.asin(float(v1) / math.sqrt(2))
    assert 2 * theta + math.sin(2 * theta) == pytest.approx(math.pi * math.sin(lat), abs=1e-9)
