import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colift.spatial import (FramePose, NotSkewSymmetric, SpatialInertia,
                            SpatialTransform, Wrench, matrix_to_rpy, orthonormalize,
                            rotation_exp, rotation_log, rpy_to_matrix, sk_project,
                            skew, transform_wrench, vee, wrench_transform_matrix)

vec3 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)


def random_pose(rng):
    return FramePose(rng.uniform(-1, 1, 3), rotation_exp(rng.uniform(-2, 2, 3)))


# -- skew / vee / sk ---------------------------------------------------------


def test_skew_zero():
    assert np.array_equal(skew([0, 0, 0]), np.zeros((3, 3)))


def test_skew_canonical_cross():
    assert np.allclose(skew([0, 0, 1]) @ [1, 0, 0], [0, 1, 0])


@given(vec3, vec3)
@settings(max_examples=50, deadline=None)
def test_skew_matches_cross_product(v, u):
    v, u = np.asarray(v), np.asarray(u)
    assert np.abs(skew(v) @ u - np.cross(v, u)).max() < 1e-12


@given(vec3)
@settings(max_examples=50, deadline=None)
def test_skew_antisymmetric(v):
    s = skew(v)
    assert np.abs(s + s.T).max() == 0.0


def test_vee_zero():
    assert np.array_equal(vee(np.zeros((3, 3))), np.zeros(3))


def test_vee_inverts_skew():
    assert np.allclose(vee(skew([1, 2, 3])), [1, 2, 3])


def test_vee_rejects_symmetric():
    with pytest.raises(NotSkewSymmetric):
        vee(np.eye(3))


def test_sk_project_symmetric_input():
    assert np.array_equal(sk_project(np.eye(3)), np.zeros((3, 3)))


def test_sk_project_idempotent_on_skew():
    a = skew([1, 2, 3])
    assert np.array_equal(sk_project(a), a)


def test_sk_project_antisymmetry(rng):
    a = rng.standard_normal((3, 3))
    s = sk_project(a)
    assert np.abs(s + s.T).max() < 1e-14


def test_skew_vee_mutual_inverse(rng):
    for _ in range(20):
        v = rng.standard_normal(3)
        assert np.allclose(vee(skew(v)), v)
        a = sk_project(rng.standard_normal((3, 3)))
        assert np.allclose(skew(vee(a)), a)


# -- rotations and poses -----------------------------------------------------


def test_rotation_exp_log_roundtrip(rng):
    for _ in range(50):
        w = rng.uniform(-np.pi + 1e-3, np.pi - 1e-3, 3)
        w = w if np.linalg.norm(w) < np.pi else w / np.linalg.norm(w) * 3.0
        assert np.abs(rotation_log(rotation_exp(w)) - w).max() < 1e-9


def test_rpy_roundtrip(rng):
    for _ in range(50):
        rpy = rng.uniform([-3, -1.4, -3], [3, 1.4, 3])
        assert np.abs(matrix_to_rpy(rpy_to_matrix(rpy)) - rpy).max() < 1e-10


def test_pose_compose_associative(rng):
    a, b, c = (random_pose(rng) for _ in range(3))
    lhs = a.compose(b).compose(c)
    rhs = a.compose(b.compose(c))
    assert np.abs(lhs.position - rhs.position).max() < 1e-12
    assert np.abs(lhs.rotation - rhs.rotation).max() < 1e-12


def test_pose_inverse_identity(rng):
    for _ in range(20):
        p = random_pose(rng)
        ident = p.compose(p.inverse())
        assert np.abs(ident.position).max() < 1e-9
        assert np.abs(ident.rotation - np.eye(3)).max() < 1e-9


def test_orthonormalize_recovers_rotation(rng):
    r = rotation_exp(rng.uniform(-2, 2, 3))
    noisy = r + 1e-6 * rng.standard_normal((3, 3))
    fixed = orthonormalize(noisy)
    assert np.abs(fixed @ fixed.T - np.eye(3)).max() < 1e-12
    assert np.abs(fixed - r).max() < 1e-5


# -- wrench transforms -------------------------------------------------------


def test_identity_transform_keeps_wrench():
    x = SpatialTransform(FramePose.identity(), "a", "b")
    w = Wrench([1, 2, 3], [4, 5, 6], "a")
    out = transform_wrench(x, w)
    assert np.allclose(out.as_vector(), w.as_vector())
    assert out.frame == "b"


def test_pure_translation_lever_arm():
    d = np.array([0.0, 0.0, 1.0])
    f = np.array([1.0, 0.0, 0.0])
    # source frame sits at +d in the target frame
    x = SpatialTransform(FramePose(d, np.eye(3)), "src", "dst")
    out = transform_wrench(x, Wrench(f, np.zeros(3), "src"))
    assert np.allclose(out.force, f)
    assert np.allclose(out.moment, np.cross(d, f))


def test_transform_frame_tag_mismatch():
    x = SpatialTransform(FramePose.identity(), "a", "b")
    with pytest.raises(ValueError):
        transform_wrench(x, Wrench([1, 0, 0], [0, 0, 0], "c"))


def test_transform_composition_oracle(rng):
    for _ in range(20):
        p1, p2 = random_pose(rng), random_pose(rng)
        x1 = SpatialTransform(p1, "c", "b")
        x2 = SpatialTransform(p2, "b", "a")
        w = Wrench(rng.standard_normal(3), rng.standard_normal(3), "c")
        seq = transform_wrench(x2, transform_wrench(x1, w))
        joint = transform_wrench(x2.compose(x1), w)
        assert np.abs(seq.as_vector() - joint.as_vector()).max() < 1e-10


def test_transform_roundtrip_identity(rng):
    for _ in range(20):
        p = random_pose(rng)
        x = SpatialTransform(p, "b", "a")
        w = Wrench(rng.standard_normal(3), rng.standard_normal(3), "b")
        back = transform_wrench(x.inverse(), transform_wrench(x, w))
        assert np.abs(back.as_vector() - w.as_vector()).max() < 1e-9


def test_power_invariance_duality(rng):
    """m^T w invariant when both are carried to another frame."""
    for _ in range(20):
        p = random_pose(rng)
        x = SpatialTransform(p, "b", "a")
        m = rng.standard_normal(6)
        w = rng.standard_normal(6)
        m_a = x.motion_matrix() @ m
        w_a = x.wrench_matrix() @ w
        # duality: the wrench matrix is the transposed inverse motion map
        assert np.abs(x.wrench_matrix() - np.linalg.inv(x.motion_matrix()).T).max() < 1e-9
        assert abs(m_a @ w_a - m @ w) < 1e-9


def test_wrench_transform_block_form(rng):
    p = random_pose(rng)
    x = SpatialTransform(p).wrench_matrix()
    r = p.rotation
    assert np.allclose(x[:3, :3], r)
    assert np.allclose(x[:3, 3:], 0)
    assert np.allclose(x[3:, 3:], r)
    assert np.allclose(x[3:, :3], skew(p.position) @ r)


def test_wrench_transform_matrix_between_world_poses(rng):
    a, b = random_pose(rng), random_pose(rng)
    x = wrench_transform_matrix(a, b)
    w = rng.standard_normal(6)
    # physical equivalence: net force rotates, moment picks up the lever arm
    f_world_in = a.rotation @ (x @ w)[:3]
    f_world_direct = b.rotation @ w[:3]
    assert np.abs(f_world_in - f_world_direct).max() < 1e-10


# -- spatial inertia ---------------------------------------------------------


def test_spatial_inertia_spd(rng):
    si = SpatialInertia(2.0, [0.01, -0.02, 0.03],
                        np.diag([0.02, 0.03, 0.04]))
    si.validate()
    eigs = np.linalg.eigvalsh(si.matrix6())
    assert eigs.min() > 0


def test_spatial_inertia_triangle_violation():
    with pytest.raises(ValueError):
        SpatialInertia(1.0, [0, 0, 0], np.diag([0.001, 0.001, 0.02])).validate()


def test_spatial_inertia_nonpositive_mass():
    with pytest.raises(ValueError):
        SpatialInertia(0.0, [0, 0, 0], np.diag([1e-3] * 3)).validate()
