import os

import numpy as np
import pytest

from colift.model import (AgentState, Kinematics, ModelError, UnknownFrame,
                          bias_forces, com, com_jacobian, forward_kinematics,
                          integrate_state, inverse_dynamics, jacobian, load_model,
                          mass_matrix, model_from_dict, momentum, random_state)
from colift.spatial import FramePose, rotation_exp, rotation_log

from conftest import data_path


def perturbed_state(model, state, coord, eps):
    dq = np.zeros(model.n_coords)
    dq[coord] = eps
    base = FramePose(state.base_pose.position + dq[:3],
                     rotation_exp(dq[3:6]) @ state.base_pose.rotation)
    return AgentState(base, state.s + dq[6:], state.base_vel, state.ds)


# -- loading and validation --------------------------------------------------


def test_load_all_shipped_models():
    for name in ["planar_arm_4", "mini_humanoid_8", "lifter_16", "chain_4_planar"]:
        model = load_model(data_path("models", f"{name}.json"))
        assert model.n_joints > 0
        assert model.total_mass() > 0


def test_loader_rejects_unknown_parent():
    with pytest.raises(ModelError, match="parent"):
        model_from_dict({"links": [
            {"name": "base", "parent": None, "inertia": {"mass": 1.0, "ixx": 1e-3,
                                                         "iyy": 1e-3, "izz": 1e-3}},
            {"name": "a", "parent": "nope", "joint": {"type": "fixed"},
             "inertia": {"mass": 0.0}},
        ]})


def test_loader_rejects_non_unit_axis():
    with pytest.raises(ModelError, match="unit norm"):
        model_from_dict({"links": [
            {"name": "base", "parent": None, "inertia": {"mass": 1.0, "ixx": 1e-3,
                                                         "iyy": 1e-3, "izz": 1e-3}},
            {"name": "a", "parent": "base",
             "joint": {"type": "revolute", "axis": [0, 2, 0]},
             "inertia": {"mass": 0.1, "ixx": 1e-4, "iyy": 1e-4, "izz": 1e-4}},
        ]})


def test_loader_rejects_triangle_violation():
    with pytest.raises(ModelError, match="triangle"):
        model_from_dict({"links": [
            {"name": "base", "parent": None,
             "inertia": {"mass": 1.0, "ixx": 1e-4, "iyy": 1e-4, "izz": 1e-2}},
        ]})


def test_loader_rejects_bad_limits(planar_arm):
    doc = {"links": [
        {"name": "base", "parent": None, "inertia": {"mass": 1.0, "ixx": 1e-3,
                                                     "iyy": 1e-3, "izz": 1e-3}},
        {"name": "a", "parent": "base",
         "joint": {"type": "revolute", "axis": [0, 1, 0]},
         "inertia": {"mass": 0.1, "ixx": 1e-4, "iyy": 1e-4, "izz": 1e-4}},
    ], "limits": {"position": [[1.0, -1.0]], "torque": [5.0]}}
    with pytest.raises(ModelError, match="lower < upper"):
        model_from_dict(doc)


def test_unknown_frame_raises(planar_arm):
    state = AgentState(FramePose.identity(), np.zeros(planar_arm.n_joints))
    with pytest.raises(UnknownFrame):
        forward_kinematics(planar_arm, state, "nope")


# -- forward kinematics ------------------------------------------------------


def test_fk_zero_configuration_chains_offsets(planar_arm):
    state = AgentState(FramePose.identity(), np.zeros(4))
    tip = forward_kinematics(planar_arm, state, "tip")
    # base->link1 0.05, three links of 0.15, tip offset 0.15
    assert np.allclose(tip.position, [0, 0, 0.05 + 3 * 0.15 + 0.15])
    assert np.allclose(tip.rotation, np.eye(3))


def test_fk_single_joint_quarter_turn(planar_arm):
    s = np.zeros(4)
    s[0] = np.pi / 2
    state = AgentState(FramePose.identity(), s)
    tip = forward_kinematics(planar_arm, state, "tip")
    # rotation about +y sends +z to +x
    assert np.allclose(tip.position, [0.6, 0.0, 0.05], atol=1e-12)


def test_fk_respects_base_pose(planar_arm, rng):
    state = random_state(planar_arm, rng)
    pose = forward_kinematics(planar_arm, state, "sole")
    local = forward_kinematics(
        planar_arm, AgentState(FramePose.identity(), state.s), "sole")
    expect = state.base_pose.compose(local)
    assert np.abs(pose.position - expect.position).max() < 1e-12


def test_fk_jacobian_integration_oracle(mini_humanoid, rng):
    """Integrating the Jacobian along a short configuration path lands on
    the forward-kinematics endpoint."""
    model = mini_humanoid
    state = random_state(model, rng, vel_span=0.0)
    delta = rng.uniform(-0.02, 0.02, model.n_coords)
    steps = 2000
    dq = delta / steps
    pos = Kinematics(model, state).frame_pose("l_hand").position.copy()
    cur = state
    for k in range(steps):
        kin = Kinematics(model, cur)
        jac = kin.frame_jacobian("l_hand")
        pos += jac[:3] @ dq
        base = FramePose(cur.base_pose.position + dq[:3],
                         rotation_exp(dq[3:6]) @ cur.base_pose.rotation)
        cur = AgentState(base, cur.s + dq[6:])
    final = Kinematics(model, cur).frame_pose("l_hand").position
    assert np.abs(pos - final).max() < 1e-6


# -- jacobians ---------------------------------------------------------------


def test_jacobian_base_block_single_body():
    model = model_from_dict({"links": [
        {"name": "base", "parent": None,
         "inertia": {"mass": 1.0, "ixx": 1e-3, "iyy": 1e-3, "izz": 1e-3}}]})
    state = AgentState(FramePose.identity(), np.zeros(0))
    jac = jacobian(model, state, "base")
    assert np.allclose(jac, np.eye(6))


def test_jacobian_finite_difference(mini_humanoid, rng):
    model = mini_humanoid
    eps = 1e-6
    for _ in range(5):
        state = random_state(model, rng)
        kin = Kinematics(model, state)
        for frame in ["l_sole", "r_hand", "torso"]:
            jac = kin.frame_jacobian(frame)
            num = np.zeros_like(jac)
            p0 = kin.frame_pose(frame)
            for j in range(model.n_coords):
                p1 = Kinematics(model, perturbed_state(model, state, j, eps)).frame_pose(frame)
                num[:3, j] = (p1.position - p0.position) / eps
                num[3:, j] = rotation_log(p1.rotation @ p0.rotation.T) / eps
            assert np.abs(jac - num).max() < 1e-5


def test_jacobian_linear_angular_split(mini_humanoid, rng):
    state = random_state(mini_humanoid, rng)
    kin = Kinematics(mini_humanoid, state)
    jac = kin.frame_jacobian("r_foot")
    vel = kin.frame_velocity("r_foot")
    nu = state.velocity()
    assert np.abs(jac[:3] @ nu - vel[:3]).max() < 1e-12
    assert np.abs(jac[3:] @ nu - vel[3:]).max() < 1e-12


def test_jacobian_locked_joint_columns_zero(planar_arm, rng):
    state = random_state(planar_arm, rng)
    jac = jacobian(planar_arm, state, "link2")
    # joints 3 and 4 are distal to link2
    assert np.abs(jac[:, 6 + 2:]).max() == 0.0


# -- mass matrix and bias ----------------------------------------------------


def test_mass_matrix_single_free_body():
    doc = {"links": [{"name": "base", "parent": None,
                      "inertia": {"mass": 2.0, "com": [0.0, 0.0, 0.0],
                                  "ixx": 0.02, "iyy": 0.03, "izz": 0.04}}]}
    model = model_from_dict(doc)
    state = AgentState(FramePose.identity(), np.zeros(0))
    m = mass_matrix(model, state)
    assert np.allclose(m, np.diag([2.0, 2.0, 2.0, 0.02, 0.03, 0.04]))


def test_mass_matrix_symmetry_and_total_mass_block(lifter, rng):
    for _ in range(10):
        state = random_state(lifter, rng)
        m = mass_matrix(lifter, state)
        assert np.abs(m - m.T).max() < 1e-9
        assert np.abs(m[:3, :3] - lifter.total_mass() * np.eye(3)).max() < 1e-9


def test_mass_matrix_spd_many_states(mini_humanoid, rng):
    for _ in range(200):
        state = random_state(mini_humanoid, rng)
        np.linalg.cholesky(mass_matrix(mini_humanoid, state))


def test_mass_matrix_inverse_dynamics_columns(mini_humanoid, rng):
    model = mini_humanoid
    for _ in range(5):
        state = random_state(model, rng)
        still = AgentState(state.base_pose, state.s)
        m = mass_matrix(model, still)
        for j in range(model.n_coords):
            col = inverse_dynamics(model, still, np.eye(model.n_coords)[j], gravity=0.0)
            assert np.abs(m[:, j] - col).max() < 1e-10


def test_bias_zero_velocity_zero_gravity(mini_humanoid, rng):
    state = random_state(mini_humanoid, rng, vel_span=0.0)
    assert np.abs(bias_forces(mini_humanoid, state, gravity=0.0)).max() < 1e-12


def test_bias_pure_gravity_stack(planar_arm, rng):
    state = random_state(planar_arm, rng, vel_span=0.0)
    h = bias_forces(planar_arm, state, gravity=9.81)
    # base force rows: supporting the weight (+m g e3 on the left-hand side)
    assert np.allclose(h[:3], [0, 0, planar_arm.total_mass() * 9.81], atol=1e-12)


def test_unconstrained_energy_conservation(planar_arm, rng):
    """Undriven, unconstrained flight: energy drift < 1e-4 J over 1 s at 1e-4 s."""
    model = planar_arm
    state = AgentState(FramePose.identity(), np.array([0.3, -0.2, 0.4, 0.1]),
                       np.array([0.05, 0.0, 0.0, 0.1, 0.05, 0.0]),
                       np.array([0.2, -0.1, 0.1, 0.05]))
    dt = 1e-4
    kin = Kinematics(model, state)
    e0 = kin.kinetic_energy() + kin.potential_energy(9.81)
    for _ in range(10000):
        kin = Kinematics(model, state)
        nudot = np.linalg.solve(kin.mass_matrix(), -kin.bias_forces(9.81))
        state = integrate_state(model, state, nudot, dt)
    kin = Kinematics(model, state)
    e1 = kin.kinetic_energy() + kin.potential_energy(9.81)
    assert abs(e1 - e0) < 1e-4


def test_unconstrained_momentum_conservation_zero_gravity(mini_humanoid):
    model = mini_humanoid
    state = AgentState(FramePose.identity(), np.zeros(8),
                       np.array([0.02, 0.01, 0.0, 0.03, 0.02, 0.01]),
                       0.05 * np.ones(8))
    h0 = momentum(model, state)
    dt = 1e-4
    for _ in range(10000):
        kin = Kinematics(model, state)
        nudot = np.linalg.solve(kin.mass_matrix(), -kin.bias_forces(0.0))
        state = integrate_state(model, state, nudot, dt)
    h1 = momentum(model, state)
    assert np.abs(h1 - h0).max() < 1e-6


def test_momentum_rate_under_gravity_only(mini_humanoid):
    """dH/dt along unconstrained flight equals the gravity force alone."""
    model = mini_humanoid
    state = AgentState(FramePose.identity(), 0.1 * np.ones(8),
                       np.array([0.05, -0.02, 0.03, 0.1, -0.05, 0.08]),
                       -0.1 * np.ones(8))
    dt = 1e-4
    g_force = np.array([0, 0, -model.total_mass() * 9.81, 0, 0, 0])
    for _ in range(20):
        kin = Kinematics(model, state)
        nudot = np.linalg.solve(kin.mass_matrix(), -kin.bias_forces(9.81))
        nxt = integrate_state(model, state, nudot, dt)
        dh = (momentum(model, nxt) - momentum(model, state)) / dt
        assert np.abs(dh - g_force).max() < 1e-3
        state = nxt


# -- momentum and CoM --------------------------------------------------------


def test_momentum_zero_velocity(mini_humanoid, rng):
    state = random_state(mini_humanoid, rng, vel_span=0.0)
    assert np.abs(momentum(mini_humanoid, state)).max() == 0.0


def test_momentum_translating_single_body():
    doc = {"links": [{"name": "base", "parent": None,
                      "inertia": {"mass": 1.5, "ixx": 1e-2, "iyy": 1e-2, "izz": 1e-2}}]}
    model = model_from_dict(doc)
    v = np.array([0.3, -0.2, 0.1])
    state = AgentState(FramePose.identity(), np.zeros(0),
                       np.concatenate([v, np.zeros(3)]), np.zeros(0))
    h = momentum(model, state)
    assert np.allclose(h[:3], 1.5 * v)
    assert np.allclose(h[3:], 0.0)


def test_momentum_per_link_summation_oracle(lifter, rng):
    state = random_state(lifter, rng)
    kin = Kinematics(lifter, state)
    h = kin.momentum()
    p_g = kin.com()
    lin = np.zeros(3)
    ang = np.zeros(3)
    for i, link in enumerate(lifter.links):
        mv = link.inertia.mass * kin.v_com[i]
        lin += mv
        ang += kin.inertia_w[i] @ kin.omega[i] + np.cross(kin.com_w[i] - p_g, mv)
    assert np.abs(h - np.concatenate([lin, ang])).max() < 1e-10


def test_com_symmetric_chain_midpoint():
    doc = {"links": [
        {"name": "base", "parent": None,
         "inertia": {"mass": 1.0, "ixx": 1e-3, "iyy": 1e-3, "izz": 1e-3}},
        {"name": "left", "parent": "base",
         "joint": {"type": "fixed", "origin": {"xyz": [-0.2, 0, 0]}},
         "inertia": {"mass": 0.5, "ixx": 1e-4, "iyy": 1e-4, "izz": 1e-4}},
        {"name": "right", "parent": "base",
         "joint": {"type": "fixed", "origin": {"xyz": [0.2, 0, 0]}},
         "inertia": {"mass": 0.5, "ixx": 1e-4, "iyy": 1e-4, "izz": 1e-4}},
    ]}
    model = model_from_dict(doc)
    state = AgentState(FramePose.identity(), np.zeros(0))
    assert np.allclose(com(model, state), [0, 0, 0])


def test_com_velocity_matches_linear_momentum(lifter, rng):
    for _ in range(5):
        state = random_state(lifter, rng)
        h = momentum(lifter, state)
        v_com = com_jacobian(lifter, state) @ state.velocity()
        assert np.abs(lifter.total_mass() * v_com - h[:3]).max() < 1e-10


def test_com_jacobian_finite_difference(mini_humanoid, rng):
    model = mini_humanoid
    eps = 1e-6
    state = random_state(model, rng)
    jac = com_jacobian(model, state)
    c0 = com(model, state)
    num = np.zeros_like(jac)
    for j in range(model.n_coords):
        c1 = com(model, perturbed_state(model, state, j, eps))
        num[:, j] = (c1 - c0) / eps
    assert np.abs(jac - num).max() < 1e-5


def test_joint_damping_enters_bias_only_on_joint_rows(lifter, rng):
    state = random_state(lifter, rng)
    h = bias_forces(lifter, state, gravity=0.0)
    still = AgentState(state.base_pose, state.s, state.base_vel, np.zeros_like(state.ds))
    from colift.model import joint_damping
    d = joint_damping(lifter)
    assert d.max() > 0.0
    # with only joint velocities zeroed, the damping contribution vanishes
    h_nods = bias_forces(lifter, still, gravity=0.0)
    assert np.abs((h - h_nods)[6:] - d * state.ds).max() < 1e-6
