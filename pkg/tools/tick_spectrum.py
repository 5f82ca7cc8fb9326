#!/usr/bin/env python3
"""Discrete closed-loop spectral analysis of one controller tick.

Linearizes (controller + substeps) around the two-agent hold equilibrium by
finite differences and reports the dominant eigenvalues for a gain set.
Usage: python tools/tick_spectrum.py kp ki pay_kp pay_kd post_kp post_kd [alpha]
"""

import sys

import numpy as np

from colift.control import HoldReferences, SharedController, gains_from_dict
from colift.coupled import ContactSpec, PayloadModel, assemble
from colift.ergonomics import base_from_foot, project_to_closure
from colift.model import AgentState, load_model
from colift.sim import SimConfig, capture_contact_references, step_dynamics
from colift.spatial import FramePose, rotation_exp


def build():
    model = load_model("src/colift/data/models/lifter_16.json")
    zg = 0.55
    grasps = {"grasp1": FramePose.from_xyz_rpy([-0.10, 0, 0], [0, 0, 0]),
              "grasp2": FramePose.from_xyz_rpy([+0.10, 0, 0], [0, 0, np.pi])}
    payload = PayloadModel(1.2, np.diag([0.00288, 0.00544, 0.00544]), grasps)
    payload_pose = FramePose.from_xyz_rpy([0, 0, zg], [0, 0, 0])
    sole1 = FramePose.from_xyz_rpy([-0.29, 0, 0], [0, 0, 0])
    sole2 = FramePose.from_xyz_rpy([+0.29, 0, 0], [0, 0, np.pi])
    s0 = np.zeros(16)
    s0[9] = 0.5
    s0[12] = 0.8
    s0[13] = -0.5
    s1, _ = project_to_closure(model, s0, "sole", sole1, "palm",
                               payload_pose.compose(grasps["grasp1"]))
    s2, _ = project_to_closure(model, s0, "sole", sole2, "palm",
                               payload_pose.compose(grasps["grasp2"]))
    states = [AgentState(base_from_foot(model, s1, "sole", sole1), s1),
              AgentState(base_from_foot(model, s2, "sole", sole2), s2),
              AgentState(payload_pose, np.zeros(0))]
    contacts = [
        ContactSpec("robot1", "sole", "environment", mu=0.9, half_extents=(0.05, 0.035), f_min=0.5),
        ContactSpec("robot2", "sole", "environment", mu=0.9, half_extents=(0.05, 0.035), f_min=0.5),
        ContactSpec("robot1", "palm", "grasp", payload_frame="grasp1"),
        ContactSpec("robot2", "palm", "grasp", payload_frame="grasp2"),
    ]
    system = assemble([("robot1", model), ("robot2", model)], payload, contacts)
    return system, states


def pack(states, template):
    from colift.spatial import rotation_log
    out = []
    for st, ref in zip(states, template):
        rv = rotation_log(st.base_pose.rotation @ ref.base_pose.rotation.T)
        out.extend([st.base_pose.position, rv, st.s, st.base_vel, st.ds])
    return np.concatenate(out)


def unpack(x, template):
    states = []
    off = 0
    for st in template:
        n = st.s.size
        pos = x[off:off + 3]; off += 3
        rv = x[off:off + 3]; off += 3
        s = x[off:off + n]; off += n
        bv = x[off:off + 6]; off += 6
        ds = x[off:off + n]; off += n
        rot = rotation_exp(rv) @ st.base_pose.rotation
        states.append(AgentState(FramePose(pos, rot), s, bv, ds))
    return states


def tick_map(system, gains, refs, crefs, config, template):
    def f(x):
        states = unpack(x, template)
        ctrl = SharedController(system, gains, refs, 9.81, crefs)
        out = ctrl.step(states, 0.0)
        for _ in range(config.steps_per_tick):
            states, _, _ = step_dynamics(system, states, out.torque_vector, config, crefs)
        return pack(states, template)
    return f


def main():
    kp, ki, pkp, pkd, kps, kds = [float(v) for v in sys.argv[1:7]]
    alpha = float(sys.argv[7]) if len(sys.argv) > 7 else 20.0
    system, states = build()

    # effective u0 -> joint-acceleration gain through the consistency projector
    # and the constrained dynamics; sets the per-joint ZOH-safe gain scale
    from colift.control import torque_parametrization, HoldReferences as HR
    import numpy.linalg as la
    refs0 = HR(system, states)
    g0 = gains_from_dict({}, system)
    kins = system.kinematics(states)
    tmap = torque_parametrization(system, states, refs0, g0, 0.0, kins)
    m_mat, h, b_sel, _ = system.composite_terms(states, 9.81, kins)
    q, _, _, _ = system.constraint_matrix(states, kins)
    minv = la.inv(m_mat)
    s_schur = q @ minv @ q.T
    p_dyn = minv - minv @ q.T @ la.solve(s_schur, q @ minv)
    a_op = tmap.a_op
    proj_null = np.eye(a_op.shape[1]) - la.pinv(a_op) @ a_op
    joint_rows = np.zeros(system.n_coords, dtype=bool)
    for name, _ in system.agent_items:
        cols = system.body_cols(name)
        joint_rows[cols.start + 6:cols.stop] = True
    kp_vec = [kp, kp, kp, 3 * kp, 3 * kp, 3 * kp]
    doc = {"momentum_kp": {k: kp_vec for k in ["robot1", "robot2", "total"]},
           "momentum_ki": {k: ki for k in ["robot1", "robot2", "total"]},
           "payload": {"kp": pkp, "kd": pkd},
           "postural": {n: {"kp": kps, "kd": kds} for n in ["robot1", "robot2"]}}
    gains = gains_from_dict(doc, system)
    import os
    if os.environ.get("FORCE_RELAXED"):
        import colift.control as cc
        cc.EQ_CONSISTENCY_TOL = -1.0
    config = SimConfig(baumgarte_alpha=alpha, baumgarte_beta=alpha)
    crefs = capture_contact_references(system, states)
    refs = HoldReferences(system, states)
    x0 = pack(states, states)
    fmap = tick_map(system, gains, refs, crefs, config, states)
    f0 = fmap(x0)
    n = x0.size
    jac = np.zeros((n, n))
    eps = 1e-7
    for i in range(n):
        xp = x0.copy()
        xp[i] += eps
        jac[:, i] = (fmap(xp) - f0) / eps
    eig, vecs = np.linalg.eig(jac)
    idx = np.argsort(-np.abs(eig))
    print("spectral radius: %.4f" % np.abs(eig[idx[0]]))
    names = []
    for b, st in enumerate(states):
        tag = ["r1", "r2", "pl"][b]
        names += [f"{tag}.p{c}" for c in "xyz"] + [f"{tag}.r{c}" for c in "xyz"]
        names += [f"{tag}.s{i}" for i in range(st.s.size)]
        names += [f"{tag}.v{c}" for c in "xyz"] + [f"{tag}.w{c}" for c in "xyz"]
        names += [f"{tag}.ds{i}" for i in range(st.s.size)]
    for k in idx[:6]:
        lam = eig[k]
        v = np.abs(vecs[:, k])
        top = np.argsort(-v)[:5]
        comp = ", ".join(f"{names[i]}:{v[i]:.2f}" for i in top)
        print("  |lam| %.4f angle %+.3f  [%s]" % (abs(lam), np.angle(lam), comp))


if __name__ == "__main__":
    main()
