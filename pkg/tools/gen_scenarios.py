#!/usr/bin/env python3
"""Generate the shipped scenario, gains and sequence files.

Initial configurations are produced by the closure projection so the frozen
states satisfy all contact constraints to ~1e-12.
Run from the repo root:  python tools/gen_scenarios.py
"""

import json
import os

import numpy as np

from colift.ergonomics import base_from_foot, project_to_closure
from colift.model import load_model
from colift.spatial import FramePose, matrix_to_rpy

ROOT = os.path.join(os.path.dirname(__file__), "..", "src", "colift", "data")

GRASP1 = FramePose.from_xyz_rpy([-0.10, 0, 0], [0, 0, 0])
GRASP2 = FramePose.from_xyz_rpy([+0.10, 0, 0], [0, 0, np.pi])
SOLE1 = FramePose.from_xyz_rpy([-0.29, 0, 0], [0, 0, 0])
SOLE2 = FramePose.from_xyz_rpy([+0.29, 0, 0], [0, 0, np.pi])


def crouch_guess():
    s0 = np.zeros(16)
    s0[2], s0[3], s0[4] = -0.5, 0.9, -0.4
    s0[9], s0[12], s0[13] = 0.4, 0.7, -0.4
    return s0


def agent_entry(name, model, base, joints):
    return {
        "name": name,
        "model": "../models/lifter_16.json",
        "base_pose": {"xyz": [round(v, 12) for v in base.position],
                      "rpy": [round(v, 12) for v in matrix_to_rpy(base.rotation)]},
        "joints": [round(v, 12) for v in joints],
    }


def two_agent_scenario(name, payload_z, fixture):
    model = load_model(os.path.join(ROOT, "models", "lifter_16.json"))
    payload_pose = FramePose.from_xyz_rpy([0, 0, payload_z], [0, 0, 0])
    s0 = crouch_guess()
    s1, r1 = project_to_closure(model, s0, "sole", SOLE1, "palm", payload_pose.compose(GRASP1))
    s2, r2 = project_to_closure(model, s0, "sole", SOLE2, "palm", payload_pose.compose(GRASP2))
    assert max(r1, r2) < 1e-10, (r1, r2)
    base1 = base_from_foot(model, s1, "sole", SOLE1)
    base2 = base_from_foot(model, s2, "sole", SOLE2)
    doc = {
        "name": name,
        "gravity": 9.81,
        "agents": [agent_entry("robot1", model, base1, s1),
                   agent_entry("robot2", model, base2, s2)],
        "payload": {
            "mass": 1.2,
            "inertia": {"ixx": 0.00288, "iyy": 0.00544, "izz": 0.00544},
            "pose": {"xyz": [0.0, 0.0, payload_z], "rpy": [0.0, 0.0, 0.0]},
            "grasp_frames": [
                {"name": "grasp1", "xyz": [-0.10, 0.0, 0.0], "rpy": [0.0, 0.0, 0.0]},
                {"name": "grasp2", "xyz": [0.10, 0.0, 0.0],
                 "rpy": [0.0, 0.0, 3.141592653589793]},
            ],
        },
        "contacts": [
            {"agent": "robot1", "frame": "sole", "kind": "environment",
             "mu": 0.9, "mu_torsion": 0.5, "half_extents": [0.05, 0.035], "f_min": 0.5},
            {"agent": "robot2", "frame": "sole", "kind": "environment",
             "mu": 0.9, "mu_torsion": 0.5, "half_extents": [0.05, 0.035], "f_min": 0.5},
            {"agent": "robot1", "frame": "palm", "kind": "grasp",
             "payload_frame": "grasp1", "force_limit": 80.0, "moment_limit": 8.0},
            {"agent": "robot2", "frame": "palm", "kind": "grasp",
             "payload_frame": "grasp2", "force_limit": 80.0, "moment_limit": 8.0},
        ],
    }
    if fixture:
        doc["fixture"] = {"mu": 1.0, "mu_torsion": 1.0, "half_extents": [0.12, 0.08],
                          "f_min": 0.0}
    return doc


def chain_scenario(name, joints, tip_contact):
    model = load_model(os.path.join(ROOT, "models", "chain_4_planar.json"))
    from colift.model import AgentState, Kinematics
    base = FramePose.from_xyz_rpy([0, 0, 0.08], [0, 0, 0])  # sole at z = 0.04 offset... recompute
    # place the sole exactly on the ground
    local = Kinematics(model, AgentState(FramePose.identity(), np.asarray(joints))).frame_pose("sole")
    base = FramePose.from_xyz_rpy([0, 0, -local.position[2]], [0, 0, 0])
    doc = {
        "name": name,
        "gravity": 9.81,
        "agents": [{
            "name": "chain",
            "model": "../models/chain_4_planar.json",
            "base_pose": {"xyz": [round(v, 12) for v in base.position], "rpy": [0, 0, 0]},
            "joints": [round(float(v), 12) for v in joints],
        }],
        "contacts": [
            {"agent": "chain", "frame": "sole", "kind": "environment",
             "mu": 0.8, "mu_torsion": 0.4, "half_extents": [0.005, 0.005], "f_min": 0.0},
        ],
    }
    if tip_contact:
        doc["contacts"].append(
            {"agent": "chain", "frame": "tip_pad", "kind": "environment",
             "mu": 0.8, "mu_torsion": 0.4, "half_extents": [0.005, 0.005], "f_min": 0.0})
    return doc


def gains_default():
    kp = [20.0, 20.0, 20.0, 60.0, 60.0, 60.0]
    return {
        "momentum_kp": {"robot1": kp, "robot2": kp, "total": kp},
        "momentum_ki": {"robot1": 50.0, "robot2": 50.0, "total": 50.0},
        "payload": {"kp": 50.0, "kd": 15.0},
        "postural": {"robot1": {"kp": 0.5, "kd": 0.02},
                     "robot2": {"kp": 0.5, "kd": 0.02}},
        "effort_weights": {"robot1": 1.0, "robot2": 1.0},
        "epsilon": 1e-6,
    }


def gains_asymmetric():
    doc = gains_default()
    doc["effort_weights"] = {"robot1": 4.0, "robot2": 0.25}
    return doc


def main():
    out = {
        "scenarios/two_agent_hold.json": two_agent_scenario("two-agent-hold", 0.50, False),
        "scenarios/standard_lift.json": two_agent_scenario("standard-lift", 0.46, True),
        "scenarios/fig_force_bent.json": chain_scenario(
            "force-ergonomics-bent", [0.9, -1.5, 1.1, -0.5], True),
        "scenarios/fig_force_vertical.json": chain_scenario(
            "force-ergonomics-vertical", [0.0, 0.0, 0.0, 0.0], False),
        "gains/default.json": gains_default(),
        "gains/asymmetric.json": gains_asymmetric(),
        "sequences/hold.json": {"phases": [
            {"name": "hold", "kind": "hold", "duration": 10.0, "fixture": False},
        ]},
        "sequences/lift.json": {"phases": [
            {"name": "A", "kind": "hold", "duration": 1.0, "fixture": True},
            {"name": "A-to-B", "kind": "transition", "duration": 3.0,
             "target": "../postures/lift_b.json", "fixture": False},
            {"name": "B", "kind": "hold", "duration": 6.0, "fixture": False},
        ]},
        "sequences/seq_abc.json": {"phases": [
            {"name": "A", "kind": "hold", "duration": 1.0, "fixture": True},
            {"name": "A-to-B", "kind": "transition", "duration": 2.5,
             "target": "../postures/lift_b.json", "fixture": False},
            {"name": "B", "kind": "hold", "duration": 3.0, "fixture": False},
            {"name": "B-to-C", "kind": "transition", "duration": 2.5,
             "target": "../postures/lift_c.json", "fixture": False},
            {"name": "C", "kind": "hold", "duration": 3.0, "fixture": False},
        ]},
        "sequences/seq_acd.json": {"phases": [
            {"name": "A", "kind": "hold", "duration": 1.0, "fixture": True},
            {"name": "A-to-C", "kind": "transition", "duration": 2.5,
             "target": "../postures/lift_c.json", "fixture": False},
            {"name": "C", "kind": "hold", "duration": 3.0, "fixture": False},
            {"name": "C-to-D", "kind": "transition", "duration": 2.5,
             "target": "../postures/lift_d.json", "fixture": False},
            {"name": "D", "kind": "hold", "duration": 3.0, "fixture": False},
        ]},
    }
    for rel, doc in out.items():
        path = os.path.join(ROOT, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
