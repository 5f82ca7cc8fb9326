#!/usr/bin/env python3
"""Generate the shipped robot model files (desk-scale agents and fixtures).

Inertias come from box/rod formulas so the physical-consistency checks hold
by construction.  Run from the repo root:  python tools/gen_models.py
"""

import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "colift", "data", "models")


def box_inertia(m, lx, ly, lz):
    return {
        "ixx": round(m / 12.0 * (ly**2 + lz**2), 9),
        "iyy": round(m / 12.0 * (lx**2 + lz**2), 9),
        "izz": round(m / 12.0 * (lx**2 + ly**2), 9),
    }


def rod_inertia(m, length, axis):
    """Slender rod along `axis` with a small but nonzero axial moment."""
    trans = m / 12.0 * length**2
    axial = max(trans * 0.05, 1e-6)
    vals = {"ixx": trans, "iyy": trans, "izz": trans}
    vals[{"x": "ixx", "y": "iyy", "z": "izz"}[axis]] = axial
    return {k: round(v, 9) for k, v in vals.items()}


def inertia(m, com, tensor):
    return {"mass": m, "com": com, **tensor}


def link(name, parent, m, com, tensor, jtype=None, axis=None, xyz=None, rpy=None):
    out = {"name": name, "parent": parent, "inertia": inertia(m, com, tensor)}
    if parent is not None:
        joint = {"type": jtype or "fixed",
                 "origin": {"xyz": xyz or [0, 0, 0], "rpy": rpy or [0, 0, 0]}}
        if axis is not None:
            joint["axis"] = axis
        out["joint"] = joint
    return out


def frame(name, parent, xyz, rpy=None):
    return {"name": name, "parent": parent, "inertia": {"mass": 0.0},
            "joint": {"type": "fixed", "origin": {"xyz": xyz, "rpy": rpy or [0, 0, 0]}}}


def planar_arm_4():
    links = [
        link("base", None, 1.0, [0, 0, 0], box_inertia(1.0, 0.2, 0.2, 0.1)),
        frame("sole", "base", [0, 0, -0.05]),
    ]
    parent = "base"
    for i in range(1, 5):
        links.append(link(f"link{i}", parent, 0.25, [0, 0, 0.075],
                          rod_inertia(0.25, 0.15, "z"), "revolute", [0, 1, 0],
                          [0, 0, 0.05 if i == 1 else 0.15]))
        parent = f"link{i}"
    links.append(frame("tip", "link4", [0, 0, 0.15]))
    return {
        "name": "planar-arm-4",
        "links": links,
        "limits": {"position": [[-2.9, 2.9]] * 4, "torque": [10.0] * 4},
    }


def mini_humanoid_8():
    links = [link("torso", None, 1.6, [0, 0, 0], box_inertia(1.6, 0.12, 0.18, 0.24))]
    limits, torques = [], []
    for side, sy in (("l", 1), ("r", -1)):
        links += [
            link(f"{side}_thigh", "torso", 0.22, [0, 0, -0.05],
                 rod_inertia(0.22, 0.1, "z"), "revolute", [0, 1, 0],
                 [0, sy * 0.05, -0.12]),
            link(f"{side}_shin", f"{side}_thigh", 0.22, [0, 0, -0.05],
                 rod_inertia(0.22, 0.1, "z"), "revolute", [0, 1, 0], [0, 0, -0.1]),
            link(f"{side}_foot", f"{side}_shin", 0.08, [0.01, 0, -0.01],
                 box_inertia(0.08, 0.08, 0.05, 0.02), "fixed", None, [0, 0, -0.1]),
        ]
        links.append(frame(f"{side}_sole", f"{side}_foot", [0.01, 0, -0.02]))
        limits += [[-2.6, 2.6]] * 2
        torques += [8.0] * 2
    for side, sy in (("l", 1), ("r", -1)):
        links += [
            link(f"{side}_upperarm", "torso", 0.15, [0, 0, -0.045],
                 rod_inertia(0.15, 0.09, "z"), "revolute", [0, 1, 0],
                 [0, sy * 0.11, 0.08]),
            link(f"{side}_forearm", f"{side}_upperarm", 0.12, [0, 0, -0.045],
                 rod_inertia(0.12, 0.09, "z"), "revolute", [0, 1, 0], [0, 0, -0.09]),
            link(f"{side}_hand", f"{side}_forearm", 0.05, [0, 0, -0.02],
                 box_inertia(0.05, 0.03, 0.03, 0.05), "fixed", None, [0, 0, -0.09]),
        ]
        limits += [[-2.9, 2.9]] * 2
        torques += [8.0] * 2
    return {"name": "mini-humanoid-8", "links": links,
            "limits": {"position": limits, "torque": torques}}


def lifter_16():
    links = [link("pelvis", None, 1.1, [0, 0, 0], box_inertia(1.1, 0.14, 0.18, 0.10))]
    limits, torques = [], []

    def rev(name, parent, m, com, tensor, axis, xyz, lim, trq, damp=0.02):
        spec = link(name, parent, m, com, tensor, "revolute", axis, xyz)
        spec["joint"]["damping"] = damp
        links.append(spec)
        limits.append(lim)
        torques.append(trq)

    # support leg (6 DoF) down to a single foot
    rev("hip_yaw", "pelvis", 0.12, [0, 0, -0.02], box_inertia(0.12, 0.06, 0.06, 0.04),
        [0, 0, 1], [0, 0, -0.05], [-1.6, 1.6], 12.0)
    rev("hip_roll", "hip_yaw", 0.10, [0, 0, -0.02], box_inertia(0.10, 0.05, 0.05, 0.04),
        [1, 0, 0], [0, 0, -0.04], [-1.2, 1.2], 12.0)
    rev("thigh", "hip_roll", 0.28, [0, 0, -0.07], rod_inertia(0.28, 0.14, "z"),
        [0, 1, 0], [0, 0, -0.02], [-2.2, 2.2], 12.0)
    rev("shin", "thigh", 0.24, [0, 0, -0.07], rod_inertia(0.24, 0.14, "z"),
        [0, 1, 0], [0, 0, -0.14], [-2.4, 2.4], 12.0)
    rev("ankle_pitch", "shin", 0.08, [0, 0, -0.015], box_inertia(0.08, 0.05, 0.04, 0.03),
        [0, 1, 0], [0, 0, -0.14], [-1.6, 1.6], 12.0)
    rev("foot", "ankle_pitch", 0.15, [0.01, 0, -0.02], box_inertia(0.15, 0.12, 0.07, 0.03),
        [1, 0, 0], [0, 0, -0.03], [-1.2, 1.2], 12.0)
    links.append(frame("sole", "foot", [0.01, 0, -0.04]))

    # 3-DoF torso and a 7-DoF arm reaching along +x
    rev("waist_yaw", "pelvis", 0.15, [0, 0, 0.015], box_inertia(0.15, 0.10, 0.10, 0.05),
        [0, 0, 1], [0, 0, 0.06], [-1.6, 1.6], 12.0)
    rev("waist_pitch", "waist_yaw", 0.12, [0, 0, 0.015],
        box_inertia(0.12, 0.09, 0.09, 0.05), [0, 1, 0], [0, 0, 0.04], [-1.0, 1.0], 12.0)
    rev("chest", "waist_pitch", 0.75, [0, 0, 0.07], box_inertia(0.75, 0.15, 0.15, 0.18),
        [1, 0, 0], [0, 0, 0.03], [-1.0, 1.0], 12.0)
    rev("shoulder_pitch", "chest", 0.12, [0, 0, 0], box_inertia(0.12, 0.07, 0.07, 0.07),
        [0, 1, 0], [0.05, 0, 0.12], [-2.6, 2.6], 8.0, damp=0.05)
    rev("shoulder_roll", "shoulder_pitch", 0.12, [0, 0, 0],
        box_inertia(0.12, 0.07, 0.07, 0.07), [1, 0, 0], [0, 0, 0], [-2.0, 2.0], 8.0, damp=0.08)
    rev("upperarm", "shoulder_roll", 0.22, [0.06, 0, 0], box_inertia(0.22, 0.12, 0.07, 0.07),
        [0, 0, 1], [0, 0, 0], [-2.0, 2.0], 8.0, damp=0.05)
    rev("forearm", "upperarm", 0.18, [0.06, 0, 0], box_inertia(0.18, 0.12, 0.07, 0.07),
        [0, 1, 0], [0.12, 0, 0], [-2.4, 2.4], 8.0, damp=0.05)
    rev("wrist_pitch", "forearm", 0.10, [0, 0, 0], box_inertia(0.10, 0.07, 0.07, 0.07),
        [0, 1, 0], [0.12, 0, 0], [-2.6, 2.6], 8.0, damp=0.08)
    rev("wrist_yaw", "wrist_pitch", 0.08, [0, 0, 0], box_inertia(0.08, 0.07, 0.07, 0.07),
        [0, 0, 1], [0, 0, 0], [-2.0, 2.0], 8.0, damp=0.08)
    rev("hand", "wrist_yaw", 0.10, [0.03, 0, 0], box_inertia(0.10, 0.08, 0.06, 0.06),
        [1, 0, 0], [0, 0, 0], [-2.6, 2.6], 8.0, damp=0.08)
    links.append(frame("palm", "hand", [0.06, 0, 0]))

    return {"name": "lifter-16", "links": links,
            "limits": {"position": limits, "torque": torques}}


def chain_4_planar():
    links = [link("base", None, 0.3, [0, 0, 0], box_inertia(0.3, 0.08, 0.08, 0.08))]
    links.append(frame("sole", "base", [0, 0, -0.04]))
    parent = "base"
    for i in range(1, 5):
        links.append(link(f"seg{i}", parent, 0.15, [0, 0, 0.06],
                          rod_inertia(0.15, 0.12, "z"), "revolute", [0, 1, 0],
                          [0, 0, 0.04 if i == 1 else 0.12]))
        parent = f"seg{i}"
    links.append(frame("tip_pad", "seg4", [0, 0, 0.12], [3.141592653589793, 0, 0]))
    return {"name": "chain-4-planar", "links": links,
            "limits": {"position": [[-2.9, 2.9]] * 4, "torque": [10.0] * 4}}


def main():
    os.makedirs(OUT, exist_ok=True)
    for fname, doc in [
        ("planar_arm_4.json", planar_arm_4()),
        ("mini_humanoid_8.json", mini_humanoid_8()),
        ("lifter_16.json", lifter_16()),
        ("chain_4_planar.json", chain_4_planar()),
    ]:
        path = os.path.join(OUT, fname)
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
