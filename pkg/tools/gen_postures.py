#!/usr/bin/env python3
"""Generate the shipped posture files for the lift sequences.

B: lifted payload reached by least-motion closure projection (the
   non-optimized reference posture)
C: posture optimization with equal effort weights, warm-started from B
D: posture optimization favouring robot1 (k1 > k2), warm-started from C

Run from the repo root:  python tools/gen_postures.py
"""

import os
import time

import numpy as np

from colift.coupled import load_scenario
from colift.ergonomics import (PostureSolution, feasibility_presolve, optimize_posture,
                               problem_from_scenario, save_posture_solution,
                               static_force_layer, _states_for)
from colift.spatial import FramePose

ROOT = os.path.join(os.path.dirname(__file__), "..", "src", "colift", "data")
LIFT_TARGET = FramePose.from_xyz_rpy([0.0, 0.0, 0.54], [0.0, 0.0, 0.0])


def naive_solution(problem) -> PostureSolution:
    joints = feasibility_presolve(problem, problem.initial)
    states = _states_for(problem, joints)
    forces = static_force_layer(problem.system, states, problem.effort_weights,
                                problem.gravity)
    configs = {}
    for (name, model), st in zip(problem.system.agent_items, states):
        configs[name] = {"base_pose": st.base_pose, "joints": st.s.copy()}
    viol = 0.0
    return PostureSolution(configs, problem.payload_pose, forces.torques,
                           forces.wrenches, forces.objective, 0, viol, True,
                           "closure projection of the initial guess")


def main():
    scenario = load_scenario(os.path.join(ROOT, "scenarios", "standard_lift.json"))
    out_dir = os.path.join(ROOT, "postures")
    os.makedirs(out_dir, exist_ok=True)

    problem_b = problem_from_scenario(scenario, LIFT_TARGET)
    sol_b = naive_solution(problem_b)
    save_posture_solution(sol_b, os.path.join(out_dir, "lift_b.json"))
    print("B objective %.4f" % sol_b.objective)

    t0 = time.time()
    problem_c = problem_from_scenario(
        scenario, LIFT_TARGET,
        initial={n: cfg["joints"] for n, cfg in sol_b.configurations.items()})
    sol_c = optimize_posture(problem_c)
    save_posture_solution(sol_c, os.path.join(out_dir, "lift_c.json"))
    print("C objective %.4f (%.0f s, iters %d, %s)"
          % (sol_c.objective, time.time() - t0, sol_c.iterations, sol_c.message))
    print("improvement: %.1f%%" % (100 * (1 - sol_c.objective / sol_b.objective)))

    t0 = time.time()
    problem_d = problem_from_scenario(
        scenario, LIFT_TARGET, effort_weights={"robot1": 2.0, "robot2": 0.5},
        initial={n: cfg["joints"] for n, cfg in sol_c.configurations.items()})
    sol_d = optimize_posture(problem_d)
    save_posture_solution(sol_d, os.path.join(out_dir, "lift_d.json"))
    tau_split = {}
    off = 0
    for name, model in scenario.system.agent_items:
        tau_split[name] = float(np.linalg.norm(sol_d.torques[off:off + model.n_joints]))
        off += model.n_joints
    print("D objective %.4f (%.0f s, %s), per-agent tau norms: %s"
          % (sol_d.objective, time.time() - t0, sol_d.message, tau_split))


if __name__ == "__main__":
    main()
