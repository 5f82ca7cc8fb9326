"""Offline ergonomics: static force layer, posture optimization, references.

The posture problem is solved as a bilevel program.  The inner layer is the
convex static-equilibrium QP (force ergonomics): at a frozen configuration,
pick torques and contact wrenches balancing gravity inside the friction
model while minimizing the weighted torque norm.  The outer layer moves the
joint configurations, with foot closure eliminated analytically through the
fixed foot poses, hand-grasp closure handled by an augmented-Lagrangian
loop, and joint limits by bound projection inside the quasi-Newton solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .control import Infeasible, RefSample, _solve_qp, build_inequalities
from .coupled import PAYLOAD_BODY, CoupledSystem
from .model import AgentModel, AgentState, Kinematics
from .spatial import FramePose, rotation_exp, rotation_log

CLOSURE_TOL = 1e-8
FD_STEP = 1e-6


class StaticallyInfeasible(RuntimeError):
    """No wrench set balances gravity within the friction model."""


class ClosureViolation(RuntimeError):
    """Configurations do not satisfy the contact closure constraints."""


class PostureInfeasible(RuntimeError):
    """No closure-consistent configuration reachable from the initial guess."""


# ---------------------------------------------------------------------------
# minimum-jerk profiles


@dataclass(frozen=True)
class MinJerkProfile:
    """Quintic rest-to-rest profile 10 s^3 - 15 s^4 + 6 s^5 on [0, T]."""

    start: np.ndarray
    end: np.ndarray
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "start", np.atleast_1d(np.asarray(self.start, dtype=float)))
        object.__setattr__(self, "end", np.atleast_1d(np.asarray(self.end, dtype=float)))
        if self.duration <= 0:
            raise ValueError("profile duration must be positive")

    def _sigma(self, t: float) -> float:
        return min(max(t / self.duration, 0.0), 1.0)

    def value(self, t: float) -> np.ndarray:
        s = self._sigma(t)
        blend = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
        return self.start + (self.end - self.start) * blend

    def velocity(self, t: float) -> np.ndarray:
        s = self._sigma(t)
        if t < 0.0 or t > self.duration:
            return np.zeros_like(self.start)
        blend = 30.0 * s**2 - 60.0 * s**3 + 30.0 * s**4
        return (self.end - self.start) * blend / self.duration

    def acceleration(self, t: float) -> np.ndarray:
        s = self._sigma(t)
        if t < 0.0 or t > self.duration:
            return np.zeros_like(self.start)
        blend = 60.0 * s - 180.0 * s**2 + 120.0 * s**3
        return (self.end - self.start) * blend / self.duration**2


# ---------------------------------------------------------------------------
# closure helpers


def base_from_foot(model: AgentModel, s, foot_frame: str, foot_ref: FramePose) -> FramePose:
    """Base pose placing the given foot frame exactly at its reference."""
    local = AgentState(FramePose.identity(), np.asarray(s, dtype=float))
    foot_in_base = Kinematics(model, local).frame_pose(foot_frame)
    return foot_ref.compose(foot_in_base.inverse())


def pose_error(pose: FramePose, target: FramePose) -> np.ndarray:
    return np.concatenate([pose.position - target.position,
                           rotation_log(pose.rotation @ target.rotation.T)])


def constrained_hand_jacobian(kin: Kinematics, foot_frame: str, hand_frame: str) -> np.ndarray:
    """Hand Jacobian w.r.t. joints with the base eliminated by the fixed foot."""
    j_hand = kin.frame_jacobian(hand_frame)
    j_foot = kin.frame_jacobian(foot_frame)
    base_from_joints = -np.linalg.solve(j_foot[:, :6], j_foot[:, 6:])
    return j_hand[:, 6:] + j_hand[:, :6] @ base_from_joints


def project_to_closure(model: AgentModel, s0, foot_frame: str, foot_ref: FramePose,
                       hand_frame: str, hand_target: FramePose,
                       tol: float = CLOSURE_TOL, max_iters: int = 200):
    """Damped Gauss-Newton projection of joints onto the closure manifold.

    Returns (s, residual_norm); the base is always exactly on the foot
    reference by construction.
    """
    s = np.asarray(s0, dtype=float).copy()
    lo, hi = model.position_limits[:, 0], model.position_limits[:, 1]
    best_s, best_r = s.copy(), np.inf
    for _ in range(max_iters):
        base = base_from_foot(model, s, foot_frame, foot_ref)
        kin = Kinematics(model, AgentState(base, s))
        r = pose_error(kin.frame_pose(hand_frame), hand_target)
        rn = float(np.abs(r).max())
        if rn < best_r:
            best_r, best_s = rn, s.copy()
        if rn < tol:
            return s, rn
        j = constrained_hand_jacobian(kin, foot_frame, hand_frame)
        step = np.linalg.lstsq(j.T @ j + 1e-8 * np.eye(j.shape[1]), -j.T @ r, rcond=None)[0]
        # backtracking keeps the iteration from overshooting near singularities
        alpha = 1.0
        for _ in range(20):
            s_try = np.clip(s + alpha * step, lo, hi)
            base_t = base_from_foot(model, s_try, foot_frame, foot_ref)
            kin_t = Kinematics(model, AgentState(base_t, s_try))
            r_try = pose_error(kin_t.frame_pose(hand_frame), hand_target)
            if np.abs(r_try).max() < rn:
                s = s_try
                break
            alpha *= 0.5
        else:
            break
    return best_s, best_r


# ---------------------------------------------------------------------------
# static force layer (inner, convex)


@dataclass
class StaticForces:
    torques: np.ndarray
    wrenches: np.ndarray
    objective: float                  # || K_tau tau ||_2


def static_force_layer(system: CoupledSystem, states, effort_weights=None,
                       gravity: float = 9.81, force_reg: float = 1e-9,
                       use_interior_point: bool = False) -> StaticForces:
    """Minimum weighted-torque static equilibrium at the given configuration.

    With zero velocity and acceleration the coupled dynamics reduce to
    h(q) = B tau + Q^T f; the friction rows keep the wrenches physical.
    Solved in closed form through the equality-KKT system whenever no
    inequality is active, falling back to the interior-point solver.
    """
    still = [AgentState(st.base_pose, st.s) for st in states]
    kins = system.kinematics(still)
    m_mat, h, b_sel, _ = system.composite_terms(still, gravity, kins)
    q, _, _, _ = system.constraint_matrix(still, kins)
    ineq = build_inequalities(system, still, kins)

    n_tau, n_f = system.n_torques, system.n_wrench
    a_eq = np.hstack([b_sel, q.T])
    k_diag = np.ones(n_tau)
    if effort_weights is not None:
        off = 0
        for name, model in system.agent_items:
            k_diag[off:off + model.n_joints] = float(effort_weights[name])
            off += model.n_joints
    p_diag = np.concatenate([k_diag**2, np.full(n_f, force_reg)])
    scale = max(1.0, system.total_mass() * gravity)
    margin = 1e-6 * scale

    # equality feasibility (is the posture statically balanceable at all?)
    x_ls, *_ = np.linalg.lstsq(a_eq, h, rcond=None)
    if np.abs(a_eq @ x_ls - h).max() > 1e-6 * scale:
        raise StaticallyInfeasible("gravity cannot be balanced at this configuration")

    g_rows = np.hstack([np.zeros((ineq.c.shape[0], n_tau)), ineq.c])
    h_vec = ineq.b - margin

    x = None
    if not use_interior_point:
        kkt = np.zeros((n_tau + n_f + system.n_coords, n_tau + n_f + system.n_coords))
        kkt[:n_tau + n_f, :n_tau + n_f] = np.diag(p_diag)
        kkt[:n_tau + n_f, n_tau + n_f:] = a_eq.T
        kkt[n_tau + n_f:, :n_tau + n_f] = a_eq
        rhs = np.concatenate([np.zeros(n_tau + n_f), h])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        cand = sol[:n_tau + n_f]
        feasible_eq = np.abs(a_eq @ cand - h).max() <= 1e-7 * scale
        if feasible_eq and (not g_rows.size or np.all(g_rows @ cand <= h_vec)):
            x = cand

    if x is None:
        # active cones: reduce to the equality null space and hand to cvxopt
        u, sing, vt = np.linalg.svd(a_eq, full_matrices=True)
        rank = int(np.sum(sing > 1e-10 * sing[0]))
        x_p = (vt[:rank].T / sing[:rank]) @ (u[:, :rank].T @ h)
        nullspace = vt[rank:].T
        p_mat = nullspace.T @ (nullspace * p_diag[:, None])
        p_mat += 1e-12 * np.eye(p_mat.shape[0])
        q_vec = nullspace.T @ (p_diag * x_p)
        gz = g_rows @ nullspace if g_rows.size else None
        hz = h_vec - g_rows @ x_p if g_rows.size else None
        try:
            z, _ = _solve_qp(p_mat, q_vec, gz, hz)
        except Infeasible:
            raise StaticallyInfeasible(
                "no wrench distribution balances gravity inside the cones") from None
        x = x_p + nullspace @ z

    tau, f = x[:n_tau], x[n_tau:]
    return StaticForces(tau, f, float(np.linalg.norm(k_diag * tau)))


# ---------------------------------------------------------------------------
# posture optimization (outer)


@dataclass
class PostureProblem:
    system: CoupledSystem
    payload_pose: FramePose
    foot_refs: dict                   # agent name -> (foot frame, FramePose)
    hand_grasps: dict                 # agent name -> (hand frame, payload grasp frame)
    effort_weights: dict
    initial: dict                     # agent name -> joint vector
    gravity: float = 9.81
    max_outer: int = 200
    grad_tol: float = 1e-5
    fd_step: float = FD_STEP


@dataclass
class PostureSolution:
    configurations: dict              # agent name -> {"base_pose": FramePose, "joints": array}
    payload_pose: FramePose
    torques: np.ndarray
    wrenches: np.ndarray
    objective: float
    iterations: int
    constraint_violation: float
    converged: bool
    message: str = ""


def problem_from_scenario(scenario, payload_pose: FramePose, effort_weights=None,
                          initial=None, **options) -> PostureProblem:
    """Posture problem for a standard lift scenario: feet fixed where they
    are in the initial states, hands bound to the payload grasp frames."""
    system = scenario.system
    states = scenario.initial_states
    kins = system.kinematics(states)
    foot_refs, hand_grasps, init = {}, {}, {}
    for slot in system.environment_slots():
        if slot.body == PAYLOAD_BODY:
            continue
        foot_refs[slot.body] = (slot.frame, kins[slot.body].frame_pose(slot.frame))
    for slot in system.grasp_slots():
        hand_grasps[slot.body] = (slot.frame, slot.contact.payload_frame)
    for (name, _), st in zip(system.agent_items, states):
        init[name] = st.s.copy()
    if initial:
        init.update({k: np.asarray(v, dtype=float) for k, v in initial.items()})
    weights = effort_weights or {n: 1.0 for n, _ in system.agent_items}
    return PostureProblem(system, payload_pose, foot_refs, hand_grasps, weights,
                          init, gravity=scenario.gravity, **options)


def _grasp_targets(problem: PostureProblem) -> dict:
    """World pose of each payload grasp frame at the target payload pose."""
    targets = {}
    for name, (hand, gframe) in problem.hand_grasps.items():
        local = problem.system.payload.grasp_frames[gframe]
        targets[name] = problem.payload_pose.compose(local)
    return targets


def _states_for(problem: PostureProblem, joints: dict):
    states = []
    for name, model in problem.system.agent_items:
        foot_frame, foot_ref = problem.foot_refs[name]
        base = base_from_foot(model, joints[name], foot_frame, foot_ref)
        states.append(AgentState(base, joints[name]))
    if problem.system.payload is not None:
        states.append(AgentState(problem.payload_pose, np.zeros(0)))
    return states


def posture_objective(problem: PostureProblem, joints: dict) -> float:
    forces = static_force_layer(problem.system, _states_for(problem, joints),
                                problem.effort_weights, problem.gravity)
    return forces.objective


def feasibility_presolve(problem: PostureProblem, joints: dict) -> dict:
    targets = _grasp_targets(problem)
    out = {}
    for name, model in problem.system.agent_items:
        foot_frame, foot_ref = problem.foot_refs[name]
        hand, _ = problem.hand_grasps[name]
        s, resid = project_to_closure(model, joints[name], foot_frame, foot_ref,
                                      hand, targets[name])
        if resid > 1e-6:
            raise PostureInfeasible(
                f"agent {name!r}: closure unreachable (residual {resid:.2e})")
        out[name] = s
    return out


def optimize_posture(problem: PostureProblem) -> PostureSolution:
    """Augmented-Lagrangian quasi-Newton search over joint configurations.

    The feet are pinned analytically; the hand-grasp closure enters through
    multiplier and penalty terms; joint limits are bound constraints handled
    by projection inside L-BFGS-B.  Gradients are central finite differences
    of the inner static-equilibrium objective.
    """
    system = problem.system
    names = [n for n, _ in system.agent_items]
    sizes = {n: m.n_joints for n, m in system.agent_items}
    targets = _grasp_targets(problem)

    joints0 = feasibility_presolve(problem, problem.initial)
    x0 = np.concatenate([joints0[n] for n in names])
    bounds = []
    for n, model in system.agent_items:
        bounds.extend([(lo, hi) for lo, hi in model.position_limits])

    def unpack(x):
        out, off = {}, 0
        for n in names:
            out[n] = x[off:off + sizes[n]]
            off += sizes[n]
        return out

    def closure_residual(x):
        joints = unpack(x)
        parts = []
        for n, model in system.agent_items:
            foot_frame, foot_ref = problem.foot_refs[n]
            hand, _ = problem.hand_grasps[n]
            base = base_from_foot(model, joints[n], foot_frame, foot_ref)
            kin = Kinematics(model, AgentState(base, joints[n]))
            parts.append(pose_error(kin.frame_pose(hand), targets[n]))
        return np.concatenate(parts)

    def objective(x):
        try:
            return posture_objective(problem, unpack(x))
        except StaticallyInfeasible:
            return 1e6

    lam = np.zeros(6 * len(names))
    rho = 1e4

    def lagrangian(x):
        c = closure_residual(x)
        return objective(x) + lam @ c + 0.5 * rho * (c @ c)

    def grad(x):
        g = np.zeros_like(x)
        step = problem.fd_step
        for i in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            g[i] = (lagrangian(xp) - lagrangian(xm)) / (2 * step)
        return g

    def restore(x):
        """Project the iterate back onto the closure manifold."""
        joints = feasibility_presolve(problem, unpack(x))
        return np.concatenate([joints[n] for n in names])

    x = x0.copy()
    best = (objective(x), x.copy())
    total_iters = 0
    message = "iteration limit"
    grad_norm = np.inf
    while total_iters < problem.max_outer:
        budget = min(25, problem.max_outer - total_iters)
        res = scipy_minimize(lagrangian, x, jac=grad, method="L-BFGS-B",
                             bounds=bounds,
                             options={"maxiter": budget, "ftol": 1e-14,
                                      "gtol": problem.grad_tol})
        total_iters += max(res.nit, 1)
        grad_norm = float(np.abs(res.jac).max()) if res.jac is not None else np.inf
        c = closure_residual(res.x)
        lam = lam + rho * c
        if np.abs(c).max() > 1e-8:
            rho = min(rho * 4.0, 1e10)
        # feasibility restoration keeps the accepted iterates on the manifold
        x = restore(res.x)
        f_val = objective(x)
        improved = f_val < best[0] - 1e-12
        if f_val < best[0]:
            best = (f_val, x.copy())
        if grad_norm < problem.grad_tol:
            message = "converged"
            break
        if res.status == 0 and not improved:
            message = "stalled (no descent below tolerance)"
            break

    x = best[1]
    joints = feasibility_presolve(problem, unpack(x))
    states = _states_for(problem, joints)
    forces = static_force_layer(system, states, problem.effort_weights, problem.gravity)
    c_final = float(np.abs(closure_residual(np.concatenate([joints[n] for n in names]))).max())
    configs = {}
    for (n, model), st in zip(system.agent_items, states):
        configs[n] = {"base_pose": st.base_pose, "joints": st.s.copy()}
    converged = c_final < 1e-6 and message == "converged"
    return PostureSolution(configs, problem.payload_pose, forces.torques,
                           forces.wrenches, forces.objective, total_iters,
                           c_final, converged, message)


def save_posture_solution(solution: PostureSolution, path):
    from .spatial import matrix_to_rpy
    doc = {
        "configurations": {
            name: {
                "joints": [float(v) for v in cfg["joints"]],
                "base_pose": {"xyz": [float(v) for v in cfg["base_pose"].position],
                              "rpy": [float(v) for v in matrix_to_rpy(cfg["base_pose"].rotation)]},
            } for name, cfg in solution.configurations.items()
        },
        "payload_pose": {"xyz": [float(v) for v in solution.payload_pose.position],
                         "rpy": [float(v) for v in matrix_to_rpy(solution.payload_pose.rotation)]},
        "torques": [float(v) for v in solution.torques],
        "wrenches": [float(v) for v in solution.wrenches],
        "objective": float(solution.objective),
        "diagnostics": {
            "iterations": int(solution.iterations),
            "constraint_violation": float(solution.constraint_violation),
            "converged": bool(solution.converged),
            "message": solution.message,
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_posture_solution(path) -> PostureSolution:
    with open(path) as f:
        doc = json.load(f)
    configs = {}
    for name, cfg in doc["configurations"].items():
        pose = FramePose.from_xyz_rpy(cfg["base_pose"]["xyz"], cfg["base_pose"]["rpy"])
        configs[name] = {"base_pose": pose, "joints": np.asarray(cfg["joints"], dtype=float)}
    payload_pose = FramePose.from_xyz_rpy(doc["payload_pose"]["xyz"], doc["payload_pose"]["rpy"])
    d = doc.get("diagnostics", {})
    return PostureSolution(configs, payload_pose,
                           np.asarray(doc.get("torques", []), dtype=float),
                           np.asarray(doc.get("wrenches", []), dtype=float),
                           float(doc.get("objective", 0.0)),
                           int(d.get("iterations", 0)),
                           float(d.get("constraint_violation", 0.0)),
                           bool(d.get("converged", False)),
                           d.get("message", ""))


# ---------------------------------------------------------------------------
# reference generation


class TransitionReferences:
    """Minimum-jerk joint transitions with configuration-implied payload and
    momentum references.

    Joint profiles are exact quintics.  The payload reference follows the
    geodesic midpoint of the two hand-implied payload poses along the
    profile; momentum references take the configuration-implied CoM velocity
    for the linear part and zero for the angular part (slow-motion model).
    Feedforward rates are differentiated numerically from the analytic
    profile with a centered stencil.
    """

    def __init__(self, system: CoupledSystem, start_states, end_joints: dict,
                 duration: float, foot_refs: dict, hand_grasps: dict,
                 grasp_offsets: dict, gravity: float = 9.81):
        if duration <= 0:
            raise ValueError("transition duration must be positive")
        self.system = system
        self.duration = duration
        self.foot_refs = foot_refs
        self.hand_grasps = hand_grasps
        self.grasp_offsets = grasp_offsets
        self.names = [n for n, _ in system.agent_items]
        self.profiles = {}
        for (name, model), st in zip(system.agent_items, start_states):
            self.profiles[name] = MinJerkProfile(st.s, end_joints[name], duration)
        self._delta = max(1e-6 * duration, 1e-8)
        self._snap_cache = {}
        self._sample_cache = {}

    # -- configuration-implied quantities -------------------------------------

    def _snapshot(self, t):
        """Agent states/kinematics and implied payload pose at one instant."""
        if t in self._snap_cache:
            return self._snap_cache[t]
        agents = {}
        for name in self.names:
            model = self.system.models[name]
            prof = self.profiles[name]
            s = prof.value(t)
            ds = prof.velocity(t)
            foot_frame, foot_ref = self.foot_refs[name]
            base = base_from_foot(model, s, foot_frame, foot_ref)
            kin = Kinematics(model, AgentState(base, s))
            j_foot = kin.frame_jacobian(foot_frame)
            base_vel = -np.linalg.solve(j_foot[:, :6], j_foot[:, 6:] @ ds)
            agents[name] = (AgentState(base, s, base_vel, ds), kin)
        poses = []
        for name in self.names:
            if name not in self.hand_grasps:
                continue
            hand, _ = self.hand_grasps[name]
            hand_pose = agents[name][1].frame_pose(hand)
            poses.append(hand_pose.compose(self.grasp_offsets[name]))
        if not poses:
            payload_pose = None
        elif len(poses) == 1:
            payload_pose = poses[0]
        else:
            p = 0.5 * (poses[0].position + poses[1].position)
            r0, r1 = poses[0].rotation, poses[1].rotation
            rot = r0 @ rotation_exp(0.5 * rotation_log(r0.T @ r1))
            payload_pose = FramePose(p, rot)
        snap = (agents, payload_pose)
        if len(self._snap_cache) > 32:
            self._snap_cache.clear()
        self._snap_cache[t] = snap
        return snap

    def _momenta(self, t):
        agents, payload_pose = self._snapshot(t)
        agent_h = {}
        total_lin = np.zeros(3)
        for name in self.names:
            st, kin = agents[name]
            m = self.system.models[name].total_mass()
            v_com = kin.com_jacobian() @ st.velocity()
            agent_h[name] = np.concatenate([m * v_com, np.zeros(3)])
            total_lin += m * v_com
        if self.system.payload is not None and payload_pose is not None:
            d = self._delta
            dp = (self._snapshot(t + d)[1].position
                  - self._snapshot(t - d)[1].position) / (2 * d)
            total_lin += self.system.payload.mass * dp
        return agent_h, np.concatenate([total_lin, np.zeros(3)])

    def total_com(self, t):
        agents, payload_pose = self._snapshot(t)
        com = np.zeros(3)
        for name in self.names:
            com += self.system.models[name].total_mass() * agents[name][1].com()
        if self.system.payload is not None and payload_pose is not None:
            com += self.system.payload.mass * payload_pose.position
        return com / self.system.total_mass()

    def sample(self, t: float) -> RefSample:
        if t in self._sample_cache:
            return self._sample_cache[t]
        d = self._delta
        agent_h, total_h = self._momenta(t)
        h_plus = self._momenta(t + d)
        h_minus = self._momenta(t - d)
        agent_hdot = {n: (h_plus[0][n] - h_minus[0][n]) / (2 * d) for n in self.names}
        total_hdot = (h_plus[1] - h_minus[1]) / (2 * d)
        agent_s = {n: self.profiles[n].value(t) for n in self.names}
        agent_ds = {n: self.profiles[n].velocity(t) for n in self.names}
        agents_now = self._snapshot(t)[0]
        sample = RefSample(agent_h, agent_hdot, agent_s, agent_ds, total_h, total_hdot,
                           total_com=self.total_com(t),
                           agent_com={n: agents_now[n][1].com() for n in self.names})
        pose = self._snapshot(t)[1]
        if pose is not None:
            pp, pm = self._snapshot(t + d)[1], self._snapshot(t - d)[1]
            dp = (pp.position - pm.position) / (2 * d)
            omega = rotation_log(pp.rotation @ pm.rotation.T) / (2 * d)
            vel = np.concatenate([dp, omega])
            ddp = (pp.position - 2 * pose.position + pm.position) / d**2
            dom_p = rotation_log(pp.rotation @ pose.rotation.T) / d
            dom_m = rotation_log(pose.rotation @ pm.rotation.T) / d
            domega = (dom_p - dom_m) / d
            sample.payload_pos = pose.position
            sample.payload_rot = pose.rotation
            sample.payload_vel = vel
            sample.payload_acc = np.concatenate([ddp, domega])
        if len(self._sample_cache) > 16:
            self._sample_cache.clear()
        self._sample_cache[t] = sample
        return sample


def make_references(system: CoupledSystem, start_states, end_joints: dict,
                    duration: float, foot_refs: dict, hand_grasps: dict,
                    gravity: float = 9.81, closure_tol: float = 1e-5) -> TransitionReferences:
    """Build transition references between two closure-consistent configurations."""
    kins = system.kinematics(start_states)
    grasp_offsets = {}
    for name, (hand, gframe) in hand_grasps.items():
        hand_pose = kins[name].frame_pose(hand)
        grasp_local = system.payload.grasp_frames[gframe]
        payload_pose = kins[PAYLOAD_BODY].frame_pose(PAYLOAD_BODY)
        err = pose_error(payload_pose.compose(grasp_local), hand_pose)
        if np.abs(err).max() > closure_tol:
            raise ClosureViolation(
                f"agent {name!r} hand is not at its grasp frame (error {np.abs(err).max():.2e})")
        # payload pose as seen from the hand: hand_pose ∘ offset = payload pose
        grasp_offsets[name] = hand_pose.inverse().compose(payload_pose)
    return TransitionReferences(system, start_states, end_joints, duration,
                                foot_refs, hand_grasps, grasp_offsets, gravity)
