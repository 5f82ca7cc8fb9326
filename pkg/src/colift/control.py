"""Online shared controller: momentum tasks, payload pose law, force QP.

Pipeline per tick (`SharedController.step`):
  1. momentum rates for each agent and for the whole system, as affine maps
     over the contact-wrench layout;
  2. payload pose law and its affine map over the internal-wrench columns;
  3. friction / CoP / torsion / grasp-box inequality rows;
  4. affine torque parametrization tau(f) eliminating the constrained
     accelerations;
  5. a strictly convex QP in the stacked wrench vector.

The gravity acceleration acts along -e3 with norm g; the momentum-rate
gravity terms are m * (0, 0, -g) stacked with zero moment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvxmatrix
from cvxopt import solvers as cvxsolvers

from .coupled import PAYLOAD_BODY, ContactSpec, CoupledSystem
from .model import joint_damping
from .spatial import skew, sk_project, vee

cvxsolvers.options["show_progress"] = False

_QP_OPTIONS = {"abstol": 1e-10, "reltol": 1e-10, "feastol": 1e-9, "maxiters": 200,
               "show_progress": False}

RELAX_PENALTY = 1e6
EQ_CONSISTENCY_TOL = 1e-7
RANK_TOL = 1e-8


class SingularContacts(RuntimeError):
    """Contact configuration is degenerate (constraint rows lose rank)."""


class Infeasible(RuntimeError):
    """Even the slack-relaxed force QP has no solution."""


class GainsError(ValueError):
    """Gains file violates a definiteness or shape requirement."""


# ---------------------------------------------------------------------------
# gains


def _as_gain_matrix(value, dim, name) -> np.ndarray:
    """Scalar, diagonal list, or full matrix -> validated SPD matrix."""
    v = np.asarray(value, dtype=float)
    if v.ndim == 0:
        m = float(v) * np.eye(dim)
    elif v.ndim == 1:
        if v.shape != (dim,):
            raise GainsError(f"{name}: diagonal must have {dim} entries")
        m = np.diag(v)
    else:
        if v.shape != (dim, dim):
            raise GainsError(f"{name}: matrix must be {dim}x{dim}")
        m = v
    if np.abs(m - m.T).max() > 1e-12:
        raise GainsError(f"{name}: matrix must be symmetric")
    if np.linalg.eigvalsh(m)[0] <= 0.0:
        raise GainsError(f"{name}: matrix must be positive definite")
    return m


@dataclass
class ControllerGains:
    momentum_kp: dict                 # agent name and "total" -> 6x6 SPD
    momentum_ki: dict                 # CoM-position (integral-of-momentum) term
    payload_kp: np.ndarray            # 6x6 positive-definite diagonal
    payload_kd: np.ndarray
    postural_kp: dict                 # agent name -> n x n SPD
    postural_kd: dict
    effort_weights: dict              # agent name -> k_tau > 0
    epsilon: float = 1e-6
    relax_penalty: float = RELAX_PENALTY

    def k_tau_diag(self, system: CoupledSystem) -> np.ndarray:
        parts = []
        for name, model in system.agent_items:
            k = self.effort_weights[name]
            parts.append(np.full(model.n_joints, k))
        return np.concatenate(parts) if parts else np.zeros(0)


def gains_from_dict(doc: dict, system: CoupledSystem) -> ControllerGains:
    agent_names = [n for n, _ in system.agent_items]
    mom = doc.get("momentum_kp", {})
    momentum_kp = {}
    for key in agent_names + ["total"]:
        momentum_kp[key] = _as_gain_matrix(mom.get(key, 20.0), 6, f"momentum_kp[{key}]")
    mom_i = doc.get("momentum_ki", {})
    momentum_ki = {}
    for key in agent_names + ["total"]:
        momentum_ki[key] = _as_gain_matrix(mom_i.get(key, 50.0), 6, f"momentum_ki[{key}]")
    pay = doc.get("payload", {})
    payload_kp = _as_gain_matrix(pay.get("kp", 50.0), 6, "payload.kp")
    payload_kd = _as_gain_matrix(pay.get("kd", 15.0), 6, "payload.kd")
    if np.abs(payload_kp - np.diag(np.diag(payload_kp))).max() > 0:
        raise GainsError("payload.kp must be diagonal")
    if np.abs(payload_kd - np.diag(np.diag(payload_kd))).max() > 0:
        raise GainsError("payload.kd must be diagonal")
    post = doc.get("postural", {})
    postural_kp, postural_kd = {}, {}
    for name, model in system.agent_items:
        cfg = post.get(name, {})
        postural_kp[name] = _as_gain_matrix(cfg.get("kp", 1.0), model.n_joints,
                                            f"postural[{name}].kp")
        postural_kd[name] = _as_gain_matrix(cfg.get("kd", 0.1), model.n_joints,
                                            f"postural[{name}].kd")
    weights = doc.get("effort_weights", {})
    effort = {}
    for name in agent_names:
        k = float(weights.get(name, 1.0))
        if k <= 0:
            raise GainsError(f"effort_weights[{name}] must be positive")
        effort[name] = k
    eps = float(doc.get("epsilon", 1e-6))
    if eps <= 0:
        raise GainsError("epsilon must be positive")
    return ControllerGains(momentum_kp, momentum_ki, payload_kp, payload_kd,
                           postural_kp, postural_kd, effort,
                           eps, float(doc.get("relax_penalty", RELAX_PENALTY)))


def load_gains(path, system: CoupledSystem) -> ControllerGains:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise GainsError(f"{path}: invalid JSON: {e}") from None
    try:
        return gains_from_dict(doc, system)
    except GainsError as e:
        raise GainsError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# references


@dataclass
class RefSample:
    """References evaluated at one instant."""

    agent_h: dict                     # name -> desired 6D momentum
    agent_hdot: dict
    agent_s: dict
    agent_ds: dict
    total_h: np.ndarray
    total_hdot: np.ndarray
    payload_pos: np.ndarray = None
    payload_rot: np.ndarray = None
    payload_vel: np.ndarray = None    # (dp, omega)
    payload_acc: np.ndarray = None    # (ddp, domega)
    total_com: np.ndarray = None
    agent_com: dict = None            # name -> reference CoM position


class HoldReferences:
    """Constant references: hold a snapshot configuration at rest."""

    def __init__(self, system: CoupledSystem, states):
        zero6 = np.zeros(6)
        kins = system.kinematics(states)
        self.agent_s = {}
        for (name, model), st in zip(system.bodies, states):
            if name == PAYLOAD_BODY:
                continue
            self.agent_s[name] = st.s.copy()
        com = np.zeros(3)
        for name, model in system.bodies:
            com += model.total_mass() * kins[name].com()
        com /= system.total_mass()
        self._sample = RefSample(
            agent_h={n: zero6 for n, _ in system.agent_items},
            agent_hdot={n: zero6 for n, _ in system.agent_items},
            agent_s={n: s for n, s in self.agent_s.items()},
            agent_ds={n: np.zeros_like(s) for n, s in self.agent_s.items()},
            total_h=zero6, total_hdot=zero6, total_com=com,
            agent_com={n: kins[n].com() for n, _ in system.agent_items})
        if system.payload is not None:
            st = states[-1]
            self._sample.payload_pos = st.base_pose.position.copy()
            self._sample.payload_rot = st.base_pose.rotation.copy()
            self._sample.payload_vel = np.zeros(6)
            self._sample.payload_acc = np.zeros(6)

    def sample(self, t: float) -> RefSample:
        return self._sample


class ReducedRefs:
    """Agent-only view of full references, used while the payload rests on
    its support and the controller runs without the payload coupling."""

    def __init__(self, full_refs):
        self.full = full_refs

    def sample(self, t: float) -> RefSample:
        s = self.full.sample(t)
        total = np.zeros(6)
        for h in s.agent_h.values():
            total[:3] += h[:3]
        total_dot = np.zeros(6)
        for h in s.agent_hdot.values():
            total_dot[:3] += h[:3]
        # total_com is left unset: it refers to the payload-inclusive system
        return RefSample(s.agent_h, s.agent_hdot, s.agent_s, s.agent_ds,
                         total, total_dot, agent_com=s.agent_com)


# ---------------------------------------------------------------------------
# momentum task


def _wrench_transport(p_from: np.ndarray, p_to: np.ndarray) -> np.ndarray:
    """World-aligned wrench transport from a point to another point."""
    x = np.eye(6)
    x[3:, :3] = skew(p_from - p_to)
    return x


@dataclass
class MomentumTask:
    rows: np.ndarray                  # X: (6 * (n_agents + 1)) x n_wrench
    gravity_term: np.ndarray
    hdot_star: np.ndarray
    h_measured: np.ndarray
    labels: list


def total_momentum(system: CoupledSystem, kins) -> tuple:
    """Aggregate momentum of agents + payload about the combined CoM."""
    total_mass = system.total_mass()
    com = np.zeros(3)
    for name, model in system.bodies:
        com += model.total_mass() * kins[name].com()
    com /= total_mass
    h = np.zeros(6)
    for name, _ in system.bodies:
        hj = kins[name].momentum()
        h[:3] += hj[:3]
        h[3:] += hj[3:] + np.cross(kins[name].com() - com, hj[:3])
    return h, com


def momentum_task(system: CoupledSystem, states, gains: ControllerGains,
                  refs, t: float, kins=None, gravity=9.81) -> MomentumTask:
    kins = kins or system.kinematics(states)
    sample = refs.sample(t)
    n_w = system.n_wrench
    n_agents = len(system.agent_items)
    rows = np.zeros((6 * (n_agents + 1), n_w))
    g_term = np.zeros(6 * (n_agents + 1))
    hdot_star = np.zeros(6 * (n_agents + 1))
    h_meas = np.zeros(6 * (n_agents + 1))
    labels = []

    g_vec = np.array([0.0, 0.0, -gravity])
    agent_coms = {name: kins[name].com() for name, _ in system.agent_items}

    for j, (name, model) in enumerate(system.agent_items):
        r = slice(6 * j, 6 * j + 6)
        labels.append(f"momentum:{name}")
        p_g = agent_coms[name]
        for slot in system.slots:
            cols = slice(6 * slot.index, 6 * slot.index + 6)
            if slot.kind == "environment" and slot.body == name:
                p_c = kins[name].frame_pose(slot.frame).position
                rows[r, cols] = _wrench_transport(p_c, p_g)
            elif slot.kind == "grasp" and slot.body == name:
                # slot wrench acts on the payload; the agent feels the reaction
                p_c = kins[name].frame_pose(slot.frame).position
                rows[r, cols] = -_wrench_transport(p_c, p_g)
        m_j = model.total_mass()
        g_term[r.start:r.start + 3] = m_j * g_vec
        h_j = kins[name].momentum()
        h_meas[r] = h_j
        kp = gains.momentum_kp[name]
        hdot_star[r] = sample.agent_hdot[name] - kp @ (h_j - sample.agent_h[name])
        if sample.agent_com is not None and name in sample.agent_com:
            # integral of the linear-momentum error in closed form: the CoM
            # position offset; keeps standing modes position-stabilized
            h_int = np.zeros(6)
            h_int[:3] = m_j * (p_g - sample.agent_com[name])
            hdot_star[r] -= gains.momentum_ki[name] @ h_int

    # total momentum: external (environment) wrench columns only
    r = slice(6 * n_agents, 6 * n_agents + 6)
    labels.append("momentum:total")
    h_t, com_t = total_momentum(system, kins)
    for slot in system.environment_slots():
        cols = slice(6 * slot.index, 6 * slot.index + 6)
        p_c = kins[slot.body].frame_pose(slot.frame).position
        rows[r, cols] = _wrench_transport(p_c, com_t)
    g_term[r.start:r.start + 3] = system.total_mass() * g_vec
    h_meas[r] = h_t
    hdot_star[r] = sample.total_hdot - gains.momentum_kp["total"] @ (h_t - sample.total_h)
    if sample.total_com is not None:
        h_int = np.zeros(6)
        h_int[:3] = system.total_mass() * (com_t - sample.total_com)
        hdot_star[r] -= gains.momentum_ki["total"] @ h_int

    return MomentumTask(rows, g_term, hdot_star, h_meas, labels)


# ---------------------------------------------------------------------------
# payload task


@dataclass
class PayloadTask:
    vdot_star: np.ndarray
    accel_map: np.ndarray             # 6 x n_wrench, acceleration units
    accel_const: np.ndarray
    wrench_rows: np.ndarray           # M_l-scaled rows used by the QP equalities
    wrench_rhs: np.ndarray


def payload_task(system: CoupledSystem, states, gains: ControllerGains,
                 refs, t: float, kins=None, gravity=9.81) -> PayloadTask:
    if system.payload is None:
        raise ValueError("system has no payload")
    kins = kins or system.kinematics(states)
    sample = refs.sample(t)
    st = states[-1]
    pkin = kins[PAYLOAD_BODY]

    p = st.base_pose.position
    rot = st.base_pose.rotation
    vel = st.base_vel
    pos_err = p - sample.payload_pos
    rot_err = vee(sk_project(rot @ sample.payload_rot.T))
    vel_err = vel - sample.payload_vel
    vdot_star = (sample.payload_acc
                 - gains.payload_kd @ vel_err
                 - gains.payload_kp @ np.concatenate([pos_err, rot_err]))

    m_l = system.payload.mass
    inertia_w = rot @ system.payload.inertia @ rot.T
    m_mat = np.zeros((6, 6))
    m_mat[:3, :3] = m_l * np.eye(3)
    m_mat[3:, 3:] = inertia_w

    grasp = system.grasp_matrix(states, kins)
    w_full = np.zeros((6, system.n_wrench))
    for k, slot_index in enumerate(grasp.slots):
        w_full[:, 6 * slot_index:6 * slot_index + 6] = grasp.matrix[:, 6 * k:6 * k + 6]

    g_stack = np.concatenate([m_l * np.array([0.0, 0.0, -gravity]), np.zeros(3)])
    m_inv = np.linalg.inv(m_mat)
    accel_map = m_inv @ w_full
    accel_const = m_inv @ g_stack
    wrench_rhs = m_mat @ vdot_star - g_stack
    return PayloadTask(vdot_star, accel_map, accel_const, w_full, wrench_rhs)


# ---------------------------------------------------------------------------
# inequalities


@dataclass
class InequalityModel:
    c: np.ndarray
    b: np.ndarray
    labels: list

    def margins(self, f: np.ndarray) -> np.ndarray:
        return self.c @ f - self.b


def build_inequalities(system: CoupledSystem, states, kins=None) -> InequalityModel:
    """Friction pyramid, unilaterality, CoP rectangle and torsion bound per
    environment contact; box bounds per grasp contact.

    Rows act on wrench components expressed in the contact frame (constant
    while the contact is active), so a contact whose normal is not world-z
    still gets a correctly oriented cone.
    """
    kins = kins or system.kinematics(states)
    rows, rhs, labels = [], [], []
    for slot in system.slots:
        cols = slice(6 * slot.index, 6 * slot.index + 6)
        c = slot.contact
        if slot.kind == "environment":
            rot = kins[slot.body].frame_pose(slot.frame).rotation
            local = np.zeros((6, 6))
            local[:3, :3] = rot.T
            local[3:, 3:] = rot.T
            mu_eff = c.mu / np.sqrt(2.0)
            hx, hy = c.half_extents
            spec = [
                (-_unit(6, 2), -c.f_min, "unilateral"),
                (_unit(6, 0) - mu_eff * _unit(6, 2), 0.0, "friction+x"),
                (-_unit(6, 0) - mu_eff * _unit(6, 2), 0.0, "friction-x"),
                (_unit(6, 1) - mu_eff * _unit(6, 2), 0.0, "friction+y"),
                (-_unit(6, 1) - mu_eff * _unit(6, 2), 0.0, "friction-y"),
                (_unit(6, 4) - hx * _unit(6, 2), 0.0, "cop+x"),
                (-_unit(6, 4) - hx * _unit(6, 2), 0.0, "cop-x"),
                (_unit(6, 3) - hy * _unit(6, 2), 0.0, "cop+y"),
                (-_unit(6, 3) - hy * _unit(6, 2), 0.0, "cop-y"),
                (_unit(6, 5) - c.mu_torsion * _unit(6, 2), 0.0, "torsion+"),
                (-_unit(6, 5) - c.mu_torsion * _unit(6, 2), 0.0, "torsion-"),
            ]
            for a, b_i, tag in spec:
                row = np.zeros(system.n_wrench)
                row[cols] = a @ local
                rows.append(row)
                rhs.append(b_i)
                labels.append(f"{tag}:{slot.body}/{slot.frame}")
        else:
            rot = kins[PAYLOAD_BODY].frame_pose(c.payload_frame).rotation
            local = np.zeros((6, 6))
            local[:3, :3] = rot.T
            local[3:, 3:] = rot.T
            for axis in range(6):
                lim = c.force_limit if axis < 3 else c.moment_limit
                for sign in (1.0, -1.0):
                    row = np.zeros(system.n_wrench)
                    row[cols] = sign * local[axis]
                    rows.append(row)
                    rhs.append(lim)
                    labels.append(f"box{'+' if sign > 0 else '-'}{axis}:{slot.body}/{slot.frame}")
    if rows:
        return InequalityModel(np.vstack(rows), np.asarray(rhs, dtype=float), labels)
    return InequalityModel(np.zeros((0, system.n_wrench)), np.zeros(0), labels)


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def cone_membership(contact: ContactSpec, wrench_local: np.ndarray) -> bool:
    """Direct geometric membership test used as an oracle for the C/b rows."""
    f, m = wrench_local[:3], wrench_local[3:]
    mu_eff = contact.mu / np.sqrt(2.0)
    hx, hy = contact.half_extents
    return bool(
        f[2] >= contact.f_min
        and abs(f[0]) <= mu_eff * f[2]
        and abs(f[1]) <= mu_eff * f[2]
        and abs(m[1]) <= hx * f[2]
        and abs(m[0]) <= hy * f[2]
        and abs(m[2]) <= contact.mu_torsion * f[2]
    )


# ---------------------------------------------------------------------------
# torque parametrization


@dataclass
class TorqueMap:
    lin: np.ndarray                   # Lambda: n_torques x n_wrench
    const: np.ndarray                 # lambda
    a_op: np.ndarray                  # Q M^-1 B
    rhs_lin: np.ndarray               # d rhs / d f
    rhs_const: np.ndarray
    rank: int
    full_row_rank: bool

    def torque(self, f: np.ndarray) -> np.ndarray:
        return self.lin @ f + self.const

    def consistency_residual(self, f: np.ndarray) -> float:
        """Residual of the eliminated constraint system at tau(f)."""
        r = self.a_op @ self.torque(f) - (self.rhs_lin @ f + self.rhs_const)
        return float(np.abs(r).max()) if r.size else 0.0


def torque_parametrization(system: CoupledSystem, states, refs, gains: ControllerGains,
                           t: float = 0.0, kins=None, gravity=9.81,
                           references=None) -> TorqueMap:
    kins = kins or system.kinematics(states)
    m_mat, h, b_sel, _ = system.composite_terms(states, gravity, kins)
    q, qdot_nu, _, _ = system.constraint_matrix(states, kins, references)

    # passive joint damping is deliberately left out of the controller's
    # internal model: compensating it would cancel the physical dissipation
    # that keeps the zero dynamics quiet (torques stay exact at steady state)
    h = h.copy()
    for (name, model), st in zip(system.agent_items, states):
        cols = system.body_cols(name)
        h[cols.start + 6:cols.stop] -= joint_damping(model) * st.ds

    if system.n_torques == 0:
        raise SingularContacts("system has no actuated joints")
    sing_q = np.linalg.svd(q, compute_uv=False)
    if sing_q.size and sing_q[-1] <= RANK_TOL * sing_q[0]:
        raise SingularContacts("constraint matrix is row-rank deficient")

    sample = refs.sample(t)
    u0_parts = []
    for (name, model), st in zip(system.agent_items, states):
        kp, kd = gains.postural_kp[name], gains.postural_kd[name]
        u0_parts.append(-kp @ (st.s - sample.agent_s[name])
                        - kd @ (st.ds - sample.agent_ds[name]))
    u0 = np.concatenate(u0_parts)

    joint_rows = np.zeros(system.n_coords, dtype=bool)
    for name, _ in system.agent_items:
        cols = system.body_cols(name)
        joint_rows[cols.start + 6:cols.stop] = True
    h_s = h[joint_rows]
    q_s_t = q[:, joint_rows].T                   # n_torques x n_constraints

    m_inv_b = np.linalg.solve(m_mat, b_sel)
    m_inv_qt = np.linalg.solve(m_mat, q.T)
    a_op = q @ m_inv_b                           # n_constraints x n_torques
    rhs_lin = -(q @ m_inv_qt)                    # d rhs / d f
    rhs_const = -qdot_nu + q @ np.linalg.solve(m_mat, h)

    # tau0(f) = h_s - Q_s^T f + u0 (affine in f); u0 enters with the sign that
    # makes the residual joint dynamics (M nu_dot)_s = u0 a stabilizing PD
    tau0_const = h_s + u0
    tau0_lin = -q_s_t

    u, sing, vt = np.linalg.svd(a_op, full_matrices=False)
    rank = int(np.sum(sing > RANK_TOL * (sing[0] if sing.size else 1.0)))
    if rank == 0:
        raise SingularContacts("torques do not influence any constraint")
    pinv = (vt[:rank].T / sing[:rank]) @ u[:, :rank].T

    lam_lin = tau0_lin + pinv @ (rhs_lin - a_op @ tau0_lin)
    lam_const = tau0_const + pinv @ (rhs_const - a_op @ tau0_const)
    return TorqueMap(lam_lin, lam_const, a_op, rhs_lin, rhs_const, rank,
                     rank == a_op.shape[0])


# ---------------------------------------------------------------------------
# force QP


@dataclass
class ControlOutput:
    wrenches: np.ndarray
    torque_vector: np.ndarray
    torques: dict
    status: str
    residual_momentum: float
    residual_payload: float
    kkt_stationarity: float
    kkt_comp_slack: float
    cone_margin: float                # max over C f - b; negative when satisfied
    objective: float                  # ||K_tau tau||_2
    momentum_task: MomentumTask = field(repr=False, default=None)
    payload_task: PayloadTask = field(repr=False, default=None)
    torque_map: TorqueMap = field(repr=False, default=None)


_QP_TOL_LADDER = (
    {"abstol": 1e-11, "reltol": 1e-11, "feastol": 1e-10},
    {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9},
    {"abstol": 1e-7, "reltol": 1e-7, "feastol": 1e-7},
)


def _solve_qp(p, q, g, h):
    """Strictly convex QP: min 1/2 x'Px + q'x  s.t.  Gx <= h.

    The unconstrained minimizer is returned directly when it satisfies the
    inequalities (exact, no solver tolerance); otherwise the interior-point
    solver runs over a deterministic tolerance ladder.
    Returns (x, inequality duals).
    """
    n = p.shape[0]
    n_ineq = g.shape[0] if g is not None else 0
    if n == 0:
        return np.zeros(0), np.zeros(n_ineq)
    x_free = np.linalg.solve(p, -q)
    if n_ineq == 0 or np.all(g @ x_free <= h):
        return x_free, np.zeros(n_ineq)
    last_error = None
    for tols in _QP_TOL_LADDER:
        options = dict(_QP_OPTIONS)
        options.update(tols)
        try:
            sol = cvxsolvers.qp(cvxmatrix(p), cvxmatrix(q), G=cvxmatrix(g),
                                h=cvxmatrix(h), options=options)
        except (ValueError, ArithmeticError) as e:
            last_error = str(e)
            continue
        if sol["status"] == "optimal":
            return (np.asarray(sol["x"]).reshape(-1),
                    np.asarray(sol["z"]).reshape(-1))
        last_error = sol["status"]
    raise Infeasible(f"QP solver failed ({last_error})")


def solve_force_qp(system: CoupledSystem, states, refs, gains: ControllerGains,
                   t: float = 0.0, kins=None, gravity=9.81,
                   references=None) -> ControlOutput:
    kins = kins or system.kinematics(states)
    mom = momentum_task(system, states, gains, refs, t, kins, gravity)
    pay = (payload_task(system, states, gains, refs, t, kins, gravity)
           if system.payload is not None and system.grasp_slots() else None)
    ineq = build_inequalities(system, states, kins)
    tmap = torque_parametrization(system, states, refs, gains, t, kins, gravity,
                                  references)

    n_f = system.n_wrench
    e_rows = [mom.rows]
    e_rhs = [mom.hdot_star - mom.gravity_term]
    if pay is not None:
        e_rows.append(pay.wrench_rows)
        e_rhs.append(pay.wrench_rhs)
    e_mat = np.vstack(e_rows)
    e_vec = np.concatenate(e_rhs)

    k_diag = gains.k_tau_diag(system)
    k2 = k_diag**2
    p_mat = tmap.lin.T @ (tmap.lin * k2[:, None]) + gains.epsilon * np.eye(n_f)
    q_vec = tmap.lin.T @ (k2 * tmap.const)

    scale = max(1.0, system.total_mass() * gravity)
    margin = 1e-6 * scale
    g_mat, h_vec = ineq.c, ineq.b - margin

    # Resolve the structurally redundant task stack (the total-momentum rows
    # are the transported sum of the others) by row-space projection: the
    # payload rows are satisfied exactly, the momentum stack is reduced to
    # its numerically independent row space on top of them, and conflicting
    # right-hand sides split by least squares.  This is the exact limit of
    # slack variables under an infinite penalty; a finite penalty would leave
    # weakly observed task directions almost free and inject torque noise
    # into the low-inertia joints.  Conflicted ticks report optimal-relaxed.
    def _project(rows, rhs, base, basis):
        """Row-space-projected solve of rows @ (base + basis z) = rhs."""
        if rows.size == 0 or basis.shape[1] == 0:
            return base, basis
        a = rows @ basis
        u, sing, vt = np.linalg.svd(a, full_matrices=False)
        # cut well below the O(1) transport singular values but far above the
        # motion-induced near-dependencies of the redundant rows
        rank = int(np.sum(sing > 1e-3 * (sing[0] if sing.size else 1.0)))
        z = (vt[:rank].T / sing[:rank]) @ (u[:, :rank].T @ (rhs - rows @ base))
        return base + basis @ z, basis @ vt[rank:].T

    f_part = np.zeros(n_f)
    basis = np.eye(n_f)
    if pay is not None:
        f_part, basis = _project(pay.wrench_rows, pay.wrench_rhs, f_part, basis)
    f_part, basis = _project(mom.rows, mom.hdot_star - mom.gravity_term, f_part, basis)

    consistent = np.abs(e_mat @ f_part - e_vec).max() <= EQ_CONSISTENCY_TOL * scale
    status = "optimal-hard" if consistent else "optimal-relaxed"
    mu = np.zeros(g_mat.shape[0])
    f_opt = None
    try:
        if basis.shape[1] == 0:
            if g_mat.size and np.any(g_mat @ f_part > h_vec):
                raise Infeasible("unique equality solution violates cones")
            f_opt = f_part
        else:
            pz = basis.T @ p_mat @ basis
            qz = basis.T @ (p_mat @ f_part + q_vec)
            gz = g_mat @ basis if g_mat.size else None
            hz = h_vec - g_mat @ f_part if g_mat.size else None
            z, mu = _solve_qp(pz, qz, gz, hz)
            f_opt = f_part + basis @ z
    except Infeasible:
        f_opt = None

    if f_opt is None:
        # cones exclude the task-exact wrench set: soften every task row in
        # one well-conditioned weighted least-squares QP under hard cones
        # (payload rows dominate so the manipulation target degrades last)
        status = "optimal-relaxed"
        w_pay = 100.0
        rows = [mom.rows]
        rhs = [mom.hdot_star - mom.gravity_term]
        if pay is not None:
            rows.append(w_pay * pay.wrench_rows)
            rhs.append(w_pay * pay.wrench_rhs)
        e_w = np.vstack(rows)
        d_w = np.concatenate(rhs)
        p_soft = e_w.T @ e_w + gains.epsilon * np.eye(n_f) + 1e-6 * p_mat
        q_soft = -e_w.T @ d_w + 1e-6 * q_vec
        try:
            f_opt, mu = _solve_qp(p_soft, q_soft,
                                  g_mat if g_mat.size else None,
                                  h_vec if g_mat.size else None)
        except Infeasible:
            raise Infeasible("friction model admits no wrench at all") from None

    tau = tmap.torque(f_opt)
    slices = system.torque_slices()
    torques = {name: tau[slices[name]].copy() for name, _ in system.agent_items}

    res_mom = float(np.abs(mom.rows @ f_opt + mom.gravity_term - mom.hdot_star).max())
    res_pay = (float(np.abs(pay.accel_map @ f_opt + pay.accel_const - pay.vdot_star).max())
               if pay is not None else 0.0)

    # KKT residuals with equality duals recovered by least squares (for the
    # relaxed status these refer to the row-space-projected problem)
    grad = p_mat @ f_opt + q_vec
    resid = grad + (g_mat.T @ mu if mu.size else 0.0)
    nu_dual = np.linalg.lstsq(e_mat.T, -resid, rcond=None)[0]
    stationarity_vec = resid + e_mat.T @ nu_dual
    kkt_stat = float(np.abs(stationarity_vec).max())
    slack = (g_mat @ f_opt - h_vec) if g_mat.size else np.zeros(0)
    comp = float(np.abs(mu * slack).max()) if mu.size else 0.0
    cone_margin = float((ineq.c @ f_opt - ineq.b).max()) if ineq.c.size else -np.inf

    objective = float(np.linalg.norm(k_diag * tau))
    return ControlOutput(f_opt, tau, torques, status, res_mom, res_pay, kkt_stat,
                         comp, cone_margin, objective, mom, pay, tmap)


# ---------------------------------------------------------------------------
# controller facade


class SharedController:
    """Holds immutable configuration; `step` is a pure function of the inputs."""

    def __init__(self, system: CoupledSystem, gains: ControllerGains, references,
                 gravity: float = 9.81, contact_references: dict | None = None):
        self.system = system
        self.gains = gains
        self.references = references
        self.gravity = gravity
        self.contact_references = contact_references

    def step(self, states, t: float) -> ControlOutput:
        kins = self.system.kinematics(states)
        return solve_force_qp(self.system, states, self.references, self.gains,
                              t, kins, self.gravity, self.contact_references)
