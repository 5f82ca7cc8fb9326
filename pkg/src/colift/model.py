"""Floating-base kinematic trees: forward kinematics, Jacobians, dynamics.

Velocity convention (mixed representation): the generalized velocity is
nu = (v_base, omega_base, s_dot) with the base linear velocity taken at the
base-frame origin and both base velocity components expressed in the
inertial frame.  All Jacobians, wrenches and momenta follow the same
(linear, angular) ordering and world-frame expression.

The mass matrix is assembled by aggregating link spatial inertias through
the link CoM Jacobians; bias forces come from a recursive Newton-Euler pass
with zero acceleration.  The two routes are independent enough that the
acceptance suite cross-validates one against the other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .spatial import (
    FramePose,
    SpatialInertia,
    rotation_exp,
    rpy_to_matrix,
    skew,
)

GRAVITY = 9.81


def _cross(a, b):
    """Plain 3-vector cross product (numpy's np.cross is slow for scalars)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _cross_rows(a, b):
    """Row-wise cross product of (L, 3) arrays without np.cross overhead."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


class UnknownFrame(KeyError):
    """Requested frame name does not exist in the model."""


class ModelError(ValueError):
    """Model file violates the schema or a structural invariant."""


@dataclass(frozen=True)
class LinkSpec:
    name: str
    parent: int | None              # index into the link list; None for the base
    joint_type: str                 # "base" | "revolute" | "fixed"
    axis: np.ndarray | None         # unit axis in the child link frame (revolute)
    origin: FramePose               # joint frame pose relative to parent link frame
    inertia: SpatialInertia
    joint_index: int | None = None  # position in s for revolute joints
    damping: float = 0.0            # viscous joint coefficient [N*m*s/rad]


@dataclass(frozen=True)
class AgentModel:
    name: str
    links: tuple
    position_limits: np.ndarray     # (n, 2) lower/upper [rad]
    torque_limits: np.ndarray       # (n,) [N*m]
    link_index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        # link x joint ancestry mask and the link carrying each joint,
        # precomputed once for batched Jacobian assembly
        n_links, n_j = len(self.links), int(self.position_limits.shape[0])
        mask = np.zeros((n_links, n_j), dtype=bool)
        joint_link = np.zeros(n_j, dtype=int)
        for i, link in enumerate(self.links):
            if link.parent is not None:
                mask[i] = mask[link.parent]
            if link.joint_type == "revolute":
                mask[i, link.joint_index] = True
                joint_link[link.joint_index] = i
        object.__setattr__(self, "ancestry", mask)
        object.__setattr__(self, "joint_link", joint_link)
        object.__setattr__(self, "link_masses",
                           np.array([l.inertia.mass for l in self.links]))
        object.__setattr__(self, "link_coms",
                           np.stack([l.inertia.com for l in self.links]))
        object.__setattr__(self, "link_inertias",
                           np.stack([l.inertia.inertia for l in self.links]))

    @property
    def n_joints(self) -> int:
        return int(self.position_limits.shape[0])

    @property
    def n_coords(self) -> int:
        return self.n_joints + 6

    def frame_id(self, frame: str) -> int:
        try:
            return self.link_index[frame]
        except KeyError:
            raise UnknownFrame(f"model {self.name!r} has no frame {frame!r}") from None

    def total_mass(self) -> float:
        return float(sum(l.inertia.mass for l in self.links))

    def selector(self) -> np.ndarray:
        """Actuation selector B mapping joint torques into generalized forces."""
        b = np.zeros((self.n_coords, self.n_joints))
        b[6:, :] = np.eye(self.n_joints)
        return b


@dataclass
class AgentState:
    base_pose: FramePose
    s: np.ndarray
    base_vel: np.ndarray = None
    ds: np.ndarray = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float).reshape(-1)
        self.base_vel = (np.zeros(6) if self.base_vel is None
                         else np.asarray(self.base_vel, dtype=float).reshape(6))
        self.ds = (np.zeros_like(self.s) if self.ds is None
                   else np.asarray(self.ds, dtype=float).reshape(-1))

    def velocity(self) -> np.ndarray:
        return np.concatenate([self.base_vel, self.ds])

    def copy(self) -> "AgentState":
        return AgentState(FramePose(self.base_pose.position.copy(), self.base_pose.rotation.copy()),
                          self.s.copy(), self.base_vel.copy(), self.ds.copy())


@dataclass
class DynamicsTerms:
    mass_matrix: np.ndarray
    bias: np.ndarray
    selector: np.ndarray


# ---------------------------------------------------------------------------
# model loading


def _inertia_from_dict(d) -> SpatialInertia:
    mass = float(d["mass"])
    com = np.asarray(d.get("com", [0.0, 0.0, 0.0]), dtype=float)
    ixx = float(d.get("ixx", 0.0))
    iyy = float(d.get("iyy", 0.0))
    izz = float(d.get("izz", 0.0))
    ixy = float(d.get("ixy", 0.0))
    ixz = float(d.get("ixz", 0.0))
    iyz = float(d.get("iyz", 0.0))
    inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    si = SpatialInertia(mass, com, inertia)
    if mass < 0.0:
        raise ModelError("link mass must be non-negative")
    if mass > 0.0:
        try:
            si.validate()
        except ValueError as e:
            raise ModelError(f"inertia is not physically consistent: {e}") from None
    elif np.abs(inertia).max() > 0.0:
        raise ModelError("zero-mass link must have zero rotational inertia")
    return si


def model_from_dict(doc: dict) -> AgentModel:
    name = doc.get("name", "agent")
    raw_links = doc.get("links")
    if not raw_links:
        raise ModelError("model must define a non-empty 'links' list")

    links = []
    index = {}
    joint_count = 0
    for i, raw in enumerate(raw_links):
        lname = raw["name"]
        if lname in index:
            raise ModelError(f"duplicate link name {lname!r}")
        parent_name = raw.get("parent")
        if parent_name is None:
            if i != 0:
                raise ModelError("exactly the first link may be the base (parent null)")
            links.append(LinkSpec(lname, None, "base", None, FramePose.identity(),
                                  _inertia_from_dict(raw["inertia"])))
            index[lname] = i
            continue
        if parent_name not in index:
            raise ModelError(f"link {lname!r}: parent {parent_name!r} must be declared first")
        joint = raw.get("joint", {})
        jtype = joint.get("type", "fixed")
        origin = joint.get("origin", {})
        pose = FramePose.from_xyz_rpy(origin.get("xyz", [0, 0, 0]), origin.get("rpy", [0, 0, 0]))
        if jtype == "revolute":
            axis = np.asarray(joint.get("axis", [0, 0, 1]), dtype=float).reshape(3)
            if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
                raise ModelError(f"link {lname!r}: joint axis must have unit norm")
            damping = float(joint.get("damping", 0.0))
            if damping < 0:
                raise ModelError(f"link {lname!r}: joint damping must be non-negative")
            links.append(LinkSpec(lname, index[parent_name], "revolute", axis, pose,
                                  _inertia_from_dict(raw["inertia"]),
                                  joint_index=joint_count, damping=damping))
            joint_count += 1
        elif jtype == "fixed":
            links.append(LinkSpec(lname, index[parent_name], "fixed", None, pose,
                                  _inertia_from_dict(raw["inertia"])))
        else:
            raise ModelError(f"link {lname!r}: unsupported joint type {jtype!r}")
        index[lname] = i

    limits = doc.get("limits", {})
    pos = np.asarray(limits.get("position", [[-np.pi, np.pi]] * joint_count),
                     dtype=float).reshape(-1, 2) if joint_count else np.zeros((0, 2))
    tau = np.asarray(limits.get("torque", [50.0] * joint_count), dtype=float).reshape(-1)
    if pos.shape != (joint_count, 2):
        raise ModelError(f"position limits must be {joint_count} [lower, upper] pairs")
    if tau.shape != (joint_count,):
        raise ModelError(f"torque limits must have {joint_count} entries")
    if not np.all(pos[:, 0] < pos[:, 1]):
        raise ModelError("position limits must satisfy lower < upper")
    if not np.all(tau > 0):
        raise ModelError("torque limits must be positive")

    model = AgentModel(name, tuple(links), pos, tau, index)
    if model.total_mass() <= 0.0:
        raise ModelError("model must have positive total mass")
    return model


def load_model(path) -> AgentModel:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}: invalid JSON: {e}") from None
    try:
        return model_from_dict(doc)
    except ModelError as e:
        raise ModelError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# per-state kinematics


class Kinematics:
    """All per-state link quantities in world coordinates, one forward pass.

    Arrays indexed by link: pose (origin `pos`, rotation `rot`), world joint
    axis, CoM position, world rotational inertia about the CoM, link origin
    and CoM velocities, angular velocity.
    """

    def __init__(self, model: AgentModel, state: AgentState):
        self.model = model
        self.state = state
        n_links = len(model.links)
        self.pos = np.zeros((n_links, 3))
        self.rot = np.zeros((n_links, 3, 3))
        self.axis_w = np.zeros((n_links, 3))
        self.com_w = np.zeros((n_links, 3))
        self.inertia_w = np.zeros((n_links, 3, 3))
        self.v_origin = np.zeros((n_links, 3))
        self.omega = np.zeros((n_links, 3))
        self.v_com = np.zeros((n_links, 3))
        # chain of (link id carrying the joint) from base to each link
        self.joint_chain = [()] * n_links

        s, ds = state.s, state.ds
        for i, link in enumerate(model.links):
            if link.parent is None:
                self.pos[i] = state.base_pose.position
                self.rot[i] = state.base_pose.rotation
                self.v_origin[i] = state.base_vel[:3]
                self.omega[i] = state.base_vel[3:]
            else:
                p = link.parent
                r_parent = self.rot[p]
                o_joint = self.pos[p] + r_parent @ link.origin.position
                r_joint = r_parent @ link.origin.rotation
                self.pos[i] = o_joint
                rx, ry, rz = o_joint - self.pos[p]
                wx, wy, wz = self.omega[p]
                self.v_origin[i, 0] = self.v_origin[p, 0] + wy * rz - wz * ry
                self.v_origin[i, 1] = self.v_origin[p, 1] + wz * rx - wx * rz
                self.v_origin[i, 2] = self.v_origin[p, 2] + wx * ry - wy * rx
                if link.joint_type == "revolute":
                    self.rot[i] = r_joint @ rotation_exp(link.axis * s[link.joint_index])
                    a_w = self.rot[i] @ link.axis
                    self.axis_w[i] = a_w
                    self.omega[i] = self.omega[p] + a_w * ds[link.joint_index]
                    self.joint_chain[i] = self.joint_chain[p] + (i,)
                else:
                    self.rot[i] = r_joint
                    self.omega[i] = self.omega[p]
                    self.joint_chain[i] = self.joint_chain[p]
        rot = self.rot
        self.com_w = self.pos + np.einsum("kab,kb->ka", rot, model.link_coms)
        self.inertia_w = rot @ model.link_inertias @ rot.transpose(0, 2, 1)
        self.v_com = self.v_origin + _cross_rows(self.omega, self.com_w - self.pos)

    # -- kinematic outputs ---------------------------------------------------

    def frame_pose(self, frame: str) -> FramePose:
        i = self.model.frame_id(frame)
        return FramePose(self.pos[i].copy(), self.rot[i].copy())

    def point_jacobian(self, link_id: int, point_w: np.ndarray) -> np.ndarray:
        """6 x (n+6) mixed Jacobian of a point rigidly attached to a link."""
        model = self.model
        jac = np.zeros((6, model.n_coords))
        jac[:3, :3] = np.eye(3)
        jac[:3, 3:6] = -skew(point_w - self.state.base_pose.position)
        jac[3:, 3:6] = np.eye(3)
        for j in self.joint_chain[link_id]:
            col = 6 + self.model.links[j].joint_index
            a = self.axis_w[j]
            jac[:3, col] = _cross(a, point_w - self.pos[j])
            jac[3:, col] = a
        return jac

    def frame_jacobian(self, frame: str) -> np.ndarray:
        i = self.model.frame_id(frame)
        return self.point_jacobian(i, self.pos[i])

    def frame_velocity(self, frame: str) -> np.ndarray:
        i = self.model.frame_id(frame)
        return np.concatenate([self.v_origin[i], self.omega[i]])

    def _zero_acc_pass(self):
        if not hasattr(self, "_bias_acc"):
            self._bias_acc = self._link_accelerations(np.zeros(self.model.n_coords))
        return self._bias_acc

    def frame_bias_acceleration(self, frame: str) -> np.ndarray:
        """J_dot @ nu for a frame: its 6D acceleration when nu_dot = 0."""
        acc = self._zero_acc_pass()
        i = self.model.frame_id(frame)
        return np.concatenate([acc[0][i], acc[1][i]])

    # -- dynamics ------------------------------------------------------------

    def _link_accelerations(self, nu_dot: np.ndarray):
        """Origin and angular accelerations of every link for a given nu_dot."""
        model, s_dd = self.model, nu_dot[6:]
        n_links = len(model.links)
        a_origin = np.zeros((n_links, 3))
        alpha = np.zeros((n_links, 3))
        ds = self.state.ds
        for i, link in enumerate(model.links):
            if link.parent is None:
                a_origin[i] = nu_dot[:3]
                alpha[i] = nu_dot[3:6]
                continue
            p = link.parent
            rx, ry, rz = self.pos[i] - self.pos[p]
            wx, wy, wz = self.omega[p]
            alx, aly, alz = alpha[p]
            # alpha_p x r + w_p x (w_p x r)
            cx = wy * rz - wz * ry
            cy = wz * rx - wx * rz
            cz = wx * ry - wy * rx
            a_origin[i, 0] = a_origin[p, 0] + aly * rz - alz * ry + wy * cz - wz * cy
            a_origin[i, 1] = a_origin[p, 1] + alz * rx - alx * rz + wz * cx - wx * cz
            a_origin[i, 2] = a_origin[p, 2] + alx * ry - aly * rx + wx * cy - wy * cx
            if link.joint_type == "revolute":
                k = link.joint_index
                ax, ay, az = self.axis_w[i]
                dk, sk = ds[k], s_dd[k]
                alpha[i, 0] = alx + ax * sk + (wy * az - wz * ay) * dk
                alpha[i, 1] = aly + ay * sk + (wz * ax - wx * az) * dk
                alpha[i, 2] = alz + az * sk + (wx * ay - wy * ax) * dk
            else:
                alpha[i] = alpha[p]
        return a_origin, alpha

    def inverse_dynamics(self, nu_dot, gravity=GRAVITY) -> np.ndarray:
        """Generalized forces M nu_dot + h(q, nu) for the given acceleration.

        Gravity is the norm of the downward acceleration (along -z).
        """
        model = self.model
        nu_dot = np.asarray(nu_dot, dtype=float).reshape(model.n_coords)
        g_vec = np.array([0.0, 0.0, -float(gravity)])
        if not nu_dot.any():
            a_origin, alpha = self._zero_acc_pass()
        else:
            a_origin, alpha = self._link_accelerations(nu_dot)

        n_links = len(model.links)
        r_c = self.com_w - self.pos
        a_com = (a_origin + _cross_rows(alpha, r_c)
                 + _cross_rows(self.omega, _cross_rows(self.omega, r_c)))
        net_f = model.link_masses[:, None] * (a_com - g_vec)
        iw_omega = np.einsum("kab,kb->ka", self.inertia_w, self.omega)
        t = np.einsum("kab,kb->ka", self.inertia_w, alpha) + _cross_rows(self.omega, iw_omega)
        net_m = t + _cross_rows(r_c, net_f)

        # backward pass: accumulate child wrenches into parents
        carried_f = net_f.copy()
        carried_m = net_m.copy()
        out = np.zeros(model.n_coords)
        for i in range(n_links - 1, 0, -1):
            link = model.links[i]
            p = link.parent
            if link.joint_type == "revolute":
                out[6 + link.joint_index] = self.axis_w[i] @ carried_m[i]
            carried_f[p] += carried_f[i]
            carried_m[p] += carried_m[i] + _cross(self.pos[i] - self.pos[p], carried_f[i])
        out[:3] = carried_f[0]
        out[3:6] = carried_m[0]
        for i, link in enumerate(model.links):
            if link.joint_type == "revolute" and link.damping:
                out[6 + link.joint_index] += link.damping * self.state.ds[link.joint_index]
        return out

    def _com_jacobians(self):
        """Batched (L, 6, n+6) mixed Jacobians of every link CoM."""
        model = self.model
        n_links = len(model.links)
        n = model.n_coords
        if hasattr(self, "_jc_batch"):
            return self._jc_batch
        jac = np.zeros((n_links, 6, n))
        jac[:, 0, 0] = 1.0
        jac[:, 1, 1] = 1.0
        jac[:, 2, 2] = 1.0
        jac[:, 3, 3] = 1.0
        jac[:, 4, 4] = 1.0
        jac[:, 5, 5] = 1.0
        rel_base = self.com_w - self.state.base_pose.position
        # linear rows, base angular columns: -S(p - p_base)
        jac[:, 0, 4] = rel_base[:, 2]
        jac[:, 0, 5] = -rel_base[:, 1]
        jac[:, 1, 3] = -rel_base[:, 2]
        jac[:, 1, 5] = rel_base[:, 0]
        jac[:, 2, 3] = rel_base[:, 1]
        jac[:, 2, 4] = -rel_base[:, 0]
        if model.n_joints:
            axes = self.axis_w[model.joint_link]                  # (J, 3)
            origins = self.pos[model.joint_link]                  # (J, 3)
            rel = self.com_w[:, None, :] - origins[None, :, :]    # (L, J, 3)
            axes_b = np.broadcast_to(axes, rel.shape)
            lin = np.empty(rel.shape)
            lin[..., 0] = axes_b[..., 1] * rel[..., 2] - axes_b[..., 2] * rel[..., 1]
            lin[..., 1] = axes_b[..., 2] * rel[..., 0] - axes_b[..., 0] * rel[..., 2]
            lin[..., 2] = axes_b[..., 0] * rel[..., 1] - axes_b[..., 1] * rel[..., 0]
            mask = model.ancestry                                 # (L, J)
            lin = lin * mask[:, :, None]
            ang = np.broadcast_to(axes, rel.shape) * mask[:, :, None]
            jac[:, :3, 6:] = lin.transpose(0, 2, 1)
            jac[:, 3:, 6:] = ang.transpose(0, 2, 1)
        self._jc_batch = jac
        return jac

    def mass_matrix(self) -> np.ndarray:
        """Composite aggregation of link inertias via CoM Jacobians."""
        model = self.model
        jac = self._com_jacobians()
        masses = model.link_masses
        jl = jac[:, :3, :]
        ja = jac[:, 3:, :]
        m_mat = np.einsum("k,kan,kam->nm", masses, jl, jl)
        iw_ja = np.einsum("kab,kbn->kan", self.inertia_w, ja)
        m_mat += np.einsum("kan,kam->nm", ja, iw_ja)
        return m_mat

    def bias_forces(self, gravity=GRAVITY) -> np.ndarray:
        return self.inverse_dynamics(np.zeros(self.model.n_coords), gravity)

    def com(self) -> np.ndarray:
        masses = np.array([l.inertia.mass for l in self.model.links])
        return masses @ self.com_w / masses.sum()

    def com_jacobian(self) -> np.ndarray:
        model = self.model
        total = 0.0
        jac = np.zeros((3, model.n_coords))
        for i, link in enumerate(model.links):
            m = link.inertia.mass
            if m == 0.0:
                continue
            jac += m * self.point_jacobian(i, self.com_w[i])[:3]
            total += m
        return jac / total

    def momentum(self) -> np.ndarray:
        """Aggregate 6D momentum about the agent CoM, world-aligned axes."""
        p_g = self.com()
        h_lin = np.zeros(3)
        h_ang = np.zeros(3)
        for i, link in enumerate(self.model.links):
            m = link.inertia.mass
            mv = m * self.v_com[i]
            h_lin += mv
            h_ang += self.inertia_w[i] @ self.omega[i] + _cross(self.com_w[i] - p_g, mv)
        return np.concatenate([h_lin, h_ang])

    def kinetic_energy(self) -> float:
        e = 0.0
        for i, link in enumerate(self.model.links):
            e += 0.5 * link.inertia.mass * self.v_com[i] @ self.v_com[i]
            e += 0.5 * self.omega[i] @ self.inertia_w[i] @ self.omega[i]
        return float(e)

    def potential_energy(self, gravity=GRAVITY) -> float:
        masses = np.array([l.inertia.mass for l in self.model.links])
        return float(gravity * masses @ self.com_w[:, 2])


# ---------------------------------------------------------------------------
# spec-level operations (thin wrappers building a one-shot kinematics pass)


def forward_kinematics(model: AgentModel, state: AgentState, frame: str) -> FramePose:
    return Kinematics(model, state).frame_pose(frame)


def jacobian(model: AgentModel, state: AgentState, frame: str) -> np.ndarray:
    return Kinematics(model, state).frame_jacobian(frame)


def mass_matrix(model: AgentModel, state: AgentState) -> np.ndarray:
    return Kinematics(model, state).mass_matrix()


def bias_forces(model: AgentModel, state: AgentState, gravity=GRAVITY) -> np.ndarray:
    return Kinematics(model, state).bias_forces(gravity)


def inverse_dynamics(model, state, nu_dot, gravity=GRAVITY) -> np.ndarray:
    return Kinematics(model, state).inverse_dynamics(nu_dot, gravity)


def momentum(model: AgentModel, state: AgentState) -> np.ndarray:
    return Kinematics(model, state).momentum()


def com(model: AgentModel, state: AgentState) -> np.ndarray:
    return Kinematics(model, state).com()


def com_jacobian(model: AgentModel, state: AgentState) -> np.ndarray:
    return Kinematics(model, state).com_jacobian()


def joint_damping(model: AgentModel) -> np.ndarray:
    """Per-joint viscous damping coefficients in joint order."""
    d = np.zeros(model.n_joints)
    for link in model.links:
        if link.joint_type == "revolute":
            d[link.joint_index] = link.damping
    return d


def dynamics_terms(model: AgentModel, state: AgentState, gravity=GRAVITY) -> DynamicsTerms:
    kin = Kinematics(model, state)
    return DynamicsTerms(kin.mass_matrix(), kin.bias_forces(gravity), model.selector())


def integrate_state(model: AgentModel, state: AgentState, nu_dot, dt: float) -> AgentState:
    """Semi-implicit Euler step: velocity first, then configuration.

    The base orientation is updated on the rotation group with the
    exponential map of the (world-frame) angular velocity.
    """
    nu_dot = np.asarray(nu_dot, dtype=float).reshape(model.n_coords)
    base_vel = state.base_vel + dt * nu_dot[:6]
    ds = state.ds + dt * nu_dot[6:]
    pos = state.base_pose.position + dt * base_vel[:3]
    rot = rotation_exp(dt * base_vel[3:]) @ state.base_pose.rotation
    s = state.s + dt * ds
    return AgentState(FramePose(pos, rot), s, base_vel, ds)


def random_state(model: AgentModel, rng: np.random.Generator,
                 base_span=0.5, vel_span=0.5) -> AgentState:
    """Random state within joint limits; used by property and acceptance tests."""
    lo, hi = model.position_limits[:, 0], model.position_limits[:, 1]
    s = rng.uniform(lo, hi)
    pos = rng.uniform(-base_span, base_span, 3)
    rot = rotation_exp(rng.uniform(-1.0, 1.0, 3))
    vel = rng.uniform(-vel_span, vel_span, 6)
    ds = rng.uniform(-vel_span, vel_span, model.n_joints)
    return AgentState(FramePose(pos, rot), s, vel, ds)
