"""Composite two-agent + payload system: stacked dynamics and constraints.

The payload is represented internally as one more floating body with zero
actuated joints, so every composite quantity (mass matrix, bias, constraint
Jacobian) treats agents and payload uniformly.

Wrench layout contract (public, indexed by Q, the inequality model and the
force QP alike): one 6D slot per contact, environment contacts first in
body order, then grasp contacts in listing order.  Environment slots hold
the wrench applied by the ground on the body at the contact frame; grasp
slots hold the wrench applied on the payload at the payload-side grasp
frame, the grasping agent feeling the reaction.  All slot wrenches are
taken at the frame origin with world-aligned axes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .model import AgentModel, AgentState, Kinematics, load_model, model_from_dict
from .spatial import FramePose, rotation_log, skew

PAYLOAD_BODY = "payload"


class DuplicateContact(ValueError):
    pass


class NoGraspContacts(ValueError):
    pass


class FullRank(ValueError):
    """Grasp map has no null space (no squeeze freedom)."""


class ScenarioError(ValueError):
    """Scenario file violates the schema or an invariant."""


@dataclass(frozen=True)
class ContactSpec:
    body: str                      # agent name, or "payload" for the support fixture
    frame: str
    kind: str                      # "environment" | "grasp"
    mu: float = 0.8
    mu_torsion: float = 0.5
    half_extents: tuple = (0.05, 0.05)
    f_min: float = 0.0
    payload_frame: str = ""        # grasp contacts only
    force_limit: float = 200.0     # grasp box bounds
    moment_limit: float = 20.0

    def label(self) -> str:
        return f"{self.kind}:{self.body}/{self.frame}"


@dataclass(frozen=True)
class PayloadModel:
    mass: float
    inertia: np.ndarray                 # 3x3 about the CoM, body axes
    grasp_frames: dict                  # name -> FramePose (relative to the CoM frame)

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(3, 3))
        if self.mass <= 0.0:
            raise ScenarioError("payload mass must be positive")
        if np.linalg.eigvalsh(self.inertia)[0] <= 0.0:
            raise ScenarioError("payload inertia must be positive definite")

    def as_agent(self) -> AgentModel:
        """Single floating body with fixed grasp-frame links, no joints."""
        links = [{
            "name": PAYLOAD_BODY, "parent": None,
            "inertia": {
                "mass": self.mass, "com": [0.0, 0.0, 0.0],
                "ixx": self.inertia[0, 0], "ixy": self.inertia[0, 1],
                "ixz": self.inertia[0, 2], "iyy": self.inertia[1, 1],
                "iyz": self.inertia[1, 2], "izz": self.inertia[2, 2],
            },
        }]
        for fname, pose in self.grasp_frames.items():
            links.append({
                "name": fname, "parent": PAYLOAD_BODY,
                "joint": {"type": "fixed", "origin": {"xyz": list(pose.position),
                                                      "rpy": [0.0, 0.0, 0.0]}},
                "inertia": {"mass": 0.0},
            })
            # rpy conversion would lose exactness; patch the rotation in directly
        agent = model_from_dict({"name": PAYLOAD_BODY, "links": links,
                                 "limits": {"position": [], "torque": []}})
        patched = []
        for link in agent.links:
            if link.name in self.grasp_frames:
                pose = self.grasp_frames[link.name]
                link = type(link)(link.name, link.parent, link.joint_type, link.axis,
                                  FramePose(pose.position, pose.rotation), link.inertia,
                                  link.joint_index)
            patched.append(link)
        return AgentModel(agent.name, tuple(patched), agent.position_limits,
                          agent.torque_limits, agent.link_index)


@dataclass
class GraspMap:
    matrix: np.ndarray              # 6 x (6 * n_grasps)
    slots: list                     # wrench-layout indices of the grasp slots


@dataclass
class WrenchSlot:
    kind: str
    body: str
    frame: str
    contact: ContactSpec
    index: int                      # slot number; columns [6i, 6i+6)


class CoupledSystem:
    """Immutable assembly of agents, optional payload, and contacts."""

    def __init__(self, agents, payload: PayloadModel | None, contacts):
        self.agent_items = list(agents)          # [(name, AgentModel)]
        self.payload = payload
        self.bodies = list(self.agent_items)
        if payload is not None:
            self.bodies.append((PAYLOAD_BODY, payload.as_agent()))
        self.body_names = [n for n, _ in self.bodies]
        self.models = {n: m for n, m in self.bodies}
        if len(set(self.body_names)) != len(self.body_names):
            raise ScenarioError("duplicate agent names")

        self.offsets = {}
        off = 0
        for n, m in self.bodies:
            self.offsets[n] = off
            off += m.n_coords
        self.n_coords = off

        env, grasp = [], []
        seen = set()
        for c in contacts:
            if c.body not in self.models:
                raise ScenarioError(f"contact references unknown body {c.body!r}")
            self.models[c.body].frame_id(c.frame)        # raises UnknownFrame
            key = (c.body, c.frame)
            if key in seen:
                raise DuplicateContact(f"duplicate contact on {c.body}/{c.frame}")
            seen.add(key)
            if c.kind == "environment":
                env.append(c)
            elif c.kind == "grasp":
                if payload is None:
                    raise ScenarioError("grasp contact requires a payload")
                if c.payload_frame not in payload.grasp_frames:
                    raise ScenarioError(
                        f"grasp contact references unknown payload frame {c.payload_frame!r}")
                grasp.append(c)
            else:
                raise ScenarioError(f"unknown contact kind {c.kind!r}")
        env.sort(key=lambda c: self.body_names.index(c.body))
        self.contacts = env + grasp
        self.slots = [WrenchSlot(c.kind, c.body, c.frame, c, i)
                      for i, c in enumerate(self.contacts)]
        self.n_wrench = 6 * len(self.slots)
        self.n_constraints = self.n_wrench

        self.n_torques = sum(m.n_joints for _, m in self.agent_items)

    # -- indexing helpers ----------------------------------------------------

    def body_cols(self, name: str) -> slice:
        off = self.offsets[name]
        return slice(off, off + self.models[name].n_coords)

    def torque_slices(self) -> dict:
        out, off = {}, 0
        for n, m in self.agent_items:
            out[n] = slice(off, off + m.n_joints)
            off += m.n_joints
        return out

    def grasp_slots(self) -> list:
        return [s for s in self.slots if s.kind == "grasp"]

    def environment_slots(self) -> list:
        return [s for s in self.slots if s.kind == "environment"]

    def total_mass(self) -> float:
        return float(sum(m.total_mass() for _, m in self.bodies))

    # -- per-state evaluation --------------------------------------------------

    def kinematics(self, states) -> dict:
        return {name: Kinematics(model, st)
                for (name, model), st in zip(self.bodies, states)}

    def composite_terms(self, states, gravity, kins=None) -> tuple:
        """Block-diagonal mass matrix, stacked bias, actuation selector."""
        m_mat = np.zeros((self.n_coords, self.n_coords))
        h = np.zeros(self.n_coords)
        b = np.zeros((self.n_coords, self.n_torques))
        tau_slices = self.torque_slices()
        kins = kins or self.kinematics(states)
        for name, model in self.bodies:
            cols = self.body_cols(name)
            kin = kins[name]
            m_mat[cols, cols] = kin.mass_matrix()
            h[cols] = kin.bias_forces(gravity)
            if name in tau_slices:
                b[cols, tau_slices[name]] = model.selector()
        return m_mat, h, b, kins

    def velocity(self, states) -> np.ndarray:
        return np.concatenate([st.velocity() for st in states])

    def constraint_matrix(self, states, kins=None, references=None):
        """Q, the drift product Qdot @ nu, the current violation Q @ nu, and
        the position-level drift used for stabilization.

        `references` maps slot index -> reference FramePose for environment
        contacts (defaults to the current frame pose, i.e. zero drift).
        """
        kins = kins or self.kinematics(states)
        q = np.zeros((self.n_constraints, self.n_coords))
        qdot_nu = np.zeros(self.n_constraints)
        pos_drift = np.zeros(self.n_constraints)
        state_of = {name: st for (name, _), st in zip(self.bodies, states)}

        for slot in self.slots:
            rows = slice(6 * slot.index, 6 * slot.index + 6)
            if slot.kind == "environment":
                kin = kins[slot.body]
                q[rows, self.body_cols(slot.body)] = kin.frame_jacobian(slot.frame)
                qdot_nu[rows] = kin.frame_bias_acceleration(slot.frame)
                if references and slot.index in references:
                    ref = references[slot.index]
                    pose = kin.frame_pose(slot.frame)
                    pos_drift[rows.start:rows.start + 3] = pose.position - ref.position
                    pos_drift[rows.start + 3:rows.stop] = rotation_log(
                        pose.rotation @ ref.rotation.T)
            else:
                akin = kins[slot.body]
                pkin = kins[PAYLOAD_BODY]
                q[rows, self.body_cols(PAYLOAD_BODY)] = pkin.frame_jacobian(slot.contact.payload_frame)
                q[rows, self.body_cols(slot.body)] = -akin.frame_jacobian(slot.frame)
                qdot_nu[rows] = (pkin.frame_bias_acceleration(slot.contact.payload_frame)
                                 - akin.frame_bias_acceleration(slot.frame))
                gp = pkin.frame_pose(slot.contact.payload_frame)
                hp = akin.frame_pose(slot.frame)
                pos_drift[rows.start:rows.start + 3] = gp.position - hp.position
                pos_drift[rows.start + 3:rows.stop] = rotation_log(gp.rotation @ hp.rotation.T)

        q_nu = q @ self.velocity(states)
        return q, qdot_nu, q_nu, pos_drift

    def grasp_matrix(self, states, kins=None) -> GraspMap:
        grasps = self.grasp_slots()
        if not grasps:
            raise NoGraspContacts("system has no grasp contacts")
        kins = kins or self.kinematics(states)
        pkin = kins[PAYLOAD_BODY]
        p_com = pkin.com()
        w = np.zeros((6, 6 * len(grasps)))
        for k, slot in enumerate(grasps):
            p_k = pkin.frame_pose(slot.contact.payload_frame).position
            w[:3, 6 * k:6 * k + 3] = np.eye(3)
            w[3:, 6 * k:6 * k + 3] = skew(p_k - p_com)
            w[3:, 6 * k + 3:6 * k + 6] = np.eye(3)
        return GraspMap(w, [s.index for s in grasps])


def assemble(agents, payload, contacts) -> CoupledSystem:
    return CoupledSystem(agents, payload, contacts)


def squeeze_basis(grasp_map: GraspMap, tol=1e-10) -> np.ndarray:
    """Orthonormal basis of the grasp-map null space (squeeze wrenches)."""
    w = grasp_map.matrix
    _, sing, vt = np.linalg.svd(w)
    rank = int(np.sum(sing > tol * max(1.0, sing[0])))
    if rank >= w.shape[1]:
        raise FullRank("grasp map has full column rank; squeeze space is empty")
    return vt[rank:].T


# ---------------------------------------------------------------------------
# scenario files


@dataclass
class Scenario:
    name: str
    gravity: float
    system: CoupledSystem            # without the payload support fixture
    support_system: CoupledSystem | None   # with the fixture contact, if defined
    initial_states: list             # AgentState per body (payload last)
    path: str = ""

    def states_copy(self):
        return [st.copy() for st in self.initial_states]


def _pose_from_dict(d) -> FramePose:
    return FramePose.from_xyz_rpy(d.get("xyz", [0, 0, 0]), d.get("rpy", [0, 0, 0]))


def _contact_from_dict(d) -> ContactSpec:
    kind = d.get("kind")
    if kind not in ("environment", "grasp"):
        raise ScenarioError(f"contact kind must be 'environment' or 'grasp', got {kind!r}")
    mu = float(d.get("mu", 0.8))
    if mu < 0:
        raise ScenarioError(f"contact {d.get('frame')!r}: mu must be non-negative, got {mu}")
    mu_t = float(d.get("mu_torsion", 0.5))
    if mu_t < 0:
        raise ScenarioError(f"contact {d.get('frame')!r}: mu_torsion must be non-negative")
    half = tuple(d.get("half_extents", [0.05, 0.05]))
    if len(half) != 2 or half[0] <= 0 or half[1] <= 0:
        raise ScenarioError(f"contact {d.get('frame')!r}: half_extents must be two positives")
    f_min = float(d.get("f_min", 0.0))
    if f_min < 0:
        raise ScenarioError(f"contact {d.get('frame')!r}: f_min must be non-negative")
    return ContactSpec(
        body=d["agent"], frame=d["frame"], kind=kind, mu=mu, mu_torsion=mu_t,
        half_extents=half, f_min=f_min, payload_frame=d.get("payload_frame", ""),
        force_limit=float(d.get("force_limit", 200.0)),
        moment_limit=float(d.get("moment_limit", 20.0)))


def scenario_from_dict(doc: dict, base_dir=".") -> Scenario:
    name = doc.get("name", "scenario")
    gravity = float(doc.get("gravity", 9.81))
    if gravity < 0:
        raise ScenarioError("gravity norm must be non-negative")

    agents = []
    states = []
    for a in doc.get("agents", []):
        model_path = os.path.join(base_dir, a["model"])
        model = load_model(model_path)
        agents.append((a["name"], model))
        s = np.asarray(a.get("joints", np.zeros(model.n_joints)), dtype=float)
        if s.shape != (model.n_joints,):
            raise ScenarioError(f"agent {a['name']!r}: joints must have {model.n_joints} entries")
        lo, hi = model.position_limits[:, 0], model.position_limits[:, 1]
        if np.any(s < lo - 1e-9) or np.any(s > hi + 1e-9):
            raise ScenarioError(f"agent {a['name']!r}: initial joints violate position limits")
        states.append(AgentState(_pose_from_dict(a.get("base_pose", {})), s))
    if not agents:
        raise ScenarioError("scenario must define at least one agent")

    payload = None
    if "payload" in doc:
        p = doc["payload"]
        inertia_d = p.get("inertia", {})
        inertia = np.array([
            [inertia_d.get("ixx", 1e-3), inertia_d.get("ixy", 0.0), inertia_d.get("ixz", 0.0)],
            [inertia_d.get("ixy", 0.0), inertia_d.get("iyy", 1e-3), inertia_d.get("iyz", 0.0)],
            [inertia_d.get("ixz", 0.0), inertia_d.get("iyz", 0.0), inertia_d.get("izz", 1e-3)]])
        grasp_frames = {g["name"]: _pose_from_dict(g) for g in p.get("grasp_frames", [])}
        payload = PayloadModel(float(p["mass"]), inertia, grasp_frames)
        states.append(AgentState(_pose_from_dict(p.get("pose", {})), np.zeros(0)))

    contacts = [_contact_from_dict(c) for c in doc.get("contacts", [])]
    system = assemble(agents, payload, contacts)

    support_system = None
    if payload is not None and "fixture" in doc:
        f = doc["fixture"]
        fixture = ContactSpec(
            body=PAYLOAD_BODY, frame=PAYLOAD_BODY, kind="environment",
            mu=float(f.get("mu", 1.0)), mu_torsion=float(f.get("mu_torsion", 1.0)),
            half_extents=tuple(f.get("half_extents", [0.2, 0.2])),
            f_min=float(f.get("f_min", 0.0)))
        support_system = assemble(agents, payload, contacts + [fixture])

    return Scenario(name, gravity, system, support_system, states)


def load_scenario(path) -> Scenario:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: invalid JSON: {e}") from None
    try:
        sc = scenario_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))
    except (ScenarioError, DuplicateContact) as e:
        raise type(e)(f"{path}: {e}") from None
    sc.path = os.path.abspath(path)
    return sc
