"""Fixed-step constrained rigid-body simulator for the coupled system.

Bilateral contacts only: the constraint set is fixed within a scenario
phase (the payload support fixture is the one removable constraint, dropped
instantaneously with velocity continuity at the scripted release).  Each
step solves the acceleration-level KKT system with Baumgarte feedback on
the velocity and position drift, then advances with a semi-implicit Euler
update; base orientations are integrated on the rotation group.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .control import HoldReferences, ReducedRefs, SharedController
from .coupled import PAYLOAD_BODY, CoupledSystem, Scenario, assemble
from .ergonomics import base_from_foot, make_references
from .model import AgentState, integrate_state
from .spatial import FramePose, matrix_to_rpy, orthonormalize


class SingularKKT(RuntimeError):
    """Constraint solve failed: the KKT system is inconsistent."""


class NumericalDivergence(RuntimeError):
    """State norm exploded; integration is meaningless past this point."""


class PhaseTimeout(RuntimeError):
    """A phase ended too far from its target configuration."""


class SequenceError(ValueError):
    """Sequence file violates the schema."""


@dataclass
class SimConfig:
    dt: float = 1e-3
    controller_period: float = 1e-2
    baumgarte_alpha: float = 20.0
    baumgarte_beta: float = 20.0
    duration: float = 10.0
    gravity: float = 9.81

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        ratio = self.controller_period / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("controller period must be an integer multiple of dt")
        if self.baumgarte_alpha < 0 or self.baumgarte_beta < 0:
            raise ValueError("Baumgarte gains must be non-negative")

    @property
    def steps_per_tick(self) -> int:
        return int(round(self.controller_period / self.dt))


# ---------------------------------------------------------------------------
# one dynamics step


def step_dynamics(system: CoupledSystem, states, torques, config: SimConfig,
                  contact_references=None):
    """Advance one dt; returns (new_states, constraint_wrenches, nu_dot)."""
    kins = system.kinematics(states)
    m_mat, h, b_sel, _ = system.composite_terms(states, config.gravity, kins)
    q, qdot_nu, q_nu, pos_drift = system.constraint_matrix(states, kins,
                                                           contact_references)
    torques = np.asarray(torques, dtype=float).reshape(system.n_torques)
    rhs1 = b_sel @ torques - h
    rhs2 = (-qdot_nu - 2.0 * config.baumgarte_alpha * q_nu
            - config.baumgarte_beta**2 * pos_drift)

    cho = cho_factor(m_mat)
    minv_rhs1 = cho_solve(cho, rhs1)
    if q.shape[0]:
        minv_qt = cho_solve(cho, q.T)
        schur = q @ minv_qt
        b2 = rhs2 - q @ minv_rhs1
        scale = max(1.0, float(np.abs(b2).max()))
        try:
            f = np.linalg.solve(schur, b2)
        except np.linalg.LinAlgError:
            f = None
        if f is None or np.abs(schur @ f - b2).max() > 1e-8 * scale:
            # hyperstatic contact sets make the Schur complement singular;
            # the minimum-norm multiplier gives the same (unique) motion
            f = np.linalg.lstsq(schur, b2, rcond=None)[0]
            if np.abs(schur @ f - b2).max() > 1e-6 * scale:
                raise SingularKKT("constraint system is inconsistent")
        nu_dot = minv_rhs1 + minv_qt @ f
    else:
        f = np.zeros(0)
        nu_dot = minv_rhs1

    if not np.all(np.isfinite(nu_dot)) or np.abs(nu_dot).max() > 1e8:
        raise NumericalDivergence("acceleration blew up")

    new_states = []
    for (name, model), st in zip(system.bodies, states):
        cols = system.body_cols(name)
        new = integrate_state(model, st, nu_dot[cols], config.dt)
        rot = new.base_pose.rotation
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-8:
            new = AgentState(FramePose(new.base_pose.position, orthonormalize(rot)),
                             new.s, new.base_vel, new.ds)
        if np.abs(new.base_pose.position).max() > 1e3:
            raise NumericalDivergence("state norm blew up")
        new_states.append(new)
    return new_states, f, nu_dot


def capture_contact_references(system: CoupledSystem, states) -> dict:
    """Environment-contact reference poses (slot index -> pose) at a state."""
    kins = system.kinematics(states)
    refs = {}
    for slot in system.environment_slots():
        refs[slot.index] = kins[slot.body].frame_pose(slot.frame)
    return refs


def system_energy(system: CoupledSystem, states, gravity: float) -> float:
    kins = system.kinematics(states)
    return float(sum(k.kinetic_energy() + k.potential_energy(gravity)
                     for k in kins.values()))


# ---------------------------------------------------------------------------
# sequences


@dataclass
class Phase:
    name: str
    kind: str                        # "hold" | "transition"
    duration: float
    fixture: bool = False
    target: dict | None = None       # {"joints": {...}, "payload_pose": FramePose}


def _pose_from_doc(d) -> FramePose:
    return FramePose.from_xyz_rpy(d.get("xyz", [0, 0, 0]), d.get("rpy", [0, 0, 0]))


def load_posture_target(path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    joints = {name: np.asarray(cfg["joints"], dtype=float)
              for name, cfg in doc["configurations"].items()}
    return {"joints": joints, "payload_pose": _pose_from_doc(doc["payload_pose"])}


def load_sequence(path) -> list:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SequenceError(f"{path}: invalid JSON: {e}") from None
    base = os.path.dirname(os.path.abspath(path))
    phases = []
    for p in doc.get("phases", []):
        kind = p.get("kind")
        if kind not in ("hold", "transition"):
            raise SequenceError(f"{path}: phase kind must be 'hold' or 'transition'")
        duration = float(p.get("duration", 1.0))
        if duration <= 0:
            raise SequenceError(f"{path}: phase duration must be positive")
        target = None
        ref = p.get("target")
        if isinstance(ref, str) and ref != "initial":
            target = load_posture_target(os.path.join(base, ref))
        phases.append(Phase(p.get("name", f"phase{len(phases)}"), kind, duration,
                            bool(p.get("fixture", False)), target))
    if not phases:
        return []
    return phases


# ---------------------------------------------------------------------------
# trace


TRACE_FLOAT_FORMAT = repr


class SimTrace:
    """Uniformly sampled record of a run, one row per controller tick."""

    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []
        self.phase_spans = []        # (name, t_start, t_end)

    def append(self, values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match the trace header")
        self.rows.append(values)

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            for row in self.rows:
                f.write(",".join(v if isinstance(v, str) else TRACE_FLOAT_FORMAT(float(v))
                                 for v in row) + "\n")

    @staticmethod
    def from_csv(path) -> "SimTrace":
        with open(path) as f:
            header = f.readline().strip()
            if not header:
                raise ValueError(f"{path}: empty trace")
            trace = SimTrace(header.split(","))
            for line in f:
                line = line.strip()
                if not line:
                    continue
                values = []
                for i, tok in enumerate(line.split(",")):
                    if trace.columns[i] == "phase":
                        values.append(tok)
                    else:
                        values.append(float(tok))
                trace.append(values)
        spans = []
        if "phase" in trace.columns and trace.rows:
            t = trace.column("t")
            names = [row[trace.columns.index("phase")] for row in trace.rows]
            start = 0
            for i in range(1, len(names) + 1):
                if i == len(names) or names[i] != names[start]:
                    spans.append((names[start], float(t[start]), float(t[i - 1])))
                    start = i
        trace.phase_spans = spans
        return trace


def trace_columns(system: CoupledSystem) -> list:
    cols = ["t", "phase"]
    for name, model in system.agent_items:
        cols.extend(f"s_{name}_{i}" for i in range(model.n_joints))
    for name, model in system.agent_items:
        cols.extend(f"tau_{name}_{i}" for i in range(model.n_joints))
    cols.extend(["payload_x", "payload_y", "payload_z",
                 "payload_roll", "payload_pitch", "payload_yaw"])
    cols.extend(["ref_payload_x", "ref_payload_y", "ref_payload_z",
                 "ref_payload_roll", "ref_payload_pitch", "ref_payload_yaw"])
    cols.extend(["com_x", "com_y", "com_z", "ref_com_x", "ref_com_y", "ref_com_z"])
    for name, _ in system.agent_items:
        cols.extend([f"com_{name}_x", f"com_{name}_y", f"com_{name}_z"])
    for name, _ in system.agent_items:
        cols.append(f"tau_norm_{name}")
    cols.extend(["resid_momentum", "resid_payload", "qp_status", "qnu_norm"])
    return cols


# ---------------------------------------------------------------------------
# scenario runner


def _plan_states(system: CoupledSystem, joints: dict, payload_pose, foot_refs):
    states = []
    for name, model in system.agent_items:
        frame, ref = foot_refs[name]
        base = base_from_foot(model, joints[name], frame, ref)
        states.append(AgentState(base, joints[name]))
    if system.payload is not None:
        states.append(AgentState(payload_pose, np.zeros(0)))
    return states


def run_scenario(scenario: Scenario, gains, phases, config: SimConfig,
                 trace: SimTrace | None = None) -> SimTrace:
    """Execute a phase sequence; returns the tick-rate trace."""
    system = scenario.system
    agents = system.agent_items
    n_agents = len(agents)
    states = scenario.states_copy()

    reduced_system = assemble(agents, None,
                              [s.contact for s in system.environment_slots()
                               if s.body != PAYLOAD_BODY])
    contact_refs = {
        id(system): capture_contact_references(system, states),
        id(reduced_system): capture_contact_references(
            reduced_system, states[:n_agents]),
    }
    if scenario.support_system is not None:
        contact_refs[id(scenario.support_system)] = capture_contact_references(
            scenario.support_system, states)

    foot_refs = {}
    kins0 = system.kinematics(states)
    for slot in system.environment_slots():
        if slot.body != PAYLOAD_BODY:
            foot_refs[slot.body] = (slot.frame, kins0[slot.body].frame_pose(slot.frame))
    hand_grasps = {slot.body: (slot.frame, slot.contact.payload_frame)
                   for slot in system.grasp_slots()}

    plan_joints = {name: st.s.copy() for (name, _), st in zip(agents, states)}
    plan_payload = states[-1].base_pose if system.payload is not None else None

    if trace is None:
        trace = SimTrace(trace_columns(system))
    t = 0.0
    for phase in phases:
        if phase.fixture and scenario.support_system is None:
            raise SequenceError(f"phase {phase.name!r} needs a fixture, "
                                "but the scenario defines none")
        sim_system = scenario.support_system if phase.fixture else system

        if phase.kind == "transition" and phase.target is not None:
            target_joints = {n: np.asarray(phase.target["joints"][n], dtype=float)
                             for n, _ in agents}
            refs_full = make_references(system, _plan_states(system, plan_joints,
                                                             plan_payload, foot_refs),
                                        target_joints, phase.duration, foot_refs,
                                        hand_grasps, scenario.gravity)
        else:
            refs_full = HoldReferences(system, _plan_states(system, plan_joints,
                                                            plan_payload, foot_refs))

        if phase.fixture:
            controller = SharedController(reduced_system, gains, ReducedRefs(refs_full),
                                          scenario.gravity,
                                          contact_refs[id(reduced_system)])
        else:
            controller = SharedController(system, gains, refs_full, scenario.gravity,
                                          contact_refs[id(system)])

        n_ticks = int(round(phase.duration / config.controller_period))
        phase_start = t
        for tick in range(n_ticks):
            t_phase = t - phase_start
            ctrl_states = states[:n_agents] if phase.fixture else states
            out = controller.step(ctrl_states, t_phase)
            torques = out.torque_vector
            f_real = np.zeros(0)
            for _ in range(config.steps_per_tick):
                states, f_real, _ = step_dynamics(sim_system, states, torques, config,
                                                  contact_refs[id(sim_system)])
            _record(trace, system, states, out, refs_full, t, phase.name,
                    sim_system, contact_refs[id(sim_system)], t_phase)
            t += config.controller_period
        trace.phase_spans.append((phase.name, phase_start, t))

        if phase.kind == "transition" and phase.target is not None:
            plan_joints = {n: np.asarray(phase.target["joints"][n], dtype=float)
                           for n, _ in agents}
            if phase.target.get("payload_pose") is not None and system.payload is not None:
                plan_payload = phase.target["payload_pose"]
            if system.payload is not None:
                err = np.abs(states[-1].base_pose.position - plan_payload.position).max()
                if err > 0.05:
                    raise PhaseTimeout(
                        f"phase {phase.name!r} ended {err:.3f} m from its payload target")
    return trace


def _record(trace, system, states, out, refs, t, phase_name, sim_system, sim_refs,
            t_phase):
    sample = refs.sample(t_phase)
    row = [t, phase_name]
    for (name, _), st in zip(system.agent_items, states):
        row.extend(st.s.tolist())
    for name, _ in system.agent_items:
        tau = out.torques.get(name)
        row.extend(tau.tolist())
    if system.payload is not None:
        p_state = states[-1]
        row.extend(p_state.base_pose.position.tolist())
        row.extend(matrix_to_rpy(p_state.base_pose.rotation).tolist())
        if sample.payload_pos is not None:
            row.extend(sample.payload_pos.tolist())
            row.extend(matrix_to_rpy(sample.payload_rot).tolist())
        else:
            row.extend(p_state.base_pose.position.tolist())
            row.extend(matrix_to_rpy(p_state.base_pose.rotation).tolist())
    else:
        row.extend([0.0] * 12)
    kins = system.kinematics(states)
    com = np.zeros(3)
    for name, model in system.bodies:
        com += model.total_mass() * kins[name].com()
    com /= system.total_mass()
    row.extend(com.tolist())
    ref_com = sample.total_com if sample.total_com is not None else com
    row.extend(np.asarray(ref_com).tolist())
    for name, _ in system.agent_items:
        row.extend(kins[name].com().tolist())
    for name, _ in system.agent_items:
        row.append(float(np.linalg.norm(out.torques[name])))
    row.append(out.residual_momentum)
    row.append(out.residual_payload)
    row.append(0.0 if out.status == "optimal-hard" else 1.0)
    _, _, q_nu, _ = sim_system.constraint_matrix(states)
    row.append(float(np.linalg.norm(q_nu)))
    trace.append(row)
