import os

import numpy as np
import pytest

from colift.control import HoldReferences, load_gains
from colift.coupled import load_scenario
from colift.model import load_model
from colift.sim import capture_contact_references

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "colift", "data")


def data_path(*parts):
    return os.path.join(DATA, *parts)


@pytest.fixture(scope="session")
def planar_arm():
    return load_model(data_path("models", "planar_arm_4.json"))


@pytest.fixture(scope="session")
def mini_humanoid():
    return load_model(data_path("models", "mini_humanoid_8.json"))


@pytest.fixture(scope="session")
def lifter():
    return load_model(data_path("models", "lifter_16.json"))


@pytest.fixture(scope="session")
def chain():
    return load_model(data_path("models", "chain_4_planar.json"))


@pytest.fixture(scope="session")
def hold_scenario():
    return load_scenario(data_path("scenarios", "two_agent_hold.json"))


@pytest.fixture(scope="session")
def lift_scenario():
    return load_scenario(data_path("scenarios", "standard_lift.json"))


@pytest.fixture(scope="session")
def hold_setup(hold_scenario):
    """Standard two-agent hold: system, fresh-state factory, gains, refs."""
    system = hold_scenario.system
    gains = load_gains(data_path("gains", "default.json"), system)
    states = hold_scenario.states_copy()
    refs = HoldReferences(system, states)
    crefs = capture_contact_references(system, states)
    return {
        "scenario": hold_scenario,
        "system": system,
        "gains": gains,
        "refs": refs,
        "crefs": crefs,
        "fresh": hold_scenario.states_copy,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
