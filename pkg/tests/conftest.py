import numpy as np
import pytest

from so3sync import dynamics, scenario, so3


def load_bundled(name):
    path = scenario.resolve_scenario_path(name)
    return scenario.load_scenario(path)


@pytest.fixture(scope="session")
def fig1():
    """(system, initial_state) of the bundled 7-agent benchmark."""
    return load_bundled("fig1").build()


@pytest.fixture(scope="session")
def chain3():
    """(system, initial_state) of the bundled 3-agent chain."""
    return load_bundled("chain3").build()


@pytest.fixture(scope="session")
def pair2():
    """(system, initial_state) of the bundled 2-agent pair."""
    return load_bundled("pair2").build()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(system, rng):
    """Random initial condition: uniform axes, angle U(0, pi), w U(-3, 3)."""
    n = system.n_agents
    attitudes = np.stack(
        [
            so3.rot_axis_angle(rng.uniform(0.0, np.pi), so3.random_axis(rng))
            for _ in range(n)
        ]
    )
    return dynamics.SystemState(attitudes, rng.uniform(-3.0, 3.0, (n, 3)))
