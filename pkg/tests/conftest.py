import math

import numpy as np
import pytest

from weyl_arcs import ModelParams

ACCEPTANCE_LINES = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def weyl_free():
    """simplified(1, 0, 0, 0): four nodes at (-pi/4, +-pi/2, +-pi/2)."""
    return ModelParams.simplified(1.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def nr_params():
    return ModelParams.simplified(1.0, 0.4, 0.0, math.pi / 2)


def random_params(rng, type_one=True):
    amps = rng.uniform(0.1, 1.5, 10)
    phases = rng.uniform(0, 2 * math.pi, 10)
    if type_one:
        amps[5], amps[8], amps[9] = amps[4], amps[6], amps[7]
        phases[5] = phases[4] + math.pi
        phases[8] = phases[6] + math.pi
        phases[9] = phases[7] + math.pi
    return ModelParams(tuple(amps), tuple(phases), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5))


FIG2_SNAPSHOTS = (2.0, 4.0, 6.0, 8.0, 10.0, 60.0)


@pytest.fixture(scope="session")
def fig2_run():
    """Configuration II, one emitter at the centre of the perp- facet of the default slab block.

    Runs to tJ = 60 once per session; returns (lattice, site, trajectory, wall seconds).
    """
    import time

    from weyl_arcs.scenarios import facet_emitter_run, preset

    t0 = time.perf_counter()
    lattice, site, traj = facet_emitter_run(preset("II"), None, 0.5, 60.0, FIG2_SNAPSHOTS, 0.02, 301)
    return lattice, site, traj, time.perf_counter() - t0
