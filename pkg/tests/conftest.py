import numpy as np
import pytest

from latent_atlas.dynsys import SPLITS, NormalizationStats, SystemSpec, TrajectorySet, generate_dataset


def make_set(arrays, dt=0.01):
    """TrajectorySet around given (already normalized) split arrays."""
    d = arrays["train"].shape[2]
    spec = SystemSpec.default("pod_wake", dt=dt, T=arrays["train"].shape[1], n_traj=arrays["train"].shape[0])
    return TrajectorySet(splits=arrays, norm=NormalizationStats(np.zeros(d), np.ones(d)), system=spec)


@pytest.fixture
def constant_set():
    return make_set({s: np.full((20, 200, 3), 0.3) for s in SPLITS})


@pytest.fixture(scope="session")
def small_hopf():
    return generate_dataset(SystemSpec.default("hopf", T=80, n_traj=3, seed=1))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
