import sys
import numpy as np
import pytest

from manifold_sqp.manifold import product_retract
from manifold_sqp.rod import RodConfig, helix_initial


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_rod_state(cfg, rng, scale=0.05, kind="exponential"):
    """Helix start perturbed by a random tangent vector of norm ``scale``."""
    x0 = helix_initial(cfg)
    d = rng.standard_normal(x0.dim)
    return product_retract(x0, kind, scale * d / np.linalg.norm(d))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def small_rod():
    return RodConfig(n=8, g=(0.0, 0.0, 1000.0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
