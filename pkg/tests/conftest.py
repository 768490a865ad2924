import sys

import numpy as np
import pytest

from kapc.kernels import KernelSpec
from kapc.problem import ApcProblem, SolverConfig, make_block


def gaussian_fixture(seed, p=None, n=None, alpha=1e-2, bandwidth=1.0):
    """Random Gaussian-kernel problem with a curved dependence between the first two columns."""
    rng = np.random.default_rng(seed)
    p = p or 2 + seed % 2
    n = n or 20 + (7 * seed) % 21
    x = rng.standard_normal((n, p))
    x[:, 1] += 0.5 * x[:, 0] ** 2
    return [make_block(KernelSpec.gaussian(bandwidth), x[:, j], alpha) for j in range(p)]


def problem_from(blocks, **config):
    return ApcProblem(blocks, SolverConfig(**config))


@pytest.fixture
def blocks3():
    return gaussian_fixture(1, p=3, n=30, alpha=1e-2)


@pytest.fixture
def sobolev_blocks():
    rng = np.random.default_rng(7)
    x = rng.uniform(size=(40, 3))
    x[:, 2] = np.sin(3 * x[:, 0]) + x[:, 1] ** 2 + 0.05 * rng.standard_normal(40)
    return [make_block(KernelSpec.sobolev(2), x[:, j], 1e-3) for j in range(3)]


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdicts collected by ``test_acceptance``."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
