import numpy as np
import pytest

from cqfi.oracles import random_density, random_ket, random_traceless_hermitian


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pair(rng, dim):
    return random_density(rng, dim), random_traceless_hermitian(rng, dim)


__all__ = ["random_density", "random_ket", "random_traceless_hermitian", "random_pair"]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
