import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqfi.errors import NonTracelessDerivative
from cqfi.operators import SIGMA_X, SIGMA_Z
from cqfi.sld import lyapunov_residual, qfi, qfi_decompose, qfi_two_sum, solve_sld

from conftest import random_pair


def test_lyapunov_equation_solved(rng):
    for dim in (2, 3, 4):
        rho, drho = random_pair(rng, dim)
        sld = solve_sld(rho, drho)
        assert lyapunov_residual(sld, rho, drho) < 1e-10
        assert np.allclose(sld.L, sld.L.conj().T)


def test_qfi_two_routes_and_split(rng):
    for dim in (2, 3, 5):
        rho, drho = random_pair(rng, dim)
        sld = solve_sld(rho, drho)
        f = qfi(sld, rho)
        ic, c = qfi_decompose(sld)
        assert f == pytest.approx(qfi_two_sum(rho, drho), rel=1e-10)
        assert f == pytest.approx(ic + c, rel=1e-10)


def test_commuting_derivative_is_classical():
    rho = np.diag([0.7, 0.3]).astype(complex)
    drho = np.diag([0.1, -0.1]).astype(complex)
    sld = solve_sld(rho, drho)
    ic, c = qfi_decompose(sld)
    assert c == 0.0
    assert ic == pytest.approx(0.01 / 0.7 + 0.01 / 0.3)


def test_pure_state_rotation():
    # |psi(theta)> = exp(-i theta sigma_x/2)|0>: F_Q = Var(sigma_x) = 1
    psi = np.array([1.0, 0.0], dtype=complex)
    rho = np.outer(psi, psi.conj())
    drho = -0.5j * (SIGMA_X @ rho - rho @ SIGMA_X)
    sld = solve_sld(rho, drho)
    assert qfi(sld, rho) == pytest.approx(1.0)
    assert lyapunov_residual(sld, rho, drho) < 1e-12


def test_maximally_mixed_has_zero_coherent_part():
    rho = np.eye(2, dtype=complex) / 2
    drho = 0.1 * SIGMA_Z
    sld = solve_sld(rho, drho)
    ic, c = qfi_decompose(sld)
    assert c == 0.0 and ic == pytest.approx(qfi(sld, rho))


def test_degenerate_cluster_keeps_split_closed():
    rho = np.diag([0.4, 0.4, 0.2]).astype(complex)
    drho = np.zeros((3, 3), dtype=complex)
    drho[0, 1] = drho[1, 0] = 0.05
    drho[0, 2] = drho[2, 0] = 0.02
    sld = solve_sld(rho, drho)
    ic, c = qfi_decompose(sld)
    assert lyapunov_residual(sld, rho, drho) < 1e-12
    assert qfi(sld, rho) == pytest.approx(ic + c, rel=1e-12)


def test_trace_of_derivative_checked():
    with pytest.raises(NonTracelessDerivative):
        solve_sld(np.eye(2) / 2, 0.1 * np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_qfi_nonnegative_and_closed(dim, seed):
    rho, drho = random_pair(np.random.default_rng(seed), dim)
    sld = solve_sld(rho, drho)
    ic, c = qfi_decompose(sld)
    assert ic >= 0 and c >= 0
    assert qfi(sld, rho) == pytest.approx(ic + c, rel=1e-9, abs=1e-12)
