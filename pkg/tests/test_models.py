import math

import numpy as np
import pytest

from cqfi.conditional import cqfi_pure
from cqfi.errors import QuadratureNonConvergence
from cqfi.models import (
    VACUUM,
    DrivenQubitParams,
    GaussianState,
    ThermalFieldSensorParams,
    bose_occupation,
    build_driven_qubit,
    driven_qubit_initial_state,
    gaussian_cqfi,
    gaussian_cqfi_operator,
    gaussian_evolve_moments,
    gaussian_qfi,
    gaussian_sld_coefficients,
    temperature_for_occupation,
    thermal_sensor_closed_forms,
    thermal_sensor_derivative,
    thermal_sensor_state,
)
from cqfi.operators import SIGMA_MINUS, SIGMA_PLUS
from cqfi.oracles import thermal_sensor_numeric
from cqfi.sld import qfi, solve_sld


def test_driven_defaults():
    p = DrivenQubitParams()
    assert p.nbar == pytest.approx(0.5)
    assert temperature_for_occupation(1.0, 0.5) == pytest.approx(p.temperature)
    rho0 = driven_qubit_initial_state(p)
    assert rho0[0, 0].real == pytest.approx(0.1)
    model = build_driven_qubit(p)
    assert [c.label for c in model.channels] == ["-", "+"]
    assert np.allclose(model.channels[0].operator, math.sqrt(0.075) * SIGMA_MINUS)
    assert np.allclose(model.channels[1].operator, math.sqrt(0.025) * SIGMA_PLUS)


def test_detailed_balance_of_rates():
    p = DrivenQubitParams(temperature=0.7)
    ratio = p.absorption_rate / p.emission_rate
    assert ratio == pytest.approx(math.exp(-p.omega / p.temperature))
    ch = build_driven_qubit(p).channels
    assert ch[0].entropy_flow == pytest.approx(-ch[1].entropy_flow)


def test_zero_temperature_drops_absorption():
    p = DrivenQubitParams(temperature=0.0)
    assert bose_occupation(1.0, 0.0) == 0.0
    assert [c.label for c in build_driven_qubit(p).channels] == ["-"]


def test_sensor_closed_form_example():
    # delta = theta = beta = 1: Omega = sqrt(2), f_c = tanh^2(sqrt(2)/2) / 4
    p = ThermalFieldSensorParams(1.0, 1.0, 1.0)
    cf = thermal_sensor_closed_forms(p)
    assert cf.f_c == pytest.approx(0.25 * math.tanh(math.sqrt(2) / 2) ** 2)
    num = thermal_sensor_numeric(p)
    assert num["f_c_plus"] == pytest.approx(cf.f_c, abs=1e-8)
    assert num["p_plus"] == pytest.approx(cf.p_plus, abs=1e-12)
    assert num["f_ic_plus"] == pytest.approx(cf.f_ic_plus, abs=1e-8)


def test_sensor_qfi_matches_split():
    p = ThermalFieldSensorParams(0.7, -1.3, 2.0)
    cf = thermal_sensor_closed_forms(p)
    sld = solve_sld(thermal_sensor_state(p), thermal_sensor_derivative(p))
    f = qfi(sld, thermal_sensor_state(p))
    avg = cf.p_plus * (cf.f_ic_plus + cf.f_c) + cf.p_minus * (cf.f_ic_minus + cf.f_c)
    assert f == pytest.approx(avg, rel=1e-7)


def test_sensor_limits():
    p = ThermalFieldSensorParams(1.0, 0.0, 1.5)
    cf = thermal_sensor_closed_forms(p)
    assert cf.f_ic_plus == 0.0 and cf.f_ic_minus == 0.0
    cf0 = thermal_sensor_closed_forms(ThermalFieldSensorParams(1.0, 0.5, 0.0))
    assert cf0.f_c == 0.0 and cf0.p_plus == 0.5


def test_gaussian_vacuum_example():
    assert gaussian_qfi(VACUUM, 1.0) == pytest.approx(8.0)
    for alpha in (-3.0, 0.0, 0.7, 5.0):
        assert gaussian_cqfi(VACUUM, 1.0, 0.3, alpha) == pytest.approx(8.0, rel=1e-10)


def test_gaussian_sld_and_moyal_term():
    s = GaussianState((0.3, -0.2), 0.8, 0.6, 0.1)
    a, b = gaussian_sld_coefficients(s, 2.0)
    assert a == pytest.approx(4 * 0.1 / s.det) and b == pytest.approx(-4 * 0.8 / s.det)
    # the operator-ordered value depends on alpha and approaches the phase-space one
    v1 = gaussian_cqfi_operator(s, 2.0, 0.5, -1.0)
    v2 = gaussian_cqfi_operator(s, 2.0, 0.5, 2.0)
    assert abs(v1 - v2) > 1e-3
    weak = gaussian_cqfi_operator(s, 2.0, 1e-6, 2.0)
    assert weak == pytest.approx(gaussian_qfi(s, 2.0), rel=1e-4)


def test_gaussian_operator_form_against_fock_space():
    # brute-force Re Tr(rho Pi L^2)/Tr(rho Pi) in a truncated Fock basis
    from scipy.linalg import expm

    n = 60
    a = np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)
    x = (a + a.conj().T) / np.sqrt(2)
    p = (a - a.conj().T) / (1j * np.sqrt(2))
    alpha0 = 0.4 + 0.3j
    disp = expm(alpha0 * a.conj().T - np.conj(alpha0) * a)
    vac = np.zeros(n, dtype=complex)
    vac[0] = 1.0
    psi = disp @ vac
    rho = np.outer(psi, psi.conj())
    s = GaussianState((math.sqrt(2) * alpha0.real, math.sqrt(2) * alpha0.imag), 0.5, 0.5)
    t, strength, alpha = 0.7, 0.2, 1.1
    ca, cb = gaussian_sld_coefficients(s, t)
    L = ca * (x - s.mean[0] * np.eye(n)) + cb * (p - s.mean[1] * np.eye(n))
    w, v = np.linalg.eigh(x)
    pi = (v * np.exp(-2 * strength * (w - alpha) ** 2)) @ v.conj().T
    ref = np.trace(rho @ pi @ L @ L).real / np.trace(rho @ pi).real
    assert gaussian_cqfi_operator(s, t, strength, alpha) == pytest.approx(ref, rel=1e-6)


def test_gaussian_quadrature_guard():
    s = GaussianState((0.0, 0.0), 0.5, 0.5)
    with pytest.raises(ValueError):
        gaussian_cqfi(s, 1.0, 0.0, 0.0)
    assert issubclass(QuadratureNonConvergence, RuntimeError)


def test_uncertainty_bound_enforced():
    with pytest.raises(ValueError):
        GaussianState((0, 0), 0.1, 0.1)


def test_moment_flow_periodic():
    s = GaussianState((1.0, 0.5), 0.9, 0.4, 0.1)
    back = gaussian_evolve_moments(s, force=0.3, omega=2.0, t=math.pi)
    assert back.mean == pytest.approx(s.mean)
    assert back.vx == pytest.approx(s.vx) and back.vxp == pytest.approx(s.vxp)


def test_probe_split_for_sensor_eigenstates():
    p = ThermalFieldSensorParams(1.0, 1.0, 1.0)
    rho = thermal_sensor_state(p)
    sld = solve_sld(rho, thermal_sensor_derivative(p))
    s = cqfi_pure(sld.spectral.eigenvectors[:, 1], sld, rho)
    assert s.cross == pytest.approx(0.0, abs=1e-14)
