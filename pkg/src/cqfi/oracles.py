"""Randomized exact-oracle checks on the closed-form models and the CQFI split.

Each function draws its own inputs from a caller-supplied generator and
returns a plain summary dict (worst errors, counts) so the same routine feeds
both the run audit and the test suite.
"""
from __future__ import annotations

import numpy as np

from .conditional import cauchy_schwarz_bound, cqfi_pure, cqfi_trace_form, sfi
from .models import (
    GaussianState,
    ThermalFieldSensorParams,
    gaussian_cqfi,
    gaussian_qfi,
    thermal_sensor_closed_forms,
    thermal_sensor_derivative,
    thermal_sensor_state,
)
from .operators import projector
from .sld import solve_sld

CLOSED_FORM_TOL = 1e-6
EXACT_ZERO_TOL = 1e-12
GAUSSIAN_REL_TOL = 1e-7
SLOPE_TOL = 0.01
INEQUALITY_SLACK = 1e-9
CLOSURE_TOL = 1e-9


def thermal_sensor_numeric(params: ThermalFieldSensorParams) -> dict[str, float]:
    """Populations and eigenstate-probe CQFI terms from the generic SLD pipeline.

    Eigenvalues come out in descending order, so index 0 is the lower level.
    """
    rho = thermal_sensor_state(params)
    sld = solve_sld(rho, thermal_sensor_derivative(params))
    vecs = sld.spectral.eigenvectors
    lo, hi = cqfi_pure(vecs[:, 0], sld, rho), cqfi_pure(vecs[:, 1], sld, rho)
    p = sld.spectral.eigenvalues
    return {
        "p_plus": float(p[1]), "p_minus": float(p[0]),
        "f_ic_plus": hi.ic, "f_ic_minus": lo.ic,
        "f_c_plus": hi.coh, "f_c_minus": lo.coh,
    }


def _closed_form_error(params: ThermalFieldSensorParams) -> float:
    num = thermal_sensor_numeric(params)
    ref = thermal_sensor_closed_forms(params)
    errs = [
        num["p_plus"] - ref.p_plus, num["p_minus"] - ref.p_minus,
        num["f_ic_plus"] - ref.f_ic_plus, num["f_ic_minus"] - ref.f_ic_minus,
        num["f_c_plus"] - ref.f_c, num["f_c_minus"] - ref.f_c,
    ]
    return float(np.max(np.abs(errs)))


def thermal_sensor_oracle(rng: np.random.Generator, draws: int = 50) -> dict:
    """Closed forms versus the generic pipeline over random ``(delta, theta, beta)``."""
    worst = 0.0
    for _ in range(draws):
        delta = rng.uniform(0.2, 2.0) * rng.choice([-1.0, 1.0])
        params = ThermalFieldSensorParams(delta, rng.uniform(-2.0, 2.0), rng.uniform(0.1, 3.0))
        worst = max(worst, _closed_form_error(params))
    zero_ic = zero_c = 0.0
    for _ in range(5):
        delta, beta = rng.uniform(0.2, 2.0), rng.uniform(0.1, 3.0)
        num = thermal_sensor_numeric(ThermalFieldSensorParams(delta, 0.0, beta))
        zero_ic = max(zero_ic, num["f_ic_plus"], num["f_ic_minus"])
        num = thermal_sensor_numeric(ThermalFieldSensorParams(delta, rng.uniform(-2.0, 2.0), 0.0))
        zero_c = max(zero_c, num["f_c_plus"], num["f_c_minus"])
    return {
        "draws": draws, "max_abs_error": worst,
        "max_f_ic_at_zero_theta": zero_ic, "max_f_c_at_zero_beta": zero_c,
        "passed": worst <= CLOSED_FORM_TOL and zero_ic <= EXACT_ZERO_TOL and zero_c <= EXACT_ZERO_TOL,
        "margin": min(CLOSED_FORM_TOL - worst, EXACT_ZERO_TOL - zero_ic, EXACT_ZERO_TOL - zero_c),
    }


def random_gaussian_state(rng: np.random.Generator) -> GaussianState:
    """Squeezed, rotated, thermalized Gaussian state (``det V >= 1/4`` by construction)."""
    nu = rng.uniform(1.0, 3.0)
    r, phi = rng.uniform(0.0, 1.0), rng.uniform(0.0, np.pi)
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    v = 0.5 * nu * rot @ np.diag([np.exp(-2 * r), np.exp(2 * r)]) @ rot.T
    mean = tuple(float(m) for m in rng.normal(0.0, 1.0, 2))
    return GaussianState(mean, float(v[0, 0]), float(v[1, 1]), float(v[0, 1]))


def loglog_slope(ts, values) -> float:
    return float(np.polyfit(np.log(ts), np.log(values), 1)[0])


def gaussian_oracle(rng: np.random.Generator, draws: int = 100) -> dict:
    """Outcome-independence of the phase-space CQFI and the ``t^2`` scaling."""
    worst = 0.0
    for _ in range(draws):
        state = random_gaussian_state(rng)
        t = rng.uniform(0.1, 10.0)
        alpha = state.mean[0] + rng.normal(0.0, 2.0)
        strength = rng.uniform(0.01, 2.0)
        ref = gaussian_qfi(state, t)
        closed = 4.0 * t * t * state.vx / state.det
        worst = max(worst, abs(gaussian_cqfi(state, t, strength, alpha) - ref) / ref, abs(closed - ref) / ref)
    state = random_gaussian_state(rng)
    ts = np.logspace(-1, 1, 21)
    slope = loglog_slope(ts, [gaussian_cqfi(state, t, 0.5, state.mean[0] + 0.3) for t in ts])
    return {
        "draws": draws, "max_rel_error": worst, "slope": slope,
        "passed": worst <= GAUSSIAN_REL_TOL and abs(slope - 2.0) <= SLOPE_TOL,
        "margin": min(GAUSSIAN_REL_TOL - worst, SLOPE_TOL - abs(slope - 2.0)),
    }


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_traceless_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (g + g.conj().T)
    return h - np.trace(h) / dim * np.eye(dim)


def random_ket(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return a / np.linalg.norm(a)


def sfi_bound_oracle(rng: np.random.Generator, draws: int = 10_000, dims=(2, 3, 4)) -> dict:
    """SFI of a rank-one outcome against the pure-probe CQFI, plus split closure.

    Also counts violations against the trace form and against the
    Cauchy-Schwarz bound ``Tr(Pi L rho L)/Tr(Pi rho)`` for diagnosis.
    """
    violations = trace_violations = cs_violations = 0
    worst_excess = worst_closure = 0.0
    for k in range(draws):
        dim = dims[k % len(dims)]
        rho, drho, a = random_density(rng, dim), random_traceless_hermitian(rng, dim), random_ket(rng, dim)
        sld = solve_sld(rho, drho)
        sample = cqfi_pure(a, sld, rho)
        pi = projector(a)
        s = sfi(pi, rho, drho)
        excess = s - sample.total
        worst_excess = max(worst_excess, excess)
        violations += int(excess > INEQUALITY_SLACK)
        trace_violations += int(s > cqfi_trace_form(pi, sld, rho) + INEQUALITY_SLACK)
        cs_violations += int(s > cauchy_schwarz_bound(pi, sld, rho) + INEQUALITY_SLACK)
        worst_closure = max(worst_closure, sample.closure_error / max(abs(sample.total), 1.0))
    return {
        "draws": draws, "violations": violations, "max_excess": worst_excess,
        "trace_form_violations": trace_violations, "cauchy_schwarz_violations": cs_violations,
        "max_closure_error": worst_closure,
        "passed": violations == 0 and worst_closure <= CLOSURE_TOL,
        "margin": min(-worst_excess + INEQUALITY_SLACK, CLOSURE_TOL - worst_closure),
    }
