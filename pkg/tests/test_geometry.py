import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqfi.errors import InsufficientSample, NegativeSample
from cqfi.geometry import (
    GeometryLedger,
    action,
    delta,
    ensemble_fisher,
    ensemble_speed_limit,
    hierarchy_check,
    length,
    trajectory_rate,
    trajectory_speed_limit,
)
from cqfi.jumps import simulate_trajectory
from cqfi.lindblad import GKSLModel, evolve
from cqfi.models import DrivenQubitParams, build_driven_qubit, driven_qubit_initial_state, driven_qubit_rwa_hamiltonian
from cqfi.operators import SIGMA_X, SIGMA_Z, ket_expectation


def test_constant_fisher_saturates_cauchy_schwarz():
    t = np.linspace(0, 2, 201)
    f = np.full_like(t, 4.0)
    ell, j = length(f, t), action(f, t)
    assert ell[-1] == pytest.approx(2.0)
    assert j[-1] == pytest.approx(4.0)
    d = delta(ell, j, t)
    assert np.allclose(d.delta, 0.0, atol=1e-12)


def test_negative_sample_rejected():
    with pytest.raises(NegativeSample):
        length([1.0, -0.1], [0.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=2, max_size=60))
def test_action_dominates_length_squared(values):
    f = np.array(values)
    t = np.linspace(0, 3, f.size)
    led = GeometryLedger(t, f)
    assert led.cauchy_schwarz_margin() >= -1e-9 * max(1.0, led.action.max())
    d = delta(led.length, led.action, t)
    assert np.all(d.delta >= -1e-9 * max(1.0, f.max())) and np.all(d.ratio_ok)


def test_time_fisher_of_unitary_pure_state():
    # F_Q in time = 4 Var(H) for a pure state under unitary dynamics
    h = 0.4 * SIGMA_X
    sol = evolve(np.diag([1.0, 0.0]), GKSLModel(h), 2.0, 0.01)
    ens = ensemble_fisher(sol)
    assert np.allclose(ens.fisher, 4 * 0.16, rtol=1e-8)


def test_ensemble_rate_of_rwa_hamiltonian_vanishes():
    p = DrivenQubitParams()
    model = build_driven_qubit(p)
    sol = evolve(driven_qubit_initial_state(p), model, 20.0, 0.01)
    rec = ensemble_speed_limit(sol, driven_qubit_rwa_hamiltonian(p))
    assert np.max(np.abs(rec.rate)) <= 1e-12
    rec_z = ensemble_speed_limit(sol, SIGMA_Z)
    assert rec_z.pointwise_violations() == 0 and rec_z.integral_violations() == 0


def test_trajectory_rate_matches_finite_difference():
    p = DrivenQubitParams()
    model = build_driven_qubit(p)
    psi = np.array([0.6, 0.8j])
    dt = 1e-6
    heff = model.effective_hamiltonian(0.0)
    nxt = psi - 1j * dt * heff @ psi
    nxt /= np.linalg.norm(nxt)
    fd = (ket_expectation(SIGMA_Z, nxt) - ket_expectation(SIGMA_Z, psi)) / dt
    assert trajectory_rate(psi, SIGMA_Z, model, 0.0) == pytest.approx(fd, rel=1e-5)


def test_trajectory_speed_limit_with_own_fisher():
    # with the trajectory's own state as reference the no-jump segments obey the bound
    model = GKSLModel(0.3 * SIGMA_X)
    sol = evolve(np.diag([1.0, 0.0]), model, 5.0, 0.01)
    tr = simulate_trajectory(model, np.diag([1.0, 0.0]), sol.times, seed=0)
    f = ensemble_fisher(sol).fisher
    rec = trajectory_speed_limit(tr.states, sol.times, SIGMA_Z, model, f)
    assert rec.pointwise_violations() == 0


def test_hierarchy_needs_samples():
    t = np.linspace(0, 1, 11)
    with pytest.raises(InsufficientSample):
        hierarchy_check(np.ones(11), np.ones((5, 11)), t)


def test_hierarchy_constant_profiles():
    t = np.linspace(0, 1, 11)
    r = hierarchy_check(np.ones(11), np.ones((200, 11)), t)
    assert r.action_ge_length_sq and r.length_sq_ge_var
    assert r.var_length == pytest.approx(0.0) and r.action_gap == pytest.approx(0.0)
