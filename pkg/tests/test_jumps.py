import numpy as np
import pytest

from cqfi.errors import NormCollapse, StepTooLarge
from cqfi.jumps import (
    StepKernel,
    ensemble_average_state,
    jump_step,
    run_batch,
    sample_initial,
    simulate_ensemble,
    simulate_trajectory,
    trajectory_rng,
)
from cqfi.lindblad import GKSLModel, JumpChannel, evolve, time_grid
from cqfi.models import DrivenQubitParams, build_driven_qubit, driven_qubit_initial_state
from cqfi.operators import SIGMA_MINUS, SIGMA_X, spectral_density, trace_distance


@pytest.fixture
def qubit():
    p = DrivenQubitParams()
    return build_driven_qubit(p), driven_qubit_initial_state(p)


def test_streams_are_independent_of_batching(qubit):
    model, rho0 = qubit
    times = time_grid(5.0, 0.01)
    single = simulate_trajectory(model, rho0, times, seed=7, index=3)
    batch = simulate_ensemble(model, rho0, times, 6, master_seed=7)
    assert np.array_equal(single.states, batch[3].states)
    assert single.jumps == batch[3].jumps


def test_reproducible_and_seed_sensitive():
    a = trajectory_rng(1, 0).random(5)
    assert np.array_equal(a, trajectory_rng(1, 0).random(5))
    assert not np.array_equal(a, trajectory_rng(1, 1).random(5))
    assert not np.array_equal(a, trajectory_rng(2, 0).random(5))


def test_forced_jump_and_no_jump():
    model = GKSLModel(np.zeros((2, 2)), (JumpChannel("-", np.sqrt(0.5) * SIGMA_MINUS),))
    up = np.array([1.0, 0.0], dtype=complex)
    psi, label = jump_step(up, 0.0, 0.1, model, 0.0)
    assert label == "-" and np.allclose(np.abs(psi), [0, 1])
    psi, label = jump_step(up, 0.0, 0.1, model, 0.99)
    assert label is None and np.allclose(np.abs(psi), [1, 0])


def test_no_jump_renormalizes_superposition():
    model = GKSLModel(np.zeros((2, 2)), (JumpChannel("-", np.sqrt(0.5) * SIGMA_MINUS),))
    psi0 = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
    psi, label = jump_step(psi0, 0.0, 0.1, model, 0.99)
    assert label is None
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert abs(psi[0]) < abs(psi[1])  # no-jump evolution drains the decaying level


def test_step_probability_guard():
    model = GKSLModel(np.zeros((2, 2)), (JumpChannel("-", 2.0 * SIGMA_MINUS),))
    with pytest.raises(StepTooLarge):
        StepKernel(model, 0.1).step(np.array([[1.0, 0.0]], dtype=complex), 0.0, np.array([0.5]))


def test_norm_collapse():
    # a jump operator annihilating the state it fires on
    weird = np.array([[0, 0], [1e-9, 0]], dtype=complex)
    model = GKSLModel(np.zeros((2, 2)), (JumpChannel("w", weird),))
    with pytest.raises(NormCollapse):
        StepKernel(model, 0.01).step(np.array([[1.0, 0.0]], dtype=complex), 0.0, np.array([0.0]))


def test_initial_sampling_follows_populations():
    spec = spectral_density(np.diag([0.25, 0.75]))
    n0, psi = sample_initial(spec, 0.1)
    assert n0 == 0 and np.allclose(psi, spec.eigenvectors[:, 0])
    n0, _ = sample_initial(spec, 0.9)
    assert n0 == 1


def test_ensemble_average_reproduces_gksl(qubit):
    model, rho0 = qubit
    sol = evolve(rho0, model, 20.0, 0.01)
    trajs = simulate_ensemble(model, rho0, sol.times, 2000, master_seed=3)
    avg = ensemble_average_state(trajs)
    worst = max(trace_distance(a, b) for a, b in zip(avg, sol.states))
    assert worst <= 5 / np.sqrt(2000)


def test_closed_dynamics_trajectory_is_deterministic():
    model = GKSLModel(0.3 * SIGMA_X)
    times = time_grid(3.0, 0.01)
    out = run_batch(model, spectral_density(np.diag([1.0, 0.0])), times, 1, [0, 1], record=True)
    assert out["jumps"] == [[], []]
    assert np.allclose(out["history"][:, 0], out["history"][:, 1])


def test_trajectory_csv_roundtrip(tmp_path, qubit):
    model, rho0 = qubit
    tr = simulate_trajectory(model, rho0, time_grid(1.0, 0.1), seed=5)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)
    assert np.allclose(data["re_0"] + 1j * data["im_0"], tr.states[:, 0], rtol=0, atol=1e-16)
