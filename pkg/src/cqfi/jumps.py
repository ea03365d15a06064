"""Quantum-jump (Monte Carlo wave function) unraveling of a GKSL model.

Each step of length ``dt`` draws one uniform number ``u``. Channel ``k`` fires
when ``u`` falls in its slice of the stacked interval of widths
``||L_k psi||^2 dt``; otherwise the state is propagated with the second-order
expansion of ``exp(-i H_eff dt)`` and renormalized.

Every trajectory owns a counter-based Philox stream keyed by
``(master_seed, index)``, so ensembles are reproducible independently of how
trajectories are batched.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptySample, NormCollapse, StepTooLarge
from .lindblad import GKSLModel
from .operators import SpectralState, spectral_density

MAX_STEP_JUMP_PROB = 0.1
NORM_COLLAPSE_TOL = 1e-6
_CHUNK = 1024


def trajectory_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def _matvec(m: np.ndarray, psi: np.ndarray) -> np.ndarray:
    # explicit broadcast-and-sum keeps results bitwise independent of batch size
    return (m[None, :, :] * psi[:, None, :]).sum(axis=-1)


class StepKernel:
    """Vectorized first-order jump step for a batch of kets of shape ``(B, d)``."""

    def __init__(self, model: GKSLModel, dt: float):
        self.model = model
        self.dt = float(dt)
        self.ops = np.array(model.jump_operators, dtype=complex).reshape(-1, model.dim, model.dim)
        self.labels = [ch.label for ch in model.channels]
        self._static = None if model.time_dependent else self._propagator(0.0)

    def _propagator(self, t: float) -> np.ndarray:
        a = -1j * self.model.effective_hamiltonian(t) * self.dt
        return np.eye(self.model.dim) + a + 0.5 * (a @ a)

    def propagator(self, t: float) -> np.ndarray:
        return self._static if self._static is not None else self._propagator(t)

    def jump_probabilities(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel jump probabilities ``(B, K)`` and the unnormalized ``L_k psi``."""
        if self.ops.shape[0] == 0:
            return np.zeros((psi.shape[0], 0)), np.zeros((psi.shape[0], 0, psi.shape[1]), dtype=complex)
        lpsi = (self.ops[None, :, :, :] * psi[:, None, None, :]).sum(axis=-1)
        return (np.abs(lpsi) ** 2).sum(axis=-1) * self.dt, lpsi

    def step(self, psi: np.ndarray, t: float, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance every ket by one step; returns new kets and channel indices (-1 = no jump)."""
        probs, lpsi = self.jump_probabilities(psi)
        nb = psi.shape[0]
        channel = np.full(nb, -1, dtype=np.int64)
        if probs.shape[1]:
            total = probs.sum(axis=1)
            if total.max() > MAX_STEP_JUMP_PROB:
                raise StepTooLarge(f"jump probability per step {total.max():.3g} exceeds {MAX_STEP_JUMP_PROB}")
            cum = np.cumsum(probs, axis=1)
            jumped = u < cum[:, -1]
            channel[jumped] = np.argmax(u[jumped, None] < cum[jumped], axis=1)
        out = _matvec(self.propagator(t), psi)
        idx = np.flatnonzero(channel >= 0)
        if idx.size:
            out[idx] = lpsi[idx, channel[idx]]
        norms = np.sqrt((np.abs(out) ** 2).sum(axis=1))
        if norms.min() < NORM_COLLAPSE_TOL:
            raise NormCollapse(f"state norm {norms.min():.3e} before renormalization")
        return out / norms[:, None], channel


def sample_initial(rho0: SpectralState, rng: np.random.Generator | float) -> tuple[int, np.ndarray]:
    """Draw an eigenstate ``|n0>`` of ``rho0`` with probability ``p_n0``.

    ``rng`` may be a generator or an already drawn uniform number.
    """
    u = rng.random() if isinstance(rng, np.random.Generator) else float(rng)
    n0 = _initial_index(rho0.eigenvalues, np.array([u]))[0]
    return int(n0), np.array(rho0.eigenvectors[:, n0])


def _initial_index(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(p)
    cum = cum / cum[-1]
    return np.minimum(np.searchsorted(cum, u, side="right"), len(p) - 1)


def jump_step(psi, t: float, dt: float, model: GKSLModel, rng) -> tuple[np.ndarray, str | None]:
    """One quantum-jump step for a single ket; returns the new ket and the fired channel label."""
    kernel = StepKernel(model, dt)
    u = rng.random() if isinstance(rng, np.random.Generator) else float(rng)
    new, ch = kernel.step(np.asarray(psi, dtype=complex)[None, :], t, np.array([u]))
    return new[0], (kernel.labels[ch[0]] if ch[0] >= 0 else None)


@dataclass(frozen=True)
class Trajectory:
    seed: int
    index: int
    times: np.ndarray
    states: np.ndarray  # (n, d)
    jumps: tuple[tuple[int, str], ...]
    initial_index: int

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def to_csv(self, path: str | Path) -> None:
        d = self.states.shape[1]
        by_step = dict(self.jumps)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{part}_{k}" for k in range(d) for part in ("re", "im")] + ["jump_flag", "channel"])
            for i, t in enumerate(self.times):
                amps = [f"{x:.17g}" for a in self.states[i] for x in (a.real, a.imag)]
                label = by_step.get(i)
                w.writerow([f"{t:.17g}", *amps, int(label is not None), label or ""])


StepCallback = Callable[[int, np.ndarray], None]


def run_batch(
    model: GKSLModel,
    rho0: SpectralState,
    times: np.ndarray,
    master_seed: int,
    indices: Sequence[int],
    *,
    on_step: StepCallback | None = None,
    record: bool = False,
) -> dict:
    """Propagate the trajectories ``indices`` of ensemble ``master_seed`` together.

    ``on_step(i, psi)`` is called with the ``(B, d)`` kets at every grid index.
    Returns the initial indices, jump records and, with ``record=True``, the
    full state history of shape ``(n, B, d)``.
    """
    gens = [trajectory_rng(master_seed, k) for k in indices]
    nb, n = len(gens), times.shape[0]
    dt = float(times[1] - times[0]) if n > 1 else 0.0
    n0 = _initial_index(rho0.eigenvalues, np.array([g.random() for g in gens]))
    psi = np.ascontiguousarray(rho0.eigenvectors[:, n0].T)
    kernel = StepKernel(model, dt)
    history = np.empty((n, nb, model.dim), dtype=complex) if record else None
    jumps: list[list[tuple[int, str]]] = [[] for _ in range(nb)]
    if record:
        history[0] = psi
    if on_step is not None:
        on_step(0, psi)
    u_block = None
    for i in range(n - 1):
        j = i % _CHUNK
        if j == 0:
            m = min(_CHUNK, n - 1 - i)
            u_block = np.stack([g.random(m) for g in gens])
        psi, ch = kernel.step(psi, times[i], u_block[:, j])
        for b in np.flatnonzero(ch >= 0):
            jumps[b].append((i + 1, kernel.labels[ch[b]]))
        if record:
            history[i + 1] = psi
        if on_step is not None:
            on_step(i + 1, psi)
    return {"initial": n0, "jumps": jumps, "history": history}


def simulate_trajectory(model: GKSLModel, rho0, times: np.ndarray, seed: int, index: int = 0) -> Trajectory:
    """Single trajectory; bit-identical to the same member of a batched ensemble."""
    spec = rho0 if isinstance(rho0, SpectralState) else spectral_density(rho0)
    out = run_batch(model, spec, times, seed, [index], record=True)
    states = out["history"][:, 0, :]
    states.setflags(write=False)
    return Trajectory(int(seed), int(index), times, states, tuple(out["jumps"][0]), int(out["initial"][0]))


def simulate_ensemble(model: GKSLModel, rho0, times: np.ndarray, n_trajs: int, master_seed: int) -> list[Trajectory]:
    spec = rho0 if isinstance(rho0, SpectralState) else spectral_density(rho0)
    out = run_batch(model, spec, times, master_seed, range(n_trajs), record=True)
    trajs = []
    for b in range(n_trajs):
        states = np.array(out["history"][:, b, :])
        states.setflags(write=False)
        trajs.append(Trajectory(int(master_seed), b, times, states, tuple(out["jumps"][b]), int(out["initial"][b])))
    return trajs


def ensemble_average_state(trajectories: Sequence[Trajectory]) -> np.ndarray:
    """Sample mean of ``|psi><psi|`` at every grid point, shape ``(n, d, d)``, unit trace."""
    if not trajectories:
        raise EmptySample("no trajectories")
    stack = np.stack([tr.states for tr in trajectories])  # (N, n, d)
    rho = np.einsum("bti,btj->tij", stack, stack.conj()) / stack.shape[0]
    tr = np.trace(rho, axis1=1, axis2=2).real
    return rho / tr[:, None, None]
