"""GKSL master equation: model container, right-hand side and RK4 propagation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, PositivityLost, StepTooLarge
from .operators import as_density, as_hermitian, as_matrix

TRACE_DRIFT_TOL = 1e-10
NEGATIVITY_TOL = 1e-8
MAX_RATE_STEP = 0.1


@dataclass(frozen=True)
class JumpChannel:
    """A jump operator ``L_k`` with its label.

    ``entropy_flow`` is the entropy delivered to the environment per jump
    (``None`` when the channel has no time-reversed partner).
    """

    label: str
    operator: np.ndarray
    entropy_flow: float | None = None

    @property
    def rate_operator(self) -> np.ndarray:
        return self.operator.conj().T @ self.operator


@dataclass(frozen=True)
class GKSLModel:
    """Hamiltonian (constant matrix or callable of t) plus a list of jump channels."""

    hamiltonian: np.ndarray | Callable[[float], np.ndarray]
    channels: tuple[JumpChannel, ...] = ()
    dim: int = field(init=False)

    def __post_init__(self):
        channels = tuple(self.channels)
        if callable(self.hamiltonian):
            dim = as_hermitian(self.hamiltonian(0.0), "H(0)").shape[0]
        else:
            h = as_hermitian(self.hamiltonian, "H")
            h.setflags(write=False)
            object.__setattr__(self, "hamiltonian", h)
            dim = h.shape[0]
        for ch in channels:
            op = as_matrix(ch.operator, f"L[{ch.label}]")
            if op.shape != (dim, dim):
                raise DimensionMismatch(f"jump operator {ch.label!r} has shape {op.shape}, expected {(dim, dim)}")
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "dim", dim)

    def H(self, t: float) -> np.ndarray:
        if callable(self.hamiltonian):
            return as_hermitian(self.hamiltonian(t), "H(t)")
        return self.hamiltonian

    @property
    def time_dependent(self) -> bool:
        return callable(self.hamiltonian)

    @property
    def jump_operators(self) -> list[np.ndarray]:
        return [ch.operator for ch in self.channels]

    def decay_operator(self) -> np.ndarray:
        """K = sum_k L_k^dag L_k."""
        k = np.zeros((self.dim, self.dim), dtype=complex)
        for ch in self.channels:
            k += ch.rate_operator
        return k

    def effective_hamiltonian(self, t: float) -> np.ndarray:
        return self.H(t) - 0.5j * self.decay_operator()

    def max_rate(self) -> float:
        """Largest total jump rate over all states (top eigenvalue of K)."""
        if not self.channels:
            return 0.0
        return float(np.linalg.eigvalsh(self.decay_operator())[-1])


def _check_rho(rho, model: GKSLModel) -> np.ndarray:
    r = as_matrix(rho, "rho")
    if r.shape != (model.dim, model.dim):
        raise DimensionMismatch(f"rho has shape {r.shape}, model dim is {model.dim}")
    return r


def dissipator(rho, model: GKSLModel) -> np.ndarray:
    """D[rho] = sum_k L rho L^dag - 1/2 {L^dag L, rho}."""
    r = _check_rho(rho, model)
    out = np.zeros_like(r)
    for ch in model.channels:
        L = ch.operator
        K = ch.rate_operator
        out += L @ r @ L.conj().T - 0.5 * (K @ r + r @ K)
    return out


def gksl_rhs(rho, t: float, model: GKSLModel) -> np.ndarray:
    """-i[H(t), rho] + D[rho], returned exactly Hermitian."""
    r = _check_rho(rho, model)
    H = model.H(t)
    out = -1j * (H @ r - r @ H) + dissipator(r, model)
    return 0.5 * (out + out.conj().T)


@dataclass(frozen=True)
class EnsembleSolution:
    times: np.ndarray
    states: np.ndarray  # (n, d, d)
    derivatives: np.ndarray  # (n, d, d), gksl_rhs at each grid point
    model: GKSLModel

    def __post_init__(self):
        for a in (self.times, self.states, self.derivatives):
            a.setflags(write=False)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0


def time_grid(t_final: float, dt: float) -> np.ndarray:
    """Uniform grid ``i * dt`` for ``i = 0..round(t_final/dt)``."""
    n = int(round(t_final / dt))
    return np.arange(n + 1) * dt


def evolve(rho0, model: GKSLModel, t_final: float, dt: float, *, check: bool = True) -> EnsembleSolution:
    """Fixed-step RK4 solution of the GKSL equation on ``time_grid(t_final, dt)``.

    Raises
    ------
    StepTooLarge
        If ``dt * max_rate > 0.1``.
    PositivityLost
        If an eigenvalue drops below -1e-8 or the per-step trace drift exceeds 1e-10.
    """
    if dt <= 0:
        raise StepTooLarge(f"dt must be positive, got {dt}")
    if dt * model.max_rate() > MAX_RATE_STEP:
        raise StepTooLarge(f"dt * max_rate = {dt * model.max_rate():.3g} exceeds {MAX_RATE_STEP}")
    rho = as_density(rho0).astype(complex)
    if rho.shape[0] != model.dim:
        raise DimensionMismatch(f"rho0 has dim {rho.shape[0]}, model dim is {model.dim}")
    times = time_grid(t_final, dt)
    n = times.shape[0]
    states = np.empty((n, model.dim, model.dim), dtype=complex)
    derivs = np.empty_like(states)
    states[0] = rho
    for i in range(n - 1):
        t = times[i]
        k1 = gksl_rhs(rho, t, model)
        derivs[i] = k1
        k2 = gksl_rhs(rho + 0.5 * dt * k1, t + 0.5 * dt, model)
        k3 = gksl_rhs(rho + 0.5 * dt * k2, t + 0.5 * dt, model)
        k4 = gksl_rhs(rho + dt * k3, t + dt, model)
        new = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        new = 0.5 * (new + new.conj().T)
        if check:
            drift = abs(np.trace(new).real - np.trace(rho).real)
            if drift > TRACE_DRIFT_TOL:
                raise PositivityLost(f"trace drift {drift:.3e} at t={times[i + 1]:.6g}")
            lo = np.linalg.eigvalsh(new)[0]
            if lo < -NEGATIVITY_TOL:
                raise PositivityLost(f"eigenvalue {lo:.3e} at t={times[i + 1]:.6g}")
        rho = new
        states[i + 1] = rho
    derivs[n - 1] = gksl_rhs(rho, times[n - 1], model)
    return EnsembleSolution(times, states, derivs, model)


def steady_state_residual(rho, model: GKSLModel, t: float = 0.0) -> float:
    return float(np.linalg.norm(gksl_rhs(rho, t, model)))


def lindblad_channels(ops: Sequence[np.ndarray], labels: Sequence[str] | None = None) -> tuple[JumpChannel, ...]:
    labels = labels or [str(k) for k in range(len(ops))]
    return tuple(JumpChannel(lab, np.asarray(op, dtype=complex)) for lab, op in zip(labels, ops))
