"""Concrete physical models.

* driven thermal qubit in the rotating frame (jump unraveling workhorse);
* thermal qubit used as a transverse-field sensor (closed-form oracle);
* displaced Gaussian state used as a force sensor (closed form + quadrature).

Conventions: hbar = k_B = 1. Qubit basis order is (excited, ground), so
``sigma_z = diag(1, -1)`` and ``sigma_minus = |1><0|``. Gaussian states use
``x = (a + a^dag)/sqrt(2)``, ``p = (a - a^dag)/(i sqrt(2))``, vacuum
covariance ``diag(1/2, 1/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import QuadratureNonConvergence, SingularCovariance
from .lindblad import GKSLModel, JumpChannel
from .operators import SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z

# ---------------------------------------------------------------------------
# driven thermal qubit


def bose_occupation(omega: float, temperature: float) -> float:
    """Mean thermal photon number ``1/(exp(omega/T) - 1)``; 0 at ``T = 0``."""
    if temperature <= 0:
        return 0.0
    return 1.0 / math.expm1(omega / temperature)


def temperature_for_occupation(omega: float, nbar: float) -> float:
    return omega / math.log1p(1.0 / nbar)


@dataclass(frozen=True)
class DrivenQubitParams:
    omega: float = 1.0
    epsilon: float = 0.1
    gamma0: float = 0.05
    temperature: float = 1.0 / math.log(3.0)  # nbar = 0.5

    def __post_init__(self):
        if self.omega <= 0 or self.epsilon <= 0 or self.gamma0 < 0 or self.temperature < 0:
            raise ValueError(f"invalid driven-qubit parameters {self}")

    @property
    def nbar(self) -> float:
        return bose_occupation(self.omega, self.temperature)

    @property
    def emission_rate(self) -> float:
        return self.gamma0 * (self.nbar + 1.0)

    @property
    def absorption_rate(self) -> float:
        return self.gamma0 * self.nbar


def build_driven_qubit(params: DrivenQubitParams) -> GKSLModel:
    """Rotating-frame model ``H = eps sigma_x`` with emission/absorption channels.

    The absorption channel is omitted at zero temperature and both channels
    when ``gamma0 = 0`` (closed, purely Hamiltonian dynamics).
    """
    ds = params.omega / params.temperature if params.temperature > 0 else None
    if params.gamma0 == 0:
        return GKSLModel(params.epsilon * SIGMA_X, ())
    channels = [JumpChannel("-", math.sqrt(params.emission_rate) * SIGMA_MINUS, ds)]
    if params.nbar > 0:
        channels.append(JumpChannel("+", math.sqrt(params.absorption_rate) * SIGMA_PLUS, -ds))
    return GKSLModel(params.epsilon * SIGMA_X, tuple(channels))


def driven_qubit_rwa_hamiltonian(params: DrivenQubitParams) -> np.ndarray:
    return params.epsilon * SIGMA_X


def gibbs_state(hamiltonian: np.ndarray, temperature: float) -> np.ndarray:
    """``exp(-H/T)/Z``; ground-state projector at ``T = 0``."""
    w, v = np.linalg.eigh(hamiltonian)
    if temperature <= 0:
        return np.outer(v[:, 0], v[:, 0].conj())
    x = np.exp(-(w - w.min()) / temperature)
    return (v * (x / x.sum())) @ v.conj().T


def driven_qubit_initial_state(params: DrivenQubitParams) -> np.ndarray:
    """Gibbs state of the bare Hamiltonian ``omega sigma_z`` at the bath temperature."""
    return gibbs_state(params.omega * SIGMA_Z, params.temperature)


def bath_equilibrium(params: DrivenQubitParams) -> np.ndarray:
    """Undriven fixed point of the rate equations: excited weight ``nbar/(2 nbar + 1)``."""
    n = params.nbar
    pe = n / (2.0 * n + 1.0)
    return np.diag([pe, 1.0 - pe]).astype(complex)


# ---------------------------------------------------------------------------
# thermal qubit field sensor


@dataclass(frozen=True)
class ThermalFieldSensorParams:
    delta: float
    theta: float
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.rabi <= 0:
            raise ValueError("generalized Rabi frequency must be positive")

    @property
    def rabi(self) -> float:
        return math.hypot(self.delta, self.theta)


def field_sensor_hamiltonian(delta: float, theta: float) -> np.ndarray:
    """``(delta sigma_z + theta sigma_x)/2``, eigenvalues ``+-Omega/2``."""
    return 0.5 * (delta * SIGMA_Z + theta * SIGMA_X)


def thermal_sensor_state(params: ThermalFieldSensorParams, theta: float | None = None) -> np.ndarray:
    th = params.theta if theta is None else theta
    h = field_sensor_hamiltonian(params.delta, th)
    rho = expm(-params.beta * h)
    return rho / np.trace(rho).real


def thermal_sensor_derivative(params: ThermalFieldSensorParams, step: float | None = None) -> np.ndarray:
    """``d rho / d theta`` by fourth-order central differences."""
    h = 1e-4 * max(1.0, abs(params.theta)) if step is None else step
    r = lambda x: thermal_sensor_state(params, params.theta + x)  # noqa: E731
    d = (8.0 * (r(h) - r(-h)) - (r(2 * h) - r(-2 * h))) / (12.0 * h)
    d = 0.5 * (d + d.conj().T)
    return d - np.trace(d) / d.shape[0] * np.eye(d.shape[0])


@dataclass(frozen=True)
class ThermalSensorClosedForms:
    p_plus: float  # population of the upper level E = +Omega/2
    p_minus: float
    f_ic_plus: float
    f_ic_minus: float
    f_c: float


def thermal_sensor_closed_forms(params: ThermalFieldSensorParams) -> ThermalSensorClosedForms:
    """Populations and eigenstate-probe CQFI terms of the thermal field sensor.

    ``f_c`` carries ``tanh^2``: the coherent coefficient
    ``2 (p_n - p_k)/(p_n + p_k) = -+tanh`` enters squared, and the eigenbasis
    rotates at ``|<k|dn>| = delta / (2 Omega^2)``.
    """
    om = params.rabi
    th = math.tanh(0.5 * params.beta * om)
    pref = (params.beta * params.theta) ** 2 / (4.0 * om**2)
    return ThermalSensorClosedForms(
        p_plus=0.5 * (1.0 - th),
        p_minus=0.5 * (1.0 + th),
        f_ic_plus=pref * (1.0 + th) ** 2,
        f_ic_minus=pref * (1.0 - th) ** 2,
        f_c=params.delta**2 / om**4 * th**2,
    )


# ---------------------------------------------------------------------------
# Gaussian force sensor


@dataclass(frozen=True)
class GaussianState:
    mean: tuple[float, float]
    vx: float
    vp: float
    vxp: float = 0.0

    def __post_init__(self):
        if self.vx <= 0 or self.vp <= 0:
            raise SingularCovariance("variances must be positive")
        if self.det < 0.25 - 1e-12:
            raise ValueError(f"covariance violates the uncertainty bound: det V = {self.det}")

    @property
    def covariance(self) -> np.ndarray:
        return np.array([[self.vx, self.vxp], [self.vxp, self.vp]])

    @property
    def det(self) -> float:
        return self.vx * self.vp - self.vxp**2


VACUUM = GaussianState((0.0, 0.0), 0.5, 0.5, 0.0)


def gaussian_sld_coefficients(state: GaussianState, t: float) -> tuple[float, float]:
    """Coefficients ``(a, b)`` of the force SLD ``L = a (x - <x>) + b (p - <p>)``."""
    det = state.det
    if det <= 0:
        raise SingularCovariance(f"det V = {det}")
    c = 2.0 * t / det
    return c * state.vxp, -c * state.vx


def gaussian_qfi(state: GaussianState, t: float) -> float:
    """``4 t^2 V_x / det V``."""
    if state.det <= 0:
        raise SingularCovariance(f"det V = {state.det}")
    return 4.0 * t * t * state.vx / state.det


def _conditioned_gaussian(state: GaussianState, alpha: float, strength: float):
    """Mean and covariance of ``W(x, p) Pi_alpha(x)`` normalized (``strength = k dt``)."""
    prec = np.linalg.inv(state.covariance)
    mu = np.asarray(state.mean, dtype=float)
    prec_post = prec + np.diag([4.0 * strength, 0.0])
    cov_post = np.linalg.inv(prec_post)
    mean_post = cov_post @ (prec @ mu + np.array([4.0 * strength * alpha, 0.0]))
    return mean_post, cov_post


def _gauss_hermite_moment(fn, mean: np.ndarray, cov: np.ndarray, nodes: int) -> float:
    """E[fn(x, p)] under N(mean, cov) by tensor Gauss-Hermite quadrature."""
    z, w = np.polynomial.hermite.hermgauss(nodes)
    chol = np.linalg.cholesky(cov)
    zz = np.sqrt(2.0) * np.stack(np.meshgrid(z, z, indexing="ij"), axis=-1).reshape(-1, 2)
    ww = np.outer(w, w).reshape(-1) / math.pi
    pts = mean[None, :] + zz @ chol.T
    return float(np.dot(ww, fn(pts[:, 0], pts[:, 1])))


def gaussian_cqfi(
    state: GaussianState, t: float, strength: float, alpha: float, *, nodes: int = 20
) -> float:
    """Phase-space CQFI of a weak position measurement with outcome ``alpha``.

    The Wigner function times the Gaussian POVM symbol is itself Gaussian, so
    ``E[L(x, p)^2]`` under it is a polynomial moment evaluated by Gauss-Hermite
    quadrature. ``strength`` is ``k * dt``.

    Raises
    ------
    QuadratureNonConvergence
        If ``nodes`` and ``2 * nodes`` disagree beyond 1e-7 relative.
    """
    if strength <= 0:
        raise ValueError("measurement strength k*dt must be positive")
    a, b = gaussian_sld_coefficients(state, t)
    mx, mp = state.mean
    mean_post, cov_post = _conditioned_gaussian(state, alpha, strength)
    fn = lambda x, p: (a * (x - mx) + b * (p - mp)) ** 2  # noqa: E731
    v1 = _gauss_hermite_moment(fn, mean_post, cov_post, nodes)
    v2 = _gauss_hermite_moment(fn, mean_post, cov_post, 2 * nodes)
    if abs(v1 - v2) > 1e-7 * max(abs(v2), 1e-300):
        raise QuadratureNonConvergence(f"{nodes} vs {2 * nodes} nodes: {v1!r} vs {v2!r}")
    return v2


def gaussian_cqfi_operator(state: GaussianState, t: float, strength: float, alpha: float) -> float:
    """Operator-ordered ``Re Tr(rho Pi L^2) / Tr(rho Pi)`` for the same measurement.

    Differs from :func:`gaussian_cqfi` by the Moyal term
    ``-(b^2 / 4) E[Pi''] / E[Pi]`` (averages under the Wigner function), which
    depends on ``alpha`` and vanishes as ``k dt -> 0``.
    """
    _, b = gaussian_sld_coefficients(state, t)
    mean_post, cov_post = _conditioned_gaussian(state, alpha, strength)
    # Pi''/Pi = 16 s^2 (x - alpha)^2 - 4 s, averaged under the conditioned Gaussian
    m2 = cov_post[0, 0] + (mean_post[0] - alpha) ** 2
    ratio = 16.0 * strength**2 * m2 - 4.0 * strength
    return gaussian_cqfi(state, t, strength, alpha) - 0.25 * b * b * ratio


def gaussian_evolve_moments(state: GaussianState, force: float, omega: float, t: float) -> GaussianState:
    """Exact moment flow under ``H = omega a^dag a - force x``.

    First moments rotate about ``(force/omega, 0)``; the covariance rotates
    rigidly, ``V -> R V R^T``.
    """
    c, s = math.cos(omega * t), math.sin(omega * t)
    rot = np.array([[c, s], [-s, c]])
    x0 = force / omega
    r = rot @ np.array([state.mean[0] - x0, state.mean[1]])
    v = rot @ state.covariance @ rot.T
    v = 0.5 * (v + v.T)
    return GaussianState((float(r[0] + x0), float(r[1])), float(v[0, 0]), float(v[1, 1]), float(v[0, 1]))
