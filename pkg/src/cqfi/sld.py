"""Symmetric logarithmic derivative and the ensemble quantum Fisher information.

The SLD ``L`` solves ``d rho = (L rho + rho L) / 2``. It is built in the
eigenbasis of ``rho``::

    L_nn = dp_n / p_n
    L_kn = 2 <k|d rho|n> / (p_k + p_n)            (k != n)
         = 2 (p_n - p_k) / (p_n + p_k) <k|dn>

with ``<k|dn> = <k|d rho|n> / (p_n - p_k)`` from first-order perturbation
theory. Directions with vanishing population are dropped (support restriction).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonTracelessDerivative
from .operators import (
    DEGENERACY_TOL,
    SpectralState,
    as_density,
    as_hermitian,
    eig_hermitian,
    fix_gauge,
    spectral_density,
)

POPULATION_FLOOR = 1e-10
TRACELESS_TOL = 1e-10


@dataclass(frozen=True)
class SldData:
    """SLD of a state/derivative pair plus the spectral data it was built from.

    Attributes
    ----------
    L : (d, d) SLD in the computational basis.
    L_eigen : (d, d) SLD in the eigenbasis of rho.
    spectral : eigenbasis of rho, adapted inside degenerate clusters so that
        d rho is diagonal there.
    dp : population derivatives ``<n|d rho|n>``.
    rot : ``rot[k, n] = <k|dn>`` for non-degenerate pairs, 0 otherwise.
    sigma : ``(p_x - p_y)^2 / (p_x + p_y)`` on the support, 0 elsewhere.
    rank_deficient : some empty eigenstate carries population change above the
        floor (the metric is undefined along that direction).
    """

    L: np.ndarray
    L_eigen: np.ndarray
    spectral: SpectralState
    dp: np.ndarray
    rot: np.ndarray
    sigma: np.ndarray
    rank_deficient: bool = False

    @property
    def populations(self) -> np.ndarray:
        return self.spectral.eigenvalues

    @property
    def log_rates(self) -> np.ndarray:
        """``dp_n / p_n`` on the support, 0 below the population floor."""
        return np.diag(self.L_eigen).real.copy()

    @property
    def coherent_couplings(self) -> np.ndarray:
        """Off-diagonal part of the SLD in the eigenbasis, ``2(p_n-p_k)/(p_n+p_k) <k|dn>``."""
        a = self.L_eigen.copy()
        np.fill_diagonal(a, 0.0)
        return a


def _adapt_degenerate(spec: SpectralState, drho: np.ndarray) -> SpectralState:
    """Inside each degenerate cluster pick the basis that diagonalizes d rho."""
    clusters = [c for c in spec.degenerate_clusters(DEGENERACY_TOL) if len(c) > 1]
    if not clusters:
        return spec
    v = np.array(spec.eigenvectors)
    for c in clusters:
        block = v[:, c]
        sub = eig_hermitian(block.conj().T @ drho @ block)
        v[:, c] = fix_gauge(block @ sub.eigenvectors)
    return SpectralState(np.array(spec.eigenvalues), v)


def solve_sld(rho, drho, *, population_floor: float = POPULATION_FLOOR) -> SldData:
    """Solve the SLD equation for ``rho`` with derivative ``drho``.

    Raises
    ------
    NonTracelessDerivative
        If ``|Tr drho| > 1e-10``.
    """
    r = as_density(rho)
    dr = as_hermitian(drho, "drho")
    tr = np.trace(dr).real
    if abs(tr) > TRACELESS_TOL:
        raise NonTracelessDerivative(f"Tr(drho) = {tr:.3e}")

    spec = _adapt_degenerate(spectral_density(r), dr)
    v = spec.eigenvectors
    p = spec.eigenvalues
    D = v.conj().T @ dr @ v
    dp = np.diag(D).real.copy()

    psum = p[:, None] + p[None, :]
    support = psum >= population_floor
    L_eig = np.where(support, 2.0 * D / np.where(support, psum, 1.0), 0.0)
    occupied = p >= population_floor
    np.fill_diagonal(L_eig, np.where(occupied, dp / np.where(occupied, p, 1.0), 0.0))
    L_eig = 0.5 * (L_eig + L_eig.conj().T)

    gap = p[None, :] - p[:, None]  # gap[k, n] = p_n - p_k
    nondeg = np.abs(gap) > DEGENERACY_TOL
    rot = np.where(nondeg, D / np.where(nondeg, gap, 1.0), 0.0)
    sigma = np.where(support, (p[:, None] - p[None, :]) ** 2 / np.where(support, psum, 1.0), 0.0)
    np.fill_diagonal(sigma, 0.0)

    rank_deficient = bool(np.any(~occupied & (np.abs(dp) > population_floor)))
    L = v @ L_eig @ v.conj().T
    L = 0.5 * (L + L.conj().T)
    for a in (L, L_eig, dp, rot, sigma):
        a.setflags(write=False)
    return SldData(L, L_eig, spec, dp, rot, sigma, rank_deficient)


def lyapunov_residual(sld: SldData, rho, drho) -> float:
    """Frobenius norm of ``drho - {L, rho}/2``."""
    r = np.asarray(rho, dtype=complex)
    return float(np.linalg.norm(np.asarray(drho) - 0.5 * (sld.L @ r + r @ sld.L)))


def qfi(sld: SldData, rho) -> float:
    """F_Q = Tr(rho L^2)."""
    r = np.asarray(rho, dtype=complex)
    return max(float(np.einsum("ij,jk,ki->", r, sld.L, sld.L).real), 0.0)


def qfi_decompose(sld: SldData) -> tuple[float, float]:
    """Incoherent (population) and coherent (eigenbasis rotation) parts of F_Q."""
    p = sld.populations
    occ = p >= POPULATION_FLOOR
    f_ic = float(np.sum(sld.dp[occ] ** 2 / p[occ]))
    # sigma[x, y] |<y|dx>|^2 summed over ordered pairs
    f_c = 2.0 * float(np.sum(sld.sigma * np.abs(sld.rot.T) ** 2))
    return f_ic, f_c


def qfi_two_sum(rho, drho, *, population_floor: float = POPULATION_FLOOR) -> float:
    """Independent route: ``2 sum_{x,y} |<x|d rho|y>|^2 / (p_x + p_y)``."""
    p, v = np.linalg.eigh(as_density(rho))
    D = v.conj().T @ np.asarray(drho, dtype=complex) @ v
    psum = p[:, None] + p[None, :]
    mask = psum >= population_floor
    return 2.0 * float(np.sum(np.abs(D[mask]) ** 2 / psum[mask]))
