"""Conditional quantum Fisher information (CQFI) for single outcomes and probes.

Two conditional forms are provided:

* the trace form ``Tr(Pi L^2 rho) / Tr(Pi rho)`` for a general POVM element;
* the pure-probe form ``<a|L^2|a>``, which splits into incoherent, coherent and
  cross (interference) contributions.

For a projector that does not commute with ``rho`` the two forms differ; both
are reported side by side in :class:`CqfiSample`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySample,
    IncompletePovm,
    PopulationFloor,
    VanishingOutcomeProbability,
)
from .operators import as_ket, as_matrix
from .sld import POPULATION_FLOOR, SldData

PROBABILITY_FLOOR = 1e-12
PROBE_WEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class CqfiSample:
    """CQFI of one pure probe.

    ``total`` is ``<a|L^2|a>`` evaluated directly from the SLD matrix;
    ``ic + coh + cross`` reproduces it. ``trace_form`` is the rho-weighted
    conditional value for the same projector and ``outcome_prob`` its Born
    probability ``<a|rho|a>``.
    """

    total: float
    ic: float
    coh: float
    cross: float
    overlaps: np.ndarray
    outcome_prob: float
    trace_form: float

    @property
    def closure_error(self) -> float:
        return abs(self.total - (self.ic + self.coh + self.cross))


def outcome_probability(povm_element, rho) -> float:
    return float(np.einsum("ij,ji->", np.asarray(povm_element), np.asarray(rho)).real)


def sfi(povm_element, rho, drho) -> float:
    """Classical stochastic Fisher information ``(Tr(Pi drho) / Tr(Pi rho))^2``."""
    prob = outcome_probability(povm_element, rho)
    if prob <= PROBABILITY_FLOOR:
        raise VanishingOutcomeProbability(f"Tr(Pi rho) = {prob:.3e}")
    return (outcome_probability(povm_element, drho) / prob) ** 2


def cqfi_trace_form(povm_element, sld: SldData, rho) -> float:
    """``Re Tr(Pi L^2 rho) / Tr(Pi rho)``.

    For ``Pi = I`` this is the QFI; for an eigenprojector ``|n><n|`` of ``rho``
    it equals ``<n|L^2|n>``, the classical ``(dp_n / p_n)^2`` plus the coherent
    rotation term.
    """
    pi = as_matrix(povm_element, "Pi")
    r = np.asarray(rho, dtype=complex)
    if pi.shape != r.shape:
        raise DimensionMismatch(f"Pi has shape {pi.shape}, rho {r.shape}")
    prob = outcome_probability(pi, r)
    if prob <= PROBABILITY_FLOOR:
        raise VanishingOutcomeProbability(f"Tr(Pi rho) = {prob:.3e}")
    L2 = sld.L @ sld.L
    return float(np.einsum("ij,jk,ki->", pi, L2, r).real) / prob


def cauchy_schwarz_bound(povm_element, sld: SldData, rho) -> float:
    """``Tr(Pi L rho L) / Tr(Pi rho)``, the tight upper bound on the SFI of ``Pi``."""
    pi = as_matrix(povm_element, "Pi")
    r = np.asarray(rho, dtype=complex)
    prob = outcome_probability(pi, r)
    if prob <= PROBABILITY_FLOOR:
        raise VanishingOutcomeProbability(f"Tr(Pi rho) = {prob:.3e}")
    return float(np.einsum("ij,jk,kl,li->", pi, sld.L, r, sld.L).real) / prob


def decompose_overlaps(c: np.ndarray, sld: SldData) -> tuple[float, float, float]:
    """Incoherent, coherent and cross CQFI for eigenbasis overlaps ``c_n = <n|a>``."""
    d = sld.log_rates
    A = sld.coherent_couplings  # A[k, n] = 2 (p_n - p_k)/(p_n + p_k) <k|dn>
    ic = float(np.sum(d**2 * np.abs(c) ** 2))
    coh = float(np.sum(np.abs(A @ c) ** 2))
    # sum_{k != n} Re[c_k^* c_n (d_k + d_n) A_kn]; A has zero diagonal
    cross = float(np.real(np.einsum("k,n,kn->", c.conj(), c, (d[:, None] + d[None, :]) * A)))
    return ic, coh, cross


def cqfi_pure(probe, sld: SldData, rho=None) -> CqfiSample:
    """Pure-probe CQFI ``<a|L^2|a>`` and its three-term split.

    ``rho`` is only needed for the Born probability and the trace-form
    companion value; it defaults to ``sum_n p_n |n><n|`` from ``sld``.

    Raises
    ------
    PopulationFloor
        If the probe puts weight above 1e-6 on an eigenstate with population
        below the floor.
    """
    spec = sld.spectral
    a = as_ket(probe, spec.dim, "probe")
    c = spec.eigenvectors.conj().T @ a
    empty = spec.eigenvalues < POPULATION_FLOOR
    if np.any(np.abs(c[empty]) ** 2 > PROBE_WEIGHT_TOL):
        raise PopulationFloor("probe overlaps an eigenstate below the population floor")
    r = spec.reconstruct() if rho is None else np.asarray(rho, dtype=complex)

    La = sld.L @ a
    total = float(np.vdot(La, La).real)
    ic, coh, cross = decompose_overlaps(c, sld)
    prob = float(np.vdot(a, r @ a).real)
    trace_form = float(np.vdot(a, sld.L @ (sld.L @ (r @ a))).real) / prob if prob > PROBABILITY_FLOOR else float("nan")
    c.setflags(write=False)
    return CqfiSample(total, ic, coh, cross, c, prob, trace_form)


def cqfi_average(samples: Iterable[tuple[float, CqfiSample | float]], *, form: str = "trace") -> float:
    """Probability-weighted mean of conditional values over a complete POVM.

    Each entry is ``(probability, value)`` where ``value`` is a float or a
    :class:`CqfiSample` (``form`` selects ``trace_form`` or ``total``).

    Raises
    ------
    IncompletePovm
        If the probabilities do not sum to one within 1e-10.
    """
    items = list(samples)
    if not items:
        raise EmptySample("no samples to average")
    probs = np.array([p for p, _ in items], dtype=float)
    if abs(probs.sum() - 1.0) > 1e-10:
        raise IncompletePovm(f"outcome probabilities sum to {probs.sum()!r}")
    attr = {"trace": "trace_form", "pure": "total"}[form]
    vals = np.array([getattr(v, attr) if isinstance(v, CqfiSample) else float(v) for _, v in items])
    return float(np.dot(probs, vals))


@dataclass(frozen=True)
class MeanWithError:
    mean: float
    sem: float
    n: int


def cross_term_ensemble_mean(samples: Sequence[float] | np.ndarray, weights=None) -> MeanWithError:
    """Mean cross term over trajectory samples with its standard error.

    With ``weights`` (e.g. uniform over a complete orthonormal basis) the
    weighted mean is returned and the standard error is reported as 0.
    """
    x = np.asarray([s.cross if isinstance(s, CqfiSample) else s for s in samples], dtype=float)
    if x.size == 0:
        raise EmptySample("no cross-term samples")
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        return MeanWithError(float(np.dot(w, x) / w.sum()), 0.0, x.size)
    sem = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("inf")
    return MeanWithError(float(np.mean(x)), sem, x.size)
