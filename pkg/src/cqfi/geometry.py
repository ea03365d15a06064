"""Fisher geometry with time as the parameter: lengths, actions and speed limits.

For a Fisher-information profile ``f(t) >= 0`` on a grid::

    length(t) = 1/2 int_0^t sqrt(f)      action(t) = t/4 int_0^t f
    delta(t)  = 4 (action - length^2) / t^2

All integrals use the trapezoid rule on the shared fixed grid. With positive
trapezoid weights, ``action >= length^2`` holds exactly by Cauchy-Schwarz on
the discrete sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InsufficientSample, NegativeSample
from .lindblad import EnsembleSolution, GKSLModel
from .operators import ket_expectation, ket_variance
from .sld import SldData, qfi, qfi_decompose, solve_sld

VARIANCE_FLOOR = 1e-10
INEQUALITY_SLACK = 1e-9


def _check_samples(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise NegativeSample(f"Fisher samples must be non-negative, min {f.min():.3e}")
    return f


def cumulative_integral(y, times) -> np.ndarray:
    return cumulative_trapezoid(np.asarray(y, dtype=float), np.asarray(times, dtype=float), initial=0.0)


def length(f, times) -> np.ndarray:
    """Cumulative statistical length ``1/2 int sqrt(f)`` at every grid time."""
    return 0.5 * cumulative_integral(np.sqrt(_check_samples(f)), times)


def action(f, times) -> np.ndarray:
    """Cumulative action ``t/4 int f`` at every grid time."""
    t = np.asarray(times, dtype=float)
    return 0.25 * t * cumulative_integral(_check_samples(f), t)


@dataclass(frozen=True)
class DeltaResult:
    delta: np.ndarray
    mean_fisher: np.ndarray  # (1/t) int f
    ratio_ok: np.ndarray  # mean_fisher / delta >= 1 where delta > slack


def delta(length_values, action_values, times) -> DeltaResult:
    """Time-averaged Fisher variance ``4 (action - length^2)/t^2`` (0 at ``t = 0``)."""
    t = np.asarray(times, dtype=float)
    ell = np.asarray(length_values, dtype=float)
    j = np.asarray(action_values, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    d = np.where(t > 0, 4.0 * (j - ell**2) / safe**2, 0.0)
    ibar = np.where(t > 0, 4.0 * j / safe**2, 0.0)
    ok = np.where(d > INEQUALITY_SLACK, ibar >= d * (1.0 - INEQUALITY_SLACK), True)
    return DeltaResult(d, ibar, ok)


@dataclass
class GeometryLedger:
    times: np.ndarray
    fisher: np.ndarray
    length: np.ndarray = field(init=False)
    action: np.ndarray = field(init=False)
    delta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.length = length(self.fisher, self.times)
        self.action = action(self.fisher, self.times)
        self.delta = delta(self.length, self.action, self.times).delta

    def cauchy_schwarz_margin(self) -> float:
        """``min_t (action - length^2)``; non-negative up to rounding."""
        return float(np.min(self.action - self.length**2))


def ensemble_slds(solution: EnsembleSolution) -> list[SldData]:
    return [solve_sld(r, d) for r, d in zip(solution.states, solution.derivatives)]


def fisher_time(solution: EnsembleSolution, i: int, sld: SldData | None = None) -> float:
    """QFI with respect to time at grid index ``i`` (derivative from the GKSL rhs)."""
    sld = sld or solve_sld(solution.states[i], solution.derivatives[i])
    return qfi(sld, solution.states[i])


@dataclass(frozen=True)
class EnsembleFisher:
    times: np.ndarray
    fisher: np.ndarray
    incoherent: np.ndarray
    coherent: np.ndarray
    slds: list[SldData]

    @property
    def ledger(self) -> GeometryLedger:
        return GeometryLedger(self.times, self.fisher)


def ensemble_fisher(solution: EnsembleSolution) -> EnsembleFisher:
    slds = ensemble_slds(solution)
    f = np.array([qfi(s, r) for s, r in zip(slds, solution.states)])
    parts = np.array([qfi_decompose(s) for s in slds])
    return EnsembleFisher(solution.times, f, parts[:, 0], parts[:, 1], slds)


@dataclass(frozen=True)
class SpeedLimitRecord:
    """Pointwise observable speed limit ``|do/dt| <= Delta O sqrt(f)``.

    ``included`` marks points whose standard deviation exceeds the variance
    floor; ``lhs_integral`` integrates ``|do/dt| / Delta O`` over them and
    ``rhs_integral`` is ``int sqrt(f)`` (twice the length).
    """

    times: np.ndarray
    rate: np.ndarray
    spread: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    included: np.ndarray
    lhs_integral: np.ndarray
    rhs_integral: np.ndarray

    @property
    def excluded_count(self) -> int:
        return int(np.sum(~self.included))

    def pointwise_violations(self, slack: float = INEQUALITY_SLACK) -> int:
        return int(np.sum(self.included & (self.lhs > self.rhs + slack)))

    def integral_violations(self, slack: float = INEQUALITY_SLACK) -> int:
        return int(np.sum(self.lhs_integral > self.rhs_integral + slack))


def _speed_record(times, rate, var, fisher) -> SpeedLimitRecord:
    spread = np.sqrt(np.maximum(var, 0.0))
    included = spread > VARIANCE_FLOOR
    lhs = np.abs(rate)
    rhs = spread * np.sqrt(np.maximum(fisher, 0.0))
    ratio = np.where(included, lhs / np.where(included, spread, 1.0), 0.0)
    return SpeedLimitRecord(
        times, rate, spread, lhs, rhs, included,
        cumulative_integral(ratio, times), cumulative_integral(np.sqrt(np.maximum(fisher, 0.0)), times),
    )


def ensemble_speed_limit(solution: EnsembleSolution, observable, fisher=None) -> SpeedLimitRecord:
    """Ensemble bound with ``do/dt = Tr(O drho/dt)`` and ``Delta O`` in ``rho_t``."""
    o = np.asarray(observable, dtype=complex)
    if fisher is None:
        fisher = ensemble_fisher(solution).fisher
    rate = np.einsum("ij,tji->t", o, solution.derivatives).real
    mean = np.einsum("ij,tji->t", o, solution.states).real
    second = np.einsum("ij,tji->t", o @ o, solution.states).real
    return _speed_record(solution.times, rate, second - mean**2, np.asarray(fisher))


def trajectory_rate(psi: np.ndarray, observable: np.ndarray, model: GKSLModel, t: float) -> np.ndarray:
    """No-jump drift of ``<psi|O|psi>`` for kets of shape ``(B, d)`` or ``(d,)``.

    ``d<O>/dt = i<[H, O]> - 1/2 <{K, O}> + <K><O>`` with ``K = sum L^dag L``.
    Jumps are discrete events and contribute no drift.
    """
    psi2 = np.atleast_2d(psi)
    H, K, O = model.H(t), model.decay_operator(), np.asarray(observable, dtype=complex)
    gen = 1j * (H @ O - O @ H) - 0.5 * (K @ O + O @ K)
    ev = lambda A: np.einsum("bi,ij,bj->b", psi2.conj(), A, psi2).real  # noqa: E731
    out = ev(gen) + ev(K) * ev(O)
    return out if np.ndim(psi) == 2 else out[0]


def trajectory_speed_limit(states: np.ndarray, times: np.ndarray, observable, model: GKSLModel, fisher) -> SpeedLimitRecord:
    """Trajectory bound ``|do_gamma/dt| <= Delta_psi O sqrt(f_gamma)`` along one trajectory."""
    o = np.asarray(observable, dtype=complex)
    if model.time_dependent:
        rate = np.array([trajectory_rate(s, o, model, t) for s, t in zip(states, times)])
    else:
        rate = trajectory_rate(states, o, model, 0.0)
    var = np.array([ket_variance(o, s) for s in states])
    return _speed_record(times, rate, var, np.asarray(fisher))


@dataclass(frozen=True)
class HierarchyReport:
    action: float
    length_sq: float
    var_length: float
    var_length_se: float
    mean_action: float
    mean_action_se: float
    n: int

    @property
    def action_ge_length_sq(self) -> bool:
        return self.action >= self.length_sq - INEQUALITY_SLACK

    @property
    def length_sq_ge_var(self) -> bool:
        return self.length_sq >= self.var_length - 3.0 * self.var_length_se

    @property
    def action_gap(self) -> float:
        """Relative gap between the trajectory-averaged and ensemble actions."""
        return abs(self.mean_action - self.action) / self.action if self.action > 0 else abs(self.mean_action)


def hierarchy_check(ensemble_fisher_values, trajectory_fisher, times, *, min_samples: int = 100) -> HierarchyReport:
    """Compare ``J >= L^2 >= Var(ell)`` at the final grid time.

    ``trajectory_fisher`` has shape ``(N, n)``. Standard errors: the sample
    variance uses the normal-theory error ``s^2 sqrt(2/(N-1))``, the mean action
    the standard error of the mean.
    """
    tf = np.atleast_2d(np.asarray(trajectory_fisher, dtype=float))
    n = tf.shape[0]
    if n < min_samples:
        raise InsufficientSample(f"need at least {min_samples} trajectories, got {n}")
    big_l = length(ensemble_fisher_values, times)[-1]
    big_j = action(ensemble_fisher_values, times)[-1]
    ells = np.array([length(f, times)[-1] for f in tf])
    js = np.array([action(f, times)[-1] for f in tf])
    return summarize_hierarchy(big_j, big_l, ells, js)


def summarize_hierarchy(big_j: float, big_l: float, ells: np.ndarray, js: np.ndarray) -> HierarchyReport:
    n = ells.shape[0]
    var = float(np.var(ells, ddof=1)) if n > 1 else 0.0
    var_se = var * np.sqrt(2.0 / (n - 1)) if n > 1 else float("inf")
    js_se = float(np.std(js, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return HierarchyReport(float(big_j), float(big_l) ** 2, var, float(var_se), float(np.mean(js)), js_se, n)
