"""Streaming driven-qubit experiment: ensemble QFI versus trajectory CQFI.

Trajectories are propagated in fixed-size batches; per-time statistics are
reduced batch by batch in index order so results depend only on the inputs,
never on scheduling. Nothing of size ``n_trajs x n_grid`` is kept in memory.
"""
from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    INEQUALITY_SLACK,
    VARIANCE_FLOOR,
    EnsembleFisher,
    SpeedLimitRecord,
    action,
    ensemble_fisher,
    ensemble_speed_limit,
    length,
)
from .jumps import Trajectory, run_batch
from .lindblad import EnsembleSolution, GKSLModel, evolve
from .operators import spectral_density, trace_distance

log = logging.getLogger(__name__)

NEGATIVE_CROSS_FRACTION = 1e-3


class RunningMoments:
    """Per-time mean and second central moment, merged batch by batch (Chan et al.)."""

    def __init__(self, n_points: int):
        self.count = 0
        self.mean = np.zeros(n_points)
        self.m2 = np.zeros(n_points)

    def add_batch(self, i: int, values: np.ndarray) -> None:
        # called once per grid point per batch; count is advanced by commit()
        nb = values.shape[0]
        bm = values.mean()
        bm2 = float(np.sum((values - bm) ** 2))
        na = self.count
        tot = na + nb
        d = bm - self.mean[i]
        self.mean[i] += d * nb / tot
        self.m2[i] += bm2 + d * d * na * nb / tot

    def commit(self, nb: int) -> None:
        self.count += nb

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.count - 1) if self.count > 1 else np.full_like(self.m2, np.nan)

    @property
    def sem(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)


@dataclass
class TrajectoryAudit:
    samples: int = 0
    negative_cross: int = 0
    min_cs_margin: float = np.inf  # min over (gamma, t) of j - ell^2
    min_delta: float = np.inf
    ratio_violations: int = 0  # mean CQFI / delta < 1 where delta > slack
    speed_points: int = 0
    speed_excluded: int = 0
    speed_violations: int = 0
    speed_integral_violations: int = 0
    max_abs_rate: float = 0.0
    closure_max: float = 0.0


@dataclass
class DrivenRunResult:
    times: np.ndarray
    ensemble: EnsembleFisher
    solution: EnsembleSolution
    n_trajs: int
    mean_f: np.ndarray
    mean_ic: np.ndarray
    mean_coh: np.ndarray
    mean_cross: np.ndarray
    sem_cross: np.ndarray
    sem_cross_quarter: np.ndarray  # SEM from the first n_trajs // 4 trajectories
    sem_f: np.ndarray
    mean_ell: np.ndarray
    mean_j: np.ndarray
    var_ell: np.ndarray
    final_ell: np.ndarray
    final_j: np.ndarray
    trace_distance: np.ndarray
    speed_ensemble: SpeedLimitRecord
    traj_mean_lhs: np.ndarray
    traj_mean_rhs: np.ndarray
    traj_mean_lhs_integral: np.ndarray
    audit: TrajectoryAudit
    negative_cross_threshold: float
    dumped: list[Trajectory] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def length(self) -> np.ndarray:
        return length(self.ensemble.fisher, self.times)

    @property
    def action(self) -> np.ndarray:
        return action(self.ensemble.fisher, self.times)


def run_driven(
    model: GKSLModel,
    rho0: np.ndarray,
    t_final: float,
    dt: float,
    n_trajs: int,
    master_seed: int,
    observable: np.ndarray,
    *,
    batch_size: int = 5000,
    dump: int = 0,
    solution: EnsembleSolution | None = None,
) -> DrivenRunResult:
    """Run the ensemble GKSL solution and ``n_trajs`` jump trajectories on one grid."""
    start = _time.perf_counter()
    if solution is None:
        solution = evolve(rho0, model, t_final, dt)
    times = solution.times
    ens = ensemble_fisher(solution)
    n = times.shape[0]
    d = model.dim

    V = np.stack([s.spectral.eigenvectors for s in ens.slds])  # (n, d, d)
    L = np.stack([s.L for s in ens.slds])
    rates = np.stack([s.log_rates for s in ens.slds])  # (n, d)
    A = np.stack([s.coherent_couplings for s in ens.slds])  # (n, d, d)
    W = (rates[:, :, None] + rates[:, None, :]) * A  # cross-term kernel
    threshold = -NEGATIVE_CROSS_FRACTION * float(ens.fisher.max())

    O = np.asarray(observable, dtype=complex)
    K = model.decay_operator()

    def generator(t: float) -> np.ndarray:
        H = model.H(t)
        return 1j * (H @ O - O @ H) - 0.5 * (K @ O + O @ K)

    gen0 = None if model.time_dependent else generator(0.0)
    O2 = O @ O

    m_f, m_ic, m_coh, m_cross = (RunningMoments(n) for _ in range(4))
    quarter = n_trajs // 4
    m_cross_q = RunningMoments(n)
    m_ell, m_j = RunningMoments(n), RunningMoments(n)
    rho_sum = np.zeros((n, d, d), dtype=complex)
    lhs_sum, rhs_sum, lhs_int_sum = np.zeros(n), np.zeros(n), np.zeros(n)
    audit = TrajectoryAudit()
    final_ell, final_j = [], []
    dumped: list[Trajectory] = []

    spec0 = spectral_density(rho0)
    for start_idx in range(0, n_trajs, batch_size):
        idx = list(range(start_idx, min(n_trajs, start_idx + batch_size)))
        nb = len(idx)
        nq = max(0, min(nb, quarter - start_idx))
        st = {
            "s1": np.zeros(nb), "s2": np.zeros(nb), "sq_prev": np.zeros(nb), "f_prev": np.zeros(nb),
            "ratio_prev": np.zeros(nb), "ratio_int": np.zeros(nb),
        }
        keep = max(0, min(dump, n_trajs) - start_idx)
        hist = np.empty((n, min(keep, nb), d), dtype=complex) if keep > 0 else None

        def on_step(i: int, psi: np.ndarray) -> None:
            c = psi @ V[i].conj()
            lpsi = psi @ L[i].T
            f = (np.abs(lpsi) ** 2).sum(axis=1)
            ac = c @ A[i].T
            ic = ((rates[i] ** 2)[None, :] * np.abs(c) ** 2).sum(axis=1)
            coh = (np.abs(ac) ** 2).sum(axis=1)
            cross = np.einsum("bk,bn,kn->b", c.conj(), c, W[i]).real
            audit.closure_max = max(audit.closure_max, float(np.max(np.abs(f - (ic + coh + cross)) / np.maximum(1.0, f))))

            sq = np.sqrt(f)
            if i > 0:
                h = times[i] - times[i - 1]
                st["s1"] += 0.5 * h * (st["sq_prev"] + sq)
                st["s2"] += 0.5 * h * (st["f_prev"] + f)
            st["sq_prev"], st["f_prev"] = sq, f
            ell = 0.5 * st["s1"]
            jj = 0.25 * times[i] * st["s2"]
            if i > 0:
                t2 = times[i] ** 2
                margin = jj - ell**2
                audit.min_cs_margin = min(audit.min_cs_margin, float(margin.min()))
                delta = 4.0 * margin / t2
                ibar = 4.0 * jj / t2
                audit.min_delta = min(audit.min_delta, float(delta.min()))
                audit.ratio_violations += int(np.sum((delta > INEQUALITY_SLACK) & (ibar < delta * (1.0 - INEQUALITY_SLACK))))

            m_f.add_batch(i, f)
            m_ic.add_batch(i, ic)
            m_coh.add_batch(i, coh)
            m_cross.add_batch(i, cross)
            if nq > 0:
                m_cross_q.add_batch(i, cross[:nq])
            m_ell.add_batch(i, ell)
            m_j.add_batch(i, jj)
            audit.samples += nb
            audit.negative_cross += int(np.sum(cross <= threshold))
            rho_sum[i] += np.einsum("bi,bj->ij", psi, psi.conj())

            ev = lambda X: np.einsum("bi,ij,bj->b", psi.conj(), X, psi).real  # noqa: E731
            mean_o = ev(O)
            gen = gen0 if gen0 is not None else generator(times[i])
            rate = ev(gen) + ev(K) * mean_o
            spread = np.sqrt(np.maximum(ev(O2) - mean_o**2, 0.0))
            inc = spread > VARIANCE_FLOOR
            lhs, rhs = np.abs(rate), spread * sq
            audit.speed_points += nb
            audit.speed_excluded += int(np.sum(~inc))
            audit.speed_violations += int(np.sum(inc & (lhs > rhs + INEQUALITY_SLACK)))
            audit.max_abs_rate = max(audit.max_abs_rate, float(lhs.max()))
            ratio = np.where(inc, lhs / np.where(inc, spread, 1.0), 0.0)
            if i > 0:
                st["ratio_int"] += 0.5 * (times[i] - times[i - 1]) * (st["ratio_prev"] + ratio)
            st["ratio_prev"] = ratio
            audit.speed_integral_violations += int(np.sum(st["ratio_int"] > 2.0 * ell + INEQUALITY_SLACK))
            lhs_sum[i] += lhs.sum()
            rhs_sum[i] += rhs.sum()
            lhs_int_sum[i] += st["ratio_int"].sum()
            if hist is not None:
                hist[i] = psi[: hist.shape[1]]

        out = run_batch(model, spec0, times, master_seed, idx, on_step=on_step)
        for m in (m_f, m_ic, m_coh, m_cross, m_ell, m_j):
            m.commit(nb)
        m_cross_q.commit(nq)
        final_ell.append(0.5 * st["s1"])
        final_j.append(0.25 * times[-1] * st["s2"])
        if hist is not None:
            for b in range(hist.shape[1]):
                states = np.array(hist[:, b, :])
                states.setflags(write=False)
                dumped.append(Trajectory(master_seed, idx[b], times, states, tuple(out["jumps"][b]), int(out["initial"][b])))
        log.info("trajectories %d/%d done", idx[-1] + 1, n_trajs)

    rho_avg = rho_sum / n_trajs
    rho_avg /= np.trace(rho_avg, axis1=1, axis2=2).real[:, None, None]
    tdist = np.array([trace_distance(a, b) for a, b in zip(rho_avg, solution.states)])
    return DrivenRunResult(
        times=times,
        ensemble=ens,
        solution=solution,
        n_trajs=n_trajs,
        mean_f=m_f.mean,
        mean_ic=m_ic.mean,
        mean_coh=m_coh.mean,
        mean_cross=m_cross.mean,
        sem_cross=m_cross.sem,
        sem_cross_quarter=m_cross_q.sem if quarter > 1 else np.full(n, np.nan),
        sem_f=m_f.sem,
        mean_ell=m_ell.mean,
        mean_j=m_j.mean,
        var_ell=m_ell.variance,
        final_ell=np.concatenate(final_ell),
        final_j=np.concatenate(final_j),
        trace_distance=tdist,
        speed_ensemble=ensemble_speed_limit(solution, O, ens.fisher),
        traj_mean_lhs=lhs_sum / n_trajs,
        traj_mean_rhs=rhs_sum / n_trajs,
        traj_mean_lhs_integral=lhs_int_sum / n_trajs,
        audit=audit,
        negative_cross_threshold=threshold,
        dumped=dumped,
        wall_seconds=_time.perf_counter() - start,
    )
