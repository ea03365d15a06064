"""Dense operator algebra on small Hilbert spaces.

Operators are plain ``numpy`` complex arrays; the helpers here validate them
(Hermiticity, density-matrix conditions) and provide a deterministic,
gauge-fixed Hermitian eigendecomposition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    InvalidState,
    NegativeVariance,
    NonHermitianInput,
)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
NEGATIVE_EIG_TOL = 1e-10
DEGENERACY_TOL = 1e-9
_GAUGE_TIE_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# basis order (|0>, |1>) = (excited, ground): sigma_minus lowers |0> -> |1>
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def as_hermitian(a, name: str = "operator", tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity entrywise and return the exactly symmetrized matrix."""
    m = as_matrix(a, name)
    err = np.max(np.abs(m - m.conj().T))
    if err > tol:
        raise NonHermitianInput(f"{name} deviates from Hermitian by {err:.3e} (tol {tol:.1e})")
    return 0.5 * (m + m.conj().T)


def as_density(rho, name: str = "rho") -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, no eigenvalue below -1e-10."""
    m = as_hermitian(rho, name)
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"{name} has trace {tr!r}")
    lo = np.linalg.eigvalsh(m)[0]
    if lo < -NEGATIVE_EIG_TOL:
        raise InvalidState(f"{name} has negative eigenvalue {lo:.3e}")
    return m


def as_ket(psi, dim: int | None = None, name: str = "psi") -> np.ndarray:
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"{name} has length {v.shape[0]}, expected {dim}")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > TRACE_TOL:
        raise InvalidState(f"{name} is not normalized (norm {nrm!r})")
    return v


def projector(psi) -> np.ndarray:
    v = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def _check_dims(*mats: np.ndarray) -> None:
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise DimensionMismatch(f"operator shapes differ: {sorted(shapes)}")


@dataclass(frozen=True)
class SpectralState:
    """Eigendecomposition with eigenvalues in descending order.

    ``eigenvectors[:, n]`` is the eigenvector of ``eigenvalues[n]``. Each column
    has its largest-magnitude component real and non-negative.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gauge: str = "max-component-real"

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def degenerate_clusters(self, tol: float = DEGENERACY_TOL) -> list[list[int]]:
        return _clusters(self.eigenvalues, tol)


def _clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    groups = [[0]]
    for n in range(1, len(values)):
        if abs(values[n] - values[groups[-1][-1]]) <= tol:
            groups[-1].append(n)
        else:
            groups.append([n])
    return groups


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column's phase so its leading largest-magnitude entry is real >= 0."""
    v = np.array(vectors, dtype=complex)
    mags = np.abs(v)
    for n in range(v.shape[1]):
        col = mags[:, n]
        k = int(np.flatnonzero(col >= col.max() - _GAUGE_TIE_TOL)[0])
        if col[k] > 0:
            v[:, n] *= np.conj(v[k, n]) / col[k]
            v[k, n] = col[k]
    return v


def _order_columns(values: np.ndarray, vectors: np.ndarray):
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    # inside a degenerate cluster, order by first components (lexicographic, descending)
    for group in _clusters(values, DEGENERACY_TOL):
        if len(group) < 2:
            continue
        keys = [tuple(-x for c in vectors[:, n] for x in (c.real, c.imag)) for n in group]
        sub = [group[i] for i in sorted(range(len(group)), key=lambda i: keys[i])]
        values[group], vectors[:, group] = values[sub].copy(), vectors[:, sub].copy()
    return values, vectors


def eig_hermitian(a) -> SpectralState:
    """Gauge-fixed eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Raises
    ------
    NonHermitianInput
        If ``a`` is not Hermitian within 1e-12 per entry.
    ConvergenceFailure
        If LAPACK fails or the reconstruction residual exceeds 1e-10 (relative
        to the matrix norm when that is larger than one).
    """
    m = as_hermitian(a)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    w, v = _order_columns(w, fix_gauge(v))
    state = SpectralState(w, v)
    resid = np.linalg.norm(state.reconstruct() - m)
    if resid > 1e-10 * max(1.0, np.linalg.norm(m)):
        raise ConvergenceFailure(f"eigendecomposition residual {resid:.3e}")
    return state


def spectral_density(rho) -> SpectralState:
    """Eigendecomposition of a density matrix; tiny negative eigenvalues clamp to zero."""
    s = eig_hermitian(as_density(rho))
    p = np.where(s.eigenvalues < 0, 0.0, s.eigenvalues)
    return SpectralState(p, np.array(s.eigenvectors))


def commutator(a, b) -> np.ndarray:
    a, b = as_matrix(a, "A"), as_matrix(b, "B")
    _check_dims(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a, b = as_matrix(a, "A"), as_matrix(b, "B")
    _check_dims(a, b)
    return a @ b + b @ a


def expectation(op, rho) -> float:
    """Tr(A rho) for Hermitian A; the imaginary residue is discarded."""
    a, r = as_matrix(op, "A"), as_matrix(rho, "rho")
    _check_dims(a, r)
    return float(np.einsum("ij,ji->", a, r).real)


def variance(op, rho) -> float:
    """Tr(rho O^2) - Tr(rho O)^2, clamped to zero above -1e-12."""
    o, r = as_matrix(op, "O"), as_matrix(rho, "rho")
    _check_dims(o, r)
    mean = expectation(o, r)
    var = expectation(o @ o, r) - mean * mean
    if var < -1e-12:
        raise NegativeVariance(f"variance {var:.3e} is negative")
    return max(var, 0.0)


def ket_expectation(op: np.ndarray, psi: np.ndarray) -> float:
    return float(np.vdot(psi, op @ psi).real)


def ket_variance(op: np.ndarray, psi: np.ndarray) -> float:
    opsi = op @ psi
    mean = np.vdot(psi, opsi).real
    return max(float(np.vdot(opsi, opsi).real - mean * mean), 0.0)


def trace_distance(a, b) -> float:
    """Half the trace norm of a - b for Hermitian a, b."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b)))))
