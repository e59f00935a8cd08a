"""Reference Lindblad propagation by dense matrix exponentials.

Everything here works on the ``4**n``-dimensional transfer matrix ``G`` from
:func:`lindrand.model.transfer_matrix` and is only meant for small ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, StateError
from .model import LindbladModel, transfer_matrix
from .vectorize import choi, unvec, vec, vec_identity


def matrix_exponential(a: np.ndarray) -> np.ndarray:
    """``exp(a)`` by scaling and squaring with a Pade approximant."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return scipy.linalg.expm(a)


@dataclass(frozen=True)
class PropagatorCache:
    """``e^{tG}`` for one model and time."""

    t: float
    exp_tg: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.exp_tg @ vec(rho))

    def trace_defect(self) -> float:
        """``max |<<1| e^{tG} - <<1||``; zero for a trace-preserving map."""
        one = vec_identity(int(round(np.sqrt(self.exp_tg.shape[0]))))
        return float(np.abs(one @ self.exp_tg - one).max())


def propagator(m: LindbladModel, t: float) -> PropagatorCache:
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    return PropagatorCache(float(t), matrix_exponential(t * transfer_matrix(m)))


def check_density_matrix(rho: np.ndarray, n: int | None = None, tol: float = 1e-9) -> np.ndarray:
    """Validate and return ``rho`` as a complex array.

    Raises:
        StateError: wrong shape, not Hermitian, not PSD or not unit trace.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StateError(f"density matrix must be square, got shape {rho.shape}")
    if n is not None and rho.shape[0] != 1 << n:
        raise StateError(f"density matrix has dimension {rho.shape[0]}, expected {1 << n}")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise StateError(f"density matrix has trace {np.trace(rho).real:.6g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise StateError("density matrix is not positive semidefinite")
    return rho


def check_observable(obs: np.ndarray, dim: int) -> np.ndarray:
    obs = np.asarray(obs, dtype=complex)
    if obs.shape != (dim, dim):
        raise StateError(f"observable has shape {obs.shape}, expected {(dim, dim)}")
    if np.abs(obs - obs.conj().T).max() > 1e-10:
        raise StateError("observable is not Hermitian")
    return obs


def exact_evolve(m: LindbladModel, rho0: np.ndarray, t: float) -> np.ndarray:
    rho0 = check_density_matrix(rho0, m.n)
    return propagator(m, t).apply(rho0)


def exact_expectation(m: LindbladModel, rho0: np.ndarray, obs: np.ndarray, t: float) -> float:
    rho = exact_evolve(m, rho0, t)
    obs = check_observable(obs, rho.shape[0])
    val = np.trace(obs @ rho)
    if abs(val.imag) > 1e-10:
        raise StateError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def _rhs(m: LindbladModel):
    h = m.hamiltonian_matrix()
    jumps = [(lk, lk.conj().T, lk.conj().T @ lk) for lk in m.jump_matrices()]

    def rhs(rho: np.ndarray) -> np.ndarray:
        out = -1j * (h @ rho - rho @ h)
        for lk, ld, ldl in jumps:
            out += lk @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)
        return out

    return rhs


def lindblad_rhs(m: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """``L(rho) = -i[H, rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho}/2)``."""
    return _rhs(m)(np.asarray(rho, dtype=complex))


def rk4_evolve(m: LindbladModel, rho0: np.ndarray, t: float, dt: float = 1e-4) -> np.ndarray:
    """Classical fourth-order Runge-Kutta integration of the master equation."""
    f = _rhs(m)
    steps = max(1, int(np.ceil(t / dt)))
    h = t / steps
    rho = np.asarray(rho0, dtype=complex)
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def trace_norm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False).sum())


def is_cptp(transfer: np.ndarray, tol: float = 1e-8) -> bool:
    """Trace preservation and a PSD Choi matrix."""
    dim = int(round(np.sqrt(transfer.shape[0])))
    one = vec_identity(dim)
    if np.abs(one @ transfer - one).max() > tol:
        return False
    c = choi(transfer)
    return bool(np.linalg.eigvalsh((c + c.conj().T) / 2).min() >= -tol)
