"""
Array-level kernels shared by the operator model and the services.

Everything here works on plain numpy arrays so that hot loops (vertex
enumeration, multistart searches) avoid re-validating wrapper objects.
"""
import numpy as np
from typing import Tuple
from app.helpers.Exceptions import DimensionMismatch, EigensolverFailure, NotPositiveSemidefinite


def hermitian_part(a: np.ndarray) -> Tuple[np.ndarray, float]:
    """Return (A + A*)/2 and the pre-symmetrization defect relative to max |A_jk|."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("Matrix has non-finite entries")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    defect = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    relative = defect / scale if scale > 0 else 0.0
    return 0.5 * (a + a.conj().T), relative


def eigvalsh(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as e:
        raise EigensolverFailure(a.shape[0], str(e))


def eigh(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as e:
        raise EigensolverFailure(a.shape[0], str(e))


def operator_norm(a: np.ndarray) -> float:
    """Operator norm of a Hermitian array: max |eigenvalue|."""
    if a.shape[0] == 0:
        return 0.0
    w = eigvalsh(a)
    return float(max(abs(w[0]), abs(w[-1])))


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """||AB - BA||_op, evaluated as the norm of the Hermitian i(AB - BA)."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"Commutator of shapes {a.shape} and {b.shape}")
    c = 1j * (a @ b - b @ a)
    return operator_norm(0.5 * (c + c.conj().T))


def psd_tolerance(a: np.ndarray) -> float:
    """Default positivity slack: 1e-10 * dim * ||A||."""
    return 1e-10 * a.shape[0] * operator_norm(a)


def psd_sqrt(a: np.ndarray, tol: float) -> np.ndarray:
    """Square root of a PSD array; eigenvalues in [-tol, 0) are clamped to 0."""
    w, v = eigh(a)
    if w.size and w[0] < -tol:
        raise NotPositiveSemidefinite(float(w[0]), tol)
    root = np.sqrt(np.clip(w, 0.0, None))
    b = (v * root) @ v.conj().T
    return 0.5 * (b + b.conj().T)


def inverse_sqrt(a: np.ndarray, floor: float) -> np.ndarray:
    """S^{-1/2} for a positive definite S; raises if the spectrum dips below `floor`."""
    w, v = eigh(a)
    if w[0] <= floor:
        raise NotPositiveSemidefinite(float(w[0]), floor)
    b = (v / np.sqrt(w)) @ v.conj().T
    return 0.5 * (b + b.conj().T)


def power_iteration_norm(a: np.ndarray, iterations: int = 2000, seed: int = 0) -> float:
    """Independent estimate of ||A||_op via power iteration on A^2."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[0]) + 1j * rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    a2 = a @ a
    for _ in range(iterations):
        w = a2 @ v
        n = np.linalg.norm(w)
        if n == 0:
            return 0.0
        v = w / n
    # Rayleigh quotient converges at twice the rate of the vector itself
    return float(np.sqrt(np.real(np.vdot(v, a2 @ v))))
