from typing import Any, Dict, Optional, Tuple
import numpy as np
from app.helpers import Linalg
from app.helpers.Exceptions import DimensionMismatch
from app.schemas.Matrix import MatrixPayload


class HermitianMatrix:
    """Immutable dense complex Hermitian operator.

    Input is symmetrized as (A + A*)/2 on construction; the relative
    pre-symmetrization defect is kept on `defect` so callers can assert on it.
    """

    __slots__ = ("_data", "defect")

    def __init__(self, entries: Any, assume_hermitian: bool = False):
        if assume_hermitian:
            data = np.array(entries, dtype=complex)
            defect = 0.0
        else:
            data, defect = Linalg.hermitian_part(entries)
        data.setflags(write=False)
        self._data = data
        self.defect = defect

    @classmethod
    def identity(cls, dim: int) -> "HermitianMatrix":
        return cls(np.eye(dim, dtype=complex), assume_hermitian=True)

    @classmethod
    def zeros(cls, dim: int) -> "HermitianMatrix":
        return cls(np.zeros((dim, dim), dtype=complex), assume_hermitian=True)

    @classmethod
    def diag(cls, values) -> "HermitianMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)).astype(complex), assume_hermitian=True)

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._data

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __repr__(self) -> str:
        return f"HermitianMatrix(dim={self.dim})"

    def __add__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        self._check_same_dim(other)
        return HermitianMatrix(self._data + other._data, assume_hermitian=True)

    def __sub__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        self._check_same_dim(other)
        return HermitianMatrix(self._data - other._data, assume_hermitian=True)

    def scale(self, c: float) -> "HermitianMatrix":
        return HermitianMatrix(float(c) * self._data, assume_hermitian=True)

    def _check_same_dim(self, other: "HermitianMatrix"):
        if self.dim != other.dim:
            raise DimensionMismatch(f"Dimensions differ: {self.dim} vs {other.dim}")

    def op_norm(self) -> float:
        """max |lambda| over the spectrum."""
        return Linalg.operator_norm(self._data)

    def spectral_decomp(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and the unitary whose columns are eigenvectors."""
        return Linalg.eigh(self._data)

    def min_eigenvalue(self) -> float:
        return float(Linalg.eigvalsh(self._data)[0]) if self.dim else 0.0

    def psd_sqrt(self, tol: Optional[float] = None) -> "HermitianMatrix":
        if tol is None:
            tol = Linalg.psd_tolerance(self._data)
        return HermitianMatrix(Linalg.psd_sqrt(self._data, tol), assume_hermitian=True)

    def comm_norm(self, other: "HermitianMatrix") -> float:
        self._check_same_dim(other)
        return Linalg.commutator_norm(self._data, other._data)

    def allclose(self, other: "HermitianMatrix", atol: float) -> bool:
        return self.dim == other.dim and bool(np.max(np.abs(self._data - other._data), initial=0.0) <= atol)

    def to_payload(self) -> Dict[str, Any]:
        """JSON form {dim, re, im} with row-major nested lists."""
        return {
            "dim": self.dim,
            "re": self._data.real.tolist(),
            "im": self._data.imag.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "HermitianMatrix":
        parsed = MatrixPayload.model_validate(payload)
        re = np.asarray(parsed.re, dtype=float).reshape(parsed.dim, parsed.dim)
        im = np.asarray(parsed.im, dtype=float).reshape(parsed.dim, parsed.dim)
        return cls(re + 1j * im)


def spectral_reconstruction(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """sum_k lambda_k v_k v_k*."""
    return (vectors * values) @ vectors.conj().T

