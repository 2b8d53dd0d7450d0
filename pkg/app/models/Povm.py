from typing import Any, Dict, List, Optional, Sequence, Union
import numpy as np
from pydantic import ValidationError
from app.helpers import Linalg
from app.helpers.Exceptions import DimensionMismatch, InvalidPovm
from app.models.Operator import HermitianMatrix
from app.schemas.Matrix import PovmPayload

# Validation thresholds for FinitePovm
PSD_TOL = 1e-10
IDENTITY_TOL = 1e-9


class OutcomeVector:
    """A point of the cube K_N = [-1, 1]^N."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float]):
        arr = np.array(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Outcome vector has non-finite components")
        if arr.size and np.max(np.abs(arr)) > 1.0 + 1e-12:
            raise ValueError(f"Outcome vector leaves the cube: max |x_j| = {np.max(np.abs(arr)):.6g}")
        arr = np.clip(arr, -1.0, 1.0)
        arr.setflags(write=False)
        self.values = arr

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"OutcomeVector({self.values.tolist()})"

    def tolist(self) -> List[float]:
        return self.values.tolist()

    @classmethod
    def coerce(cls, x: Union["OutcomeVector", Sequence[float], np.ndarray], n: int) -> np.ndarray:
        vec = x.values if isinstance(x, OutcomeVector) else cls(x).values
        if vec.size != n:
            raise DimensionMismatch(f"Outcome vector has length {vec.size}, POVM has {n} outcomes")
        return vec

    @classmethod
    def ones(cls, n: int) -> "OutcomeVector":
        return cls(np.ones(n))

    @classmethod
    def basis(cls, n: int, j: int) -> "OutcomeVector":
        e = np.zeros(n)
        e[j] = 1.0
        return cls(e)


class FinitePovm:
    """POVM on Omega_N = {1..N}: PSD operators A_1..A_N summing to identity.

    Storage is either dense (N, dim, dim) or, for POVMs made of diagonal
    operators, the (N, dim) array of diagonals. Every operation accepts both.
    """

    def __init__(self, elements: Any, validate: bool = True):
        if isinstance(elements, (list, tuple)) and elements and isinstance(elements[0], HermitianMatrix):
            stack = np.stack([e.entries for e in elements])
        else:
            stack = np.array(elements, dtype=complex)
        if stack.ndim != 3 or stack.shape[1] != stack.shape[2] or stack.shape[0] < 1:
            raise InvalidPovm(f"Expected an (N, dim, dim) stack, got shape {stack.shape}")
        stack = 0.5 * (stack + np.conj(np.transpose(stack, (0, 2, 1))))
        stack.setflags(write=False)
        self._dense: Optional[np.ndarray] = stack
        self._diag: Optional[np.ndarray] = None
        if validate:
            self._validate()

    @classmethod
    def from_diagonals(cls, diagonals: Any, validate: bool = True) -> "FinitePovm":
        diag = np.array(diagonals, dtype=float)
        if diag.ndim != 2 or diag.shape[0] < 1:
            raise InvalidPovm(f"Expected an (N, dim) array of diagonals, got shape {diag.shape}")
        diag.setflags(write=False)
        povm = cls.__new__(cls)
        povm._dense = None
        povm._diag = diag
        if validate:
            povm._validate()
        return povm

    @classmethod
    def trivial(cls, dim: int, n: int) -> "FinitePovm":
        """A_j = id / N."""
        return cls.from_diagonals(np.full((n, dim), 1.0 / n))

    def _validate(self):
        if self.is_diagonal:
            if np.min(self._diag) < -PSD_TOL:
                raise InvalidPovm(f"Element not PSD: min eigenvalue {np.min(self._diag):.3e}")
            residual = float(np.max(np.abs(self._diag.sum(axis=0) - 1.0)))
        else:
            if not np.all(np.isfinite(self._dense)):
                raise InvalidPovm("POVM has non-finite entries")
            for j, a in enumerate(self._dense):
                w = Linalg.eigvalsh(a)
                if w[0] < -PSD_TOL:
                    raise InvalidPovm(f"Element {j + 1} not PSD: min eigenvalue {w[0]:.3e}")
            residual = float(np.max(np.abs(self._dense.sum(axis=0) - np.eye(self.dim))))
        if residual > IDENTITY_TOL:
            raise InvalidPovm(f"Elements do not sum to identity: max deviation {residual:.3e}")

    # storage -----------------------------------------------------------------

    @property
    def is_diagonal(self) -> bool:
        return self._diag is not None

    @property
    def n(self) -> int:
        return (self._diag if self.is_diagonal else self._dense).shape[0]

    @property
    def dim(self) -> int:
        return (self._diag if self.is_diagonal else self._dense).shape[1]

    @property
    def diagonals(self) -> np.ndarray:
        if not self.is_diagonal:
            raise InvalidPovm("POVM is stored densely")
        return self._diag

    @property
    def stack(self) -> np.ndarray:
        """Dense (N, dim, dim) array; materialized on demand for diagonal storage."""
        if self._dense is None:
            dense = np.zeros((self.n, self.dim, self.dim), dtype=complex)
            idx = np.arange(self.dim)
            dense[:, idx, idx] = self._diag
            dense.setflags(write=False)
            self._dense = dense
        return self._dense

    @property
    def elements(self) -> List[HermitianMatrix]:
        return [HermitianMatrix(a, assume_hermitian=True) for a in self.stack]

    def __repr__(self) -> str:
        kind = "diagonal" if self.is_diagonal else "dense"
        return f"FinitePovm(N={self.n}, dim={self.dim}, {kind})"

    # array-level kernels used by the services -------------------------------

    def contract_array(self, x: np.ndarray) -> np.ndarray:
        if self.is_diagonal:
            return x @ self._diag
        return np.einsum("j,jab->ab", x, self._dense)

    def noise_array(self, x: np.ndarray) -> np.ndarray:
        """Delta_A(x) as an array (the diagonal vector for diagonal storage)."""
        if self.is_diagonal:
            ax = x @ self._diag
            return (x ** 2) @ self._diag - ax ** 2
        ax = np.einsum("j,jab->ab", x, self._dense)
        d = np.einsum("j,jab->ab", x ** 2, self._dense) - ax @ ax
        return 0.5 * (d + d.conj().T)

    def noise_norm(self, x: np.ndarray) -> float:
        d = self.noise_array(x)
        if self.is_diagonal:
            return float(np.max(np.abs(d))) if d.size else 0.0
        return Linalg.operator_norm(d)

    def commutator_norm(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.is_diagonal:
            return 0.0
        return Linalg.commutator_norm(self.contract_array(x), self.contract_array(y))

    # operations ---------------------------------------------------------------

    def contract(self, x) -> HermitianMatrix:
        """A(x) = sum_j x_j A_j."""
        vec = OutcomeVector.coerce(x, self.n)
        if self.is_diagonal:
            return HermitianMatrix.diag(self.contract_array(vec))
        return HermitianMatrix(self.contract_array(vec))

    def noise_operator(self, x) -> HermitianMatrix:
        """Delta_A(x) = sum_j x_j^2 A_j - A(x)^2."""
        vec = OutcomeVector.coerce(x, self.n)
        if self.is_diagonal:
            return HermitianMatrix.diag(self.noise_array(vec))
        return HermitianMatrix(self.noise_array(vec), assume_hermitian=True)

    def noise_operator_sandwich(self, x) -> HermitianMatrix:
        """Second form: sum_j (A(x) - x_j) A_j (A(x) - x_j)."""
        vec = OutcomeVector.coerce(x, self.n)
        stack = self.stack
        ax = np.einsum("j,jab->ab", vec, stack)
        eye = np.eye(self.dim)
        total = np.zeros((self.dim, self.dim), dtype=complex)
        for xj, aj in zip(vec, stack):
            shifted = ax - xj * eye
            total += shifted @ aj @ shifted
        return HermitianMatrix(total)

    def max_commutator(self) -> float:
        """max_{i<j} ||[A_i, A_j]||."""
        if self.is_diagonal:
            return 0.0
        worst = 0.0
        for i in range(self.n):
            for j in range(i + 1, self.n):
                worst = max(worst, Linalg.commutator_norm(self._dense[i], self._dense[j]))
        return worst

    def is_commutative(self, tol: float = 1e-9) -> bool:
        return self.max_commutator() <= tol

    def is_projection_valued(self, tol: float = 1e-9) -> bool:
        if self.is_diagonal:
            d = self._diag
            return bool(np.max(np.abs(d * d - d)) <= tol)
        for a in self._dense:
            if np.max(np.abs(a @ a - a)) > tol:
                return False
        return True

    def outcome_probabilities(self, state: Sequence[complex]) -> np.ndarray:
        """<A_j xi, xi> for a state vector (normalized here)."""
        xi = np.asarray(state, dtype=complex).reshape(-1)
        if xi.size != self.dim:
            raise DimensionMismatch(f"State has length {xi.size}, POVM acts on dim {self.dim}")
        xi = xi / np.linalg.norm(xi)
        if self.is_diagonal:
            return self._diag @ (np.abs(xi) ** 2)
        return np.real(np.einsum("a,jab,b->j", xi.conj(), self._dense, xi))

    def variance_gap(self, x, state: Sequence[complex]) -> float:
        """Var of the POVM observable with values x minus Var of the sharp contraction A(x).

        Both variances are computed from their own distributions; the gap equals
        <Delta_A(x) xi, xi>.
        """
        vec = OutcomeVector.coerce(x, self.n)
        xi = np.asarray(state, dtype=complex).reshape(-1)
        xi = xi / np.linalg.norm(xi)
        p = self.outcome_probabilities(xi)
        var_povm = float(p @ vec ** 2 - (p @ vec) ** 2)
        lam, vecs = Linalg.eigh(self.contract(vec).entries)
        q = np.abs(vecs.conj().T @ xi) ** 2
        var_sharp = float(q @ lam ** 2 - (q @ lam) ** 2)
        return var_povm - var_sharp

    def to_payload(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "N": self.n,
            "elements": [e.to_payload() for e in self.elements],
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "FinitePovm":
        try:
            parsed = PovmPayload.model_validate(payload)
        except ValidationError as e:
            raise InvalidPovm(f"Malformed POVM payload: {e}")
        return cls([HermitianMatrix.from_payload(e.model_dump()) for e in parsed.elements])


class NaimarkDilation:
    """Isometry V: H -> C^N (x) H with block projectors P_j.

    V stacks sqrt(A_j) vertically; P_j projects onto the j-th dim-sized block, so
    V* P_j V = A_j and Psi(B) = V* B V compresses operators on the big space.
    """

    def __init__(self, isometry: np.ndarray, n: int):
        self.isometry = np.asarray(isometry, dtype=complex)
        self.isometry.setflags(write=False)
        self.n = n
        self.dim = self.isometry.shape[1]

    @property
    def big_dim(self) -> int:
        return self.n * self.dim

    def projector(self, j: int) -> HermitianMatrix:
        p = np.zeros((self.big_dim, self.big_dim), dtype=complex)
        block = slice(j * self.dim, (j + 1) * self.dim)
        p[block, block] = np.eye(self.dim)
        return HermitianMatrix(p, assume_hermitian=True)

    @property
    def projectors(self) -> List[HermitianMatrix]:
        return [self.projector(j) for j in range(self.n)]

    def lift(self, x) -> HermitianMatrix:
        """B = sum_i x_i P_i, block-diagonal on the big space."""
        vec = OutcomeVector.coerce(x, self.n)
        return HermitianMatrix(np.diag(np.repeat(vec, self.dim)).astype(complex), assume_hermitian=True)

    def compress(self, b: HermitianMatrix) -> HermitianMatrix:
        """Psi(B) = V* B V."""
        if b.dim != self.big_dim:
            raise DimensionMismatch(f"Operator has dim {b.dim}, dilation space has {self.big_dim}")
        v = self.isometry
        return HermitianMatrix(v.conj().T @ b.entries @ v)
