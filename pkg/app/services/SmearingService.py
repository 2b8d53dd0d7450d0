import logging
from typing import Any, Dict, List, Optional, Tuple
import numpy as np
from app.helpers import Linalg
from app.helpers.Exceptions import DimensionMismatch, NotCommutative
from app.helpers.Utilities import Utils
from app.models.Kernel import MarkovKernel
from app.models.Povm import FinitePovm, OutcomeVector
from app.schemas.Scenario import SearchBudget
from app.services.PovmService import PovmService

logger = logging.getLogger(__name__)

DEFAULT_COMMUTATIVITY_TOL = 1e-8
# joint eigenvector check after diagonalizing a random combination
JOINT_RESIDUAL_TOL = 1e-6
UNSMEAR_ATTEMPTS = 4


class SmearingService:
    """Markov kernels acting on POVMs, commutative unsmearing and the systematic-noise bracket."""

    def __init__(self, povm_service: Optional[PovmService] = None):
        self.povms = povm_service or PovmService()

    @staticmethod
    def smear(b: FinitePovm, kernel: MarkovKernel) -> FinitePovm:
        """A_j = sum_w gamma[w][j] B_w."""
        if kernel.source_size != b.n:
            raise DimensionMismatch(f"Kernel has {kernel.source_size} source outcomes, POVM has {b.n}")
        if b.is_diagonal:
            return FinitePovm.from_diagonals(kernel.gamma.T @ b.diagonals)
        return FinitePovm(np.einsum("wj,wab->jab", kernel.gamma, b.stack))

    @staticmethod
    def pushforward(kernel: MarkovKernel, x) -> OutcomeVector:
        """(Gamma x)(w) = sum_j x_j gamma[w][j]."""
        vec = OutcomeVector.coerce(x, kernel.target_size)
        return OutcomeVector(np.clip(kernel.gamma @ vec, -1.0, 1.0))

    # --- unsmearing ---------------------------------------------------------------------

    def unsmear_commutative(
        self, povm: FinitePovm, tol: float = DEFAULT_COMMUTATIVITY_TOL, seed: int = 0
    ) -> Tuple[FinitePovm, MarkovKernel]:
        """Sharp P and kernel with smear(P, kernel) = A, for commutative A."""
        worst = povm.max_commutator()
        if worst > tol:
            raise NotCommutative(worst, tol)
        if povm.is_diagonal:
            return self._unsmear_diagonal(povm)
        for attempt in range(UNSMEAR_ATTEMPTS):
            result = self._unsmear_dense(povm, tol, Utils.derive_seed(seed, attempt))
            if result is not None:
                return result
            logger.warning(f"Joint diagonalization attempt {attempt} mixed eigenspaces, retrying with a new combination")
        raise NotCommutative(worst, tol)

    def _unsmear_dense(self, povm: FinitePovm, tol: float, rng: np.random.Generator):
        stack = povm.stack
        _, vecs = Linalg.eigh(povm.contract_array(rng.standard_normal(povm.n)))
        applied = np.einsum("jab,bi->jia", stack, vecs)
        expect = np.real(np.einsum("ai,jia->ij", vecs.conj(), applied))
        leak = applied - expect.T[:, :, None] * vecs.T[None, :, :]
        if float(np.max(np.linalg.norm(leak, axis=2))) > JOINT_RESIDUAL_TOL:
            return None

        radius = 10.0 * tol
        clusters: List[List[int]] = []
        for i in range(expect.shape[0]):
            for members in clusters:
                if np.max(np.abs(expect[members[0]] - expect[i])) <= radius:
                    members.append(i)
                    break
            else:
                clusters.append([i])
        # canonical order: by the leading basis coordinate of the cluster's vectors
        clusters.sort(key=lambda members: min(int(np.argmax(np.abs(vecs[:, i]))) for i in members))
        projectors = np.stack([vecs[:, members] @ vecs[:, members].conj().T for members in clusters])
        rows = np.stack([expect[members].mean(axis=0) for members in clusters])
        return FinitePovm(projectors), MarkovKernel(rows, clip=max(10.0 * tol, 1e-12))

    @staticmethod
    def _unsmear_diagonal(povm: FinitePovm) -> Tuple[FinitePovm, MarkovKernel]:
        """Indicator projectors of basis points sharing a value column, kernel rows = that column."""
        columns = povm.diagonals.T
        _, first, inverse = np.unique(np.round(columns, 12), axis=0, return_index=True, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        labels = rank[inverse]
        indicators = np.zeros((order.size, povm.dim))
        indicators[labels, np.arange(povm.dim)] = 1.0
        rows = columns[first[order]]
        return FinitePovm.from_diagonals(indicators), MarkovKernel(rows, clip=1e-12)

    # --- systematic noise ------------------------------------------------------------------

    def systematic_noise_bracket(
        self, povm: FinitePovm, budget: Optional[SearchBudget] = None, tol: float = DEFAULT_COMMUTATIVITY_TOL
    ) -> Dict[str, Any]:
        """lower = nu_q / 2; upper = 0 with a sharp unsmearing, else N(A)."""
        budget = budget or SearchBudget()
        nu_q, x, y = self.povms.noncommutativity(povm, budget)
        lower = 0.5 * nu_q
        bracket = {"lower": lower, "nu_q": nu_q, "x": x.tolist(), "y": y.tolist(), "sharp_unsmearing": False}
        if povm.is_commutative(tol):
            sharp, kernel = self.unsmear_commutative(povm, tol, seed=budget.seed)
            if sharp.is_projection_valued(max(tol, 1e-9)):
                bracket.update(upper=0.0, sharp_unsmearing=True, sharp_outcomes=sharp.n)
                return bracket
        noise, witness = self.povms.noise_magnitude(povm, budget)
        bracket.update(upper=noise, noise_x=witness.tolist())
        return bracket

    def bracket_sensitivity(
        self,
        povm: FinitePovm,
        epsilon: float,
        samples: int,
        seed: int,
        budget: Optional[SearchBudget] = None,
    ) -> List[Dict[str, Any]]:
        """Brackets of (1 - eps) A + eps R for random POVMs R."""
        out = []
        for s in range(samples):
            noise_seed = int(Utils.derive_seed(seed, s).integers(0, 2 ** 31 - 1))
            r = self.povms.random_povm(povm.dim, povm.n, noise_seed)
            mixed = FinitePovm((1.0 - epsilon) * povm.stack + epsilon * r.stack)
            bracket = self.systematic_noise_bracket(mixed, budget)
            out.append({"sample": s, "epsilon": epsilon, "lower": bracket["lower"], "upper": bracket["upper"]})
        return out
