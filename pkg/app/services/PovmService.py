import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple
import numpy as np
from app.config.Settings import get_settings
from app.helpers import Linalg
from app.helpers.Exceptions import InvalidPovm, LabError
from app.helpers.Utilities import Utils
from app.models.Operator import HermitianMatrix
from app.models.Povm import FinitePovm, NaimarkDilation, OutcomeVector
from app.schemas.Scenario import SearchBudget

logger = logging.getLogger(__name__)

# Largest batch (entries of complex d x d blocks) materialized at once
BATCH_ENTRIES = 1 << 22
RANDOM_POVM_RETRIES = 5


class PovmService:
    """Operations on finite POVMs: noise operator, N(A), nu_q, Janssens residual, Naimark."""

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or get_settings().resolved_workers()

    # --- elementary operations ---------------------------------------------------

    @staticmethod
    def contract(povm: FinitePovm, x) -> HermitianMatrix:
        return povm.contract(x)

    @staticmethod
    def noise_operator(povm: FinitePovm, x) -> HermitianMatrix:
        return povm.noise_operator(x)

    @staticmethod
    def janssens_residual(povm: FinitePovm, x, y) -> float:
        """||D(x)||^1/2 ||D(y)||^1/2 - 1/2 ||[A(x), A(y)]||; nonnegative up to rounding."""
        vx = OutcomeVector.coerce(x, povm.n)
        vy = OutcomeVector.coerce(y, povm.n)
        # clamp tiny negative eigen-noise of a PSD operator before the square root
        nx = max(povm.noise_norm(vx), 0.0)
        ny = max(povm.noise_norm(vy), 0.0)
        return float(np.sqrt(nx) * np.sqrt(ny) - 0.5 * povm.commutator_norm(vx, vy))

    @staticmethod
    def naimark_dilate(povm: FinitePovm) -> NaimarkDilation:
        """V = [sqrt(A_1); ...; sqrt(A_N)] with block projectors."""
        blocks = []
        for a in povm.stack:
            tol = max(Linalg.psd_tolerance(a), 1e-10)
            blocks.append(Linalg.psd_sqrt(a, tol))
        return NaimarkDilation(np.vstack(blocks), povm.n)

    @staticmethod
    def naimark_residuals(povm: FinitePovm, dilation: NaimarkDilation, x=None) -> Dict[str, float]:
        """Worst deviations from the dilation invariants (and the noise identity at x)."""
        v = dilation.isometry
        big = dilation.big_dim
        projectors = [p.entries for p in dilation.projectors]
        residuals = {
            "isometry": float(np.max(np.abs(v.conj().T @ v - np.eye(dilation.dim)))),
            "idempotent": max(float(np.max(np.abs(p @ p - p))) for p in projectors),
            "hermitian": max(float(np.max(np.abs(p - p.conj().T))) for p in projectors),
            "completeness": float(np.max(np.abs(sum(projectors) - np.eye(big)))),
            "orthogonal": 0.0,
            "compression": max(
                float(np.max(np.abs(dilation.compress(HermitianMatrix(p, assume_hermitian=True)).entries - a)))
                for p, a in zip(projectors, povm.stack)
            ),
        }
        for i in range(len(projectors)):
            for j in range(i + 1, len(projectors)):
                residuals["orthogonal"] = max(residuals["orthogonal"], float(np.max(np.abs(projectors[i] @ projectors[j]))))
        if x is not None:
            vec = OutcomeVector.coerce(x, povm.n)
            b1 = dilation.lift(vec)
            squared = HermitianMatrix(b1.entries @ b1.entries, assume_hermitian=True)
            psi_b1 = dilation.compress(b1).entries
            lhs = dilation.compress(squared).entries - psi_b1 @ psi_b1
            residuals["contraction"] = float(np.max(np.abs(psi_b1 - povm.contract_array(vec))))
            residuals["noise"] = float(np.max(np.abs(lhs - povm.noise_operator(vec).entries)))
        return residuals

    @staticmethod
    def random_povm(dim: int, n: int, seed: int) -> FinitePovm:
        """A_j = S^-1/2 G_j S^-1/2 with G_j = M_j M_j* for complex Gaussian M_j."""
        if dim < 1 or n < 2:
            raise InvalidPovm(f"random_povm needs dim >= 1 and N >= 2, got ({dim}, {n})")
        for attempt in range(RANDOM_POVM_RETRIES):
            rng = Utils.derive_seed(seed, attempt)
            m = rng.standard_normal((n, dim, dim)) + 1j * rng.standard_normal((n, dim, dim))
            g = m @ np.conj(np.transpose(m, (0, 2, 1)))
            s = g.sum(axis=0)
            try:
                root = Linalg.inverse_sqrt(s, floor=1e-12 * float(np.real(np.trace(s))))
            except LabError:
                logger.warning(f"random_povm(dim={dim}, N={n}, seed={seed}): singular sum on attempt {attempt}, redrawing")
                continue
            return FinitePovm(root @ g @ root)
        raise InvalidPovm(f"random_povm(dim={dim}, N={n}, seed={seed}) failed after {RANDOM_POVM_RETRIES} attempts")

    # --- cube searches -------------------------------------------------------------

    @staticmethod
    def _batched_noise_norms(povm: FinitePovm, xs: np.ndarray) -> np.ndarray:
        if povm.is_diagonal:
            d = povm.diagonals
            ax = xs @ d
            return np.max(np.abs((xs ** 2) @ d - ax ** 2), axis=1)
        stack = povm.stack
        chunk = max(1, BATCH_ENTRIES // (povm.dim * povm.dim))
        out = np.empty(xs.shape[0])
        for sl in Utils.chunks(xs.shape[0], chunk):
            ax = np.einsum("vj,jab->vab", xs[sl], stack)
            delta = np.einsum("vj,jab->vab", xs[sl] ** 2, stack) - ax @ ax
            delta = 0.5 * (delta + np.conj(np.transpose(delta, (0, 2, 1))))
            w = np.linalg.eigvalsh(delta)
            out[sl] = np.maximum(np.abs(w[:, 0]), np.abs(w[:, -1]))
        return out

    def _ascend(self, povm: FinitePovm, x0: np.ndarray, budget: SearchBudget) -> Tuple[float, np.ndarray]:
        """Projected gradient ascent of <v, D(x) v> with v the running top eigenvector."""
        x = np.clip(x0, -1.0, 1.0)
        best_val, best_x = -1.0, x.copy()
        for _ in range(budget.iterations):
            delta = povm.noise_array(x)
            if povm.is_diagonal:
                i = int(np.argmax(delta))
                val = float(np.max(np.abs(delta)))
                a_v = povm.diagonals[:, i]
                grad = 2.0 * x * a_v - 2.0 * a_v * float(x @ a_v)
            else:
                w, vecs = Linalg.eigh(delta)
                val = float(max(abs(w[0]), abs(w[-1])))
                v = vecs[:, -1]
                a_v = np.einsum("jab,b->ja", povm.stack, v)
                diag = np.real(a_v @ v.conj())
                ax_v = np.einsum("j,ja->a", x, a_v)
                grad = 2.0 * x * diag - 2.0 * np.real(a_v.conj() @ ax_v)
            if val > best_val:
                best_val, best_x = val, x.copy()
            x_next = np.clip(x + budget.step * grad, -1.0, 1.0)
            if np.array_equal(x_next, x):
                break
            x = x_next
        return best_val, best_x

    def noise_magnitude(self, povm: FinitePovm, budget: Optional[SearchBudget] = None) -> Tuple[float, OutcomeVector]:
        """Certified lower bound of N(A) = max_x ||D(x)|| with its witness."""
        budget = budget or SearchBudget()
        n = povm.n
        if n == 1:
            return 0.0, OutcomeVector.ones(1)
        candidates = [np.eye(n)]
        starts = budget.starts
        if n <= budget.exhaustive_cutoff:
            candidates.append(Utils.sign_vertices(n))
            # the vertices are covered exactly; a few interior starts remain
            starts = max(1, budget.starts // 8)
        xs = np.vstack(candidates)
        norms = self._batched_noise_norms(povm, xs)
        best = int(np.argmax(norms))
        best_val, best_x = float(norms[best]), xs[best]

        # ascent from the best discrete candidate and from random interior starts
        def start(idx: int) -> Tuple[float, np.ndarray]:
            if idx == 0:
                x0 = best_x.astype(float)
            else:
                x0 = Utils.derive_seed(budget.seed, idx).uniform(-1.0, 1.0, size=n)
            return self._ascend(povm, x0, budget)

        results = Utils.map_ordered(start, list(range(starts)), self.workers)
        for val, x in results:
            if val > best_val + 1e-15:
                best_val, best_x = val, x
        witness = OutcomeVector(best_x)
        value = povm.noise_norm(witness.values)
        logger.debug(f"noise_magnitude N={n} dim={povm.dim}: {value:.6g}")
        return value, witness

    @staticmethod
    def _commutator_table(povm: FinitePovm) -> np.ndarray:
        """(N, N, d, d) table of i[A_j, A_k], Hermitian for Hermitian A_j."""
        stack = povm.stack
        prod = np.einsum("jab,kbc->jkac", stack, stack)
        return 1j * (prod - np.transpose(prod, (1, 0, 2, 3)))

    def noncommutativity(
        self, povm: FinitePovm, budget: Optional[SearchBudget] = None
    ) -> Tuple[float, OutcomeVector, OutcomeVector]:
        """Certified lower bound of nu_q(A) with vertex witnesses x, y."""
        budget = budget or SearchBudget()
        n = povm.n
        ones = OutcomeVector.ones(n)
        if n == 1 or povm.is_diagonal:
            return 0.0, ones, ones
        table = self._commutator_table(povm)
        if 2 * (n - 1) <= budget.exhaustive_cutoff:
            x, y = self._nu_q_enumerate(table, n, povm.dim)
        else:
            x, y = self._nu_q_local_search(table, n, budget)
        value = povm.commutator_norm(x, y)
        return value, OutcomeVector(x), OutcomeVector(y)

    def _nu_q_enumerate(self, table: np.ndarray, n: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
        vertices = Utils.sign_vertices(n)
        count = vertices.shape[0]
        # M_x = sum_j x_j C_jk for every vertex x
        half = np.einsum("vj,jkab->vkab", vertices, table)
        chunk = max(1, BATCH_ENTRIES // (count * dim * dim))
        best_val, best = -1.0, (0, 0)
        for sl in Utils.chunks(count, chunk):
            full = np.einsum("uk,vkab->vuab", vertices, half[sl])
            w = np.linalg.eigvalsh(full)
            norms = np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))
            flat = int(np.argmax(norms))
            xi, yi = divmod(flat, count)
            if norms[xi, yi] > best_val:
                best_val, best = float(norms[xi, yi]), (sl.start + xi, yi)
        return vertices[best[0]], vertices[best[1]]

    @staticmethod
    def _pair_value(table: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        return Linalg.operator_norm(np.einsum("j,k,jkab->ab", x, y, table))

    def _flip_improve(self, table: np.ndarray, fixed: np.ndarray, moving: np.ndarray, val: float, moving_first: bool):
        """Best single flip of `moving`; ties resolved by the lowest index."""
        best_j, best_val = -1, val
        for j in range(moving.size):
            moving[j] = -moving[j]
            trial = self._pair_value(table, moving, fixed) if moving_first else self._pair_value(table, fixed, moving)
            moving[j] = -moving[j]
            if trial > best_val + 1e-15:
                best_j, best_val = j, trial
        if best_j >= 0:
            moving[best_j] = -moving[best_j]
        return best_j >= 0, best_val

    def _nu_q_local_search(self, table: np.ndarray, n: int, budget: SearchBudget) -> Tuple[np.ndarray, np.ndarray]:
        def start(idx: int):
            rng = Utils.derive_seed(budget.seed, idx)
            x = rng.choice([-1.0, 1.0], size=n)
            y = rng.choice([-1.0, 1.0], size=n)
            val = self._pair_value(table, x, y)
            for _ in range(budget.iterations):
                moved_x, val = self._flip_improve(table, y, x, val, moving_first=True)
                moved_y, val = self._flip_improve(table, x, y, val, moving_first=False)
                if not (moved_x or moved_y):
                    break
            return val, x, y

        results = Utils.map_ordered(start, list(range(budget.starts)), self.workers)
        best_val, best_x, best_y = results[0]
        for val, x, y in results[1:]:
            if val > best_val + 1e-15:
                best_val, best_x, best_y = val, x, y
        return best_x, best_y

    # --- restricted suprema and ensembles --------------------------------------------

    @staticmethod
    def restricted_sup(povm: FinitePovm, candidates: Sequence[Sequence[float]]) -> Dict[str, float]:
        """max ||D(x)|| and 1/2 max ||[A(x), A(y)]|| over a finite candidate set."""
        vecs = [OutcomeVector.coerce(c, povm.n) for c in candidates]
        noise = max(povm.noise_norm(v) for v in vecs)
        comm = 0.0
        for i, x in enumerate(vecs):
            for y in vecs[i + 1:]:
                comm = max(comm, povm.commutator_norm(x, y))
        return {"noise": noise, "half_commutator": 0.5 * comm}

    def unsharpness_ratios(
        self,
        cases: int,
        dims: Tuple[int, int],
        outcomes: Tuple[int, int],
        seed: int,
        budget: Optional[SearchBudget] = None,
    ) -> List[Dict[str, Any]]:
        """N(A) / nu_q(A) lower-bound ratios over a random ensemble."""
        budget = budget or SearchBudget()
        table = []
        for case in range(cases):
            rng = Utils.derive_seed(seed, case)
            dim = int(rng.integers(dims[0], dims[1] + 1))
            n = int(rng.integers(outcomes[0], outcomes[1] + 1))
            povm = self.random_povm(dim, n, int(rng.integers(0, 2 ** 31 - 1)))
            noise, x = self.noise_magnitude(povm, budget)
            nu_q, wx, wy = self.noncommutativity(povm, budget)
            table.append(
                {
                    "dim": dim,
                    "N": n,
                    "noise": noise,
                    "nu_q": nu_q,
                    "ratio": noise / nu_q if nu_q > 0 else None,
                    "witnesses": {"noise_x": x.tolist(), "x": wx.tolist(), "y": wy.tolist()},
                }
            )
        return table
