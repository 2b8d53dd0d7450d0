import logging
from typing import Dict, List, Optional, Sequence
import numpy as np
from scipy.optimize import minimize
from app.helpers.Exceptions import CoverageGap, InvalidCover
from app.helpers.Quadrature import SphereGrid
from app.helpers.ReportStore import ReportStore
from app.helpers.Utilities import Utils
from app.models.Povm import FinitePovm
from app.models.Sphere import (
    BandCover,
    CapCover,
    PartitionOfUnity,
    SphereFunction,
    SpherePoint,
    cosine_fall,
    cosine_fall_derivative,
    geodesic_angle,
    tapered_ramp,
)
from app.schemas.Scenario import PartitionSpec, SearchBudget

logger = logging.getLogger(__name__)

# {f, g} = KAPPA * (d_t f d_phi g - d_phi f d_t g); pinned by the spin calibration of T_m
KAPPA = 2.0
# caps stay displaceable (area fraction (1 - cos r) / 2 < 1/2) up to r = pi/2
DEFAULT_CAP_RADIUS = 1.55
COVER_MARGIN = 1.3
CAP_TAPER = 0.05
COVERAGE_FLOOR = 1e-6
# largest N for which the per-point bilinear maximum is enumerated exactly
NU_C_EXACT_MAX_N = 20


class SphereService:
    """Classical side on S^2: brackets, norms, covers, partitions and nu_c."""

    # --- brackets and norms -------------------------------------------------------

    def poisson_bracket(self, f: SphereFunction, g: SphereFunction) -> SphereFunction:
        """{f, g} in the (t, phi) chart with calibration constant KAPPA."""

        def bracket(t, p):
            return KAPPA * (f.partial_t(t, p) * g.partial_phi(t, p) - f.partial_phi(t, p) * g.partial_t(t, p))

        return SphereFunction(bracket, name=f"{{{f.name},{g.name}}}")

    def sup_norm(self, f: SphereFunction, grid: SphereGrid, refine: bool = False) -> float:
        """max |f| over grid nodes (a lower bound of the true sup).

        With refine=True the best nodes are polished by bounded L-BFGS-B so
        sups attained at the poles are hit exactly.
        """
        values = f.on_grid(grid)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{f!r} is not finite on the grid")
        best = float(np.max(np.abs(values)))
        if not refine:
            return best
        for idx in np.argsort(-np.abs(values))[:5]:
            sign = 1.0 if values[idx] >= 0 else -1.0
            result = minimize(
                lambda z: -sign * float(f(np.array([z[0]]), np.array([z[1]]))[0]),
                x0=np.array([grid.t[idx], grid.phi[idx]]),
                method="L-BFGS-B",
                bounds=[(-1.0, 1.0), (None, None)],
            )
            best = max(best, float(-result.fun))
        return best

    def phi_functional(self, f: SphereFunction, g: SphereFunction, grid: SphereGrid) -> float:
        """Phi(f, g) = ||{f, g}|| on the grid."""
        return self.sup_norm(self.poisson_bracket(f, g), grid)

    # --- nu_c ------------------------------------------------------------------------

    def bracket_tensor(self, p: PartitionOfUnity, grid: SphereGrid) -> np.ndarray:
        """(nodes, N, N) antisymmetric tensor B(p)_jk = {f_j, f_k}(p)."""
        dt = np.stack([f.partial_t(grid.t, grid.phi) for f in p.functions], axis=1)
        dp = np.stack([f.partial_phi(grid.t, grid.phi) for f in p.functions], axis=1)
        b = KAPPA * (dt[:, :, None] * dp[:, None, :] - dp[:, :, None] * dt[:, None, :])
        return b

    def nu_c(self, p: PartitionOfUnity, grid: SphereGrid, budget: Optional[SearchBudget] = None) -> Dict:
        """Grid lower bound of nu_c with witnesses x, y and the attaining point.

        Per point the value is max over sign vectors of |x^T B y|, which equals
        max_x ||B^T x||_1 with y = sign(B^T x).
        """
        budget = budget or SearchBudget()
        tensor = self.bracket_tensor(p, grid)
        n = p.n
        active = np.flatnonzero(np.max(np.abs(tensor), axis=(1, 2)) > 1e-14)
        result = {"value": 0.0, "x": [1.0] * n, "y": [1.0] * n, "point": None, "exact": n <= NU_C_EXACT_MAX_N}
        if active.size == 0:
            return result
        if n <= NU_C_EXACT_MAX_N:
            best_val, best_idx, best_x = self._nu_c_enumerate(tensor, active, n)
        else:
            best_val, best_idx, best_x = self._nu_c_local_search(tensor, active, n, budget)
        y = np.sign(tensor[best_idx].T @ best_x)
        y[y == 0] = 1.0
        result.update(
            value=float(abs(best_x @ tensor[best_idx] @ y)),
            x=best_x.tolist(),
            y=y.tolist(),
            point=(float(grid.t[best_idx]), float(grid.phi[best_idx])),
        )
        return result

    def _nu_c_enumerate(self, tensor: np.ndarray, active: np.ndarray, n: int):
        vertices = Utils.sign_vertices(n)
        chunk = max(1, (1 << 22) // (vertices.shape[0] * n))
        best_val, best_idx, best_x = -1.0, int(active[0]), vertices[0]
        for sl in Utils.chunks(active.size, chunk):
            idx = active[sl]
            # (points, vertices, N): B^T x for every vertex x
            proj = np.einsum("vj,pjk->pvk", vertices, tensor[idx])
            l1 = np.abs(proj).sum(axis=2)
            flat = int(np.argmax(l1))
            p_i, v_i = divmod(flat, vertices.shape[0])
            if l1[p_i, v_i] > best_val:
                best_val, best_idx, best_x = float(l1[p_i, v_i]), int(idx[p_i]), vertices[v_i]
        return best_val, best_idx, best_x

    def _nu_c_local_search(self, tensor: np.ndarray, active: np.ndarray, n: int, budget: SearchBudget):
        scores = np.linalg.norm(tensor[active], axis=(1, 2))
        candidates = active[np.argsort(-scores)[:64]]
        best_val, best_idx, best_x = -1.0, int(candidates[0]), np.ones(n)
        for c, idx in enumerate(candidates):
            b = tensor[idx]
            for s in range(max(1, budget.starts // 8)):
                rng = Utils.derive_seed(budget.seed, c, s)
                x = rng.choice([-1.0, 1.0], size=n)
                val = np.abs(b.T @ x).sum()
                improved = True
                while improved:
                    improved = False
                    for j in range(n):
                        x[j] = -x[j]
                        trial = np.abs(b.T @ x).sum()
                        if trial > val + 1e-15:
                            val, improved = trial, True
                            break
                        x[j] = -x[j]
                if val > best_val:
                    best_val, best_idx, best_x = float(val), int(idx), x.copy()
        return best_val, best_idx, best_x

    # --- covers -----------------------------------------------------------------------

    def band_cover(self, n: int, overlap: float) -> BandCover:
        """N equal-width t-intervals with consecutive overlaps, union [-1, 1]."""
        if n < 2:
            raise InvalidCover(f"band covers need N >= 2, got {n}")
        width = (2.0 + (n - 1) * overlap) / n
        if not 0.0 < overlap < width:
            raise InvalidCover(f"overlap must lie in (0, {width:.6g}) for N={n}, got {overlap}")
        step = width - overlap
        intervals = [(-1.0 + j * step, -1.0 + j * step + width) for j in range(n)]
        intervals[-1] = (intervals[-1][0], 1.0)
        return BandCover(intervals)

    def band_partition(self, cover: BandCover) -> PartitionOfUnity:
        """Cosine-taper partition f_j(q3) subordinated to a band cover."""
        intervals = sorted(cover.intervals)
        if intervals[0][0] > -1.0 or intervals[-1][1] < 1.0:
            raise InvalidCover("bands do not reach both poles")
        centers, overlaps = [], []
        for (a0, b0), (a1, b1) in zip(intervals, intervals[1:]):
            if a1 >= b0:
                raise InvalidCover(f"gap between bands at t in [{b0:.6g}, {a1:.6g}]")
            centers.append(0.5 * (a1 + b0))
            overlaps.append(b0 - a1)
        halves = []
        for j, (c, ov) in enumerate(zip(centers, overlaps)):
            h = 0.4 * ov
            if j > 0:
                h = min(h, 0.45 * (c - centers[j - 1]))
            if j + 1 < len(centers):
                h = min(h, 0.45 * (centers[j + 1] - c))
            halves.append(h)
        steps = [(c - h, c + h) for c, h in zip(centers, halves)]

        def step(j):
            if j < 0:
                return lambda t: np.zeros_like(t), lambda t: np.zeros_like(t)
            if j >= len(steps):
                return lambda t: np.ones_like(t), lambda t: np.zeros_like(t)
            lo, hi = steps[j]
            return (lambda t: cosine_fall(t, lo, hi)), (lambda t: cosine_fall_derivative(t, lo, hi))

        functions = []
        for j in range(len(intervals)):
            s_hi, ds_hi = step(j)
            s_lo, ds_lo = step(j - 1)
            functions.append(
                SphereFunction.of_t(
                    lambda t, s_hi=s_hi, s_lo=s_lo: s_hi(t) - s_lo(t),
                    lambda t, ds_hi=ds_hi, ds_lo=ds_lo: ds_hi(t) - ds_lo(t),
                    name=f"band{j + 1}",
                )
            )
        return PartitionOfUnity(functions, BandCover(intervals))

    @staticmethod
    def tetrahedral_centers() -> List[SpherePoint]:
        vertices = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
        return [SpherePoint.from_cartesian(v) for v in vertices]

    @staticmethod
    def fibonacci_centers(n: int) -> List[SpherePoint]:
        golden = np.pi * (3.0 - np.sqrt(5.0))
        return [SpherePoint(1.0 - (2.0 * k + 1.0) / n, k * golden) for k in range(n)]

    def default_centers(self, n: int) -> List[SpherePoint]:
        return self.tetrahedral_centers() if n == 4 else self.fibonacci_centers(n)

    def covering_radius(self, centers: Sequence[SpherePoint], grid: Optional[SphereGrid] = None) -> float:
        """Largest distance from a grid node to its nearest centre."""
        grid = grid or SphereGrid(128, 256)
        angles = np.stack([geodesic_angle(grid.t, grid.phi, c) for c in centers])
        return float(np.max(np.min(angles, axis=0)))

    def default_cap_radius(self, centers: Sequence[SpherePoint]) -> float:
        """COVER_MARGIN times the covering radius, capped at DEFAULT_CAP_RADIUS."""
        return min(COVER_MARGIN * self.covering_radius(centers), DEFAULT_CAP_RADIUS)

    def cap_partition(
        self,
        centers: Optional[Sequence[SpherePoint]] = None,
        radius: Optional[float] = None,
        grid: Optional[SphereGrid] = None,
    ) -> PartitionOfUnity:
        """f_i = b_i / sum_k b_k with b_i = tapered_ramp(r - angle to c_i).

        b_i grows linearly with the geodesic depth below the rim, its slope switched on by a
        cosine taper over the outer CAP_TAPER * r. Where three caps overlap the depths sum to
        a near-constant, so the f_i are near-affine there.
        """
        centers = list(centers) if centers is not None else self.tetrahedral_centers()
        radius = float(radius) if radius is not None else self.default_cap_radius(centers)
        if not 0.0 < radius < np.pi:
            raise InvalidCover(f"cap radius must lie in (0, pi), got {radius}")
        grid = grid or SphereGrid(64, 128)
        cover = CapCover(centers, radius)
        width = CAP_TAPER * radius

        def bump(c):
            return lambda t, p: tapered_ramp(radius - geodesic_angle(t, p, c), width)

        bumps = [bump(c) for c in centers]

        def total(t, p):
            return sum(b(t, p) for b in bumps)

        coverage = total(grid.t, grid.phi)
        worst = int(np.argmin(coverage))
        if coverage[worst] <= COVERAGE_FLOOR:
            raise CoverageGap((float(grid.t[worst]), float(grid.phi[worst])), float(coverage[worst]))
        if cover.area_fraction() >= 0.5:
            logger.warning(f"Cap area fraction {cover.area_fraction():.4f} >= 1/2: caps are not displaceable discs")

        def normalized(i):
            def f(t, p):
                tot = total(t, p)
                return np.where(tot > 0, bumps[i](t, p) / np.where(tot > 0, tot, 1.0), 1.0 / len(bumps))

            return f

        functions = [SphereFunction(normalized(i), name=f"cap{i + 1}") for i in range(len(centers))]
        return PartitionOfUnity(functions, cover)

    def voronoi_cells(self, centers: Sequence[SpherePoint]) -> List[SphereFunction]:
        """Indicators of the nearest-centre cells: a partition of S^2 into sets."""
        centers = list(centers)

        def cell(j):
            def predicate(t, p):
                angles = np.stack([geodesic_angle(t, p, c) for c in centers])
                return np.argmin(angles, axis=0) == j

            return predicate

        return [SphereFunction.indicator(cell(j), name=f"cell{j + 1}") for j in range(len(centers))]

    def partition_from_spec(self, spec: PartitionSpec, grid: Optional[SphereGrid] = None) -> PartitionOfUnity:
        if spec.type == "bands":
            return self.band_partition(self.band_cover(spec.N, spec.overlap))
        centers = [SpherePoint(t, p) for t, p in spec.centers] if spec.centers else self.default_centers(spec.N)
        return self.cap_partition(centers, spec.radius, grid)

    # --- registration -------------------------------------------------------------------

    def registration_probabilities(self, p: PartitionOfUnity, density: SphereFunction, grid: SphereGrid) -> np.ndarray:
        """Probability of registering in U_j for points drawn from density * dmu."""
        sigma = density.on_grid(grid)
        if np.min(sigma) < 0:
            raise ValueError("density must be nonnegative")
        mass = grid.integrate(sigma)
        return np.array([grid.integrate(v * sigma) for v in p.values(grid)]) / mass

    def validate_partition(self, p: PartitionOfUnity, grid: SphereGrid) -> Dict[str, float]:
        residuals = p.invariant_residuals(grid)
        if residuals["min_value"] < -1e-12 or residuals["sum_deviation"] > 1e-10 or residuals["outside_support"] > 1e-10:
            raise InvalidCover(f"partition violates its invariants: {residuals}")
        return residuals

    @staticmethod
    def classical_registration_povm(p: PartitionOfUnity, grid: SphereGrid) -> FinitePovm:
        """A_j = multiplication by f_j on functions sampled at the grid nodes."""
        return FinitePovm.from_diagonals(np.clip(p.values(grid), 0.0, None))

    @staticmethod
    def export_partition_csv(p: PartitionOfUnity, grid: SphereGrid, path: str) -> str:
        return ReportStore().export_partition_csv(p, grid, path)
