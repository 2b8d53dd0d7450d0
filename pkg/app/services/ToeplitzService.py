"""
Berezin-Toeplitz quantization of S^2 through spin coherent states.

For level m the Hilbert space is C^(m+1) (polynomials of degree <= m in the
monomial basis z^k). The coherent vector at (t, phi) has components

    c_k = sqrt(C(m, k)) * sin(theta/2)^k * cos(theta/2)^(m-k) * exp(+i k phi)

so k = 0 is concentrated at the north pole, and

    T_m(f) = (m + 1) * sum_nodes weight * f(node) * c c*.

With this phase T_m(f(., phi + alpha)) = D T_m(f) D* for D = diag(exp(-i k alpha)),
and i m [T(q1), T(q2)] = -(2m / (m + 2)) T(q3) matches {q1, q2} = -2 q3.
"""
import logging
from typing import Dict, Optional, Sequence, Tuple
import numpy as np
from scipy.special import gammaln, xlogy
from app.helpers.Exceptions import ContextUnderresolved
from app.helpers.Quadrature import SphereGrid
from app.models.Operator import HermitianMatrix
from app.models.Povm import FinitePovm
from app.models.Sphere import PartitionOfUnity, SphereFunction
from app.services.SphereService import SphereService

logger = logging.getLogger(__name__)

MAX_LEVEL = 512


class ToeplitzContext:
    """Level m, quadrature grid and coherent amplitudes on every node (read-only)."""

    def __init__(self, m: int, grid: Optional[SphereGrid] = None):
        if not 1 <= m <= MAX_LEVEL:
            raise ValueError(f"quantization level must lie in [1, {MAX_LEVEL}], got {m}")
        grid = grid or SphereGrid.for_level(m)
        if grid.n_t < m + 1 or grid.n_phi < 2 * m + 2:
            raise ContextUnderresolved(m, grid.n_t, grid.n_phi)
        self.m = int(m)
        self.grid = grid
        self.amplitudes = self._coherent_amplitudes(self.m, grid)
        self.amplitudes.setflags(write=False)

    @property
    def hilbert_dim(self) -> int:
        return self.m + 1

    def __repr__(self) -> str:
        return f"ToeplitzContext(m={self.m}, {self.grid!r})"

    @staticmethod
    def _coherent_amplitudes(m: int, grid: SphereGrid) -> np.ndarray:
        k = np.arange(m + 1)
        log_binom = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
        s2 = np.clip((1.0 - grid.t) / 2.0, 0.0, 1.0)[:, None]
        c2 = np.clip((1.0 + grid.t) / 2.0, 0.0, 1.0)[:, None]
        # log-space keeps C(m, k) finite for large m; xlogy(0, 0) = 0 covers the poles
        log_mod = 0.5 * (log_binom[None, :] + xlogy(k[None, :], s2) + xlogy(m - k[None, :], c2))
        return np.exp(log_mod) * np.exp(1j * np.outer(grid.phi, k))

    def normalization_residual(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.amplitudes, axis=1) - 1.0)))


class ToeplitzService:
    """Toeplitz operators, quantized partitions and the correspondence defects."""

    def __init__(self, sphere: Optional[SphereService] = None):
        self.sphere = sphere or SphereService()
        self._contexts: Dict[Tuple[int, int, int], ToeplitzContext] = {}

    def context(self, m: int, grid: Optional[SphereGrid] = None) -> ToeplitzContext:
        """Cached context for level m (default grid n_t = max(64, m+1), n_phi = max(128, 2m+2))."""
        grid = grid or SphereGrid.for_level(m)
        key = (m, grid.n_t, grid.n_phi)
        if key not in self._contexts:
            logger.debug(f"Building Toeplitz context m={m} on {grid!r}")
            self._contexts[key] = ToeplitzContext(m, grid)
        return self._contexts[key]

    # --- assembly -------------------------------------------------------------------

    @staticmethod
    def from_values(ctx: ToeplitzContext, values: np.ndarray) -> HermitianMatrix:
        """T(f) from the samples of f on the context grid."""
        c = ctx.amplitudes
        weighted = (ctx.hilbert_dim * ctx.grid.weights * np.asarray(values, dtype=float))[:, None] * c
        return HermitianMatrix(weighted.T @ c.conj())

    def toeplitz(self, ctx: ToeplitzContext, f: SphereFunction) -> HermitianMatrix:
        values = f.on_grid(ctx.grid)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{f!r} is not finite on the grid")
        return self.from_values(ctx, values)

    def _quantize_values(self, ctx: ToeplitzContext, values: np.ndarray) -> FinitePovm:
        c = ctx.amplitudes
        w = ctx.hilbert_dim * ctx.grid.weights
        stack = np.einsum("jn,na,nb->jab", values * w[None, :], c, c.conj())
        return FinitePovm(stack)

    def quantize_partition(self, ctx: ToeplitzContext, p: PartitionOfUnity) -> FinitePovm:
        """{T_m(f_j)}: an L(H_m)-valued POVM."""
        return self._quantize_values(ctx, p.values(ctx.grid))

    def region_operator(self, ctx: ToeplitzContext, indicator: SphereFunction) -> HermitianMatrix:
        """G_m(X) as the Toeplitz operator of an indicator.

        Indicators are not smooth, so this converges only at the rate of the grid spacing.
        """
        return self.from_values(ctx, indicator.on_grid(ctx.grid))

    def quantize_regions(self, ctx: ToeplitzContext, indicators: Sequence[SphereFunction]) -> FinitePovm:
        values = np.stack([f.on_grid(ctx.grid) for f in indicators])
        return self._quantize_values(ctx, values)

    # --- defects ----------------------------------------------------------------------

    def correspondence_defect(self, ctx: ToeplitzContext, f: SphereFunction, g: SphereFunction) -> float:
        """||i m [T(f), T(g)] - T({f, g})||."""
        tf = self.toeplitz(ctx, f).entries
        tg = self.toeplitz(ctx, g).entries
        quantum = 1j * ctx.m * (tf @ tg - tg @ tf)
        classical = self.toeplitz(ctx, self.sphere.poisson_bracket(f, g))
        return HermitianMatrix(quantum - classical.entries).op_norm()

    def sharpness_defect(self, ctx: ToeplitzContext, f: SphereFunction) -> float:
        """||T(f^2) - T(f)^2||."""
        tf = self.toeplitz(ctx, f).entries
        return HermitianMatrix(self.toeplitz(ctx, f * f).entries - tf @ tf).op_norm()

    def norm_defect(self, ctx: ToeplitzContext, f: SphereFunction) -> float:
        """| ||T(f)|| - ||f|| | with the sup refined off the grid."""
        return abs(self.toeplitz(ctx, f).op_norm() - self.sphere.sup_norm(f, ctx.grid, refine=True))

    def trace_rule(self, ctx: ToeplitzContext, f: SphereFunction) -> float:
        """trace T(f) - (m + 1) * integral of f."""
        values = f.on_grid(ctx.grid)
        trace = float(np.real(np.trace(self.from_values(ctx, values).entries)))
        return trace - ctx.hilbert_dim * ctx.grid.integrate(values)

    @staticmethod
    def rotation(ctx: ToeplitzContext, alpha: float) -> np.ndarray:
        """D(alpha) = diag(exp(-i k alpha))."""
        return np.diag(np.exp(-1j * alpha * np.arange(ctx.hilbert_dim)))

    def covariance_residual(self, ctx: ToeplitzContext, f: SphereFunction, alpha: float) -> float:
        """max |T(f(., phi + alpha)) - D T(f) D*|."""
        d = self.rotation(ctx, alpha)
        expected = d @ self.toeplitz(ctx, f).entries @ d.conj().T
        return float(np.max(np.abs(self.toeplitz(ctx, f.rotated(alpha)).entries - expected)))
