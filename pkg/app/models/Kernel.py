from typing import Any, Dict
import numpy as np
from app.helpers.Exceptions import DimensionMismatch, InvalidKernel
from app.schemas.Matrix import KernelPayload

ROW_SUM_TOL = 1e-12


class MarkovKernel:
    """Finite stochastic kernel gamma[w][j] = gamma_w({j}) from Theta_L to Omega_N."""

    def __init__(self, gamma: Any, clip: float = 0.0):
        g = np.array(gamma, dtype=float)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise InvalidKernel(f"Expected an L x N table, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidKernel("Kernel has non-finite entries")
        if clip > 0.0:
            # entries within `clip` of zero are rounding noise from eigen-expectations
            g[(g < 0) & (g >= -clip)] = 0.0
            g /= g.sum(axis=1, keepdims=True)
        if np.min(g) < 0.0:
            raise InvalidKernel(f"Kernel has a negative entry {np.min(g):.3e}")
        deviation = float(np.max(np.abs(g.sum(axis=1) - 1.0)))
        if deviation > ROW_SUM_TOL:
            raise InvalidKernel(f"Kernel rows must sum to 1: max deviation {deviation:.3e}")
        g.setflags(write=False)
        self.gamma = g

    @property
    def source_size(self) -> int:
        return self.gamma.shape[0]

    @property
    def target_size(self) -> int:
        return self.gamma.shape[1]

    def __repr__(self) -> str:
        return f"MarkovKernel(L={self.source_size}, N={self.target_size})"

    @classmethod
    def identity(cls, n: int) -> "MarkovKernel":
        return cls(np.eye(n))

    @classmethod
    def random(cls, source_size: int, target_size: int, seed: int) -> "MarkovKernel":
        rng = np.random.default_rng(seed)
        g = rng.dirichlet(np.ones(target_size), size=source_size)
        # dirichlet rows are normalized only to rounding; renormalize to be exact enough
        g /= g.sum(axis=1, keepdims=True)
        return cls(g)

    def compose(self, other: "MarkovKernel") -> "MarkovKernel":
        """Smearing by self and then by other equals smearing by this product."""
        if self.target_size != other.source_size:
            raise DimensionMismatch(
                f"Cannot compose kernels {self.source_size}->{self.target_size} and {other.source_size}->{other.target_size}"
            )
        g = self.gamma @ other.gamma
        return MarkovKernel(g / g.sum(axis=1, keepdims=True))

    def to_payload(self) -> Dict[str, Any]:
        return {"L": self.source_size, "N": self.target_size, "rows": self.gamma.tolist()}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "MarkovKernel":
        parsed = KernelPayload.model_validate(payload)
        return cls(parsed.rows)
