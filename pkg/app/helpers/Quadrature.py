"""
Product quadrature on S^2 in the (t, phi) chart, t = cos(theta).

Gauss-Legendre nodes in t times a uniform azimuth grid; weights are divided
by 4*pi so the rule integrates against the normalized area measure.
"""
import numpy as np
from numpy.polynomial.legendre import leggauss


class SphereGrid:
    """Immutable tensor grid of n_t Gauss-Legendre rows and n_phi azimuth columns."""

    def __init__(self, n_t: int, n_phi: int):
        if n_t < 1 or n_phi < 1:
            raise ValueError(f"Grid sizes must be positive, got ({n_t}, {n_phi})")
        self.n_t = int(n_t)
        self.n_phi = int(n_phi)
        t_nodes, t_weights = leggauss(self.n_t)
        self.t_nodes = t_nodes
        self.t_weights = t_weights
        self.phi_nodes = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        tt, pp = np.meshgrid(t_nodes, self.phi_nodes, indexing="ij")
        self.t = tt.reshape(-1)
        self.phi = pp.reshape(-1)
        w = np.outer(t_weights, np.full(self.n_phi, 2.0 * np.pi / self.n_phi)) / (4.0 * np.pi)
        self.weights = w.reshape(-1)
        for arr in (self.t_nodes, self.t_weights, self.phi_nodes, self.t, self.phi, self.weights):
            arr.setflags(write=False)

    @classmethod
    def for_level(cls, m: int, n_t: int = 64, n_phi: int = 128) -> "SphereGrid":
        """Default grid paired with quantization level m."""
        return cls(max(n_t, m + 1), max(n_phi, 2 * m + 2))

    @property
    def size(self) -> int:
        return self.t.size

    def __repr__(self) -> str:
        return f"SphereGrid(n_t={self.n_t}, n_phi={self.n_phi})"

    def integrate(self, values: np.ndarray) -> float:
        """Integral against the normalized area measure (total mass 1)."""
        return float(np.dot(self.weights, np.asarray(values).reshape(-1)).real)
