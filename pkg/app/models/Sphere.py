from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np
from app.helpers.Exceptions import InvalidCover, NonDifferentiable
from app.helpers.Quadrature import SphereGrid

# Finite-difference steps in the (t, phi) chart
H_T = 1e-5
H_PHI = 1e-5

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SpherePoint:
    """Point of S^2 in the chart t = q3 = cos(theta), phi = azimuth in [0, 2pi)."""

    __slots__ = ("t", "phi")

    def __init__(self, t: float, phi: float):
        if not -1.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [-1, 1], got {t}")
        self.t = float(t)
        self.phi = float(np.mod(phi, 2.0 * np.pi))

    @classmethod
    def from_cartesian(cls, q: Sequence[float]) -> "SpherePoint":
        v = np.asarray(q, dtype=float)
        v = v / np.linalg.norm(v)
        return cls(float(np.clip(v[2], -1.0, 1.0)), float(np.arctan2(v[1], v[0])))

    def cartesian(self) -> np.ndarray:
        s = np.sqrt(max(0.0, 1.0 - self.t ** 2))
        return np.array([s * np.cos(self.phi), s * np.sin(self.phi), self.t])

    def __iter__(self):
        return iter((self.t, self.phi))

    def __repr__(self) -> str:
        return f"SpherePoint(t={self.t:.6g}, phi={self.phi:.6g})"


def geodesic_angle(t: np.ndarray, phi: np.ndarray, center: SpherePoint) -> np.ndarray:
    s = np.sqrt(np.clip(1.0 - t ** 2, 0.0, None))
    sc = np.sqrt(max(0.0, 1.0 - center.t ** 2))
    cos_angle = t * center.t + s * sc * np.cos(phi - center.phi)
    return np.arccos(np.clip(cos_angle, -1.0, 1.0))


class SphereFunction:
    """Smooth real function on S^2 given by a vectorized evaluator f(t, phi).

    Analytic partials are optional; without them derivatives fall back to
    central differences with a t-clamped stencil at the poles.
    """

    def __init__(
        self,
        evaluator: Evaluator,
        d_t: Optional[Evaluator] = None,
        d_phi: Optional[Evaluator] = None,
        band_limit: Optional[int] = None,
        name: str = "",
        allow_fd: bool = True,
    ):
        self.evaluator = evaluator
        self.d_t = d_t
        self.d_phi = d_phi
        self.band_limit = band_limit
        self.name = name
        self.allow_fd = allow_fd

    def __repr__(self) -> str:
        return f"SphereFunction({self.name or 'anonymous'})"

    def __call__(self, t, phi) -> np.ndarray:
        t, phi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(phi, dtype=float))
        return np.asarray(self.evaluator(t, phi), dtype=float) * np.ones_like(t)

    def on_grid(self, grid: SphereGrid) -> np.ndarray:
        return self(grid.t, grid.phi)

    def at(self, point: SpherePoint) -> float:
        return float(self(np.array([point.t]), np.array([point.phi]))[0])

    def partial_t(self, t, phi) -> np.ndarray:
        t, phi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(phi, dtype=float))
        if self.d_t is not None:
            return np.asarray(self.d_t(t, phi), dtype=float) * np.ones_like(t)
        self._require_fd()
        t_hi = np.minimum(t + H_T, 1.0)
        t_lo = np.maximum(t - H_T, -1.0)
        return (self(t_hi, phi) - self(t_lo, phi)) / (t_hi - t_lo)

    def partial_phi(self, t, phi) -> np.ndarray:
        t, phi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(phi, dtype=float))
        if self.d_phi is not None:
            return np.asarray(self.d_phi(t, phi), dtype=float) * np.ones_like(t)
        self._require_fd()
        return (self(t, phi + H_PHI) - self(t, phi - H_PHI)) / (2.0 * H_PHI)

    def _require_fd(self):
        if not self.allow_fd:
            raise NonDifferentiable(f"{self!r} has no analytic partials and finite differences are disabled")

    def is_periodic(self, samples: int = 65, atol: float = 1e-8) -> bool:
        t = np.linspace(-1.0, 1.0, samples)
        return bool(np.max(np.abs(self(t, 0.0) - self(t, 2.0 * np.pi - 1e-12))) <= atol)

    # algebra -------------------------------------------------------------------

    @staticmethod
    def _lift(other: Any) -> "SphereFunction":
        if isinstance(other, SphereFunction):
            return other
        return SphereFunction.constant(float(other))

    def __add__(self, other) -> "SphereFunction":
        g = self._lift(other)
        return SphereFunction(
            lambda t, p: self(t, p) + g(t, p),
            _combine(self.d_t, g.d_t, lambda a, b: a + b),
            _combine(self.d_phi, g.d_phi, lambda a, b: a + b),
            _max_limit(self.band_limit, g.band_limit),
            f"({self.name}+{g.name})",
        )

    __radd__ = __add__

    def __neg__(self) -> "SphereFunction":
        return self * -1.0

    def __sub__(self, other) -> "SphereFunction":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "SphereFunction":
        return self._lift(other) - self

    def __mul__(self, other) -> "SphereFunction":
        g = self._lift(other)
        f = self

        def product_rule(df, dg):
            if df is None or dg is None:
                return None
            return lambda t, p: df(t, p) * g(t, p) + f(t, p) * dg(t, p)

        limit = None
        if f.band_limit is not None and g.band_limit is not None:
            limit = f.band_limit + g.band_limit
        return SphereFunction(
            lambda t, p: f(t, p) * g(t, p),
            product_rule(f.d_t, g.d_t),
            product_rule(f.d_phi, g.d_phi),
            limit,
            f"({f.name}*{g.name})",
        )

    __rmul__ = __mul__

    def rotated(self, alpha: float) -> "SphereFunction":
        """f(t, phi + alpha)."""
        f = self
        return SphereFunction(
            lambda t, p: f(t, p + alpha),
            None if f.d_t is None else (lambda t, p: f.d_t(t, p + alpha)),
            None if f.d_phi is None else (lambda t, p: f.d_phi(t, p + alpha)),
            f.band_limit,
            f"{f.name}@{alpha:g}",
        )

    # builtins ------------------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "SphereFunction":
        zero = lambda t, p: np.zeros_like(t)
        return cls(lambda t, p: np.full_like(t, c), zero, zero, 0, f"{c:g}")

    @classmethod
    def q1(cls) -> "SphereFunction":
        return cls(
            lambda t, p: np.sqrt(np.clip(1 - t ** 2, 0, None)) * np.cos(p),
            lambda t, p: -t / np.sqrt(np.clip(1 - t ** 2, 1e-300, None)) * np.cos(p),
            lambda t, p: -np.sqrt(np.clip(1 - t ** 2, 0, None)) * np.sin(p),
            1,
            "q1",
        )

    @classmethod
    def q2(cls) -> "SphereFunction":
        return cls(
            lambda t, p: np.sqrt(np.clip(1 - t ** 2, 0, None)) * np.sin(p),
            lambda t, p: -t / np.sqrt(np.clip(1 - t ** 2, 1e-300, None)) * np.sin(p),
            lambda t, p: np.sqrt(np.clip(1 - t ** 2, 0, None)) * np.cos(p),
            1,
            "q2",
        )

    @classmethod
    def q3(cls) -> "SphereFunction":
        return cls(
            lambda t, p: t,
            lambda t, p: np.ones_like(t),
            lambda t, p: np.zeros_like(t),
            1,
            "q3",
        )

    @classmethod
    def of_t(cls, profile: Callable[[np.ndarray], np.ndarray], derivative: Optional[Callable] = None, name: str = "") -> "SphereFunction":
        """Zonal function f(q3); its phi-derivative vanishes identically."""
        return cls(
            lambda t, p: profile(t),
            None if derivative is None else (lambda t, p: derivative(t)),
            lambda t, p: np.zeros_like(t),
            None,
            name or "zonal",
        )

    @classmethod
    def indicator(cls, predicate: Callable[[np.ndarray, np.ndarray], np.ndarray], name: str = "") -> "SphereFunction":
        """0/1 function of a region; not differentiable."""
        return cls(lambda t, p: predicate(t, p).astype(float), name=name or "indicator", allow_fd=False)


def _combine(a: Optional[Evaluator], b: Optional[Evaluator], op) -> Optional[Evaluator]:
    if a is None or b is None:
        return None
    return lambda t, p: op(a(t, p), b(t, p))


def _max_limit(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None or b is None:
        return None
    return max(a, b)


def cosine_fall(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """1 below lo, 0 above hi, half-cosine in between."""
    u = np.clip((t - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * u))


def cosine_fall_derivative(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    inside = (t > lo) & (t < hi)
    u = (t - lo) / (hi - lo)
    return np.where(inside, -0.5 * np.pi / (hi - lo) * np.sin(np.pi * u), 0.0)


def tapered_ramp(s: np.ndarray, width: float) -> np.ndarray:
    """0 for s <= 0, s - width/2 for s >= width; the slope 1 - cosine_fall(s, 0, width) in between.

    C^2 at both joints.
    """
    s = np.asarray(s, dtype=float)
    inner = 0.5 * s - width / (2.0 * np.pi) * np.sin(np.pi * np.clip(s, 0.0, width) / width)
    return np.where(s <= 0.0, 0.0, np.where(s >= width, s - 0.5 * width, inner))


class BandCover:
    """Cover of S^2 by zonal bands {q3 in V_j} with V_j intervals of [-1, 1]."""

    kind = "bands"

    def __init__(self, intervals: Sequence[Tuple[float, float]]):
        self.intervals = [(float(a), float(b)) for a, b in intervals]
        if len(self.intervals) < 1:
            raise InvalidCover("A band cover needs at least one interval")

    @property
    def n(self) -> int:
        return len(self.intervals)

    def contains_t(self, j: int, t: np.ndarray) -> np.ndarray:
        a, b = self.intervals[j]
        lower = (t > a) | (j == 0)
        upper = (t < b) | (j == self.n - 1)
        return lower & upper

    def contains(self, j: int, t: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return self.contains_t(j, np.asarray(t))

    def descriptors(self) -> List[Dict[str, Any]]:
        return [{"type": "band", "t_min": a, "t_max": b} for a, b in self.intervals]


class CapCover:
    """Cover of S^2 by geodesic discs of a common angular radius."""

    kind = "caps"

    def __init__(self, centers: Sequence[SpherePoint], radius: float):
        self.centers = list(centers)
        self.radius = float(radius)

    @property
    def n(self) -> int:
        return len(self.centers)

    def contains(self, j: int, t: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return geodesic_angle(np.asarray(t), np.asarray(phi), self.centers[j]) < self.radius

    def area_fraction(self) -> float:
        """Normalized area of one cap: (1 - cos r) / 2."""
        return 0.5 * (1.0 - np.cos(self.radius))

    def descriptors(self) -> List[Dict[str, Any]]:
        return [
            {"type": "cap", "t": c.t, "phi": c.phi, "radius": self.radius, "area_fraction": self.area_fraction()}
            for c in self.centers
        ]


class PartitionOfUnity:
    """Nonnegative functions f_1..f_N summing to 1, f_j supported in U_j."""

    def __init__(self, functions: Sequence[SphereFunction], cover: Any):
        self.functions = list(functions)
        self.cover = cover
        if cover is not None and cover.n != len(self.functions):
            raise InvalidCover(f"{len(self.functions)} functions for a cover of {cover.n} sets")

    @property
    def n(self) -> int:
        return len(self.functions)

    def __repr__(self) -> str:
        kind = getattr(self.cover, "kind", "custom")
        return f"PartitionOfUnity(N={self.n}, {kind})"

    def values(self, grid: SphereGrid) -> np.ndarray:
        """(N, nodes) array of f_j sampled on the grid."""
        return np.stack([f.on_grid(grid) for f in self.functions])

    def invariant_residuals(self, grid: SphereGrid) -> Dict[str, float]:
        """Worst violations of positivity, normalization and subordination on the grid."""
        vals = self.values(grid)
        outside = 0.0
        if self.cover is not None:
            for j in range(self.n):
                mask = ~self.cover.contains(j, grid.t, grid.phi)
                if np.any(mask):
                    outside = max(outside, float(np.max(vals[j][mask])))
        return {
            "min_value": float(np.min(vals)),
            "sum_deviation": float(np.max(np.abs(vals.sum(axis=0) - 1.0))),
            "outside_support": outside,
        }
