from typing import Optional, Tuple


class LabError(ValueError):
    """Base class for every error raised by the lab."""


class DimensionMismatch(LabError):
    pass


class EigensolverFailure(LabError):
    def __init__(self, dim: int, reason: str = ""):
        self.dim = dim
        super().__init__(f"Eigensolver failed on a {dim}x{dim} matrix {reason}".strip())


class NotPositiveSemidefinite(LabError):
    def __init__(self, eigenvalue: float, tol: float):
        self.eigenvalue = eigenvalue
        self.tol = tol
        super().__init__(f"Matrix is not PSD: min eigenvalue {eigenvalue:.3e} < -{tol:.3e}")


class InvalidPovm(LabError):
    pass


class InvalidKernel(LabError):
    pass


class NotCommutative(LabError):
    def __init__(self, max_commutator: float, tol: float):
        self.max_commutator = max_commutator
        self.tol = tol
        super().__init__(f"POVM is not commutative: max commutator norm {max_commutator:.3e} > {tol:.3e}")


class CoverageGap(LabError):
    def __init__(self, worst_point: Tuple[float, float], coverage: float):
        self.worst_point = worst_point
        self.coverage = coverage
        super().__init__(
            f"Caps do not cover the sphere: bump sum {coverage:.3e} at (t={worst_point[0]:.4f}, phi={worst_point[1]:.4f})"
        )


class InvalidCover(LabError):
    pass


class ContextUnderresolved(LabError):
    def __init__(self, m: int, n_t: int, n_phi: int):
        self.m = m
        self.n_t = n_t
        self.n_phi = n_phi
        super().__init__(
            f"Grid too coarse for level m={m}: need n_t >= {m + 1} and n_phi >= {2 * m + 2}, got ({n_t}, {n_phi})"
        )


class NonDifferentiable(LabError):
    pass


class ScenarioError(LabError):
    def __init__(self, message: str, scenario: Optional[str] = None):
        self.scenario = scenario
        super().__init__(message)
