import logging
from typing import Callable, Dict, List, Optional, Sequence
import numpy as np
from app.helpers.Utilities import Utils
from app.models.Sphere import SphereFunction
from app.schemas.Scenario import ScenarioReport, Verdict
from app.services.PovmService import PovmService
from app.services.ToeplitzService import ToeplitzService

logger = logging.getLogger(__name__)

SUITES = ("janssens", "bt-axioms", "naimark")
NAIMARK_TOL = 1e-10
NAIMARK_IDENTITY_TOL = 1e-9
JANSSENS_TOL = 1e-9


class ValidationService:
    """Self-checks of the identities and inequalities the lab relies on."""

    def __init__(self, povm_service: Optional[PovmService] = None, toeplitz_service: Optional[ToeplitzService] = None):
        self.povms = povm_service or PovmService(workers=1)
        self.toeplitz = toeplitz_service or ToeplitzService()

    def run_suite(self, suite: str, seed: int = 0, cases: Optional[int] = None) -> ScenarioReport:
        suites: Dict[str, Callable[[int, Optional[int]], ScenarioReport]] = {
            "janssens": self.check_janssens,
            "bt-axioms": self.check_bt_axioms,
            "naimark": self.check_naimark,
        }
        if suite not in suites:
            raise ValueError(f"Unknown check suite {suite!r}; expected one of {', '.join(SUITES)}")
        logger.info(f"Running check suite {suite} (seed={seed})")
        return suites[suite](seed, cases)

    @staticmethod
    def _random_case(seed: int, case: int, povms: PovmService):
        rng = Utils.derive_seed(seed, case)
        dim = int(rng.integers(2, 7))
        n = int(rng.integers(2, 6))
        return povms.random_povm(dim, n, int(rng.integers(0, 2 ** 31 - 1))), rng

    def check_janssens(self, seed: int = 0, cases: Optional[int] = None) -> ScenarioReport:
        """Pointwise residual plus the restricted-sup corollary on random POVMs."""
        cases = cases or 1000
        worst, corollary_failures = np.inf, []
        for case in range(cases):
            povm, rng = self._random_case(seed, case, self.povms)
            points = rng.uniform(-1.0, 1.0, size=(4, povm.n))
            for i in range(len(points)):
                for j in range(i, len(points)):
                    worst = min(worst, self.povms.janssens_residual(povm, points[i], points[j]))
            sup = self.povms.restricted_sup(povm, points)
            if sup["noise"] < sup["half_commutator"] - JANSSENS_TOL:
                corollary_failures.append(case)
        verdicts = [
            Verdict(name="pointwise_residual", passed=worst >= -JANSSENS_TOL, detail=f"min residual {worst:.3e}"),
            Verdict(
                name="restricted_sup",
                passed=not corollary_failures,
                detail=f"violating cases: {corollary_failures}" if corollary_failures else f"{cases} cases",
            ),
        ]
        return ScenarioReport(scenario="check:janssens", seed=seed, verdicts=verdicts, summary={"cases": cases, "min_residual": worst})

    def check_naimark(self, seed: int = 0, cases: Optional[int] = None) -> ScenarioReport:
        cases = cases or 200
        worst: Dict[str, float] = {}
        for case in range(cases):
            povm, rng = self._random_case(seed, case, self.povms)
            dilation = self.povms.naimark_dilate(povm)
            residuals = self.povms.naimark_residuals(povm, dilation, rng.uniform(-1.0, 1.0, size=povm.n))
            for key, value in residuals.items():
                worst[key] = max(worst.get(key, 0.0), value)
        limits = {
            "isometry": NAIMARK_TOL,
            "idempotent": NAIMARK_TOL,
            "hermitian": NAIMARK_TOL,
            "completeness": NAIMARK_TOL,
            "orthogonal": NAIMARK_TOL,
            "compression": NAIMARK_IDENTITY_TOL,
            "contraction": NAIMARK_IDENTITY_TOL,
            "noise": NAIMARK_IDENTITY_TOL,
        }
        verdicts = [
            Verdict(name=key, passed=worst.get(key, 0.0) <= limit, detail=f"max residual {worst.get(key, 0.0):.3e}")
            for key, limit in limits.items()
        ]
        return ScenarioReport(scenario="check:naimark", seed=seed, verdicts=verdicts, summary={"cases": cases, "worst": worst})

    def check_bt_axioms(self, seed: int = 0, cases: Optional[int] = None, levels: Sequence[int] = (8, 32, 128)) -> ScenarioReport:
        """Quantization identities on the spin operators and smooth symbols, per level."""
        q1, q2, q3 = SphereFunction.q1(), SphereFunction.q2(), SphereFunction.q3()
        one = SphereFunction.constant(1.0)
        rng = Utils.derive_seed(seed, 0)
        summary: Dict[str, Dict[str, float]] = {}
        verdicts: List[Verdict] = []
        for m in levels:
            ctx = self.toeplitz.context(m)
            k = np.arange(m + 1)
            spectrum = np.sort((m - 2.0 * k) / (m + 2.0))
            t_q1 = self.toeplitz.toeplitz(ctx, q1)
            t_q2 = self.toeplitz.toeplitz(ctx, q2)
            alpha = float(rng.uniform(0.0, 2.0 * np.pi))
            smooth = q1 * q3 + 0.5 * q2 + 0.25
            values = {
                "identity": float(np.max(np.abs(self.toeplitz.toeplitz(ctx, one).entries - np.eye(m + 1)))),
                "spin_spectrum": float(np.max(np.abs(self.toeplitz.toeplitz(ctx, q3).spectral_decomp()[0] - spectrum))),
                "norm_defect": abs(self.toeplitz.norm_defect(ctx, q3) - 2.0 / (m + 2.0)),
                "correspondence": self.toeplitz.correspondence_defect(ctx, q1, q2),
                "m_commutator": m * t_q1.comm_norm(t_q2),
                "positivity": -self.toeplitz.toeplitz(ctx, q3 * q3).min_eigenvalue(),
                "trace_rule": abs(self.toeplitz.trace_rule(ctx, smooth)),
                "covariance": self.toeplitz.covariance_residual(ctx, smooth, alpha),
            }
            summary[str(m)] = values
            checks = {
                "identity": values["identity"] <= 1e-10,
                "spin_spectrum": values["spin_spectrum"] <= 1e-10,
                "norm_defect": values["norm_defect"] <= 1e-9,
                "correspondence": values["correspondence"] <= 8.0 / m,
                "m_commutator": 2.0 - 10.0 / m <= values["m_commutator"] <= 2.0 + 1e-9,
                "positivity": values["positivity"] <= 1e-10,
                "trace_rule": values["trace_rule"] <= 1e-10 * (m + 1),
                "covariance": values["covariance"] <= 1e-9,
            }
            verdicts.extend(
                Verdict(name=f"{name}@m={m}", passed=ok, detail=f"{values[name]:.3e}") for name, ok in checks.items()
            )
        return ScenarioReport(scenario="check:bt-axioms", seed=seed, verdicts=verdicts, summary=summary)
