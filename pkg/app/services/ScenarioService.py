import logging
import time
from typing import Any, Callable, Dict, List, Optional
import numpy as np
from app.config.Settings import get_settings
from app.helpers.Exceptions import ScenarioError
from app.helpers.Quadrature import SphereGrid
from app.helpers.Utilities import Utils
from app.models.Povm import FinitePovm
from app.models.Sphere import PartitionOfUnity, SpherePoint
from app.schemas.Scenario import (
    PartitionSpec,
    ReportRow,
    ScenarioConfig,
    ScenarioName,
    ScenarioReport,
    SearchBudget,
    Verdict,
)
from app.services.PovmService import PovmService
from app.services.SmearingService import SmearingService
from app.services.SphereService import SphereService
from app.services.ToeplitzService import ToeplitzService

logger = logging.getLogger(__name__)

# Slack for the witness-level inequalities checked on every row
ROW_SLACK = 1e-9
SCALING_WINDOW = 2.0
DEFAULT_PARTITIONS = {
    ScenarioName.COMMUTATIVE_BANDS: PartitionSpec(type="bands", N=3, overlap=0.4),
    ScenarioName.REGISTRATION_CLASSICAL: PartitionSpec(type="bands", N=3, overlap=0.4),
    ScenarioName.DISPLACEABLE_CAPS: PartitionSpec(type="caps", N=4),
    ScenarioName.NOISE_ROBUSTNESS: PartitionSpec(type="caps", N=4),
}
CLASSICAL_GRID = (64, 128)
REGISTRATION_GRID = (32, 64)


class ScenarioService:
    """Runs the built-in scenarios and turns their rows into verdicts."""

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or get_settings().resolved_workers()
        # rows fan out; searches inside a row stay single-threaded
        self.povms = PovmService(workers=1)
        self.smearing = SmearingService(self.povms)
        self.sphere = SphereService()
        self.toeplitz = ToeplitzService(self.sphere)

    def run_scenario(self, cfg: ScenarioConfig) -> ScenarioReport:
        runners: Dict[str, Callable[[ScenarioConfig], ScenarioReport]] = {
            ScenarioName.COMMUTATIVE_BANDS: self._commutative_bands,
            ScenarioName.DISPLACEABLE_CAPS: self._displaceable_caps,
            ScenarioName.SCALING_IN_N: self._scaling_in_n,
            ScenarioName.JANSSENS_FUZZ: self._janssens_fuzz,
            ScenarioName.REGISTRATION_CLASSICAL: self._registration_classical,
            ScenarioName.UNSHARPNESS_RATIO: self._unsharpness_ratio,
            ScenarioName.NOISE_ROBUSTNESS: self._noise_robustness,
            ScenarioName.REGION_CELLS: self._region_cells,
        }
        if cfg.scenario not in runners:
            raise ScenarioError(f"Unknown scenario {cfg.scenario}", cfg.scenario)
        logger.info(f"Running scenario {cfg.scenario} (seed={cfg.seed})")
        started = time.perf_counter()
        report = runners[cfg.scenario](cfg)
        report.verdicts = self._row_verdicts(report.rows) + report.verdicts
        report.summary["timings"] = [row.wall_time_ms for row in report.rows]
        report.summary["total_ms"] = 1000.0 * (time.perf_counter() - started)
        logger.info(
            f"Scenario {cfg.scenario} finished: {len(report.rows)} rows, "
            f"{'PASS' if report.all_passed else 'FAIL'} in {report.summary['total_ms']:.0f} ms"
        )
        return report

    # --- shared plumbing ------------------------------------------------------------------

    def _partition(self, cfg: ScenarioConfig, grid: Optional[SphereGrid] = None) -> PartitionOfUnity:
        spec = cfg.partition or DEFAULT_PARTITIONS.get(cfg.scenario)
        if spec is None:
            raise ScenarioError(f"Scenario {cfg.scenario} needs a partition", cfg.scenario)
        return self.sphere.partition_from_spec(spec, grid)

    @staticmethod
    def _classical_grid(cfg: ScenarioConfig, default=CLASSICAL_GRID) -> SphereGrid:
        n_t, n_phi = cfg.grid or default
        return SphereGrid(n_t, n_phi)

    @staticmethod
    def _row_budget(cfg: ScenarioConfig, index: int) -> SearchBudget:
        seed = int(Utils.derive_seed(cfg.seed, index).integers(0, 2 ** 31 - 1))
        return cfg.budget.model_copy(update={"seed": seed})

    def _timed_rows(
        self, cfg: ScenarioConfig, items: List[Any], build: Callable[[int, Any], ReportRow], label: Optional[str] = "m"
    ) -> List[ReportRow]:
        """Build one row per item (in parallel); failures are recorded in the row."""

        def run(indexed):
            index, item = indexed
            started = time.perf_counter()
            try:
                row = build(index, item)
            except Exception as e:
                logger.error(f"{cfg.scenario} row {index} ({item!r}) failed: {e}")
                row = ReportRow(scenario=cfg.scenario, error=f"{type(e).__name__}: {e}")
                if label is not None:
                    setattr(row, label, item)
            row.wall_time_ms = 1000.0 * (time.perf_counter() - started)
            logger.info(f"{cfg.scenario} row {index} done in {row.wall_time_ms:.0f} ms")
            return row

        return Utils.map_ordered(run, list(enumerate(items)), self.workers)

    def _quantum_row(self, cfg: ScenarioConfig, povm: FinitePovm, budget: SearchBudget, **fields) -> ReportRow:
        """nu_q, N(A) and the systematic-noise bracket of one POVM."""
        bracket = self.smearing.systematic_noise_bracket(povm, budget, cfg.tolerance("commutativity"))
        noise, witness = self.povms.noise_magnitude(povm, budget)
        # the nu_q witnesses are cube points too, so their noise is admissible
        noise_x = witness.tolist()
        for w in (bracket["x"], bracket["y"]):
            candidate = povm.noise_norm(np.asarray(w))
            if candidate > noise:
                noise, noise_x = candidate, list(w)
        m = fields.get("m")
        return ReportRow(
            scenario=cfg.scenario,
            N=povm.n,
            dim=povm.dim,
            nu_q=bracket["nu_q"],
            noise_lower=noise,
            ns_lower=bracket["lower"],
            ns_upper=bracket["upper"],
            m_times_nu_q=None if m is None else m * bracket["nu_q"],
            witnesses={"x": bracket["x"], "y": bracket["y"], "noise_x": noise_x},
            **fields,
        )

    @staticmethod
    def _row_verdicts(rows: List[ReportRow]) -> List[Verdict]:
        failed = [i for i, r in enumerate(rows) if r.error]
        janssens = [
            i
            for i, r in enumerate(rows)
            if r.noise_lower is not None and r.ns_lower is not None and r.noise_lower < r.ns_lower - ROW_SLACK
        ]
        ordered = [
            i
            for i, r in enumerate(rows)
            if r.ns_lower is not None and r.ns_upper is not None and r.ns_lower > r.ns_upper + ROW_SLACK
        ]
        return [
            Verdict(name="rows_complete", passed=not failed, detail=f"failed rows: {failed}" if failed else ""),
            Verdict(name="noise_dominates_half_nu_q", passed=not janssens, detail=f"violating rows: {janssens}" if janssens else ""),
            Verdict(name="bracket_ordered", passed=not ordered, detail=f"violating rows: {ordered}" if ordered else ""),
        ]

    @staticmethod
    def _ok_rows(rows: List[ReportRow]) -> List[ReportRow]:
        return [r for r in rows if not r.error]

    # --- quantized partitions ---------------------------------------------------------------

    def _quantized_rows(self, cfg: ScenarioConfig, p: PartitionOfUnity, nu_c: Optional[float]) -> List[ReportRow]:
        def build(index: int, m: int) -> ReportRow:
            ctx = self.toeplitz.context(m)
            povm = self.toeplitz.quantize_partition(ctx, p)
            return self._quantum_row(cfg, povm, self._row_budget(cfg, index), m=m, nu_c=nu_c)

        return self._timed_rows(cfg, cfg.m_list, build)

    def _commutative_bands(self, cfg: ScenarioConfig) -> ScenarioReport:
        grid = self._classical_grid(cfg)
        p = self._partition(cfg, grid)
        values = p.values(grid)
        max_sharpness = float(np.max(values[0] - values[0] ** 2))
        alpha = cfg.alpha if cfg.alpha is not None else 0.9 * max_sharpness
        nu_c = self.sphere.nu_c(p, grid, cfg.budget)["value"]
        rows = self._quantized_rows(cfg, p, nu_c)
        ok = self._ok_rows(rows)
        zero_tol = cfg.tolerance("nu_q_zero")
        top = rows[-1]
        verdicts = [
            Verdict(
                name="nu_q_vanishes",
                passed=bool(ok) and all(r.nu_q <= zero_tol for r in ok),
                detail=f"max nu_q {max((r.nu_q for r in ok), default=float('nan')):.3e} (tol {zero_tol:.1e})",
            ),
            Verdict(
                name="sharp_unsmearing",
                passed=bool(ok) and all(r.ns_upper == 0.0 for r in ok),
                detail="ns_upper = 0 via commutative unsmearing",
            ),
            Verdict(
                name="noise_at_least_alpha",
                passed=top.error is None and alpha < max_sharpness and top.noise_lower >= alpha,
                detail=f"N(A) >= {top.noise_lower if top.noise_lower is not None else float('nan'):.6g} at m={top.m}, "
                f"alpha={alpha:.6g}, max(f1 - f1^2)={max_sharpness:.6g}",
            ),
        ]
        summary = {"nu_c": nu_c, "alpha": alpha, "max_f1_minus_f1_squared": max_sharpness, "cover": p.cover.descriptors()}
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, verdicts=verdicts, summary=summary)

    def _displaceable_caps(self, cfg: ScenarioConfig) -> ScenarioReport:
        grid = self._classical_grid(cfg)
        p = self._partition(cfg, grid)
        nu_c = self.sphere.nu_c(p, grid, cfg.budget)
        rows = self._quantized_rows(cfg, p, nu_c["value"])
        window = [r for r in self._ok_rows(rows) if r.m >= cfg.m_min]
        zero_tol = cfg.tolerance("nu_q_zero")
        scaled = [r.m_times_nu_q for r in window]
        spread = max(scaled) / min(scaled) if scaled and min(scaled) > 0 else float("inf")
        verdicts = [
            Verdict(
                name="nu_q_positive",
                passed=bool(window) and all(r.nu_q > zero_tol for r in window),
                detail=f"min nu_q {min((r.nu_q for r in window), default=float('nan')):.3e} for m >= {cfg.m_min}",
            ),
            Verdict(
                name="scaling_window",
                passed=bool(window) and spread <= SCALING_WINDOW,
                detail=f"max/min of m*nu_q over m >= {cfg.m_min}: {spread:.4g}",
            ),
        ]
        summary = {
            "nu_c": nu_c["value"],
            "nu_c_witness": {"x": nu_c["x"], "y": nu_c["y"], "point": nu_c["point"]},
            "cover": p.cover.descriptors(),
        }
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, verdicts=verdicts, summary=summary)

    def _region_cells(self, cfg: ScenarioConfig) -> ScenarioReport:
        spec = cfg.partition
        if spec is not None and spec.centers:
            centers = [SpherePoint(t, phi) for t, phi in spec.centers]
        else:
            centers = self.sphere.default_centers(spec.N if spec is not None else 4)
        cells = self.sphere.voronoi_cells(centers)

        def build(index: int, m: int) -> ReportRow:
            ctx = self.toeplitz.context(m)
            povm = self.toeplitz.quantize_regions(ctx, cells)
            return self._quantum_row(cfg, povm, self._row_budget(cfg, index), m=m)

        rows = self._timed_rows(cfg, cfg.m_list, build)
        summary = {"nu_q_by_m": {str(r.m): r.nu_q for r in self._ok_rows(rows)}, "centers": [list(c) for c in centers]}
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, summary=summary)

    def _noise_robustness(self, cfg: ScenarioConfig) -> ScenarioReport:
        p = self._partition(cfg)

        def build(index: int, m: int) -> ReportRow:
            ctx = self.toeplitz.context(m)
            povm = self.toeplitz.quantize_partition(ctx, p)
            budget = self._row_budget(cfg, index)
            row = self._quantum_row(cfg, povm, budget, m=m)
            perturbed = self.smearing.bracket_sensitivity(povm, cfg.epsilon, cfg.samples, budget.seed, budget)
            row.witnesses["perturbed"] = [[b["lower"], b["upper"]] for b in perturbed]
            row.residual = max(abs(b["lower"] - row.ns_lower) for b in perturbed)
            return row

        rows = self._timed_rows(cfg, cfg.m_list, build)
        summary = {"epsilon": cfg.epsilon, "samples": cfg.samples}
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, summary=summary)

    # --- classical and random ensembles ---------------------------------------------------------

    def _scaling_in_n(self, cfg: ScenarioConfig) -> ScenarioReport:
        grid = self._classical_grid(cfg)

        def build(index: int, n: int) -> ReportRow:
            spec = PartitionSpec(type="caps", N=n)
            p = self.sphere.partition_from_spec(spec, grid)
            result = self.sphere.nu_c(p, grid, self._row_budget(cfg, index))
            return ReportRow(
                scenario=cfg.scenario,
                N=n,
                nu_c=result["value"],
                witnesses={"x": result["x"], "y": result["y"], "point": result["point"]},
            )

        rows = self._timed_rows(cfg, cfg.n_list, build, label="N")
        fit = [(r.N, r.nu_c) for r in self._ok_rows(rows) if r.nu_c and r.nu_c > 0]
        summary: Dict[str, Any] = {"n_list": cfg.n_list}
        if len(fit) >= 2:
            slope, intercept = np.polyfit(np.log([n for n, _ in fit]), np.log([v for _, v in fit]), 1)
            summary.update(exponent=float(slope), log_constant=float(intercept))
        verdicts = [
            Verdict(
                name="nu_c_positive",
                passed=len(fit) == len(rows),
                detail=f"fitted exponent {summary.get('exponent', float('nan')):.4g}",
            )
        ]
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, verdicts=verdicts, summary=summary)

    def _random_case(self, cfg: ScenarioConfig, case: int):
        rng = Utils.derive_seed(cfg.seed, case)
        dim = int(rng.integers(cfg.dims[0], cfg.dims[1] + 1))
        n = int(rng.integers(max(2, cfg.outcomes[0]), max(2, cfg.outcomes[1]) + 1))
        povm = self.povms.random_povm(dim, n, int(rng.integers(0, 2 ** 31 - 1)))
        return povm, rng

    def _janssens_fuzz(self, cfg: ScenarioConfig) -> ScenarioReport:
        def build(index: int, case: int) -> ReportRow:
            povm, rng = self._random_case(cfg, case)
            x = rng.uniform(-1.0, 1.0, size=povm.n)
            y = rng.uniform(-1.0, 1.0, size=povm.n)
            return ReportRow(
                scenario=cfg.scenario,
                N=povm.n,
                dim=povm.dim,
                residual=self.povms.janssens_residual(povm, x, y),
                witnesses={"case": case, "x": x.tolist(), "y": y.tolist()},
            )

        rows = self._timed_rows(cfg, list(range(cfg.cases)), build, label=None)
        residuals = [r.residual for r in self._ok_rows(rows)]
        floor = -cfg.tolerance("janssens")
        worst = min(residuals) if residuals else float("nan")
        verdicts = [
            Verdict(
                name="janssens_nonnegative",
                passed=bool(residuals) and worst >= floor,
                detail=f"min residual {worst:.3e} over {len(residuals)} cases",
            )
        ]
        summary = {"cases": cfg.cases, "min_residual": worst}
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, verdicts=verdicts, summary=summary)

    def _unsharpness_ratio(self, cfg: ScenarioConfig) -> ScenarioReport:
        def build(index: int, case: int) -> ReportRow:
            povm, _ = self._random_case(cfg, case)
            row = self._quantum_row(cfg, povm, self._row_budget(cfg, case))
            row.residual = row.noise_lower - row.ns_lower
            row.witnesses["case"] = case
            return row

        rows = self._timed_rows(cfg, list(range(cfg.cases)), build, label=None)
        ratios = [r.noise_lower / r.nu_q for r in self._ok_rows(rows) if r.nu_q and r.nu_q > 0]
        summary: Dict[str, Any] = {"cases": cfg.cases}
        if ratios:
            summary.update(
                min_ratio=float(np.min(ratios)), median_ratio=float(np.median(ratios)), max_ratio=float(np.max(ratios))
            )
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, summary=summary)

    def _registration_classical(self, cfg: ScenarioConfig) -> ScenarioReport:
        grid = self._classical_grid(cfg, REGISTRATION_GRID)
        p = self._partition(cfg, grid)
        values = p.values(grid)
        povm = self.sphere.classical_registration_povm(p, grid)

        def build(index: int, _) -> ReportRow:
            row = self._quantum_row(cfg, povm, self._row_budget(cfg, index))
            e1 = np.zeros(povm.n)
            e1[0] = 1.0
            # Delta(e_1) acts by multiplication with f_1 - f_1^2
            row.residual = float(np.max(np.abs(povm.noise_array(e1) - (values[0] - values[0] ** 2))))
            return row

        rows = self._timed_rows(cfg, [None], build, label=None)
        row = rows[0]
        crosses_half = bool(np.any((values.min(axis=1) <= 0.5) & (values.max(axis=1) >= 0.5)))
        verdicts = [
            Verdict(
                name="noise_at_least_quarter",
                passed=row.error is None and (not crosses_half or row.noise_lower >= 0.25 - ROW_SLACK),
                detail=f"N(A) >= {row.noise_lower if row.noise_lower is not None else float('nan'):.6g}; "
                f"some f_j crosses 1/2: {crosses_half}",
            ),
            Verdict(
                name="sharp_unsmearing",
                passed=row.error is None and row.ns_lower == 0.0 and row.ns_upper == 0.0,
                detail="canonical unsmearing by grid-point projectors",
            ),
            Verdict(
                name="noise_operator_multiplies",
                passed=row.error is None and row.residual <= ROW_SLACK,
                detail=f"max |Delta(e_1) - (f_1 - f_1^2)| = {row.residual if row.residual is not None else float('nan'):.3e}",
            ),
        ]
        summary = {"grid": [grid.n_t, grid.n_phi], "cover": p.cover.descriptors()}
        return ScenarioReport(scenario=cfg.scenario, seed=cfg.seed, rows=rows, verdicts=verdicts, summary=summary)
