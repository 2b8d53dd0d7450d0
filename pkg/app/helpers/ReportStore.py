import csv
import json
import logging
import os
from typing import Any, Dict, Optional
from app.helpers.Quadrature import SphereGrid
from app.helpers.Utilities import Utils
from app.models.Sphere import PartitionOfUnity
from app.schemas.Scenario import CSV_COLUMNS, ReportRow, ScenarioReport

logger = logging.getLogger(__name__)


class ReportStore:
    """Writes reports to disk: rows as CSV, verdicts and summary as JSON.

    The CSV bytes depend only on the rows, so identical seeds give identical files.
    """

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = output_dir or "."

    def _resolve(self, path: str) -> str:
        full = path if os.path.isabs(path) else os.path.join(self.output_dir, path)
        parent = os.path.dirname(full)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return full

    @staticmethod
    def _cell(row: ReportRow, column: str) -> str:
        value = getattr(row, column)
        if column == "witnesses":
            return json.dumps(Utils._serialize_data(value), sort_keys=True, separators=(",", ":"))
        if value is None:
            return ""
        if isinstance(value, float):
            return Utils.format_float(value)
        return str(value)

    def write_csv(self, report: ScenarioReport, path: str) -> str:
        full = self._resolve(path)
        with open(full, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in report.rows:
                writer.writerow([self._cell(row, column) for column in CSV_COLUMNS])
        logger.info(f"Wrote {len(report.rows)} rows to {full}")
        return full

    @staticmethod
    def summary_payload(report: ScenarioReport) -> Dict[str, Any]:
        return Utils._serialize_data(
            {
                "scenario": report.scenario,
                "seed": report.seed,
                "pass": report.all_passed,
                "verdicts": report.verdicts,
                "summary": report.summary,
            }
        )

    def write_json(self, report: ScenarioReport, path: str) -> str:
        full = self._resolve(path)
        with open(full, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(self.summary_payload(report), handle, indent=2, sort_keys=True)
            handle.write("\n")
        logger.info(f"Wrote summary to {full}")
        return full

    def write_report(self, report: ScenarioReport, stem: str) -> Dict[str, str]:
        """<stem>.csv and <stem>.json."""
        return {"csv": self.write_csv(report, f"{stem}.csv"), "json": self.write_json(report, f"{stem}.json")}

    def write_payload(self, payload: Dict[str, Any], path: str) -> str:
        full = self._resolve(path)
        with open(full, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(Utils._serialize_data(payload), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return full

    def export_partition_csv(self, p: PartitionOfUnity, grid: SphereGrid, path: str) -> str:
        """Columns t, phi, f_1..f_N, one line per grid node."""
        full = self._resolve(path)
        values = p.values(grid)
        with open(full, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["t", "phi"] + [f"f_{j + 1}" for j in range(p.n)])
            for i in range(grid.size):
                writer.writerow(
                    [Utils.format_float(grid.t[i]), Utils.format_float(grid.phi[i])]
                    + [Utils.format_float(v) for v in values[:, i]]
                )
        logger.info(f"Wrote partition samples ({grid.size} nodes, N={p.n}) to {full}")
        return full
