import json
import os
import pytest
from pydantic import ValidationError
from app.helpers.ReportStore import ReportStore
from app.schemas.Scenario import CSV_COLUMNS, ScenarioConfig, ScenarioName, SearchBudget
from app.services.ScenarioService import ScenarioService

FAST_BUDGET = {"starts": 8, "iterations": 40}


def config(scenario: str, **fields) -> ScenarioConfig:
    return ScenarioConfig.model_validate({"scenario": scenario, "seed": 7, "budget": FAST_BUDGET, **fields})


def verdicts(report):
    return {v.name: v.passed for v in report.verdicts}


@pytest.fixture
def scenario_service():
    return ScenarioService(workers=1)


def test_commutative_bands_small_levels(scenario_service):
    report = scenario_service.run_scenario(config("commutative-bands", m_list=[8, 16]))
    assert [r.m for r in report.rows] == [8, 16]
    assert all(verdicts(report).values()), report.verdicts
    for row in report.rows:
        assert row.N == 3 and row.dim == row.m + 1
        assert row.nu_q <= 1e-9 and row.ns_upper == 0.0
        assert row.noise_lower >= row.ns_lower
    assert report.summary["alpha"] < report.summary["max_f1_minus_f1_squared"]
    assert len(report.summary["timings"]) == 2


@pytest.mark.slow
def test_commutative_bands_default_levels(scenario_service):
    report = scenario_service.run_scenario(ScenarioConfig(scenario="commutative-bands", seed=1))
    assert report.all_passed, report.verdicts
    assert report.rows[-1].m == 128


def test_displaceable_caps_scaling_window(scenario_service):
    report = scenario_service.run_scenario(config("displaceable-caps", m_list=[32, 64, 128]))
    assert report.all_passed, report.verdicts
    assert all(r.nu_q > 1e-4 for r in report.rows)
    scaled = [r.m_times_nu_q for r in report.rows]
    assert max(scaled) / min(scaled) <= 2.0
    assert report.summary["nu_c"] > 0.0


def test_displaceable_caps_small_levels_are_noncommutative(scenario_service):
    report = scenario_service.run_scenario(config("displaceable-caps", m_list=[4, 8], m_min=4))
    assert verdicts(report)["nu_q_positive"]
    assert verdicts(report)["noise_dominates_half_nu_q"]
    assert verdicts(report)["bracket_ordered"]
    assert all(r.m_times_nu_q == pytest.approx(r.m * r.nu_q) for r in report.rows)


def test_registration_classical(scenario_service):
    report = scenario_service.run_scenario(config("registration-classical"))
    assert all(verdicts(report).values()), report.verdicts
    (row,) = report.rows
    assert row.noise_lower >= 0.25 - 1e-9
    assert (row.ns_lower, row.ns_upper) == (0.0, 0.0)
    assert row.dim == 32 * 64


def test_janssens_fuzz(scenario_service):
    report = scenario_service.run_scenario(config("janssens-fuzz", cases=60))
    assert len(report.rows) == 60
    assert verdicts(report)["janssens_nonnegative"]
    assert report.summary["min_residual"] >= -1e-9
    assert all(2 <= r.dim <= 6 and 2 <= r.N <= 5 for r in report.rows)


def test_scaling_in_n_reports_an_exponent(scenario_service):
    report = scenario_service.run_scenario(config("scaling-in-N", n_list=[4, 6], grid=(24, 48)))
    assert [r.N for r in report.rows] == [4, 6]
    assert verdicts(report)["nu_c_positive"]
    assert "exponent" in report.summary


def test_tabulation_scenarios_keep_row_invariants(scenario_service):
    for cfg in (
        config("unsharpness-ratio", cases=4, dims=(2, 3), outcomes=(2, 3)),
        config("noise-robustness", m_list=[4, 6], samples=2, epsilon=0.1),
        config("region-cells", m_list=[4, 8]),
    ):
        report = scenario_service.run_scenario(cfg)
        assert all(verdicts(report).values()), (cfg.scenario, report.verdicts)
    assert set(report.summary["nu_q_by_m"]) == {"4", "8"}


def test_failed_rows_are_recorded_and_the_run_continues(scenario_service):
    report = scenario_service.run_scenario(config("commutative-bands", m_list=[8, 600]))
    assert report.rows[0].error is None
    assert report.rows[1].m == 600 and report.rows[1].error.startswith("ValueError")
    assert not verdicts(report)["rows_complete"]
    assert not report.all_passed


def test_reports_are_byte_identical_across_runs_and_worker_counts(tmp_path):
    cfg = config("commutative-bands", m_list=[8, 12])
    first = ReportStore(str(tmp_path)).write_csv(ScenarioService(workers=1).run_scenario(cfg), "a.csv")
    second = ReportStore(str(tmp_path)).write_csv(ScenarioService(workers=3).run_scenario(cfg), "b.csv")
    with open(first, "rb") as a, open(second, "rb") as b:
        data = a.read()
        assert data == b.read()
    header = data.decode("utf-8").split("\n")[0]
    assert header == ",".join(CSV_COLUMNS)
    assert b"\r\n" not in data


def test_json_summary_carries_verdicts_and_timings(scenario_service, tmp_path):
    report = scenario_service.run_scenario(config("janssens-fuzz", cases=5))
    payload = ReportStore.summary_payload(report)
    assert payload["scenario"] == "janssens-fuzz" and payload["pass"] is True
    assert {"name", "pass", "detail"} <= set(payload["verdicts"][0])
    assert len(payload["summary"]["timings"]) == 5
    paths = ReportStore(str(tmp_path)).write_report(report, "fuzz")
    assert paths["csv"].endswith("fuzz.csv") and paths["json"].endswith("fuzz.json")


def test_config_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"scenario": "commutative-bands", "seed": 1, "m_list": [16, 8]})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"scenario": "commutative-bands", "seed": 1, "m_list": []})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"scenario": "nope", "seed": 1})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"scenario": "janssens-fuzz"})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"scenario": "janssens-fuzz", "seed": 1, "tolerances": {"bogus": 1.0}})
    cfg = ScenarioConfig.model_validate({"scenario": "janssens-fuzz", "seed": 1, "tolerances": {"janssens": 1e-6}})
    assert cfg.tolerance("janssens") == 1e-6 and cfg.tolerance("psd") == 1e-10
    assert SearchBudget().exhaustive_cutoff == 14


def test_example_configs_validate():
    root = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
    names = sorted(f for f in os.listdir(root) if f.endswith(".json"))
    assert {n[: -len(".json")] for n in names} == set(ScenarioName.ALL)
    for name in names:
        with open(os.path.join(root, name), encoding="utf-8") as handle:
            cfg = ScenarioConfig.model_validate(json.load(handle))
        assert cfg.output == cfg.scenario
