import argparse
import json
import os
from typing import List, Optional
from app.config.Settings import Settings, get_settings
from app.helpers.Exceptions import InvalidCover
from app.helpers.Quadrature import SphereGrid
from app.helpers.ReportStore import ReportStore
from app.helpers.Utilities import Utils
from app.middleware.GlobalErrorHandling import EXIT_FAIL, EXIT_PASS, handle_command_errors
from app.schemas.Scenario import PartitionSpec, ScenarioConfig
from app.services.ScenarioService import ScenarioService
from app.services.SphereService import SphereService
from app.services.ToeplitzService import ToeplitzService
from app.services.ValidationService import SUITES, ValidationService


def get_scenario_service(settings: Settings) -> ScenarioService:
    return ScenarioService(workers=settings.resolved_workers())


def parse_partition(text: str) -> PartitionSpec:
    """
    Partition from the command line.

    :param text: `bands:N[:overlap]`, `caps:N[:radius]`, a JSON object, or a path to one.
    :return: A validated PartitionSpec.
    """
    if os.path.isfile(text):
        with open(text, encoding="utf-8") as handle:
            return PartitionSpec.model_validate(json.load(handle))
    if text.lstrip().startswith("{"):
        return PartitionSpec.model_validate(json.loads(text))
    parts = text.split(":")
    if parts[0] not in ("bands", "caps") or len(parts) not in (2, 3):
        raise InvalidCover(f"Unrecognized partition spec {text!r}; use bands:N:overlap or caps:N:radius")
    try:
        n = int(parts[1])
        extra = float(parts[2]) if len(parts) == 3 else None
    except ValueError:
        raise InvalidCover(f"Unrecognized partition spec {text!r}; N must be an integer and the parameter a number")
    if parts[0] == "bands":
        return PartitionSpec(type="bands", N=n, overlap=extra)
    return PartitionSpec(type="caps", N=n, radius=extra)


def _emit(data, success: bool, error: Optional[str] = None):
    print(Utils.create_response(data=data, success=success, error=error).model_dump_json(indent=2))


def _grid(args) -> Optional[SphereGrid]:
    if args.n_t is None and args.n_phi is None:
        return None
    return SphereGrid(args.n_t or 64, args.n_phi or 128)


@handle_command_errors
def run_command(args) -> int:
    settings = get_settings()
    with open(args.config, encoding="utf-8") as handle:
        cfg = ScenarioConfig.model_validate(json.load(handle))
    report = get_scenario_service(settings).run_scenario(cfg)
    store = ReportStore(settings.output_dir)
    stem = args.out or cfg.output or cfg.scenario
    paths = store.write_report(report, stem)
    passed = report.all_passed
    _emit({"report": store.summary_payload(report), "files": paths}, passed, None if passed else "some verdicts failed")
    return EXIT_PASS if passed else EXIT_FAIL


@handle_command_errors
def quantize_command(args) -> int:
    spec = parse_partition(args.partition)
    sphere = SphereService()
    toeplitz = ToeplitzService(sphere)
    ctx = toeplitz.context(args.m, _grid(args))
    p = sphere.partition_from_spec(spec)
    povm = toeplitz.quantize_partition(ctx, p)
    payload = {"m": args.m, "partition": spec.model_dump(), "cover": p.cover.descriptors(), "povm": povm}
    path = ReportStore(get_settings().output_dir).write_payload(payload, args.out)
    _emit({"file": path, "N": povm.n, "dim": povm.dim, "max_commutator": povm.max_commutator()}, True)
    return EXIT_PASS


@handle_command_errors
def export_command(args) -> int:
    spec = parse_partition(args.partition)
    sphere = SphereService()
    grid = _grid(args) or SphereGrid(64, 128)
    p = sphere.partition_from_spec(spec, grid)
    path = ReportStore(get_settings().output_dir).export_partition_csv(p, grid, args.out)
    _emit({"file": path, "nodes": grid.size, "N": p.n}, True)
    return EXIT_PASS


@handle_command_errors
def check_command(args) -> int:
    report = ValidationService().run_suite(args.suite, seed=args.seed, cases=args.cases)
    passed = report.all_passed
    _emit(ReportStore.summary_payload(report), passed, None if passed else "some checks failed")
    return EXIT_PASS if passed else EXIT_FAIL


def version_command(args) -> int:
    _emit({"version": Settings.version(), "build": Settings.build()}, True)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Quantum noise and Berezin-Toeplitz experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario from a JSON config")
    run.add_argument("config")
    run.add_argument("--out", help="report stem (default: config output or scenario name)")
    run.set_defaults(handler=run_command)

    quantize = sub.add_parser("quantize", help="write the quantized POVM of a partition")
    quantize.add_argument("--m", type=int, required=True)
    quantize.add_argument("--partition", required=True)
    quantize.add_argument("--out", required=True)
    quantize.add_argument("--n-t", dest="n_t", type=int)
    quantize.add_argument("--n-phi", dest="n_phi", type=int)
    quantize.set_defaults(handler=quantize_command)

    export = sub.add_parser("export", help="sample a partition of unity to CSV")
    export.add_argument("--partition", required=True)
    export.add_argument("--out", required=True)
    export.add_argument("--n-t", dest="n_t", type=int)
    export.add_argument("--n-phi", dest="n_phi", type=int)
    export.set_defaults(handler=export_command)

    check = sub.add_parser("check", help="run a self-check suite")
    check.add_argument("--suite", choices=SUITES, required=True)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--cases", type=int)
    check.set_defaults(handler=check_command)

    version = sub.add_parser("version", help="print version and build")
    version.set_defaults(handler=version_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)
