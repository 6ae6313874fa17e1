"""
Command-line entry point: ``python -m netdid.app.cli <simulate|estimate|replicate>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .dgp import exposure_distribution, generate_panel
from .estimators import EstimationError
from .models import DEFAULT_SEED, PROPOSED_ESTIMATORS, EstimateReport, RunConfig
from .numerics import InvalidInputError, NumericalError, replication_rng
from .panel_io import MissingNetworkError, PanelSchemaError, export_simulated_panel, panel_from_files
from .simulation import (
    CSV_FLOAT_FORMAT,
    ESTIMATORS,
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    TABLE1_ESTIMATORS,
    TABLE2_ESTIMATORS,
    SimResult,
    resolve_estimators,
    run_estimators,
    run_simulation,
    sweep,
)

logger = logging.getLogger(__name__)

OUTPUT_DIR = Path(os.getenv("NETDID_OUTPUT_DIR", "output"))
LOG_LEVEL = os.getenv("NETDID_LOG_LEVEL", "INFO")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_SCHEMA = 3
EXIT_NO_NETWORK = 4
EXIT_ESTIMATION = 5
EXIT_NUMERICAL = 6

OUTPUT_HELP = f"""\
output files (column order is fixed):
  results.csv          {",".join(RESULT_COLUMNS)}
  summary.csv          {",".join(SUMMARY_COLUMNS)}
  table1.csv           summary columns, direct-effect estimators
  table2.csv           summary columns, spillover estimators
  fig_n_sweep.csv      n,<summary columns>
  fig_rho_sweep.csv    rho0,<summary columns>
  fig_L_sweep.csv      L,<summary columns>
  fig_s_distribution.csv  s,units,share
  estimates.json       per estimator: point, se, ci, trim counts, neighborhood violations
  panel/panel.csv      id,x,y,z,d,y1,y2,s   (simulate --export-panel)
  panel/points.csv     id,x,y

estimators: {", ".join(ESTIMATORS)}
default seed: {DEFAULT_SEED}

exit codes: 0 ok, 1 some estimators failed, 2 bad configuration,
  3 input schema error, 4 no network input, 5 estimation error,
  6 numerical failure
"""


def _error_code(error: Exception) -> int:
    if isinstance(error, MissingNetworkError):
        return EXIT_NO_NETWORK
    if isinstance(error, PanelSchemaError):
        return EXIT_SCHEMA
    if isinstance(error, EstimationError):
        return EXIT_ESTIMATION
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _report_failures(failed: Dict[str, str]) -> None:
    for name, message in failed.items():
        print(f"estimator {name} failed: {message}", file=sys.stderr)


def _write_csv(frame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file mirroring RunConfig")
    common.add_argument("--seed", type=int, help=f"base seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, help="worker processes for replications")
    common.add_argument("--out", type=Path, help="output directory (env NETDID_OUTPUT_DIR)")
    common.add_argument("--log-level", help="logging level (env NETDID_LOG_LEVEL, default INFO)")
    common.add_argument("--replications", type=int, help="Monte Carlo replications")
    common.add_argument("--alpha", type=float, help="CI level is 1 - alpha")
    common.add_argument("--n", type=int, help="simulated sample size")
    common.add_argument("--estimators", help="comma-separated estimator names")

    parser = argparse.ArgumentParser(
        prog="netdid",
        description="Difference-in-differences under network interference.",
        epilog=OUTPUT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser(
        "simulate",
        parents=[common],
        help="Monte Carlo run on the synthetic panel",
        epilog=OUTPUT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    simulate.add_argument("--export-panel", action="store_true", help="also write replication 0's panel")

    estimate = commands.add_parser(
        "estimate",
        parents=[common],
        help="estimate effects on a user panel",
        epilog=OUTPUT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    estimate.add_argument("--panel", type=Path, help="CSV with id,z...,d,y1,y2")
    estimate.add_argument("--points", type=Path, help="CSV with id,x,y")
    estimate.add_argument("--edges", type=Path, help="CSV with src,dst")
    estimate.add_argument("--L", type=int, dest="L", help="neighborhood size")
    estimate.add_argument("--K", type=int, dest="K", help="interference range in hops")
    estimate.add_argument("--radius", type=float, help="adjacency radius for points")
    estimate.add_argument("--metric", choices=["chebyshev", "euclidean"])

    commands.add_parser(
        "replicate",
        parents=[common],
        help="tables and robustness sweeps",
        epilog=OUTPUT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Config file first, then explicit flags on top; validated once more at the end."""
    cfg = RunConfig.parse_file(args.config) if args.config else RunConfig()
    values = cfg.dict()
    values["command"] = args.command

    overrides = {
        "threads": args.threads,
        "output_dir": args.out,
        "replications": args.replications,
        "alpha": args.alpha,
        "seed": args.seed,
    }
    for flag in ("panel", "points", "edges"):
        overrides[f"{flag}_path"] = getattr(args, flag, None)
    for flag in ("L", "K", "radius", "metric"):
        overrides[flag] = getattr(args, flag, None)
    if getattr(args, "export_panel", False):
        overrides["export_panel"] = True
    if args.estimators:
        overrides["estimators"] = [name.strip() for name in args.estimators.split(",") if name.strip()]
    values.update({key: value for key, value in overrides.items() if value is not None})

    if args.seed is not None:
        values["sim"]["seed"] = args.seed
    if args.n is not None:
        values["sim"]["n"] = args.n
    return RunConfig(**values)


def _output_dir(cfg: RunConfig) -> Path:
    directory = cfg.output_dir or OUTPUT_DIR
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _failed_estimators(result: SimResult) -> Dict[str, str]:
    failed: Dict[str, str] = {}
    for record in result.failures:
        failed.setdefault(record.estimator, f"replication {record.replication}: {record.error}")
    return failed


def cmd_simulate(cfg: RunConfig) -> int:
    out = _output_dir(cfg)
    result = run_simulation(
        cfg.sim,
        cfg.replications,
        threads=cfg.threads,
        estimators=cfg.estimators,
        hac=cfg.hac,
        alpha=cfg.alpha,
        est_cfg=cfg.estimation,
    )
    written = result.write(out)
    if cfg.export_panel:
        sim = generate_panel(cfg.sim, replication_rng(cfg.sim.seed, 0))
        written += export_simulated_panel(sim, out / "panel")
    logger.info("Wrote %s", ", ".join(str(path) for path in written))

    failed = _failed_estimators(result)
    if failed:
        _report_failures(failed)
        return EXIT_PARTIAL
    return EXIT_OK


def estimates_payload(cfg: RunConfig, reports: Dict[str, EstimateReport], failed: Dict[str, str], violations: int, n: int) -> Dict[str, Any]:
    return {
        "n": n,
        "L": cfg.L,
        "K": cfg.K,
        "alpha": cfg.alpha,
        "hac": cfg.hac.dict(),
        "neighborhood_violations": violations,
        "estimates": {name: report.summary() for name, report in reports.items()},
        "failed": failed,
    }


def cmd_estimate(cfg: RunConfig) -> int:
    if cfg.panel_path is None:
        raise InvalidInputError("estimate needs a panel file (--panel)")
    names = resolve_estimators(cfg.estimators or PROPOSED_ESTIMATORS)
    panel = panel_from_files(
        cfg.panel_path,
        points_path=cfg.points_path,
        edges_path=cfg.edges_path,
        L=cfg.L,
        K=cfg.K,
        radius=cfg.radius,
        metric=cfg.metric,
    )
    seed = cfg.seed if cfg.seed is not None else DEFAULT_SEED
    outcomes = run_estimators(panel, names, cfg.hac, cfg.alpha, config=cfg.estimation, rng=replication_rng(seed))

    reports = {name: o for name, o in outcomes.items() if isinstance(o, EstimateReport)}
    errors = {name: o for name, o in outcomes.items() if not isinstance(o, EstimateReport)}
    failed = {name: str(e) for name, e in errors.items()}

    path = _output_dir(cfg) / "estimates.json"
    payload = estimates_payload(cfg, reports, failed, panel.index.violations, panel.n)
    path.write_text(json.dumps(payload, indent=2, default=_jsonable))
    logger.info("Wrote %s", path)

    if not errors:
        return EXIT_OK
    _report_failures(failed)
    if not reports:
        return _error_code(next(iter(errors.values())))
    return EXIT_PARTIAL


def replicate_estimators(cfg: RunConfig) -> List[str]:
    """Estimators for both tables and every sweep; all of them unless narrowed."""
    return list(cfg.estimators or TABLE1_ESTIMATORS + TABLE2_ESTIMATORS)


def cmd_replicate(cfg: RunConfig) -> int:
    out = _output_dir(cfg)
    run = dict(threads=cfg.threads, hac=cfg.hac, alpha=cfg.alpha, est_cfg=cfg.estimation)
    estimators = replicate_estimators(cfg)

    result = run_simulation(cfg.sim, cfg.replications, estimators=estimators, **run)
    written: List[Path] = [*result.write(out)]
    summary = result.summary
    written.append(_write_csv(summary[summary["estimand"] == "ADTT"], out / "table1.csv"))
    written.append(_write_csv(summary[summary["estimand"] == "AITT"], out / "table2.csv"))

    sweeps = [("n", cfg.n_values, "fig_n_sweep.csv"), ("rho0", cfg.rho_values, "fig_rho_sweep.csv"), ("L", cfg.L_values, "fig_L_sweep.csv")]
    for parameter, values, filename in sweeps:
        frame = sweep(cfg.sim, parameter, values, cfg.replications, estimators=estimators, **run)
        written.append(_write_csv(frame, out / filename))

    sim = generate_panel(cfg.sim, replication_rng(cfg.sim.seed, 0))
    written.append(_write_csv(exposure_distribution(sim), out / "fig_s_distribution.csv"))
    logger.info("Wrote %s", ", ".join(str(path) for path in written))

    failed = _failed_estimators(result)
    if failed:
        _report_failures(failed)
        return EXIT_PARTIAL
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "replicate": cmd_replicate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        cfg = load_config(args)
    except (ValidationError, ValueError, OSError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return COMMANDS[cfg.command](cfg)
    except (PanelSchemaError, EstimationError, NumericalError, InvalidInputError) as e:
        print(f"{cfg.command} failed: {e}", file=sys.stderr)
        return _error_code(e)


if __name__ == "__main__":
    sys.exit(main())
