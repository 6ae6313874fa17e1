"""
Monte Carlo harness: replicate the synthetic panel, run every requested
estimator with HAC intervals, and aggregate bias, RMSE and coverage.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .benchmarks import (
    ExposureMapping,
    build_exposure,
    canonical_ipw_did,
    canonical_twfe,
    dr_did_benchmark,
    modified_twfe,
    xu_estimator,
)
from .dgp import generate_panel
from .estimators import PROPOSED, EstimationError, NuisanceSet, PanelData, fit_nuisances
from .graph import distance_shells, treated_neighbor_counts
from .models import (
    EstimateReport,
    EstimationConfig,
    HacConfig,
    ReplicationRecord,
    SimConfig,
    SimSummaryRow,
)
from .numerics import InvalidInputError, NumericalError, replication_rng
from .variance import attach_variance, coverage_indicator

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "replication",
    "estimator",
    "estimand",
    "point",
    "se",
    "ci_lo",
    "ci_hi",
    "covered",
    "truth",
    "failed",
    "error",
]
SUMMARY_COLUMNS = list(SimSummaryRow.__fields__)
CSV_FLOAT_FORMAT = "%.12g"

RECOVERABLE_ERRORS = (EstimationError, NumericalError, InvalidInputError)


@dataclass
class EstimatorContext:
    """
    One panel plus the lazily built pieces several estimators share: the
    proposed nuisance fits and the exposure mappings (MO draws come from
    ``rng``, so they are built once per panel).
    """

    panel: PanelData
    config: EstimationConfig
    rng: np.random.Generator
    _nuisances: Optional[NuisanceSet] = None
    _mappings: Dict[str, ExposureMapping] = field(default_factory=dict)

    def nuisances(self) -> NuisanceSet:
        if self._nuisances is None:
            self._nuisances = fit_nuisances(self.panel, self.config)
        return self._nuisances

    def mapping(self, kind: str) -> ExposureMapping:
        if kind not in self._mappings:
            S = treated_neighbor_counts(self.panel.network, self.panel.D, self.panel.index.K)
            self._mappings[kind] = build_exposure(kind, S, rng=self.rng)
        return self._mappings[kind]


EstimatorFn = Callable[[EstimatorContext], EstimateReport]


def _proposed(name: str) -> EstimatorFn:
    return lambda ctx: PROPOSED[name](ctx.panel, ctx.nuisances())


def _exposure(method: str, kind: str) -> EstimatorFn:
    return lambda ctx: xu_estimator(ctx.panel, ctx.mapping(kind), method=method, config=ctx.config)


# name -> (estimand, estimator); insertion order is the output order
ESTIMATORS: Dict[str, Tuple[str, EstimatorFn]] = {
    "proposed_ipw_adtt": ("ADTT", _proposed("proposed_ipw_adtt")),
    "proposed_dr_adtt": ("ADTT", _proposed("proposed_dr_adtt")),
    "proposed_ipw_aitt": ("AITT", _proposed("proposed_ipw_aitt")),
    "proposed_dr_aitt": ("AITT", _proposed("proposed_dr_aitt")),
    "exposure_ipw_oracle": ("ADTT", _exposure("IPW", "oracle")),
    "exposure_ipw_mo": ("ADTT", _exposure("IPW", "mo")),
    "exposure_ipw_fm": ("ADTT", _exposure("IPW", "fm")),
    "exposure_dr_oracle": ("ADTT", _exposure("DR", "oracle")),
    "exposure_dr_mo": ("ADTT", _exposure("DR", "mo")),
    "exposure_dr_fm": ("ADTT", _exposure("DR", "fm")),
    "canonical_ipw": ("ADTT", lambda ctx: canonical_ipw_did(ctx.panel, ctx.config)),
    "canonical_twfe": ("ADTT", lambda ctx: canonical_twfe(ctx.panel)),
    "dr_did": ("ADTT", lambda ctx: dr_did_benchmark(ctx.panel, ctx.config)),
    "modified_twfe": ("ADTT", lambda ctx: modified_twfe(ctx.panel)),
}

TABLE1_ESTIMATORS = [
    "proposed_ipw_adtt",
    "proposed_dr_adtt",
    "exposure_ipw_oracle",
    "exposure_ipw_mo",
    "exposure_ipw_fm",
    "exposure_dr_oracle",
    "exposure_dr_mo",
    "exposure_dr_fm",
    "canonical_ipw",
    "canonical_twfe",
    "dr_did",
    "modified_twfe",
]
TABLE2_ESTIMATORS = ["proposed_ipw_aitt", "proposed_dr_aitt"]


def resolve_estimators(names: Optional[Iterable[str]]) -> List[str]:
    """Validate names against the registry; ``None`` means all of them."""
    if names is None:
        return list(ESTIMATORS)
    resolved = list(names)
    unknown = [name for name in resolved if name not in ESTIMATORS]
    if unknown:
        raise InvalidInputError(
            f"unknown estimator(s): {', '.join(unknown)} (expected any of {', '.join(ESTIMATORS)})"
        )
    if not resolved:
        raise InvalidInputError("at least one estimator is required")
    return resolved


def run_estimators(
    panel: PanelData,
    names: Sequence[str],
    hac: HacConfig,
    alpha: float,
    config: Optional[EstimationConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, Union[EstimateReport, Exception]]:
    """
    Evaluate each estimator with a HAC interval attached. A recoverable
    failure is returned in place of the report so the other estimators
    still run.
    """
    config = config or EstimationConfig()
    ctx = EstimatorContext(panel=panel, config=config, rng=rng if rng is not None else replication_rng(0))
    K = panel.index.K
    shells = distance_shells(panel.network, int(math.floor(hac.resolve_bandwidth(K))))

    outcomes: Dict[str, Union[EstimateReport, Exception]] = {}
    for name in names:
        _, estimator = ESTIMATORS[name]
        try:
            outcomes[name] = attach_variance(estimator(ctx), shells, hac, alpha, K=K)
        except RECOVERABLE_ERRORS as e:
            logger.error("Estimator %s failed: %s", name, e)
            outcomes[name] = e
    return outcomes


def _record(index: int, name: str, estimand: str, truth: float, outcome: Union[EstimateReport, Exception]) -> ReplicationRecord:
    if isinstance(outcome, Exception):
        return ReplicationRecord(
            replication=index,
            estimator=name,
            estimand=estimand,
            point=None,
            se=None,
            ci_lo=None,
            ci_hi=None,
            covered=None,
            truth=truth,
            failed=True,
            error=str(outcome),
        )
    variance = outcome.variance
    return ReplicationRecord(
        replication=index,
        estimator=name,
        estimand=estimand,
        point=outcome.point,
        se=variance.se,
        ci_lo=variance.ci[0],
        ci_hi=variance.ci[1],
        covered=coverage_indicator(variance, truth) if np.isfinite(truth) else None,
        truth=truth,
    )


def run_replication(
    sim_cfg: SimConfig,
    index: int,
    estimators: Sequence[str],
    hac: HacConfig,
    alpha: float,
    est_cfg: Optional[EstimationConfig] = None,
) -> List[ReplicationRecord]:
    """
    Draw replication ``index`` on its own seed stream and score each
    estimator against its truth.

    Module level so a process pool can pickle it.
    """
    rng = replication_rng(sim_cfg.seed, index)
    truth_for = {"ADTT": sim_cfg.tau, "AITT": float("nan")}
    try:
        sim = generate_panel(sim_cfg, rng)
    except NumericalError as e:
        logger.error("Replication %d: panel generation failed: %s", index, e)
        return [_record(index, name, ESTIMATORS[name][0], truth_for[ESTIMATORS[name][0]], e) for name in estimators]

    truth_for = {"ADTT": sim.true_adtt, "AITT": sim.true_aitt}
    outcomes = run_estimators(sim.panel, estimators, hac, alpha, config=est_cfg, rng=rng)
    return [
        _record(index, name, ESTIMATORS[name][0], truth_for[ESTIMATORS[name][0]], outcomes[name])
        for name in estimators
    ]


@dataclass
class SimResult:
    """Per-replication records, sorted by replication, and their aggregates."""

    records: List[ReplicationRecord]
    summary: pd.DataFrame

    def records_frame(self) -> pd.DataFrame:
        return records_to_frame(self.records)

    @property
    def failures(self) -> List[ReplicationRecord]:
        return [r for r in self.records if r.failed]

    def write(self, directory: Union[str, Path]) -> List[Path]:
        """``results.csv`` and ``summary.csv`` in fixed column order."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        results_file = directory / "results.csv"
        summary_file = directory / "summary.csv"
        self.records_frame().to_csv(results_file, index=False, float_format=CSV_FLOAT_FORMAT)
        self.summary.to_csv(summary_file, index=False, float_format=CSV_FLOAT_FORMAT)
        return [results_file, summary_file]


def records_to_frame(records: Sequence[ReplicationRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.dict() for r in records], columns=RESULT_COLUMNS)


def summarize(records: Sequence[ReplicationRecord], order: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    One row per estimator: bias = mean(point - truth), rmse, coverage,
    mean HAC se, Monte Carlo sd of the points, and the failure count.
    Replications whose truth is undefined are left out of the error metrics.
    """
    order = list(order) if order is not None else list(dict.fromkeys(r.estimator for r in records))
    rows = []
    for name in order:
        subset = [r for r in records if r.estimator == name]
        if not subset:
            continue
        ok = [r for r in subset if not r.failed and np.isfinite(r.truth)]
        points = np.array([r.point for r in ok], dtype=float)
        errors = points - np.array([r.truth for r in ok], dtype=float)
        covered = [r.covered for r in ok if r.covered is not None]
        nan = float("nan")
        rows.append(
            SimSummaryRow(
                estimator=name,
                estimand=subset[0].estimand,
                truth=float(np.mean([r.truth for r in ok])) if ok else nan,
                bias=float(errors.mean()) if ok else nan,
                rmse=float(np.sqrt(np.mean(errors**2))) if ok else nan,
                coverage=float(np.mean(covered)) if covered else nan,
                mean_se=float(np.mean([r.se for r in ok])) if ok else nan,
                sd_point=float(points.std(ddof=1)) if len(ok) > 1 else nan,
                replications=len(ok),
                failures=sum(r.failed for r in subset),
            ).dict()
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def run_simulation(
    sim_cfg: SimConfig,
    replications: int,
    threads: int = 1,
    estimators: Optional[Iterable[str]] = None,
    hac: Optional[HacConfig] = None,
    alpha: float = 0.05,
    est_cfg: Optional[EstimationConfig] = None,
) -> SimResult:
    """
    Run ``replications`` independent draws. With ``threads > 1`` the draws
    fan out over a process pool; records are sorted by replication index
    before aggregation, so the output does not depend on scheduling.
    """
    if replications < 1:
        raise InvalidInputError("replications must be >= 1")
    if threads < 1:
        raise InvalidInputError("threads must be >= 1")
    names = resolve_estimators(estimators)
    hac = hac or HacConfig()
    est_cfg = est_cfg or EstimationConfig()

    records: List[ReplicationRecord] = []
    if threads == 1:
        for index in range(replications):
            records.extend(run_replication(sim_cfg, index, names, hac, alpha, est_cfg))
            logger.info("Replication %d/%d done", index + 1, replications)
    else:
        with ProcessPoolExecutor(max_workers=threads) as executor:
            futures = {
                executor.submit(run_replication, sim_cfg, index, names, hac, alpha, est_cfg): index
                for index in range(replications)
            }
            for completed, future in enumerate(as_completed(futures), start=1):
                records.extend(future.result())
                logger.info("Replication %d/%d done", completed, replications)

    position = {name: k for k, name in enumerate(names)}
    records.sort(key=lambda r: (r.replication, position[r.estimator]))
    return SimResult(records=records, summary=summarize(records, names))


def sweep(
    base_cfg: SimConfig,
    parameter: str,
    values: Sequence[Union[int, float]],
    replications: int,
    threads: int = 1,
    estimators: Optional[Iterable[str]] = None,
    hac: Optional[HacConfig] = None,
    alpha: float = 0.05,
    est_cfg: Optional[EstimationConfig] = None,
) -> pd.DataFrame:
    """Summaries for each value of one SimConfig field, stacked with the value first."""
    if parameter not in SimConfig.__fields__:
        raise InvalidInputError(f"'{parameter}' is not a simulation parameter")
    frames = []
    for value in values:
        cfg = SimConfig(**{**base_cfg.dict(), parameter: value})
        logger.info("Sweep %s=%s", parameter, value)
        summary = run_simulation(cfg, replications, threads, estimators, hac, alpha, est_cfg).summary
        summary.insert(0, parameter, value)
        frames.append(summary)
    return pd.concat(frames, ignore_index=True)
