"""
Comparator estimators: exposure-mapping IPW/DR and standard two-period DID
estimators that ignore (or crudely model) interference.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from .estimators import PanelData, check_overlap
from .graph import treated_neighbor_counts
from .models import EstimateReport, EstimationConfig
from .numerics import InvalidInputError, fit_logistic, fit_ols, predict_linear, predict_proba

logger = logging.getLogger(__name__)

ORACLE_LEVELS = 4
DEFAULT_FLIP_RATE = 0.3


@dataclass(frozen=True)
class ExposureMapping:
    """Per-unit exposure level G_i used to stratify the propensity score."""

    kind: Literal["oracle", "mo", "fm", "custom"]
    values: np.ndarray
    mo_flip_rate: float = DEFAULT_FLIP_RATE
    rng_seed: Optional[int] = None


def build_exposure(
    kind: str,
    S: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    flip_rate: float = DEFAULT_FLIP_RATE,
    values: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
) -> ExposureMapping:
    """
    Exposure mapping from treated-neighbor counts.

    oracle: min(S, 3). fm: 1{S > 1}. mo: the oracle levels with exactly
    round(flip_rate * n) units moved to a uniformly chosen different level.
    custom: ``values`` as given. Without ``rng`` the mo flips are drawn from
    ``seed``, which the mapping records.
    """
    S = np.asarray(S, dtype=int)
    if np.any(S < 0):
        raise InvalidInputError("treated-neighbor counts must be non-negative")
    oracle = np.minimum(S, ORACLE_LEVELS - 1)

    if kind == "oracle":
        return ExposureMapping(kind="oracle", values=oracle)
    if kind == "fm":
        return ExposureMapping(kind="fm", values=(S > 1).astype(int))
    if kind == "custom":
        if values is None or np.asarray(values).shape != S.shape:
            raise InvalidInputError("custom mapping needs one level per unit")
        return ExposureMapping(kind="custom", values=np.asarray(values, dtype=int))
    if kind != "mo":
        raise InvalidInputError(f"unknown exposure mapping '{kind}'")

    if not 0 <= flip_rate <= 1:
        raise InvalidInputError("flip rate must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng(seed)
    else:
        seed = None
    levels = oracle.copy()
    n_flip = int(round(flip_rate * S.size))
    if n_flip:
        flipped = rng.choice(S.size, size=n_flip, replace=False)
        # shift by 1..3 modulo 4 picks one of the other three levels uniformly
        shifts = rng.integers(1, ORACLE_LEVELS, size=n_flip)
        levels[flipped] = (oracle[flipped] + shifts) % ORACLE_LEVELS
    return ExposureMapping(kind="mo", values=levels, mo_flip_rate=flip_rate, rng_seed=seed)


def _merge_degenerate_levels(levels: np.ndarray, D: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Fold all-treated/all-control levels into the nearest level (lower on ties)."""
    levels = levels.copy()
    merged = False
    while True:
        present = np.unique(levels)
        if present.size == 1:
            return levels, merged
        degenerate = [g for g in present if D[levels == g].min() == D[levels == g].max()]
        if not degenerate:
            return levels, merged
        g = degenerate[0]
        others = present[present != g]
        target = others[np.argmin(np.abs(others - g))]
        logger.info("Exposure level %d has no overlap; merged into level %d", g, target)
        levels[levels == g] = target
        merged = True


def _covariates(data: PanelData, spec: str) -> np.ndarray:
    return np.zeros((data.n, 0)) if spec == "no_covariates" else data.z


def _trim(values: np.ndarray, config: EstimationConfig) -> Tuple[np.ndarray, int]:
    count = int(np.sum((values < config.trim_lo) | (values > config.trim_hi)))
    return np.clip(values, config.trim_lo, config.trim_hi), count


def _propensity(data: PanelData, extra: np.ndarray, config: EstimationConfig) -> Tuple[np.ndarray, int, bool]:
    X = np.column_stack((np.ones(data.n), _covariates(data, config.propensity_spec), extra))
    fit = fit_logistic(X, data.D.astype(float), ridge=config.ridge, tol=config.tol, max_iter=config.max_iter)
    proba, trimmed = _trim(predict_proba(fit, X), config)
    return proba, trimmed, fit.converged


def _outcome_predictions(data: PanelData, extra: np.ndarray, config: EstimationConfig) -> Tuple[np.ndarray, np.ndarray]:
    X = np.column_stack((np.ones(data.n), data.D, _covariates(data, config.outcome_spec), extra))
    fit = fit_ols(X, data.delta_y)
    treated, control = X.copy(), X.copy()
    treated[:, 1], control[:, 1] = 1.0, 0.0
    return predict_linear(fit, treated), predict_linear(fit, control)


def _att_influence(
    data: PanelData,
    e: np.ndarray,
    pi: float,
    method: str,
    mu: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> np.ndarray:
    D, dy = data.D, data.delta_y
    if method == "IPW":
        return (D - e) * dy / (pi * (1.0 - e))
    mu1, mu0 = mu
    return D / pi * (dy - mu1) - (1 - D) * e / (pi * (1.0 - e)) * (dy - mu0) + e / pi * (mu1 - mu0)


def _report(label: str, method: str, influence: np.ndarray, data: PanelData, point: Optional[float] = None, **diagnostics) -> EstimateReport:
    return EstimateReport(
        estimand="ADTT",
        method=method,
        label=label,
        point=float(np.mean(influence)) if point is None else float(point),
        influence=influence,
        units=np.arange(data.n),
        n=data.n,
        diagnostics=diagnostics,
    )


def xu_estimator(
    data: PanelData,
    mapping: ExposureMapping,
    method: Literal["IPW", "DR"] = "DR",
    config: Optional[EstimationConfig] = None,
) -> EstimateReport:
    """
    Exposure-stratified DID: the propensity is P(D = 1 | z, G) from a
    logistic on [1, z, level dummies], normalized by the treated share.
    """
    config = config or EstimationConfig()
    check_overlap(data.D)
    if method not in ("IPW", "DR"):
        raise InvalidInputError(f"unknown method '{method}'")
    levels, merged = _merge_degenerate_levels(np.asarray(mapping.values, dtype=int), data.D)
    present = np.unique(levels)
    dummies = np.column_stack([(levels == g).astype(float) for g in present[1:]]) if present.size > 1 else np.zeros((data.n, 0))

    e, trimmed, converged = _propensity(data, dummies, config)
    pi = float(data.D.mean())
    mu = _outcome_predictions(data, dummies, config) if method == "DR" else None
    phi = _att_influence(data, e, pi, method, mu)
    return _report(
        f"exposure_{method.lower()}_{mapping.kind}",
        method,
        phi,
        data,
        levels_merged=merged,
        levels=int(present.size),
        trim_counts={"e": trimmed},
        converged={"e": converged},
    )


def canonical_ipw_did(data: PanelData, config: Optional[EstimationConfig] = None) -> EstimateReport:
    """ATT weighting: (D - p) dY / (mean(D) (1 - p)) with p from a z-only logistic."""
    config = config or EstimationConfig()
    check_overlap(data.D)
    e, trimmed, converged = _propensity(data, np.zeros((data.n, 0)), config)
    phi = _att_influence(data, e, float(data.D.mean()), "IPW")
    return _report("canonical_ipw", "IPW", phi, data, trim_counts={"e": trimmed}, converged={"e": converged})


def dr_did_benchmark(data: PanelData, config: Optional[EstimationConfig] = None) -> EstimateReport:
    config = config or EstimationConfig()
    check_overlap(data.D)
    none = np.zeros((data.n, 0))
    e, trimmed, converged = _propensity(data, none, config)
    mu = _outcome_predictions(data, none, config)
    phi = _att_influence(data, e, float(data.D.mean()), "DR", mu)
    return _report("dr_did", "DR", phi, data, trim_counts={"e": trimmed}, converged={"e": converged})


def ols_coefficient_influence(X: np.ndarray, y: np.ndarray, column: int) -> Tuple[float, np.ndarray]:
    """
    OLS coefficient ``column`` and its per-unit linearization
    ``beta_k + [(X'X/n)^-1 x_i u_i]_k``, whose mean is the coefficient.
    """
    X = np.asarray(X, dtype=float)
    fit = fit_ols(X, y)
    residuals = y - predict_linear(fit, X)
    n = X.shape[0]
    bread = np.linalg.pinv(X.T @ X / n)
    scores = X * residuals[:, None]
    beta = float(fit.coefficients[column])
    return beta, beta + scores @ bread[:, column]


def canonical_twfe(data: PanelData) -> EstimateReport:
    """Two periods: TWFE is OLS of dY on [1, D]."""
    check_overlap(data.D)
    X = np.column_stack((np.ones(data.n), data.D))
    beta, phi = ols_coefficient_influence(X, data.delta_y, 1)
    return _report("canonical_twfe", "OLS", phi, data, point=beta)


def modified_twfe(data: PanelData) -> EstimateReport:
    """OLS of dY on [1, D, 1{S >= 1}]; the exposure column is dropped if collinear."""
    check_overlap(data.D)
    S = treated_neighbor_counts(data.network, data.D, data.index.K)
    exposed = (S >= 1).astype(float)
    X = np.column_stack((np.ones(data.n), data.D, exposed))
    dropped = False
    if np.linalg.matrix_rank(X) < X.shape[1]:
        logger.info("Exposure indicator collinear with [1, D]; dropping it")
        X = X[:, :2]
        dropped = True
    beta, phi = ols_coefficient_influence(X, data.delta_y, 1)
    return _report("modified_twfe", "OLS", phi, data, point=beta, exposure_dropped=dropped)

