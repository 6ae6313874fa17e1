"""
IPW and doubly-robust estimators of the direct (ADTT) and outward
spillover (AITT) effects on the treated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from .graph import NeighborhoodIndex, Network, build_neighborhood_index
from .models import EstimateReport, EstimationConfig, PROPOSED_ESTIMATORS
from .numerics import InvalidInputError, fit_logistic, fit_ols, predict_linear, predict_proba

logger = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """Raised when an estimand cannot be computed from the data at hand."""


@dataclass(frozen=True)
class PanelData:
    """Two-period panel aligned with its network and neighborhood index."""

    z: np.ndarray
    D: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    network: Network
    index: NeighborhoodIndex

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "D", np.asarray(self.D, dtype=int))
        object.__setattr__(self, "Y1", np.asarray(self.Y1, dtype=float))
        object.__setattr__(self, "Y2", np.asarray(self.Y2, dtype=float))

        n = self.network.n
        for name in ("D", "Y1", "Y2"):
            if getattr(self, name).shape != (n,):
                raise InvalidInputError(f"{name} must have length {n}")
        if self.z.shape[0] != n:
            raise InvalidInputError(f"z must have {n} rows")
        if self.index.n != n:
            raise InvalidInputError("neighborhood index does not match the network")
        if not np.all((self.D == 0) | (self.D == 1)):
            raise InvalidInputError("treatment must be binary (0/1)")
        if not np.all(np.isfinite(self.delta_y)):
            raise InvalidInputError("outcome differences must be finite")

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def delta_y(self) -> np.ndarray:
        return self.Y2 - self.Y1


def build_panel(
    z: np.ndarray,
    D: np.ndarray,
    Y1: np.ndarray,
    Y2: np.ndarray,
    network: Network,
    L: int,
    K: int,
    sampler: Optional[np.random.Generator] = None,
) -> PanelData:
    index = build_neighborhood_index(network, D, L, K, sampler=sampler)
    return PanelData(z=z, D=D, Y1=Y1, Y2=Y2, network=network, index=index)


def build_adtt_features(data: PanelData) -> np.ndarray:
    """Rows ``[1, z_i, D_(1), ..., D_(L)]`` with padded slots at 0."""
    return np.column_stack((np.ones(data.n), data.z, data.index.treatment_vector)).astype(float)


def _other_neighbor_treatments(data: PanelData, i: int, j: int) -> np.ndarray:
    """D_{N_j}^{-i}: j's ranked neighbor treatments without i, padded to L - 1."""
    width = data.index.L - 1
    others = [k for k in data.index.neighbors_of(j) if k != i][:width]
    row = np.zeros(width)
    row[: len(others)] = data.D[others]
    return row


def build_aitt_features(data: PanelData, pair: Tuple[int, int]) -> np.ndarray:
    """Row ``[1, z_i, z_j, D_j, D_{N_j}^{-i}]`` for a pair with j in N_i."""
    i, j = int(pair[0]), int(pair[1])
    if j not in data.index.neighbors_of(i):
        raise InvalidInputError(f"unit {j} is not in the neighborhood of unit {i}")
    return np.concatenate(([1.0], data.z[i], data.z[j], [data.D[j]], _other_neighbor_treatments(data, i, j)))


def _pair_design(data: PanelData, pairs: np.ndarray) -> np.ndarray:
    width = data.index.L - 1
    rows = np.zeros((pairs.shape[0], 2 * data.z.shape[1] + 2 + width))
    for r, (i, j) in enumerate(pairs):
        rows[r] = np.concatenate(
            ([1.0], data.z[i], data.z[j], [data.D[j]], _other_neighbor_treatments(data, i, j))
        )
    return rows


@dataclass
class NuisanceSet:
    """
    Fitted propensities and outcome-trend predictions.

    Pair quantities are aligned with ``pairs`` (rows of (i, j), j in N_i).
    When the pair models cannot be fit, they are left empty and
    ``pair_issue`` says why; only the spillover estimators need them.
    """

    pi_hat: np.ndarray
    e_hat: np.ndarray
    pairs: np.ndarray
    e_prime_hat: np.ndarray
    mu1: np.ndarray
    mu0: np.ndarray
    mu1_pair: np.ndarray
    mu0_pair: np.ndarray
    trim_bounds: Tuple[float, float] = (0.01, 0.99)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    pair_issue: Optional[str] = None


def _trim(values: np.ndarray, bounds: Tuple[float, float]) -> Tuple[np.ndarray, int]:
    lo, hi = bounds
    count = int(np.sum((values < lo) | (values > hi)))
    return np.clip(values, lo, hi), count


def _drop_covariates(design: np.ndarray, covariate_cols: Iterable[int]) -> np.ndarray:
    dropped = set(covariate_cols)
    keep = [c for c in range(design.shape[1]) if c not in dropped]
    return design[:, keep]


def check_overlap(D: np.ndarray) -> None:
    if D.size == 0 or D.min() == D.max():
        raise EstimationError("no overlap: sample is all-treated or all-control")


def fit_nuisances(data: PanelData, config: Optional[EstimationConfig] = None) -> NuisanceSet:
    """
    Fit every nuisance model the four proposed estimators need.

    - pi: logistic of D on [1, z]
    - e: logistic of D on the ADTT features
    - e': one pooled logistic of D_i over all (i, j) pair rows
    - mu: OLS of dY on [1, D, z, D_N], predicted at D = 1 and D = 0
    - pair mu: OLS of dY_j on [1, D_i, D_j, z_i, z_j, D_{N_j}^{-i}], predicted at D_i = 1, 0

    All probabilities are trimmed to ``config.trim_bounds``.
    """
    config = config or EstimationConfig()
    check_overlap(data.D)
    p = data.z.shape[1]
    D = data.D.astype(float)
    dy = data.delta_y
    z_cols = list(range(1, 1 + p))
    logit_kwargs = dict(ridge=config.ridge, tol=config.tol, max_iter=config.max_iter)

    base = np.column_stack((np.ones(data.n), data.z))
    adtt = build_adtt_features(data)
    pairs = data.index.pair_rows()
    pair_x = _pair_design(data, pairs) if pairs.size else np.zeros((0, 2 * p + 1 + data.index.L))
    pair_z_cols = list(range(1, 1 + 2 * p))

    if config.propensity_spec == "no_covariates":
        base = base[:, :1]
        adtt_ps = _drop_covariates(adtt, z_cols)
        pair_ps = _drop_covariates(pair_x, pair_z_cols)
    else:
        adtt_ps, pair_ps = adtt, pair_x

    pi_fit = fit_logistic(base, D, **logit_kwargs)
    e_fit = fit_logistic(adtt_ps, D, **logit_kwargs)
    pi_hat, pi_trim = _trim(predict_proba(pi_fit, base), config.trim_bounds)
    e_hat, e_trim = _trim(predict_proba(e_fit, adtt_ps), config.trim_bounds)
    converged = {"pi": pi_fit.converged, "e": e_fit.converged}

    # outcome design: [1, D, z, D_N]
    outcome_x = np.column_stack((np.ones(data.n), D, data.z, data.index.treatment_vector))
    if config.outcome_spec == "no_covariates":
        outcome_x = _drop_covariates(outcome_x, range(2, 2 + p))
    out_fit = fit_ols(outcome_x, dy)
    treated_x, control_x = outcome_x.copy(), outcome_x.copy()
    treated_x[:, 1], control_x[:, 1] = 1.0, 0.0
    mu1 = predict_linear(out_fit, treated_x)
    mu0 = predict_linear(out_fit, control_x)

    e_prime_hat = np.zeros(0)
    mu1_pair = mu0_pair = np.zeros(0)
    e_prime_trim = 0
    pair_issue = None
    pair_d = D[pairs[:, 0]] if pairs.size else np.zeros(0)
    if not pairs.size:
        pair_issue = "every unit is isolated; spillover effect undefined"
    elif pair_d.min() == pair_d.max():
        pair_issue = "no overlap among neighbor pairs"
        logger.warning("Treatment is constant over neighbor pairs; spillover models skipped")
    else:
        e_prime_fit = fit_logistic(pair_ps, pair_d, **logit_kwargs)
        e_prime_hat, e_prime_trim = _trim(predict_proba(e_prime_fit, pair_ps), config.trim_bounds)
        converged["e_prime"] = e_prime_fit.converged

        # pair outcome design: [1, D_i, D_j, z_i, z_j, D_{N_j}^{-i}]
        z_pair, d_j, others = pair_x[:, 1 : 1 + 2 * p], pair_x[:, 1 + 2 * p], pair_x[:, 2 + 2 * p :]
        pair_outcome = np.column_stack((np.ones(pairs.shape[0]), pair_d, d_j, z_pair, others))
        if config.outcome_spec == "no_covariates":
            pair_outcome = _drop_covariates(pair_outcome, range(3, 3 + 2 * p))
        pair_fit = fit_ols(pair_outcome, dy[pairs[:, 1]])
        treated_pairs, control_pairs = pair_outcome.copy(), pair_outcome.copy()
        treated_pairs[:, 1], control_pairs[:, 1] = 1.0, 0.0
        mu1_pair = predict_linear(pair_fit, treated_pairs)
        mu0_pair = predict_linear(pair_fit, control_pairs)

    trim_counts = {"pi": pi_trim, "e": e_trim, "e_prime": e_prime_trim}
    if any(trim_counts.values()):
        logger.info("Propensity trimming engaged: %s", trim_counts)
    return NuisanceSet(
        pi_hat=pi_hat,
        e_hat=e_hat,
        pairs=pairs,
        e_prime_hat=e_prime_hat,
        mu1=mu1,
        mu0=mu0,
        mu1_pair=mu1_pair,
        mu0_pair=mu0_pair,
        trim_bounds=config.trim_bounds,
        diagnostics={
            "trim_counts": trim_counts,
            "converged": converged,
            "neighborhood_violations": data.index.violations,
        },
        pair_issue=pair_issue,
    )


def _report(estimand: str, method: str, label: str, influence: np.ndarray, units: np.ndarray, n: int, nuis: NuisanceSet, **extra: Any) -> EstimateReport:
    diagnostics = dict(nuis.diagnostics)
    diagnostics.update(extra)
    return EstimateReport(
        estimand=estimand,
        method=method,
        label=label,
        point=float(np.mean(influence)),
        influence=influence,
        units=units,
        n=n,
        diagnostics=diagnostics,
    )


def ipw_adtt(data: PanelData, nuis: NuisanceSet) -> EstimateReport:
    """phi_i = (D_i - e_i) dY_i / (pi_i (1 - e_i))."""
    D, e, pi = data.D, nuis.e_hat, nuis.pi_hat
    phi = (D - e) * data.delta_y / (pi * (1.0 - e))
    return _report("ADTT", "IPW", "proposed_ipw_adtt", phi, np.arange(data.n), data.n, nuis)


def dr_adtt(data: PanelData, nuis: NuisanceSet) -> EstimateReport:
    D, e, pi, dy = data.D, nuis.e_hat, nuis.pi_hat, data.delta_y
    phi = (
        D / pi * (dy - nuis.mu1)
        - (1 - D) * e / (pi * (1.0 - e)) * (dy - nuis.mu0)
        + e / pi * (nuis.mu1 - nuis.mu0)
    )
    return _report("ADTT", "DR", "proposed_dr_adtt", phi, np.arange(data.n), data.n, nuis)


def _require_pairs(nuis: NuisanceSet) -> None:
    if nuis.pair_issue is not None:
        raise EstimationError(nuis.pair_issue)
    if nuis.pairs.size == 0:
        raise EstimationError("every unit is isolated; spillover effect undefined")


def _average_over_pairs(data: PanelData, nuis: NuisanceSet, terms: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    owners = nuis.pairs[:, 0]
    counts = np.bincount(owners, minlength=data.n)
    totals = np.bincount(owners, weights=terms, minlength=data.n)
    units = np.flatnonzero(counts > 0)
    excluded = data.n - units.size
    if excluded:
        logger.info("%d isolated units excluded from the spillover average", excluded)
    return totals[units] / counts[units], units, excluded


def ipw_aitt(data: PanelData, nuis: NuisanceSet) -> EstimateReport:
    """phi_i = mean_j (D_i - e'_ij) dY_j / (pi_i (1 - e'_ij)) over j in N_i."""
    _require_pairs(nuis)
    i, j = nuis.pairs[:, 0], nuis.pairs[:, 1]
    e_p, pi = nuis.e_prime_hat, nuis.pi_hat[i]
    terms = (data.D[i] - e_p) * data.delta_y[j] / (pi * (1.0 - e_p))
    phi, units, excluded = _average_over_pairs(data, nuis, terms)
    return _report("AITT", "IPW", "proposed_ipw_aitt", phi, units, data.n, nuis, isolated_units=excluded)


def dr_aitt(data: PanelData, nuis: NuisanceSet) -> EstimateReport:
    _require_pairs(nuis)
    i, j = nuis.pairs[:, 0], nuis.pairs[:, 1]
    D_i, e_p, pi, dy_j = data.D[i], nuis.e_prime_hat, nuis.pi_hat[i], data.delta_y[j]
    terms = (
        D_i / pi * (dy_j - nuis.mu1_pair)
        - (1 - D_i) * e_p / (pi * (1.0 - e_p)) * (dy_j - nuis.mu0_pair)
        + e_p / pi * (nuis.mu1_pair - nuis.mu0_pair)
    )
    phi, units, excluded = _average_over_pairs(data, nuis, terms)
    return _report("AITT", "DR", "proposed_dr_aitt", phi, units, data.n, nuis, isolated_units=excluded)


PROPOSED = {
    "proposed_ipw_adtt": ipw_adtt,
    "proposed_dr_adtt": dr_adtt,
    "proposed_ipw_aitt": ipw_aitt,
    "proposed_dr_aitt": dr_aitt,
}


def estimate_all(
    data: PanelData,
    config: Optional[EstimationConfig] = None,
    which: Iterable[str] = PROPOSED_ESTIMATORS,
) -> Dict[str, EstimateReport]:
    """Fit nuisances once and evaluate the requested proposed estimators."""
    nuis = fit_nuisances(data, config)
    return {name: PROPOSED[name](data, nuis) for name in which}
