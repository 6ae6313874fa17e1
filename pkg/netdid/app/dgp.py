"""
Synthetic spatial-network panels with a saturating spillover function and
their ground-truth direct and outward-spillover effects.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from .estimators import EstimationError, PanelData
from .graph import build_neighborhood_index, build_network_from_points, treated_neighbor_counts
from .models import SimConfig
from .numerics import InvalidInputError, NumericalError, cholesky, nearest_psd, replication_rng, sample_mvn

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulatedPanel:
    """A generated panel plus the latent pieces needed to score estimators."""

    panel: PanelData
    S: np.ndarray
    z_u: np.ndarray
    points: np.ndarray
    config: SimConfig
    true_adtt: float
    true_aitt: float

    @property
    def truth(self) -> tuple:
        return (self.true_adtt, self.true_aitt)


def spillover_f(S: Union[int, np.ndarray], steps: Sequence[float]) -> Union[float, np.ndarray]:
    """0 for S = 0, else ``steps[min(S, len(steps)) - 1]``."""
    levels = np.concatenate(([0.0], np.asarray(steps, dtype=float)))
    counts = np.asarray(S, dtype=int)
    if np.any(counts < 0):
        raise InvalidInputError("treated-neighbor count must be non-negative")
    values = levels[np.minimum(counts, len(steps))]
    return float(values) if values.ndim == 0 else values


def confounder_covariance(dist: np.ndarray, rho0: float) -> np.ndarray:
    """Sigma_ij = rho0 ** hops(i, j); disconnected pairs get 0."""
    with np.errstate(over="ignore", under="ignore"):
        sigma = np.where(np.isfinite(dist), np.power(rho0, np.where(np.isfinite(dist), dist, 0.0)), 0.0)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def _confounder_factor(sigma: np.ndarray, repair: bool) -> np.ndarray:
    try:
        return cholesky(sigma)
    except NumericalError:
        if not repair:
            raise
        logger.warning("Confounder covariance not positive definite; clipping eigenvalues")
        return cholesky(nearest_psd(sigma))


def generate_panel(cfg: SimConfig, rng: Optional[np.random.Generator] = None) -> SimulatedPanel:
    """
    Draw one panel.

    Locations are iid uniform on the square, z ~ N(0, 1), the latent z_u is
    network-correlated, treatment follows a logit in (z, z_u), and
    ``Y2 = c + carry * Y1 + tau * D + f(S) + b_z * z + b_u * z_u + eps``.
    """
    rng = rng if rng is not None else replication_rng(cfg.seed)
    n = cfg.n

    points = rng.uniform(0.0, cfg.area_side, size=(n, 2))
    net = build_network_from_points(points, radius=cfg.adjacency_radius, metric=cfg.metric)

    z = rng.standard_normal(n)
    chol = _confounder_factor(confounder_covariance(net.dist, cfg.rho0), cfg.repair_covariance)
    z_u = sample_mvn(chol, rng)

    a_z, a_u = cfg.treat_coefs
    D = (rng.uniform(size=n) < expit(cfg.treat_intercept + a_z * z + a_u * z_u)).astype(int)
    S = treated_neighbor_counts(net, D, cfg.K)

    b1_z, b1_u = cfg.y1_coefs
    b2_z, b2_u = cfg.y2_coefs
    eps1 = cfg.noise_sd * rng.standard_normal(n)
    eps2 = cfg.noise_sd * rng.standard_normal(n)
    Y1 = b1_z * z + b1_u * z_u + eps1
    Y2 = (
        cfg.y2_intercept
        + cfg.y2_carry * Y1
        + cfg.tau * D
        + spillover_f(S, cfg.spillover_steps)
        + b2_z * z
        + b2_u * z_u
        + eps2
    )

    index = build_neighborhood_index(net, D, cfg.L, cfg.K, sampler=rng if cfg.sample_neighbors else None)
    panel = PanelData(z=z, D=D, Y1=Y1, Y2=Y2, network=net, index=index)
    sim = SimulatedPanel(
        panel=panel,
        S=S,
        z_u=z_u,
        points=points,
        config=cfg,
        true_adtt=cfg.tau,
        true_aitt=float("nan"),
    )
    try:
        aitt = true_aitt_oracle(sim)
    except EstimationError:
        logger.warning("No treated unit with neighbors; true spillover effect undefined")
        aitt = float("nan")
    return replace(sim, true_aitt=aitt)


def true_aitt_oracle(sim: SimulatedPanel) -> float:
    """
    Average over treated i of the mean over j in N_i of f(S_j) - f(S_j - 1)
    when j is within K hops of i, and 0 otherwise.

    Y2 is additive in f(S), so switching D_i off changes only the f term.
    """
    panel = sim.panel
    steps = sim.config.spillover_steps
    K = sim.config.K
    per_unit = []
    for i in np.flatnonzero(panel.D == 1):
        members = panel.index.neighbors_of(i)
        if members.size == 0:
            continue
        in_range = panel.network.dist[i, members] <= K
        S_j = sim.S[members]
        gains = np.where(in_range, spillover_f(S_j, steps) - spillover_f(np.maximum(S_j - 1, 0), steps), 0.0)
        per_unit.append(gains.mean())
    if not per_unit:
        raise EstimationError("no treated unit with neighbors; oracle undefined")
    return float(np.mean(per_unit))


def exposure_distribution(sim: SimulatedPanel) -> pd.DataFrame:
    """Counts of units by number of treated K-neighbors."""
    values, counts = np.unique(sim.S, return_counts=True)
    frame = pd.DataFrame({"s": values.astype(int), "units": counts.astype(int)})
    frame["share"] = frame["units"] / frame["units"].sum()
    return frame
