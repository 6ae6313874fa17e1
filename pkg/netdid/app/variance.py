"""
Network-HAC variance for influence vectors and Wald confidence intervals.
"""
from __future__ import annotations

import logging
import math
from typing import Dict, Optional

import numpy as np
from scipy.stats import norm

from .graph import DistanceShell
from .models import EstimateReport, HacConfig, VarianceReport
from .numerics import InvalidInputError

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6


def kernel_weight(kind: str, u: float) -> float:
    """Bartlett or Parzen weight at ``u >= 0``; both vanish for u > 1."""
    if u < 0:
        raise InvalidInputError("kernel argument must be non-negative")
    if kind == "bartlett":
        return max(0.0, 1.0 - u)
    if kind == "parzen":
        if u <= 0.5:
            return 1.0 - 6.0 * u**2 + 6.0 * u**3
        if u <= 1.0:
            return 2.0 * (1.0 - u) ** 3
        return 0.0
    raise InvalidInputError(f"unknown kernel '{kind}'")


def wald_quantile(alpha: float) -> float:
    return float(norm.ppf(1.0 - alpha / 2.0))


def hac_variance(
    influence: np.ndarray,
    shells: DistanceShell,
    cfg: HacConfig,
    alpha: float,
    point: float,
    units: Optional[np.ndarray] = None,
    K: int = 1,
) -> VarianceReport:
    """
    Kernel-weighted sum of shell autocovariances.

    ``units`` lists the network ids the influence values belong to (all
    units when omitted); pairs involving any other unit contribute nothing
    and the normalization is by ``len(influence)``.
    """
    phi = np.asarray(influence, dtype=float)
    m = phi.shape[0]
    if m == 0:
        raise InvalidInputError("influence vector is empty")
    bandwidth = cfg.resolve_bandwidth(K)
    if bandwidth < 0:
        raise InvalidInputError("bandwidth must be non-negative")
    s_max = int(math.floor(bandwidth))
    if s_max > shells.s_max:
        raise InvalidInputError(f"shells cover s <= {shells.s_max}, bandwidth needs {s_max}")

    n_net = len(shells.shells[0])
    ids = np.arange(m) if units is None else np.asarray(units, dtype=int)
    if ids.shape[0] != m:
        raise InvalidInputError("units and influence lengths differ")
    centered = np.zeros(n_net)
    # constant phi stays exactly zero; mean() can round away from the common value
    if np.ptp(phi) > 0:
        centered[ids] = phi - phi.mean()

    autocov: Dict[int, float] = {}
    v_hat = 0.0
    for s in range(s_max + 1):
        total = sum(centered[i] * centered[shells.members(s, i)].sum() for i in ids)
        autocov[s] = float(total) / m
        weight = 1.0 if s == 0 else kernel_weight(cfg.kernel, s / bandwidth)
        v_hat += weight * autocov[s]

    floored = False
    if v_hat < 0:
        floored = True
        v_hat = autocov[0] * VARIANCE_FLOOR
        logger.warning("HAC variance negative; floored at %.3e", v_hat)

    se = math.sqrt(v_hat / m)
    z = wald_quantile(alpha)
    return VarianceReport(
        v_hat=v_hat,
        autocovariances=autocov,
        s_max_used=s_max,
        bandwidth=bandwidth,
        kernel=cfg.kernel,
        alpha=alpha,
        ci=(point - z * se, point + z * se),
        se=se,
        n=m,
        floored=floored,
    )


def attach_variance(
    report: EstimateReport,
    shells: DistanceShell,
    cfg: HacConfig,
    alpha: float,
    K: int = 1,
) -> EstimateReport:
    variance = hac_variance(report.influence, shells, cfg, alpha, report.point, units=report.units, K=K)
    return report.copy(update={"variance": variance})


def coverage_indicator(report: VarianceReport, truth: float) -> bool:
    lo, hi = report.ci
    return bool(lo <= truth <= hi)
