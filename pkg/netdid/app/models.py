"""
Data models shared across the estimation, simulation and CLI layers.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator


DEFAULT_SEED = 20240501

PROPOSED_ESTIMATORS = [
    "proposed_ipw_adtt",
    "proposed_dr_adtt",
    "proposed_ipw_aitt",
    "proposed_dr_aitt",
]


class HacConfig(BaseModel):
    """Kernel and bandwidth for the network-HAC variance."""

    kernel: Literal["bartlett", "parzen"] = "bartlett"
    bandwidth: Optional[float] = Field(None, ge=0, description="Explicit b_n; overrides the rule")
    bandwidth_multiplier: float = Field(2.0, gt=0, description="c in b_n = c * K")

    def resolve_bandwidth(self, K: int) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        return float(self.bandwidth_multiplier * K)


class VarianceReport(BaseModel):
    """HAC variance, shell autocovariances and the Wald interval."""

    v_hat: float
    autocovariances: Dict[int, float]
    s_max_used: int
    bandwidth: float
    kernel: str
    alpha: float
    ci: Tuple[float, float]
    se: float
    n: int
    floored: bool = False


class EstimationConfig(BaseModel):
    """Nuisance-model settings shared by the proposed and benchmark estimators."""

    trim_lo: float = Field(0.01, gt=0, lt=0.5)
    trim_hi: float = Field(0.99, gt=0.5, lt=1)
    ridge: float = Field(1e-6, ge=0)
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(100, ge=1)
    propensity_spec: Literal["full", "no_covariates"] = "full"
    outcome_spec: Literal["full", "no_covariates"] = "full"

    @property
    def trim_bounds(self) -> Tuple[float, float]:
        return (self.trim_lo, self.trim_hi)


class EstimateReport(BaseModel):
    """Point estimate with its per-unit influence values."""

    estimand: Literal["ADTT", "AITT"]
    method: Literal["IPW", "DR", "OLS"]
    label: str
    point: float
    influence: np.ndarray
    units: np.ndarray
    n: int
    variance: Optional[VarianceReport] = None
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    def summary(self) -> Dict[str, Any]:
        """JSON-friendly view without the per-unit vectors."""
        payload: Dict[str, Any] = {
            "estimand": self.estimand,
            "method": self.method,
            "label": self.label,
            "point": self.point,
            "n": self.n,
            "units_used": int(self.units.shape[0]),
            "diagnostics": self.diagnostics,
        }
        if self.variance is not None:
            payload.update(
                se=self.variance.se,
                variance=self.variance.v_hat,
                ci=list(self.variance.ci),
                alpha=self.variance.alpha,
                bandwidth=self.variance.bandwidth,
                kernel=self.variance.kernel,
                variance_floored=self.variance.floored,
            )
        return payload


class SimConfig(BaseModel):
    """Parameters of the synthetic spatial-network panel."""

    n: int = Field(500, ge=2)
    area_side: float = Field(20.0, gt=0)
    adjacency_radius: float = Field(1.0, gt=0)
    metric: Literal["chebyshev", "euclidean"] = "chebyshev"
    K: int = Field(1, ge=1)
    L: int = Field(10, ge=1)
    rho0: float = Field(0.5, ge=0, lt=1)
    tau: float = 0.8
    spillover_steps: List[float] = Field(default_factory=lambda: [0.8, 1.6, 2.4])
    treat_intercept: float = 0.0
    treat_coefs: Tuple[float, float] = (0.3, 0.8)
    y1_coefs: Tuple[float, float] = (1.2, 0.5)
    y2_intercept: float = 1.0
    y2_carry: float = 1.0
    y2_coefs: Tuple[float, float] = (0.2, 0.1)
    noise_sd: float = Field(1.0, ge=0)
    seed: int = DEFAULT_SEED
    sample_neighbors: bool = True
    repair_covariance: bool = True

    @validator("spillover_steps")
    def _steps_finite(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("spillover_steps needs at least one level")
        if not all(np.isfinite(v) for v in value):
            raise ValueError("spillover_steps must be finite")
        return value

    @root_validator(skip_on_failure=True)
    def _coefficients_finite(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        scalars = [values["tau"], values["treat_intercept"], values["y2_intercept"], values["y2_carry"]]
        pairs = [*values["treat_coefs"], *values["y1_coefs"], *values["y2_coefs"]]
        if not all(np.isfinite(v) for v in scalars + pairs):
            raise ValueError("all DGP coefficients must be finite")
        return values


class ReplicationRecord(BaseModel):
    """One estimator's outcome in one Monte Carlo replication."""

    replication: int
    estimator: str
    estimand: Literal["ADTT", "AITT"]
    point: Optional[float]
    se: Optional[float]
    ci_lo: Optional[float]
    ci_hi: Optional[float]
    covered: Optional[bool]
    truth: float
    failed: bool = False
    error: Optional[str] = None


class SimSummaryRow(BaseModel):
    """Aggregate of one estimator over a Monte Carlo run; field order is the CSV column order."""

    estimator: str
    estimand: Literal["ADTT", "AITT"]
    truth: float
    bias: float
    rmse: float
    coverage: float
    mean_se: float
    sd_point: float
    replications: int
    failures: int


class RunConfig(BaseModel):
    """Everything a CLI run needs; mirrors the ``--config`` JSON file."""

    command: Literal["simulate", "estimate", "replicate"] = "simulate"
    sim: SimConfig = Field(default_factory=SimConfig)
    estimation: EstimationConfig = Field(default_factory=EstimationConfig)
    hac: HacConfig = Field(default_factory=HacConfig)
    estimators: Optional[List[str]] = None
    alpha: float = Field(0.05, gt=0, lt=1)
    replications: int = Field(100, ge=1)
    threads: int = Field(1, ge=1)
    output_dir: Optional[Path] = None
    export_panel: bool = False

    panel_path: Optional[Path] = None
    points_path: Optional[Path] = None
    edges_path: Optional[Path] = None
    L: int = Field(10, ge=1)
    K: int = Field(1, ge=1)
    radius: float = Field(1.0, gt=0)
    metric: Literal["chebyshev", "euclidean"] = "chebyshev"
    seed: Optional[int] = None

    n_values: List[int] = Field(default_factory=lambda: [300, 500, 700])
    rho_values: List[float] = Field(default_factory=lambda: [0.2, 0.5, 0.8])
    L_values: List[int] = Field(default_factory=lambda: [5, 10, 15, 20])
