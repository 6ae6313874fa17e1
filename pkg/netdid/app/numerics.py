"""
Numerical kernels: Cholesky with jitter, multivariate-normal draws,
ridge-penalized logistic regression (Newton) and least squares.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import expit

logger = logging.getLogger(__name__)

PROBA_FLOOR = 1e-12
MAX_JITTER = 1e-4
OLS_RIDGE = 1e-10
MAX_LOGISTIC_RIDGE = 1e-2


class InvalidInputError(ValueError):
    """Raised when inputs violate a documented precondition."""


class NumericalError(RuntimeError):
    """Raised when a factorization or solve fails after regularization."""


@dataclass(frozen=True)
class FitResult:
    """Coefficients (intercept first) plus convergence diagnostics."""

    coefficients: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    ridge: float = 0.0


def replication_rng(base_seed: int, index: int = 0) -> np.random.Generator:
    """
    Independent stream for replication ``index``.

    Philox is counter-based, so the same (base_seed, index) pair yields the
    same draws on every platform.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(base_seed), int(index)])))


def cholesky(matrix: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """
    Lower-triangular factor of ``matrix + jitter * I``.

    On failure the jitter is escalated tenfold (starting at 1e-10) until
    ``MAX_JITTER``; past that a NumericalError is raised.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidInputError("cholesky expects a square matrix")
    if jitter < 0:
        raise InvalidInputError("jitter must be non-negative")
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise InvalidInputError("cholesky expects a symmetric matrix")

    eye = np.eye(matrix.shape[0])
    current = float(jitter)
    while True:
        try:
            factor = np.linalg.cholesky(matrix + current * eye)
            if current > jitter:
                logger.warning("Cholesky needed jitter %.1e", current)
            return factor
        except np.linalg.LinAlgError:
            current = 1e-10 if current == 0.0 else current * 10.0
            if current > MAX_JITTER * (1 + 1e-9):
                raise NumericalError(
                    f"matrix not factorizable with jitter up to {MAX_JITTER:.0e}"
                ) from None


def nearest_psd(matrix: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Symmetric matrix with eigenvalues clipped at ``floor``."""
    sym = (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T) / 2.0
    values, vectors = linalg.eigh(sym)
    clipped = np.clip(values, floor, None)
    repaired = (vectors * clipped) @ vectors.T
    return (repaired + repaired.T) / 2.0


def sample_mvn(chol: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``chol @ standard_normal``; deterministic given the stream state."""
    chol = np.asarray(chol, dtype=float)
    return chol @ rng.standard_normal(chol.shape[0])


def _check_design(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InvalidInputError(
            f"design has {X.shape[0] if X.ndim else 0} rows but outcome has {y.shape[0]}"
        )
    if X.shape[0] == 0:
        raise InvalidInputError("empty design matrix")
    return X, y


def _penalized_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * ridge * beta @ beta)


def logistic_gradient(X: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> np.ndarray:
    """Gradient of the ridge-penalized log-likelihood."""
    X, y = _check_design(X, y)
    return X.T @ (y - expit(X @ beta)) - ridge * beta


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    ridge: float = 1e-6,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> FitResult:
    """
    Maximize the ridge-penalized logistic log-likelihood by Newton steps.

    The objective is ``sum(y*eta - log(1 + exp(eta))) - ridge/2 * |beta|^2``
    with every coefficient penalized, so quasi-separated designs still have a
    finite optimum. Steps are halved until the objective does not decrease.

    Args:
        X: Design matrix, intercept column included by the caller.
        y: Binary outcome vector.
        ridge: Penalty weight; escalated tenfold if the Hessian is singular.
        tol: Convergence threshold on the gradient norm.
        max_iter: Newton iteration cap.

    Returns:
        FitResult with ``converged`` False (and a logged warning) if the cap
        is hit before the gradient drops below ``tol``.
    """
    X, y = _check_design(X, y)
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("logistic outcome must be binary (0/1)")
    if ridge < 0:
        raise InvalidInputError("ridge must be non-negative")

    p = X.shape[1]
    beta = np.zeros(p)
    current_ridge = float(ridge)
    objective = _penalized_loglik(X, y, beta, current_ridge)
    grad = X.T @ (y - expit(X @ beta)) - current_ridge * beta
    grad_norm = float(np.linalg.norm(grad))

    iterations = 0
    while grad_norm > tol and iterations < max_iter:
        iterations += 1
        mu = expit(X @ beta)
        weights = mu * (1.0 - mu)
        while True:
            hessian = (X * weights[:, None]).T @ X + current_ridge * np.eye(p)
            try:
                step = linalg.solve(hessian, grad, assume_a="pos")
                break
            except (linalg.LinAlgError, ValueError):
                current_ridge = max(current_ridge * 10.0, 1e-8)
                if current_ridge > MAX_LOGISTIC_RIDGE:
                    raise NumericalError("logistic Hessian singular after ridge escalation") from None
                logger.warning("Escalating logistic ridge to %.1e", current_ridge)
                grad = X.T @ (y - mu) - current_ridge * beta
                objective = _penalized_loglik(X, y, beta, current_ridge)

        scale = 1.0
        candidate = beta + step
        candidate_obj = _penalized_loglik(X, y, candidate, current_ridge)
        while candidate_obj < objective - 1e-12 * max(1.0, abs(objective)) and scale > 1e-10:
            scale /= 2.0
            candidate = beta + scale * step
            candidate_obj = _penalized_loglik(X, y, candidate, current_ridge)

        beta = candidate
        objective = candidate_obj
        grad = X.T @ (y - expit(X @ beta)) - current_ridge * beta
        grad_norm = float(np.linalg.norm(grad))

    converged = grad_norm <= tol
    if not converged:
        logger.warning(
            "Logistic fit stopped after %d iterations (gradient norm %.2e)", iterations, grad_norm
        )
    if not np.all(np.isfinite(beta)):
        raise NumericalError("logistic coefficients are not finite")
    return FitResult(
        coefficients=beta,
        converged=converged,
        iterations=iterations,
        final_gradient_norm=grad_norm,
        ridge=current_ridge,
    )


def predict_proba(fit: FitResult, X: np.ndarray, clip: Optional[float] = PROBA_FLOOR) -> np.ndarray:
    """Sigmoid of ``X @ coefficients``, clipped to ``[clip, 1 - clip]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] != fit.coefficients.shape[0]:
        raise InvalidInputError(
            f"design has {X.shape[1]} columns, fit has {fit.coefficients.shape[0]} coefficients"
        )
    proba = expit(X @ fit.coefficients)
    if clip is not None:
        proba = np.clip(proba, clip, 1.0 - clip)
    return proba


def fit_ols(X: np.ndarray, y: np.ndarray) -> FitResult:
    """
    Least squares through the normal equations.

    Rank-deficient designs (e.g. an all-zero padded neighbor column) fall
    back to ``X'X + 1e-10 I``.
    """
    X, y = _check_design(X, y)
    xtx = X.T @ X
    xty = X.T @ y
    ridge = 0.0
    if np.linalg.matrix_rank(X) < X.shape[1]:
        ridge = OLS_RIDGE
        coefficients = linalg.solve(xtx + ridge * np.eye(X.shape[1]), xty, assume_a="sym")
    else:
        try:
            coefficients = linalg.cho_solve(linalg.cho_factor(xtx), xty)
        except linalg.LinAlgError:
            ridge = OLS_RIDGE
            coefficients = linalg.solve(xtx + ridge * np.eye(X.shape[1]), xty, assume_a="sym")

    residual_score = X.T @ (y - X @ coefficients)
    return FitResult(
        coefficients=coefficients,
        converged=True,
        iterations=1,
        final_gradient_norm=float(np.linalg.norm(residual_score)),
        ridge=ridge,
    )


def predict_linear(fit: FitResult, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] != fit.coefficients.shape[0]:
        raise InvalidInputError("design/coefficient dimension mismatch")
    return X @ fit.coefficients
