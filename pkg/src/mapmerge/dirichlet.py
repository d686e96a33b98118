"""Dirichlet-multinomial bookkeeping: predictive probabilities, marginal
evidence of transition counts, and MAP fitting of the prior pseudo-counts
across several training environments.

Conventions: transition matrices are indexed [i, j] = count (or pseudo-count)
of view j being followed by view i, so column j is the distribution over
successors of j.  All alpha entries must stay strictly positive.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, psi

ALPHA_FLOOR = 1e-6
# ceiling for fitted pseudo-counts: with near-identical environments the
# evidence is maximized as alpha -> inf; the cap keeps the fit finite
ALPHA_CEIL = 1e6


class EvidenceError(ValueError):
    """Non-finite evidence encountered while optimizing a column."""

    def __init__(self, column: int, message: str):
        super().__init__(f"column {column}: {message}")
        self.column = column


def new_counts(nu: int) -> np.ndarray:
    return np.zeros((nu, nu), dtype=np.int64)


def increment(counts: np.ndarray, j: int, i: int) -> np.ndarray:
    """Record one observed transition j -> i.  Mutates and returns counts."""
    counts[i, j] += 1
    return counts


def predictive_matrix(alpha: np.ndarray, counts=None, count_scale: float = 1.0) -> np.ndarray:
    """Posterior predictive transition matrix: column j is the distribution
    over the view following j, with the multinomial integrated out.

    count_scale weights the observed counts before they enter the ratio
    (1.0 = full adaptation, 0.0 = prior only).
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0.0) or not np.all(np.isfinite(a)):
        raise ValueError("alpha entries must be positive and finite")
    total = a if counts is None else a + count_scale * np.asarray(counts, dtype=float)
    return total / total.sum(axis=0, keepdims=True)


def predictive(alpha: np.ndarray, counts: np.ndarray, i: int, j: int,
               count_scale: float = 1.0) -> float:
    """p(next view = i | previous view = j) given pseudo-counts and counts."""
    a = np.asarray(alpha, dtype=float)[:, j]
    if np.any(a <= 0.0):
        raise ValueError("alpha column must be strictly positive")
    f = count_scale * np.asarray(counts, dtype=float)[:, j]
    return float((a[i] + f[i]) / (a.sum() + f.sum()))


def log_evidence(alpha_col: np.ndarray, data_cols: np.ndarray) -> float:
    """Log marginal likelihood of per-environment count columns under a
    shared Dirichlet prior column (product of Dirichlet-multinomial
    evidences over environments).

    data_cols has shape (k, nu): one row of successor counts per environment.
    """
    a = np.asarray(alpha_col, dtype=float)
    if np.any(a <= 0.0) or not np.all(np.isfinite(a)):
        raise ValueError("alpha column must be strictly positive and finite")
    f = np.atleast_2d(np.asarray(data_cols, dtype=float))
    k = f.shape[0]
    abar = a.sum()
    val = (np.sum(gammaln(f + a))
           - np.sum(gammaln(f.sum(axis=1) + abar))
           + k * gammaln(abar)
           - k * np.sum(gammaln(a)))
    return float(val)


def log_evidence_grad(alpha_col: np.ndarray, data_cols: np.ndarray) -> np.ndarray:
    """Analytic gradient of log_evidence with respect to the alpha column."""
    a = np.asarray(alpha_col, dtype=float)
    if np.any(a <= 0.0) or not np.all(np.isfinite(a)):
        raise ValueError("alpha column must be strictly positive and finite")
    f = np.atleast_2d(np.asarray(data_cols, dtype=float))
    k = f.shape[0]
    abar = a.sum()
    g = (np.sum(psi(f + a), axis=0) - k * psi(a)
         + k * psi(abar) - np.sum(psi(f.sum(axis=1) + abar)))
    return g


def fit_map_column(alpha_col: np.ndarray, data_cols: np.ndarray,
                   tol: float = 1e-8, max_iters: int = 2000,
                   column_index: int = 0) -> np.ndarray:
    """Maximize the column log-evidence by gradient ascent in log(alpha).

    The log parameterization keeps alpha positive; convergence is declared
    when the infinity norm of the log-space gradient drops below tol.
    """
    a0 = np.maximum(np.asarray(alpha_col, dtype=float), ALPHA_FLOOR)
    f = np.atleast_2d(np.asarray(data_cols, dtype=float))
    if not f.any():
        return a0.copy()  # evidence is identically 0: nothing to fit

    theta = np.log(a0)
    fcur = log_evidence(np.exp(theta), f)
    if not np.isfinite(fcur):
        raise EvidenceError(column_index, "non-finite evidence at initialization")
    step = 1.0
    for _ in range(max_iters):
        a = np.exp(theta)
        g = log_evidence_grad(a, f) * a  # chain rule into log space
        gnorm = np.max(np.abs(g))
        if gnorm < tol:
            break
        improved = False
        while step > 1e-14:
            theta_new = np.clip(theta + step * g, np.log(ALPHA_FLOOR),
                                np.log(ALPHA_CEIL))
            fnew = log_evidence(np.exp(theta_new), f)
            if not np.isfinite(fnew):
                raise EvidenceError(column_index, "non-finite evidence during ascent")
            if fnew > fcur:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        theta, fcur = theta_new, fnew
        step = min(step * 2.0, 1e6)
    return np.maximum(np.exp(theta), ALPHA_FLOOR)


def map_estimate(data, init: np.ndarray | None = None,
                 tol: float = 1e-8, max_iters: int = 2000) -> np.ndarray:
    """MAP estimate of the prior pseudo-count matrix from per-environment
    count matrices (uniform hyper-prior, so MAP = evidence maximization).

    Columns are independent and fitted separately.
    """
    stack = np.asarray([np.asarray(d, dtype=float) for d in data])
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ValueError("data must be a non-empty list of square count matrices")
    nu = stack.shape[1]
    if init is None:
        init = np.ones((nu, nu), dtype=float)
    alpha = np.empty((nu, nu), dtype=float)
    for j in range(nu):
        alpha[:, j] = fit_map_column(init[:, j], stack[:, :, j], tol=tol,
                                     max_iters=max_iters, column_index=j)
    return alpha
