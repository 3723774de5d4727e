"""Quasi-Poisson log-link regression fitted by iteratively reweighted least squares.

Point estimates coincide with Poisson maximum likelihood; uncertainty is
inflated by a Pearson dispersion estimate, the standard quasi-likelihood
treatment. Offsets enter the linear predictor with a fixed coefficient of 1.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
from scipy.special import xlogy
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from ._blas import single_thread
from .exceptions import (
    ConvergenceWarning,
    DegenerateResponseError,
    DegreesOfFreedomError,
    DomainError,
    SingularDesignError,
)


def _check_X_y_offset(X, y, offset):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DomainError(f"X must be 2-dimensional, got ndim={X.ndim}")
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise DomainError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if offset is None:
        offset = np.zeros(X.shape[0])
    else:
        offset = np.asarray(offset, dtype=float).reshape(-1)
        if offset.shape[0] != X.shape[0]:
            raise DomainError(f"X has {X.shape[0]} rows but offset has {offset.shape[0]}")
    if not np.isfinite(X).all():
        raise DomainError("X contains non-finite values")
    if not np.isfinite(y).all():
        raise DomainError("y contains non-finite values")
    if not np.isfinite(offset).all():
        raise DomainError("offset contains non-finite values")
    return X, y, offset


def _check_offset_for_predict(X, offset):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if offset is None:
        offset = np.zeros(X.shape[0])
    else:
        offset = np.asarray(offset, dtype=float).reshape(-1)
        if offset.shape[0] != X.shape[0]:
            raise DomainError(f"X has {X.shape[0]} rows but offset has {offset.shape[0]}")
    return X, offset


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    """Poisson deviance 2*sum(y*log(y/mu) - (y - mu)), with y*log(y) = 0 at y = 0."""
    return float(2.0 * np.sum(xlogy(y, y) - xlogy(y, mu) - (y - mu)))


def pearson_dispersion(y: np.ndarray, mu: np.ndarray, n_params: int) -> float:
    """Pearson chi-square statistic divided by the residual degrees of freedom."""
    y = np.asarray(y, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if y.shape != mu.shape:
        raise DomainError(f"y and mu have different lengths: {y.shape} vs {mu.shape}")
    if (mu <= 0).any():
        raise DomainError("fitted means must be strictly positive")
    n = y.shape[0]
    if n <= n_params:
        raise DegreesOfFreedomError(
            f"need more observations than parameters: n={n}, p={n_params}"
        )
    chi2 = float(np.sum((y - mu) ** 2 / mu))
    return chi2 / (n - n_params)


def _rank_check(L_upper: np.ndarray, columns, tol: float) -> None:
    """Flag near-dependent columns from an upper-triangular factor of the weighted design.

    `L_upper` satisfies A = L_upper.T @ L_upper with A the weighted cross
    product, so its singular values are those of the weighted design; a pivoted
    QR of it exposes the rank profile at negligible cost.
    """
    _, R, piv = scipy.linalg.qr(L_upper, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d[0] == 0.0:
        raise SingularDesignError(_names(piv, columns))
    bad = d < tol * d[0]
    if bad.any():
        raise SingularDesignError(_names(piv[bad], columns))


def _names(indices, columns):
    if columns is None:
        return [int(i) for i in indices]
    return [columns[int(i)] for i in indices]


def _diagnose_singular(Xw: np.ndarray, columns, tol: float) -> SingularDesignError:
    """Slow-path diagnosis via pivoted QR of the weighted design itself."""
    _, R, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    bad = d < tol * max(d[0], np.finfo(float).tiny)
    if not bad.any():
        bad = d == d.min()
    return SingularDesignError(_names(piv[bad], columns))


class QuasiPoissonRegression(RegressorMixin, BaseEstimator):
    """Quasi-Poisson regression with log link and per-row offsets.

    Parameters
    ----------
    max_iter : int
        Iteration cap for IRLS.
    tol : float
        Convergence threshold on the relative deviance change.
    gtol : float
        Score polish threshold: after the deviance has converged, iteration
        continues (briefly) until every component of X'(y - mu) is below this,
        so the canonical-link balance holds to high accuracy.
    max_step_halvings : int
        Step halvings per iteration when a step increases the deviance.
    rank_tol : float
        Relative pivot tolerance for declaring the design rank deficient.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Maximum-likelihood coefficients.
    covariance_ : ndarray of shape (n_features, n_features)
        Dispersion-inflated covariance of the coefficients.
    dispersion_ : float
        Pearson dispersion estimate.
    deviance_ : float
        Poisson deviance at the solution.
    n_iter_ : int
        IRLS iterations performed.
    converged_ : bool
        Whether the relative deviance change fell below `tol`.
    """

    def __init__(self, max_iter=100, tol=1e-8, gtol=1e-7, max_step_halvings=10,
                 rank_tol=1e-10):
        self.max_iter = max_iter
        self.tol = tol
        self.gtol = gtol
        self.max_step_halvings = max_step_halvings
        self.rank_tol = rank_tol

    def fit(self, X, y, offset=None, column_names=None):
        """Fit by IRLS. `offset` is added to the linear predictor with coefficient 1.

        The weighted cross products here have a small output and a long inner
        dimension, a shape for which threaded BLAS kernels split the summation
        and make results depend on the thread count; the solve runs on a single
        BLAS thread so fits are bit-reproducible.
        """
        with single_thread():
            return self._fit(X, y, offset, column_names)

    def _fit(self, X, y, offset, column_names):
        X, y, offset = _check_X_y_offset(X, y, offset)
        n, p = X.shape
        if (y < 0).any():
            raise DomainError("responses must be non-negative")
        if not (y > 0).any():
            raise DegenerateResponseError(
                "all responses are zero; the log-link MLE does not exist"
            )

        mu = y + 0.1
        eta = np.log(mu)
        beta = None
        dev = np.inf
        dev_path = []
        converged = False
        polish = 0
        n_iter = 0

        for n_iter in range(1, self.max_iter + 1):
            w = mu
            z = eta - offset + (y - mu) / mu
            sw = np.sqrt(w)
            Xw = X * sw[:, None]
            A = Xw.T @ Xw
            # Column-vector matmuls keep the BLAS on its gemm path, whose
            # reduction order does not depend on the thread count.
            b = (Xw.T @ (sw * z)[:, None]).ravel()
            try:
                L = scipy.linalg.cho_factor(A, lower=False)
            except scipy.linalg.LinAlgError:
                raise _diagnose_singular(Xw, column_names, self.rank_tol) from None
            if n_iter == 1:
                _rank_check(L[0], column_names, self.rank_tol)
            beta_new = scipy.linalg.cho_solve(L, b)

            eta_new = np.clip((X @ beta_new[:, None]).ravel() + offset, -500.0, 500.0)
            mu_new = np.exp(eta_new)
            dev_new = poisson_deviance(y, mu_new)
            if beta is not None:
                slack = 1e-10 * (abs(dev) + 1.0) if np.isfinite(dev) else 0.0
                halvings = 0
                while (not np.isfinite(dev_new) or dev_new > dev + slack) and \
                        halvings < self.max_step_halvings:
                    beta_new = 0.5 * (beta_new + beta)
                    eta_new = np.clip((X @ beta_new[:, None]).ravel() + offset, -500.0, 500.0)
                    mu_new = np.exp(eta_new)
                    dev_new = poisson_deviance(y, mu_new)
                    halvings += 1
                if not np.isfinite(dev_new) or dev_new > dev + slack:
                    break  # stalled; report non-convergence below unless already converged

            beta, eta, mu = beta_new, eta_new, mu_new
            rel_change = abs(dev - dev_new) / (abs(dev) + 1e-10)
            dev = dev_new
            dev_path.append(dev)
            if rel_change < self.tol:
                converged = True
                score = (X.T @ (y - mu)[:, None]).ravel()
                if np.max(np.abs(score)) <= self.gtol or polish >= 10:
                    break
                polish += 1

        if not converged:
            warnings.warn(
                f"IRLS did not converge in {n_iter} iterations "
                f"(relative deviance change above {self.tol})",
                ConvergenceWarning,
                stacklevel=2,
            )

        phi = pearson_dispersion(y, mu, p)
        w = mu
        Xw = X * np.sqrt(w)[:, None]
        A = Xw.T @ Xw
        try:
            L = scipy.linalg.cho_factor(A, lower=False)
        except scipy.linalg.LinAlgError:
            raise _diagnose_singular(Xw, column_names, self.rank_tol) from None
        cov = phi * scipy.linalg.cho_solve(L, np.eye(p))
        cov = 0.5 * (cov + cov.T)

        self.coef_ = beta
        self.covariance_ = cov
        self.dispersion_ = phi
        self.deviance_ = dev
        self.deviance_path_ = dev_path
        self.n_iter_ = n_iter
        self.converged_ = converged
        self.n_features_in_ = p
        self.column_names_ = list(column_names) if column_names is not None else None
        return self

    def linear_predictor(self, X, offset=None) -> np.ndarray:
        self._check_fitted()
        X, offset = _check_offset_for_predict(X, offset)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(
                f"X has {X.shape[1]} columns, expected {self.n_features_in_}"
            )
        return (X @ self.coef_[:, None]).ravel() + offset

    def predict(self, X, offset=None) -> np.ndarray:
        """Expected counts exp(X @ coef_ + offset); strictly positive."""
        with np.errstate(over="ignore"):
            mu = np.exp(self.linear_predictor(X, offset))
        if not np.isfinite(mu).all():
            raise OverflowError("predicted mean overflowed to a non-finite value")
        return mu

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError(
                "this QuasiPoissonRegression instance is not fitted yet"
            )

    def standard_errors(self) -> np.ndarray:
        self._check_fitted()
        return np.sqrt(np.diag(self.covariance_))

    def to_dict(self) -> dict:
        """JSON-ready summary: named coefficients, covariance and fit metadata."""
        self._check_fitted()
        names = self.column_names_ or [f"x{i}" for i in range(self.n_features_in_)]
        return {
            "coefficients": {n: float(c) for n, c in zip(names, self.coef_)},
            "covariance": [[float(v) for v in row] for row in self.covariance_],
            "dispersion": float(self.dispersion_),
            "deviance": float(self.deviance_),
            "iterations": int(self.n_iter_),
            "converged": bool(self.converged_),
        }
