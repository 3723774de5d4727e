"""Monte-Carlo propagation of coefficient uncertainty to aggregated expected deaths.

Coefficient vectors are drawn from the fitted normal approximation; each draw
yields expected deaths per cell, which are summed over a selection of strata
and months. Confidence intervals are empirical percentiles of those sums, and
excess deaths are actual deaths minus the mean expected deaths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ._blas import single_thread
from .design import DesignMatrix
from .exceptions import CovarianceError, DomainError
from .panels import SEXES, Sex

DEFAULT_SAMPLES = 5000
_JITTER_STEPS = (0.0, 1e-14, 1e-12, 1e-10)


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DomainError(f"covariance must be square, got shape {cov.shape}")
    max_diag = float(np.max(np.abs(np.diag(cov)))) if cov.size else 0.0
    if max_diag == 0.0 and not cov.any():
        return np.zeros_like(cov)
    for jitter in _JITTER_STEPS:
        try:
            return np.linalg.cholesky(cov + jitter * max_diag * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError(
        "covariance is indefinite beyond jitter tolerance "
        f"(1e-10 x max diagonal = {1e-10 * max_diag:.3e})"
    )


def sample_coefficients(
    beta: np.ndarray,
    cov: np.ndarray,
    n_samples: int,
    seed: int | np.random.SeedSequence,
) -> np.ndarray:
    """Draw `n_samples` coefficient vectors from N(beta, cov).

    Uses a counter-based generator keyed by `seed` (an integer or a
    SeedSequence), so draws are reproducible across platforms and independent
    of threading. The factorization runs on one BLAS thread: threaded LAPACK
    kernels round differently for different thread counts.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    with single_thread():
        L = _cholesky_with_jitter(cov)
        if L.shape[0] != beta.shape[0]:
            raise DomainError(
                f"beta has length {beta.shape[0]} but covariance is "
                f"{L.shape[0]}x{L.shape[0]}"
            )
        rng = np.random.Generator(np.random.Philox(seed))
        z = rng.standard_normal((n_samples, beta.shape[0]))
        return beta[None, :] + z @ L.T


def iter_mu_chunks(
    samples: np.ndarray,
    X: np.ndarray,
    offset: np.ndarray,
    chunk_size: int = 512,
) -> Iterator[tuple[slice, np.ndarray]]:
    """Yield (sample slice, per-cell expected deaths) in manageable chunks.

    Each yielded array has shape (n_rows, chunk), column j holding
    exp(X @ samples[j] + offset).
    """
    samples = np.asarray(samples, dtype=float)
    X = np.asarray(X, dtype=float)
    offset = np.asarray(offset, dtype=float).reshape(-1)
    if samples.ndim != 2 or samples.shape[1] != X.shape[1]:
        raise DomainError(
            f"samples must have shape (m, {X.shape[1]}), got {samples.shape}"
        )
    m = samples.shape[0]
    for lo in range(0, m, chunk_size):
        hi = min(lo + chunk_size, m)
        eta = X @ samples[lo:hi].T + offset[:, None]
        yield slice(lo, hi), np.exp(eta)


def aggregate_expected(
    samples: np.ndarray,
    X: np.ndarray,
    offset: np.ndarray,
    weights: np.ndarray | None = None,
    chunk_size: int = 512,
) -> np.ndarray:
    """Per-sample total expected deaths over the given rows.

    Returns an array of length m where entry j is
    sum_i weights_i * exp(X_i @ samples_j + offset_i) (weights default to 1).
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise DomainError("selection has no rows")
    if weights is not None:
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape[0] != X.shape[0]:
            raise DomainError(
                f"weights has length {weights.shape[0]}, expected {X.shape[0]}"
            )
    out = np.empty(np.asarray(samples).shape[0])
    for sl, mu in iter_mu_chunks(samples, X, offset, chunk_size):
        if not np.isfinite(mu).all():
            raise OverflowError("expected deaths overflowed to a non-finite value")
        if weights is None:
            out[sl] = mu.sum(axis=0)
        else:
            out[sl] = (mu * weights[:, None]).sum(axis=0)
    return out


def percentile_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Empirical central interval via midpoint-interpolated order statistics."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DomainError(f"need at least 2 values, got {values.size}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must be in (0, 1), got {level}")
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(values, [alpha, 100.0 - alpha], method="hazen")
    return float(lo), float(hi)


@dataclass(frozen=True)
class ExcessEstimate:
    """Actual deaths, expected deaths (mean and interval) and the implied excess."""

    actual: float
    expected_mean: float
    expected_ci: tuple[float, float]
    excess_mean: float
    excess_ci: tuple[float, float]
    sample_count: int

    @property
    def covers_zero(self) -> bool:
        return self.excess_ci[0] <= 0.0 <= self.excess_ci[1]


def excess_estimate(actual: float, expected_samples: np.ndarray,
                    level: float = 0.95) -> ExcessEstimate:
    """Excess = actual - mean expected; the interval flips the expected percentiles."""
    expected_samples = np.asarray(expected_samples, dtype=float)
    lo, hi = percentile_interval(expected_samples, level)
    mean = float(expected_samples.mean())
    return ExcessEstimate(
        actual=float(actual),
        expected_mean=mean,
        expected_ci=(lo, hi),
        excess_mean=float(actual) - mean,
        excess_ci=(float(actual) - hi, float(actual) - lo),
        sample_count=int(expected_samples.size),
    )


@dataclass(frozen=True)
class Selection:
    """A set of (stratum, month) cells: the intersection of the given filters.

    `months` is a set of month ordinals, `years` a set of calendar years,
    `ages` a set of one-year age groups, `sexes` a set of Sex values. A None
    filter imposes no restriction.
    """

    label: str
    months: frozenset[int] | None = None
    years: frozenset[int] | None = None
    ages: frozenset[int] | None = None
    sexes: frozenset[Sex] | None = None

    def row_mask(self, design: DesignMatrix) -> np.ndarray:
        mask = np.ones(design.n_rows, dtype=bool)
        if self.months is not None:
            mask &= np.isin(design.row_months, list(self.months))
        if self.years is not None:
            mask &= np.isin(design.row_years, list(self.years))
        if self.ages is not None:
            mask &= np.isin(design.row_ages, list(self.ages))
        if self.sexes is not None:
            codes = [SEXES.index(s) for s in self.sexes]
            mask &= np.isin(design.row_sexes, codes)
        return mask
