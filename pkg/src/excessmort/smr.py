"""Age- and sex-standardised yearly mortality rate with a linear-trend baseline.

The benchmark method: weight each stratum's yearly death rate by a fixed
standard population, fit an ordinary least-squares line to the pre-pandemic
standardised rates, and convert the gap between observed and extrapolated
rates into excess deaths using the standard population total.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import CoverageError, DomainError
from .panels import N_STRATA, CountPanel, PopulationPanel
from .periods import MonthIndex, QuarterIndex


@dataclass(frozen=True)
class StandardPopulation:
    """Per-stratum standard population sizes used as standardisation weights."""

    sizes: np.ndarray  # shape (N_STRATA,), strictly positive
    reference_label: str

    def __post_init__(self):
        s = np.asarray(self.sizes, dtype=float)
        if s.shape != (N_STRATA,):
            raise DomainError(f"standard population must cover all {N_STRATA} strata")
        if not np.isfinite(s).all() or (s <= 0).any():
            raise DomainError("standard population sizes must be positive")
        s.flags.writeable = False
        object.__setattr__(self, "sizes", s)

    @classmethod
    def from_panel(cls, pop: PopulationPanel, quarter: QuarterIndex) -> StandardPopulation:
        col = pop.quarter_offset(quarter)
        return cls(pop.sizes[:, col].copy(), str(quarter))

    @property
    def total(self) -> float:
        return float(self.sizes.sum())


@dataclass(frozen=True)
class RateTrend:
    """Fitted line rate = intercept + slope * year (slope per calendar year)."""

    slope: float
    intercept: float
    fit_years: tuple[int, ...]

    def predict(self, year: int) -> float:
        return self.intercept + self.slope * year


@dataclass(frozen=True)
class StandardizedRateSeries:
    """Observed standardised rates per year, optionally with a fitted trend."""

    rates: dict[int, float]
    trend: RateTrend | None = None


def _year_death_totals(deaths: CountPanel, year: int) -> np.ndarray:
    months = [MonthIndex(year, m) for m in range(1, 13)]
    if not deaths.covers(months[0], months[-1]):
        raise CoverageError(f"deaths panel does not cover all of {year}")
    sl = slice(deaths.month_offset(months[0]), deaths.month_offset(months[-1]) + 1)
    return deaths.counts[:, sl].sum(axis=1).astype(float)


def standardized_rate(
    deaths: CountPanel,
    pop: PopulationPanel,
    std: StandardPopulation,
    year: int,
) -> float:
    """Standardised yearly mortality rate in deaths per person-year.

    Each stratum's yearly deaths are divided by its mean quarterly population
    and weighted by the standard population share.
    """
    d = _year_death_totals(deaths, year)
    n_bar = pop.yearly_mean_sizes(year)
    return float(np.sum(d * std.sizes / n_bar) / std.total)


def rate_series(
    deaths: CountPanel,
    pop: PopulationPanel,
    std: StandardPopulation,
    years: Sequence[int],
) -> StandardizedRateSeries:
    return StandardizedRateSeries(
        rates={y: standardized_rate(deaths, pop, std, y) for y in years}
    )


def fit_rate_trend(series: StandardizedRateSeries, fit_years: Sequence[int]) -> RateTrend:
    """Ordinary least squares of the standardised rate on the calendar year."""
    fit_years = sorted(fit_years)
    if len(fit_years) < 2:
        raise DomainError(f"need at least 2 fit years, got {len(fit_years)}")
    missing = [y for y in fit_years if y not in series.rates]
    if missing:
        raise CoverageError(f"rate series has no value for years {missing}")
    years = np.array(fit_years, dtype=float)
    rates = np.array([series.rates[y] for y in fit_years])
    yc = years - years.mean()
    slope = float(np.sum(yc * (rates - rates.mean())) / np.sum(yc * yc))
    intercept = float(rates.mean() - slope * years.mean())
    return RateTrend(slope=slope, intercept=intercept, fit_years=tuple(fit_years))


def smr_excess(
    deaths: CountPanel,
    pop: PopulationPanel,
    std: StandardPopulation,
    trend: RateTrend,
    year: int,
) -> float:
    """Excess deaths: (observed - extrapolated standardised rate) x standard total."""
    if trend.fit_years and year <= max(trend.fit_years):
        warnings.warn(
            f"year {year} lies inside the trend fit window; "
            "the result is a residual, not an excess estimate",
            stacklevel=2,
        )
    m = standardized_rate(deaths, pop, std, year)
    return (m - trend.predict(year)) * std.total
