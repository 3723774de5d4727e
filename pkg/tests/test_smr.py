import numpy as np
import pytest

from excessmort.exceptions import CoverageError, DomainError
from excessmort.panels import N_STRATA, CountPanel, PopulationPanel
from excessmort.periods import MonthIndex, QuarterIndex
from excessmort.smr import (
    RateTrend,
    StandardPopulation,
    StandardizedRateSeries,
    fit_rate_trend,
    rate_series,
    smr_excess,
    standardized_rate,
)


def make_panels(yearly_deaths_per_stratum, pop_per_stratum, years):
    """Panels where each stratum has the given yearly deaths, spread over December."""
    n_years = len(years)
    counts = np.zeros((N_STRATA, 12 * n_years), dtype=np.int64)
    for i, _ in enumerate(years):
        counts[:, 12 * i + 11] = yearly_deaths_per_stratum
    deaths = CountPanel(MonthIndex(years[0], 1), counts)
    pop = PopulationPanel(QuarterIndex(years[0], 1),
                          np.full((N_STRATA, 4 * n_years), float(pop_per_stratum)))
    return deaths, pop


def test_rate_cancels_standard_population():
    # identical rates in every stratum: the standard population drops out
    deaths, pop = make_panels(70, 10_000, [2019])
    std = StandardPopulation(np.full(N_STRATA, 123.0), "test")
    rate = standardized_rate(deaths, pop, std, 2019)
    assert rate == pytest.approx(0.007, rel=1e-12)  # 7.0 per 1000

    uneven = StandardPopulation(np.linspace(1.0, 50.0, N_STRATA), "uneven")
    assert standardized_rate(deaths, pop, uneven, 2019) == pytest.approx(rate, rel=1e-12)


def test_rate_weighted_mean_of_stratum_rates():
    deaths, pop = make_panels(0, 10_000, [2019])
    counts = deaths.counts.copy()
    counts[0, 11] = 40   # stratum 0: rate 0.004
    counts[5, 11] = 90   # stratum 5: rate 0.009
    deaths = CountPanel(deaths.start, counts)
    weights = np.full(N_STRATA, 1e-9)
    weights[0] = 3.0
    weights[5] = 1.0
    std = StandardPopulation(weights, "w")
    expected = sum(
        weights[i] * counts[i, 11] / 10_000 for i in range(N_STRATA)
    ) / weights.sum()
    rate = standardized_rate(deaths, pop, std, 2019)
    assert rate == pytest.approx(expected, rel=1e-12)
    assert rate == pytest.approx((3.0 * 0.004 + 1.0 * 0.009) / 4.0, rel=1e-6)


def test_standardisation_identity_crude_rate():
    rng = np.random.Generator(np.random.Philox(3))
    n_years = 1
    counts = rng.integers(0, 40, size=(N_STRATA, 12)).astype(np.int64)
    deaths = CountPanel(MonthIndex(2019, 1), counts)
    sizes = rng.uniform(1_000.0, 50_000.0, size=(N_STRATA, 4))
    pop = PopulationPanel(QuarterIndex(2019, 1), sizes)
    n_bar = pop.yearly_mean_sizes(2019)
    std = StandardPopulation(n_bar, "2019-mean")
    crude = counts.sum() / n_bar.sum()
    assert standardized_rate(deaths, pop, std, 2019) == pytest.approx(crude, rel=1e-12)


def test_rate_scaling_invariance_and_excess_scaling():
    deaths, pop = make_panels(70, 10_000, [2018, 2019, 2020])
    std1 = StandardPopulation(np.full(N_STRATA, 100.0), "a")
    std2 = StandardPopulation(np.full(N_STRATA, 700.0), "b")
    # rates are invariant to uniform scaling of the standard population
    r1 = standardized_rate(deaths, pop, std1, 2020)
    r2 = standardized_rate(deaths, pop, std2, 2020)
    assert r1 == pytest.approx(r2, rel=1e-12)
    # excess deaths scale linearly with the standard total
    trend = RateTrend(slope=0.0, intercept=r1 * 0.9, fit_years=(2018, 2019))
    e1 = smr_excess(deaths, pop, std1, trend, 2020)
    e2 = smr_excess(deaths, pop, std2, trend, 2020)
    assert e2 == pytest.approx(7.0 * e1, rel=1e-12)


def test_rate_incomplete_year():
    deaths, pop = make_panels(70, 10_000, [2019])
    with pytest.raises(CoverageError):
        standardized_rate(deaths, pop, StandardPopulation(np.full(N_STRATA, 1.0), "x"),
                          2020)


def test_trend_two_points_exact():
    series = StandardizedRateSeries(rates={2018: 0.007, 2019: 0.0068})
    trend = fit_rate_trend(series, [2018, 2019])
    assert trend.predict(2018) == pytest.approx(0.007, rel=1e-12)
    assert trend.predict(2019) == pytest.approx(0.0068, rel=1e-12)
    assert trend.predict(2020) == pytest.approx(0.0066, rel=1e-9)


def test_trend_constant_rates():
    series = StandardizedRateSeries(rates={y: 0.0071 for y in range(2014, 2020)})
    trend = fit_rate_trend(series, range(2014, 2020))
    assert trend.slope == pytest.approx(0.0, abs=1e-18)
    assert trend.intercept == pytest.approx(0.0071, rel=1e-12)


def test_trend_recovers_slope_within_2se():
    rng = np.random.Generator(np.random.Philox(4))
    years = np.arange(2008, 2020)
    a, b, sigma = 0.008, -5e-5, 2e-5
    hits = 0
    n_rep = 200
    for _ in range(n_rep):
        rates = a + b * (years - 2008) + rng.normal(0.0, sigma, size=years.size)
        series = StandardizedRateSeries(rates=dict(zip(years.tolist(), rates)))
        trend = fit_rate_trend(series, years.tolist())
        # textbook OLS slope standard error
        resid = rates - np.array([trend.predict(y) for y in years])
        se = np.sqrt(resid.var(ddof=2) / ((years - years.mean()) ** 2).sum())
        hits += abs(trend.slope - b) <= 2 * se
    assert hits / n_rep > 0.90  # nominal 95%


def test_trend_needs_two_years():
    series = StandardizedRateSeries(rates={2019: 0.007})
    with pytest.raises(DomainError):
        fit_rate_trend(series, [2019])
    with pytest.raises(CoverageError):
        fit_rate_trend(series, [2018, 2019])


def test_excess_zero_when_on_trend():
    deaths, pop = make_panels(70, 10_000, [2020])
    std = StandardPopulation(np.full(N_STRATA, 50.0), "s")
    rate = standardized_rate(deaths, pop, std, 2020)
    trend = RateTrend(slope=0.0, intercept=rate, fit_years=(2014, 2019))
    assert smr_excess(deaths, pop, std, trend, 2020) == pytest.approx(0.0, abs=1e-9)


def test_excess_rate_gap_arithmetic():
    deaths, pop = make_panels(70, 10_000, [2020])
    sizes = np.full(N_STRATA, 5_000_000.0 / N_STRATA)
    std = StandardPopulation(sizes, "s")
    rate = standardized_rate(deaths, pop, std, 2020)
    trend = RateTrend(slope=0.0, intercept=rate - 1e-4, fit_years=(2014, 2019))
    assert smr_excess(deaths, pop, std, trend, 2020) == pytest.approx(500.0, rel=1e-9)


def test_excess_inside_fit_window_warns():
    deaths, pop = make_panels(70, 10_000, [2019])
    std = StandardPopulation(np.full(N_STRATA, 1.0), "s")
    trend = RateTrend(slope=0.0, intercept=0.007, fit_years=(2018, 2019))
    with pytest.warns(UserWarning, match="inside the trend fit window"):
        smr_excess(deaths, pop, std, trend, 2019)


def test_standard_population_from_panel(tiny_pop):
    std = StandardPopulation.from_panel(tiny_pop, QuarterIndex(2021, 1))
    assert std.total == pytest.approx(192 * 10_000.0)
    assert std.reference_label == "2021-Q1"
    with pytest.raises(CoverageError):
        StandardPopulation.from_panel(tiny_pop, QuarterIndex(2031, 1))


def test_rate_series_builder(tiny_deaths, tiny_pop):
    std = StandardPopulation.from_panel(tiny_pop, QuarterIndex(2021, 1))
    series = rate_series(tiny_deaths, tiny_pop, std, [2014, 2015])
    assert set(series.rates) == {2014, 2015}
    assert all(r > 0 for r in series.rates.values())
