"""Checks pinned to the bundled demo dataset in data/demo."""

from pathlib import Path

import numpy as np
import pytest

from excessmort.panels import StratumKey, Sex, parse_covid, parse_deaths, parse_population
from excessmort.periods import MonthIndex, QuarterIndex
from excessmort.pipeline import AnalysisConfig, analyse, run_sensitivity

DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "demo"


@pytest.fixture(scope="module")
def demo():
    with open(DATA_DIR / "deaths_rounded.csv", newline="", encoding="utf-8") as f:
        deaths = parse_deaths(f)
    with open(DATA_DIR / "population.csv", newline="", encoding="utf-8") as f:
        pop = parse_population(f)
    with open(DATA_DIR / "covid.csv", newline="", encoding="utf-8") as f:
        covid = parse_covid(f)
    return deaths, pop, covid


def test_coverage(demo):
    deaths, pop, covid = demo
    assert (deaths.start, deaths.end) == (MonthIndex(2010, 1), MonthIndex(2023, 12))
    assert (pop.start, pop.end) == (QuarterIndex(2010, 1), QuarterIndex(2023, 4))
    assert covid.end == MonthIndex(2023, 12)


def test_counts_are_rounded(demo):
    deaths, _, _ = demo
    small = deaths.counts < 6
    assert np.isin(deaths.counts[small], (0, 6)).all()
    assert (deaths.counts[~small] % 3 == 0).all()


def test_covid_yearly_totals(demo):
    _, _, covid = demo
    assert covid.year_total(2020) == 26
    assert covid.year_total(2021) == 26
    assert covid.year_total(2022) == 2790
    assert covid.year_total(2023) == 1013
    # band and sex marginals agree month by month
    assert (covid.by_band.sum(axis=0) == covid.by_sex.sum(axis=0)).all()


def test_open_age_group_anchors(demo):
    _, pop, _ = demo
    male = StratumKey(Sex.MALE, 95)
    female = StratumKey(Sex.FEMALE, 95)
    total_2014q1 = pop.size(male, QuarterIndex(2014, 1)) + pop.size(female, QuarterIndex(2014, 1))
    total_2023q4 = pop.size(male, QuarterIndex(2023, 4)) + pop.size(female, QuarterIndex(2023, 4))
    assert total_2014q1 == pytest.approx(5130, abs=0.5)
    assert total_2023q4 == pytest.approx(8530, abs=0.5)


def test_population_growth_break(demo):
    _, pop, _ = demo
    from excessmort.pipeline import population_trend_diagnostic

    under, over = population_trend_diagnostic(pop, 65, range(2010, 2020),
                                              range(2020, 2024))
    # under-65 growth stalls after 2019; 65+ stays near its trend
    assert under.gaps[-1] < -50_000
    assert abs(over.gaps[-1]) < 0.1 * abs(under.gaps[-1])
    assert abs(over.gaps[-1]) < 0.03 * over.observed[-1]


def test_shorter_projection_window(demo):
    # the three-year 2020-22 variant is supported end to end
    deaths, pop, covid = demo
    config = AnalysisConfig(
        deaths_path=Path("unused"), population_path=Path("unused"),
        fit_start=MonthIndex(2014, 1), fit_end=MonthIndex(2019, 12),
        project_start=MonthIndex(2020, 1), project_end=MonthIndex(2022, 12),
        samples=300, seed=0, out_dir=Path("unused"),
    )
    result = analyse(deaths, pop, config, covid=covid)
    assert set(result.yearly) == {2020, 2021, 2022}
    report = run_sensitivity(deaths, pop, config, [4, 6])
    assert len(report.rows) == 2 and not report.failed
