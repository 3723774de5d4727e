import datetime
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excessmort.exceptions import (
    CompletenessError,
    CoverageError,
    DomainError,
    DuplicateRecordError,
    ParseError,
)
from excessmort.panels import (
    N_STRATA,
    CountPanel,
    CovidRecord,
    PopulationPanel,
    Sex,
    StratumKey,
    aggregate_covid_daily,
    all_strata,
    monthly_population,
    parse_covid,
    parse_deaths,
    parse_population,
    write_deaths,
    write_population,
)
from excessmort.periods import MonthIndex, QuarterIndex

DEATHS_HEADER = "year,month,sex,age_group,count\n"
POP_HEADER = "year,quarter,sex,age_group,population\n"


def deaths_csv(rows):
    return io.StringIO(DEATHS_HEADER + "".join(r + "\n" for r in rows))


def full_population_csv(quarters, value=10_000):
    buf = [POP_HEADER]
    for year, q in quarters:
        for s in all_strata():
            buf.append(f"{year},{q},{s.sex},{s.age_group},{value}\n")
    return io.StringIO("".join(buf))


def test_stratum_universe():
    strata = all_strata()
    assert len(strata) == 192
    assert len(set(strata)) == 192
    assert [s.index for s in strata] == list(range(192))
    with pytest.raises(DomainError):
        StratumKey(Sex.MALE, 96)
    with pytest.raises(DomainError):
        StratumKey(Sex.FEMALE, -1)


def test_parse_deaths_field_mapping():
    panel = parse_deaths(deaths_csv(["2014,1,female,95,120"]))
    assert panel.count(StratumKey(Sex.FEMALE, 95), MonthIndex(2014, 1)) == 120
    assert panel.start == MonthIndex(2014, 1) == panel.end


def test_parse_deaths_dense_fill():
    panel = parse_deaths(deaths_csv([
        "2015,1,male,42,3",
        "2015,3,female,10,2",
    ]))
    # absent cells inside the coverage range are structural zeros
    assert panel.count(StratumKey(Sex.MALE, 42), MonthIndex(2015, 3)) == 0
    assert panel.count(StratumKey(Sex.MALE, 42), MonthIndex(2015, 1)) == 3
    assert panel.n_months == 3


def test_parse_deaths_month_out_of_range():
    with pytest.raises(ParseError, match="line 2"):
        parse_deaths(deaths_csv(["2014,13,male,10,5"]))


def test_parse_deaths_duplicate():
    with pytest.raises(DuplicateRecordError, match="line 3"):
        parse_deaths(deaths_csv(["2014,1,male,10,5", "2014,1,male,10,6"]))


def test_parse_deaths_negative_count():
    with pytest.raises(DomainError):
        parse_deaths(deaths_csv(["2014,1,male,10,-5"]))


def test_parse_deaths_bad_header_and_empty():
    with pytest.raises(ParseError):
        parse_deaths(io.StringIO("year,month,sex,age,count\n"))
    with pytest.raises(ParseError):
        parse_deaths(io.StringIO(DEATHS_HEADER))


def test_deaths_roundtrip_identity(tiny_deaths):
    buf = io.StringIO()
    write_deaths(tiny_deaths, buf)
    buf.seek(0)
    again = parse_deaths(buf)
    assert again.start == tiny_deaths.start
    assert np.array_equal(again.counts, tiny_deaths.counts)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_deaths_roundtrip_random(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.integers(0, 50, size=(N_STRATA, 3)).astype(np.int64)
    panel = CountPanel(MonthIndex(2018, 11), counts)
    buf = io.StringIO()
    write_deaths(panel, buf)
    buf.seek(0)
    again = parse_deaths(buf)
    assert again.start == panel.start
    assert np.array_equal(again.counts, panel.counts)


def test_count_panel_validation():
    with pytest.raises(DomainError):
        CountPanel(MonthIndex(2014, 1), -np.ones((N_STRATA, 2), dtype=np.int64))
    with pytest.raises(DomainError):
        CountPanel(MonthIndex(2014, 1), np.ones((5, 2), dtype=np.int64))
    panel = CountPanel(MonthIndex(2014, 1), np.ones((N_STRATA, 2), dtype=np.int64))
    with pytest.raises(ValueError):
        panel.counts[0, 0] = 5  # immutable


def test_monthly_then_yearly_equals_direct(tiny_deaths):
    monthly = tiny_deaths.monthly_totals()
    by_year = sum(int(monthly[tiny_deaths.month_offset(MonthIndex(2015, m))])
                  for m in range(1, 13))
    assert by_year == tiny_deaths.year_total(2015)


def test_parse_population_mapping():
    panel = parse_population(full_population_csv([(2021, 1)], value=30_000))
    assert panel.size(StratumKey(Sex.MALE, 0), QuarterIndex(2021, 1)) == 30_000


def test_parse_population_accepts_open_age_group_growth():
    # the open-ended 95+ group can take any positive value, e.g. 8530
    buf = [POP_HEADER]
    for s in all_strata():
        value = 8530 if s.age_group == 95 else 12_000
        buf.append(f"2023,4,{s.sex},{s.age_group},{value}\n")
    panel = parse_population(io.StringIO("".join(buf)))
    assert panel.size(StratumKey(Sex.FEMALE, 95), QuarterIndex(2023, 4)) == 8530


def test_parse_population_missing_cell():
    buf = full_population_csv([(2019, 2)]).getvalue().splitlines(keepends=True)
    removed = [line for line in buf if not line.startswith("2019,2,female,17,")]
    with pytest.raises(CompletenessError, match="female, age 17"):
        parse_population(io.StringIO("".join(removed)))


def test_parse_population_nonpositive():
    buf = POP_HEADER + "2019,1,male,0,0\n"
    with pytest.raises(DomainError):
        parse_population(io.StringIO(buf))


def test_population_roundtrip(tiny_pop):
    buf = io.StringIO()
    write_population(tiny_pop, buf)
    buf.seek(0)
    again = parse_population(buf)
    assert again.start == tiny_pop.start
    assert np.allclose(again.sizes, tiny_pop.sizes)


def test_monthly_population_piecewise_constant():
    sizes = np.full((N_STRATA, 8), 500.0)
    stratum = StratumKey(Sex.FEMALE, 80)
    sizes[stratum.index, 0] = 1000.0  # 2018-Q1
    sizes[stratum.index, 1] = 1700.0  # 2018-Q2
    panel = PopulationPanel(QuarterIndex(2018, 1), sizes)
    assert monthly_population(panel, stratum, MonthIndex(2018, 2)) == 1000.0
    # a month in the next quarter draws from that quarter, not the previous one
    assert monthly_population(panel, stratum, MonthIndex(2018, 4)) == 1700.0
    with pytest.raises(CoverageError):
        monthly_population(panel, stratum, MonthIndex(2025, 1))


def test_monthly_population_constant_panel(tiny_pop):
    stratum = StratumKey(Sex.MALE, 30)
    values = {monthly_population(tiny_pop, stratum, MonthIndex(2018, m))
              for m in range(1, 13)}
    assert values == {10_000.0}


def test_aggregate_covid_daily_sums():
    records = [
        CovidRecord(datetime.date(2022, 7, 3), "80+", Sex.MALE, 3),
        CovidRecord(datetime.date(2022, 7, 29), "80+", Sex.FEMALE, 4),
    ]
    series = aggregate_covid_daily(records)
    col = series.month_offset(MonthIndex(2022, 7))
    assert series.by_band[3, col] == 7
    assert series.by_sex[0, col] == 3 and series.by_sex[1, col] == 4
    assert series.year_total(2022) == 7


def test_aggregate_covid_empty():
    series = aggregate_covid_daily([])
    assert series.by_band.sum() == 0
    assert series.by_sex.sum() == 0
    assert series.start == MonthIndex(2020, 3)
    assert series.end == MonthIndex(2023, 12)


def test_aggregate_covid_date_range():
    with pytest.raises(CoverageError):
        aggregate_covid_daily([CovidRecord(datetime.date(2019, 1, 1), "80+", None, 1)])


def test_aggregate_covid_marginal_mismatch_warns():
    records = [CovidRecord(datetime.date(2022, 7, 3), "80+", None, 3)]
    with pytest.warns(UserWarning, match="marginals disagree"):
        aggregate_covid_daily(records)


def test_parse_covid_csv():
    csv_text = (
        "date,age_band,sex,count\n"
        "2022-07-03,80+,male,3\n"
        "2022-07-29,80+,female,4\n"
    )
    series = parse_covid(io.StringIO(csv_text))
    assert series.year_total(2022) == 7
    with pytest.raises(ParseError):
        parse_covid(io.StringIO("date,age_band,sex,count\nnot-a-date,80+,male,1\n"))
    with pytest.raises(ParseError):
        parse_covid(io.StringIO("date,age_band,sex,count\n2022-07-03,81+,male,1\n"))
