import pytest
from hypothesis import given
from hypothesis import strategies as st

from excessmort.exceptions import DomainError
from excessmort.periods import (
    MonthIndex,
    QuarterIndex,
    days_in_month,
    month_range,
    quarter_range,
)


@pytest.mark.parametrize(
    "year, month, days",
    [
        (2016, 2, 29),  # leap year
        (2015, 2, 28),
        (2000, 2, 29),  # divisible by 400
        (1900, 2, 28),  # century, not leap
        (2018, 4, 30),
        (2018, 1, 31),
        (2023, 12, 31),
    ],
)
def test_days_in_month(year, month, days):
    assert days_in_month(year, month) == days
    assert MonthIndex(year, month).days == days


@given(st.integers(1990, 2100), st.integers(1, 12))
def test_days_always_valid(year, month):
    assert MonthIndex(year, month).days in (28, 29, 30, 31)


def test_month_ordering_matches_calendar():
    months = month_range(MonthIndex(2019, 1), MonthIndex(2021, 12))
    assert months == sorted(months)
    assert months[0] < months[1]
    assert MonthIndex(2019, 12) < MonthIndex(2020, 1)


@given(st.integers(1990 * 12, 2100 * 12))
def test_month_ordinal_roundtrip(n):
    m = MonthIndex.from_ordinal(n)
    assert m.ordinal == n
    assert MonthIndex.parse(str(m)) == m


def test_month_validation():
    with pytest.raises(DomainError):
        MonthIndex(2014, 13)
    with pytest.raises(DomainError):
        MonthIndex(2014, 0)
    with pytest.raises(DomainError):
        MonthIndex.parse("2014/01")


def test_month_shift():
    assert MonthIndex(2019, 12).shift(1) == MonthIndex(2020, 1)
    # a six-year window ending 2019-12 starts at 2014-01
    assert MonthIndex(2019, 12).shift(-(12 * 6 - 1)) == MonthIndex(2014, 1)


def test_quarters():
    assert MonthIndex(2018, 2).quarter == QuarterIndex(2018, 1)
    assert MonthIndex(2018, 4).quarter == QuarterIndex(2018, 2)
    assert QuarterIndex.parse("2021-Q1") == QuarterIndex(2021, 1)
    assert str(QuarterIndex(2021, 1)) == "2021-Q1"
    assert QuarterIndex(2020, 4).shift(1) == QuarterIndex(2021, 1)
    assert QuarterIndex(2021, 2).months == (
        MonthIndex(2021, 4), MonthIndex(2021, 5), MonthIndex(2021, 6)
    )
    with pytest.raises(DomainError):
        QuarterIndex(2021, 5)


def test_ranges():
    assert len(month_range(MonthIndex(2014, 1), MonthIndex(2019, 12))) == 72
    assert len(quarter_range(QuarterIndex(2014, 1), QuarterIndex(2023, 4))) == 40
    with pytest.raises(DomainError):
        month_range(MonthIndex(2020, 1), MonthIndex(2019, 12))
