"""Stratified death-count and population panels, with CSV ingestion.

Every panel is dense: a (stratum, period) array covering a contiguous
period range, with strata ordered sex-major (all male age groups first).
"""

from __future__ import annotations

import csv
import datetime
import enum
import warnings
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .exceptions import (
    CompletenessError,
    CoverageError,
    DomainError,
    DuplicateRecordError,
    ParseError,
)
from .periods import MonthIndex, QuarterIndex, month_range

AGE_GROUP_MAX = 95  # index 95 means "95 years and over"
N_AGE_GROUPS = AGE_GROUP_MAX + 1
N_STRATA = 2 * N_AGE_GROUPS

COVID_AGE_BANDS = ("0-59", "60-69", "70-79", "80+")

# Default admissible range for daily covid records.
COVID_DATE_MIN = datetime.date(2020, 3, 29)
COVID_DATE_MAX = datetime.date(2023, 12, 31)


class Sex(enum.Enum):
    MALE = "male"
    FEMALE = "female"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> Sex:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DomainError(f"sex must be 'male' or 'female', got {text!r}") from None


SEXES = (Sex.MALE, Sex.FEMALE)


@dataclass(frozen=True)
class StratumKey:
    """One population cell: a sex and a one-year age group (95 = open-ended)."""

    sex: Sex
    age_group: int

    def __post_init__(self):
        if not 0 <= self.age_group <= AGE_GROUP_MAX:
            raise DomainError(f"age_group must be in 0..{AGE_GROUP_MAX}, got {self.age_group}")

    @property
    def index(self) -> int:
        """Position in the canonical stratum ordering (sex major, age minor)."""
        return SEXES.index(self.sex) * N_AGE_GROUPS + self.age_group


def all_strata() -> tuple[StratumKey, ...]:
    """All 192 strata in canonical order: (male, 0) .. (male, 95), (female, 0) .. (female, 95)."""
    return tuple(StratumKey(sex, age) for sex in SEXES for age in range(N_AGE_GROUPS))


_STRATA = all_strata()

# Per-stratum attribute vectors in canonical order, used for masks and grouping.
STRATUM_AGES = np.array([s.age_group for s in _STRATA])
STRATUM_SEX_CODES = np.array([SEXES.index(s.sex) for s in _STRATA])


@dataclass(frozen=True)
class CountPanel:
    """Monthly death counts for all strata over a contiguous month range."""

    start: MonthIndex
    counts: np.ndarray  # shape (N_STRATA, n_months), non-negative integers

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != N_STRATA:
            raise DomainError(f"counts must have shape ({N_STRATA}, n_months), got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            raise DomainError("counts must be integers")
        if (c < 0).any():
            raise DomainError("counts must be non-negative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def n_months(self) -> int:
        return self.counts.shape[1]

    @property
    def end(self) -> MonthIndex:
        return self.start.shift(self.n_months - 1)

    @property
    def months(self) -> list[MonthIndex]:
        return month_range(self.start, self.end)

    def month_offset(self, month: MonthIndex) -> int:
        off = month.ordinal - self.start.ordinal
        if not 0 <= off < self.n_months:
            raise CoverageError(f"month {month} outside coverage {self.start}..{self.end}")
        return off

    def covers(self, start: MonthIndex, end: MonthIndex) -> bool:
        return self.start <= start and end <= self.end

    def count(self, stratum: StratumKey, month: MonthIndex) -> int:
        return int(self.counts[stratum.index, self.month_offset(month)])

    def monthly_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def year_total(self, year: int) -> int:
        months = [m for m in self.months if m.year == year]
        if len(months) != 12:
            raise CoverageError(f"panel does not cover all 12 months of {year}")
        sl = slice(self.month_offset(months[0]), self.month_offset(months[-1]) + 1)
        return int(self.counts[:, sl].sum())


@dataclass(frozen=True)
class PopulationPanel:
    """Quarterly population sizes for all strata over a contiguous quarter range."""

    start: QuarterIndex
    sizes: np.ndarray  # shape (N_STRATA, n_quarters), strictly positive

    def __post_init__(self):
        s = np.asarray(self.sizes, dtype=float)
        if s.ndim != 2 or s.shape[0] != N_STRATA:
            raise DomainError(f"sizes must have shape ({N_STRATA}, n_quarters), got {s.shape}")
        if not np.isfinite(s).all() or (s <= 0).any():
            raise DomainError("population sizes must be positive and finite")
        s.flags.writeable = False
        object.__setattr__(self, "sizes", s)

    @property
    def n_quarters(self) -> int:
        return self.sizes.shape[1]

    @property
    def end(self) -> QuarterIndex:
        return self.start.shift(self.n_quarters - 1)

    def quarter_offset(self, quarter: QuarterIndex) -> int:
        off = quarter.ordinal - self.start.ordinal
        if not 0 <= off < self.n_quarters:
            raise CoverageError(f"quarter {quarter} outside coverage {self.start}..{self.end}")
        return off

    def covers_months(self, start: MonthIndex, end: MonthIndex) -> bool:
        return self.start <= start.quarter and end.quarter <= self.end

    def size(self, stratum: StratumKey, quarter: QuarterIndex) -> float:
        return float(self.sizes[stratum.index, self.quarter_offset(quarter)])

    def monthly_sizes(self, months: Sequence[MonthIndex]) -> np.ndarray:
        """Population per (stratum, month), quarterly values held constant within a quarter."""
        cols = [self.quarter_offset(m.quarter) for m in months]
        return self.sizes[:, cols]

    def yearly_mean_sizes(self, year: int) -> np.ndarray:
        """Per-stratum mean of the four quarterly sizes of a year."""
        quarters = [QuarterIndex(year, q) for q in range(1, 5)]
        cols = [self.quarter_offset(q) for q in quarters]
        return self.sizes[:, cols].mean(axis=1)


def monthly_population(panel: PopulationPanel, stratum: StratumKey, month: MonthIndex) -> float:
    """Population for a month: the containing quarter's value, piecewise constant."""
    return panel.size(stratum, month.quarter)


@dataclass(frozen=True)
class CovidDeathSeries:
    """Monthly covid-attributed deaths by coarse age band and, separately, by sex."""

    start: MonthIndex
    by_band: np.ndarray  # shape (4, n_months)
    by_sex: np.ndarray  # shape (2, n_months)

    def __post_init__(self):
        b = np.asarray(self.by_band)
        s = np.asarray(self.by_sex)
        if b.shape[0] != len(COVID_AGE_BANDS) or s.shape[0] != 2 or b.shape[1] != s.shape[1]:
            raise DomainError(f"inconsistent covid series shapes {b.shape} / {s.shape}")
        b.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "by_band", b)
        object.__setattr__(self, "by_sex", s)

    @property
    def n_months(self) -> int:
        return self.by_band.shape[1]

    @property
    def end(self) -> MonthIndex:
        return self.start.shift(self.n_months - 1)

    @property
    def months(self) -> list[MonthIndex]:
        return month_range(self.start, self.end)

    def month_offset(self, month: MonthIndex) -> int:
        off = month.ordinal - self.start.ordinal
        if not 0 <= off < self.n_months:
            raise CoverageError(f"month {month} outside coverage {self.start}..{self.end}")
        return off

    def monthly_totals(self) -> np.ndarray:
        return self.by_band.sum(axis=0)

    def year_total(self, year: int) -> int:
        cols = [i for i, m in enumerate(self.months) if m.year == year]
        return int(self.by_band[:, cols].sum())


def covid_band_of_age(age_group: int) -> int:
    """Index into COVID_AGE_BANDS for a one-year age group."""
    if not 0 <= age_group <= AGE_GROUP_MAX:
        raise DomainError(f"age_group must be in 0..{AGE_GROUP_MAX}, got {age_group}")
    if age_group < 60:
        return 0
    if age_group < 70:
        return 1
    if age_group < 80:
        return 2
    return 3


def _read_header(reader, required: Sequence[str], what: str) -> dict[str, int]:
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"empty {what} file: missing header row") from None
    names = [h.strip().lower() for h in header]
    positions = {}
    for col in required:
        if col not in names:
            raise ParseError(f"{what} header must contain column {col!r}, got {names}", line=1)
        positions[col] = names.index(col)
    return positions


def _int_field(row: list[str], pos: int, name: str, line: int) -> int:
    try:
        return int(row[pos].strip())
    except (ValueError, IndexError):
        raise ParseError(f"column {name!r} is not an integer: {row!r}", line=line) from None


def parse_deaths(source: IO[str]) -> CountPanel:
    """Parse a deaths CSV (year,month,sex,age_group,count) into a dense CountPanel.

    Coverage is the file's min..max month; absent (stratum, month) rows are
    structural zeros. Raises ParseError / DuplicateRecordError / DomainError
    with the offending line number.
    """
    reader = csv.reader(source)
    pos = _read_header(reader, ("year", "month", "sex", "age_group", "count"), "deaths")
    records: dict[tuple[int, int], int] = {}
    min_ord = max_ord = None
    for line, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        year = _int_field(row, pos["year"], "year", line)
        month = _int_field(row, pos["month"], "month", line)
        age = _int_field(row, pos["age_group"], "age_group", line)
        count = _int_field(row, pos["count"], "count", line)
        try:
            sex = Sex.parse(row[pos["sex"]])
            stratum = StratumKey(sex, age)
            mi = MonthIndex(year, month)
        except DomainError as exc:
            raise ParseError(str(exc), line=line) from None
        if count < 0:
            raise DomainError(f"line {line}: count must be non-negative, got {count}")
        key = (stratum.index, mi.ordinal)
        if key in records:
            raise DuplicateRecordError(
                f"duplicate record for ({sex}, age {age}, {mi})", line=line
            )
        records[key] = count
        min_ord = mi.ordinal if min_ord is None else min(min_ord, mi.ordinal)
        max_ord = mi.ordinal if max_ord is None else max(max_ord, mi.ordinal)
    if min_ord is None:
        raise ParseError("deaths file contains no data rows")
    n_months = max_ord - min_ord + 1
    counts = np.zeros((N_STRATA, n_months), dtype=np.int64)
    for (si, mo), count in records.items():
        counts[si, mo - min_ord] = count
    return CountPanel(MonthIndex.from_ordinal(min_ord), counts)


def write_deaths(panel: CountPanel, sink: IO[str]) -> None:
    """Serialise a CountPanel to the deaths CSV schema (all cells, zeros included)."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["year", "month", "sex", "age_group", "count"])
    for mo, month in enumerate(panel.months):
        for stratum in _STRATA:
            writer.writerow(
                [month.year, month.month, stratum.sex, stratum.age_group,
                 int(panel.counts[stratum.index, mo])]
            )


def parse_population(source: IO[str]) -> PopulationPanel:
    """Parse a population CSV (year,quarter,sex,age_group,population) into a PopulationPanel.

    Every (stratum, quarter) cell inside the file's quarter range must be
    present (CompletenessError otherwise); population values must be > 0.
    """
    reader = csv.reader(source)
    pos = _read_header(reader, ("year", "quarter", "sex", "age_group", "population"), "population")
    records: dict[tuple[int, int], float] = {}
    min_ord = max_ord = None
    for line, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        year = _int_field(row, pos["year"], "year", line)
        quarter = _int_field(row, pos["quarter"], "quarter", line)
        age = _int_field(row, pos["age_group"], "age_group", line)
        try:
            value = float(row[pos["population"]].strip())
        except (ValueError, IndexError):
            raise ParseError(f"column 'population' is not a number: {row!r}", line=line) from None
        try:
            sex = Sex.parse(row[pos["sex"]])
            stratum = StratumKey(sex, age)
            qi = QuarterIndex(year, quarter)
        except DomainError as exc:
            raise ParseError(str(exc), line=line) from None
        if not value > 0:
            raise DomainError(f"line {line}: population must be positive, got {value}")
        key = (stratum.index, qi.ordinal)
        if key in records:
            raise DuplicateRecordError(
                f"duplicate record for ({sex}, age {age}, {qi})", line=line
            )
        records[key] = value
        min_ord = qi.ordinal if min_ord is None else min(min_ord, qi.ordinal)
        max_ord = qi.ordinal if max_ord is None else max(max_ord, qi.ordinal)
    if min_ord is None:
        raise ParseError("population file contains no data rows")
    n_quarters = max_ord - min_ord + 1
    if len(records) != N_STRATA * n_quarters:
        missing = _first_missing_cell(records, min_ord, n_quarters)
        raise CompletenessError(
            f"population panel is missing {N_STRATA * n_quarters - len(records)} cells "
            f"in its declared range, e.g. {missing}"
        )
    sizes = np.empty((N_STRATA, n_quarters), dtype=float)
    for (si, qo), value in records.items():
        sizes[si, qo - min_ord] = value
    return PopulationPanel(QuarterIndex.from_ordinal(min_ord), sizes)


def _first_missing_cell(records, min_ord: int, n_quarters: int) -> str:
    for qo in range(n_quarters):
        for stratum in _STRATA:
            if (stratum.index, min_ord + qo) not in records:
                q = QuarterIndex.from_ordinal(min_ord + qo)
                return f"({stratum.sex}, age {stratum.age_group}, {q})"
    return "<none>"


def write_population(panel: PopulationPanel, sink: IO[str]) -> None:
    """Serialise a PopulationPanel to the population CSV schema."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["year", "quarter", "sex", "age_group", "population"])
    for qo in range(panel.n_quarters):
        q = panel.start.shift(qo)
        for stratum in _STRATA:
            writer.writerow(
                [q.year, q.quarter, stratum.sex, stratum.age_group,
                 repr(float(panel.sizes[stratum.index, qo]))]
            )


@dataclass(frozen=True)
class CovidRecord:
    """One daily covid-attributed death record; band or sex may be unknown."""

    date: datetime.date
    band: str | None
    sex: Sex | None
    count: int


def aggregate_covid_daily(
    records: Iterable[CovidRecord],
    date_min: datetime.date = COVID_DATE_MIN,
    date_max: datetime.date = COVID_DATE_MAX,
) -> CovidDeathSeries:
    """Aggregate daily covid death records into monthly totals per band and per sex.

    A record with both band and sex contributes to both marginals. If the two
    marginals end up with different monthly totals, a warning is issued (the
    source data may publish the marginals independently).
    """
    start = MonthIndex(date_min.year, date_min.month)
    end = MonthIndex(date_max.year, date_max.month)
    n_months = end.ordinal - start.ordinal + 1
    by_band = np.zeros((len(COVID_AGE_BANDS), n_months), dtype=np.int64)
    by_sex = np.zeros((2, n_months), dtype=np.int64)
    for rec in records:
        if not date_min <= rec.date <= date_max:
            raise CoverageError(
                f"covid record date {rec.date} outside {date_min}..{date_max}"
            )
        if rec.count < 0:
            raise DomainError(f"covid count must be non-negative, got {rec.count}")
        mo = MonthIndex(rec.date.year, rec.date.month).ordinal - start.ordinal
        if rec.band is not None:
            if rec.band not in COVID_AGE_BANDS:
                raise DomainError(f"unknown covid age band {rec.band!r}")
            by_band[COVID_AGE_BANDS.index(rec.band), mo] += rec.count
        if rec.sex is not None:
            by_sex[SEXES.index(rec.sex), mo] += rec.count
    band_tot = by_band.sum(axis=0)
    sex_tot = by_sex.sum(axis=0)
    if (band_tot != sex_tot).any():
        bad = int(np.argmax(band_tot != sex_tot))
        warnings.warn(
            f"covid band/sex marginals disagree from {start.shift(bad)} "
            f"({int(band_tot[bad])} vs {int(sex_tot[bad])})",
            stacklevel=2,
        )
    return CovidDeathSeries(start, by_band, by_sex)


def parse_covid(
    source: IO[str],
    date_min: datetime.date = COVID_DATE_MIN,
    date_max: datetime.date = COVID_DATE_MAX,
) -> CovidDeathSeries:
    """Parse a covid CSV (date,age_band,sex,count); empty band/sex cells mean unknown."""
    reader = csv.reader(source)
    pos = _read_header(reader, ("date", "age_band", "sex", "count"), "covid")
    records = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        try:
            date = datetime.date.fromisoformat(row[pos["date"]].strip())
        except (ValueError, IndexError):
            raise ParseError(f"column 'date' is not ISO-8601: {row!r}", line=line) from None
        band_text = row[pos["age_band"]].strip() if pos["age_band"] < len(row) else ""
        sex_text = row[pos["sex"]].strip() if pos["sex"] < len(row) else ""
        count = _int_field(row, pos["count"], "count", line)
        band = band_text or None
        if band is not None and band not in COVID_AGE_BANDS:
            raise ParseError(f"unknown age_band {band!r}", line=line)
        try:
            sex = Sex.parse(sex_text) if sex_text else None
        except DomainError as exc:
            raise ParseError(str(exc), line=line) from None
        records.append(CovidRecord(date, band, sex, count))
    return aggregate_covid_daily(records, date_min, date_max)
