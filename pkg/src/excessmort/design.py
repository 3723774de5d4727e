"""Regression design for the monthly death-count model.

The linear predictor has 200 terms: an intercept, a linear month counter,
one-hot one-year age groups (baseline age 0), a sex indicator, one-hot
month-of-year (baseline January), and three interaction blocks in which a
coarse 8-band age grouping multiplies the month counter, the sex indicator
and the month-of-year dummies. Expected counts are proportional to
population x days-in-month, entering through a log offset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .exceptions import CoverageError, DomainError
from .panels import (
    AGE_GROUP_MAX,
    N_STRATA,
    STRATUM_AGES,
    STRATUM_SEX_CODES,
    SEXES,
    CountPanel,
    PopulationPanel,
    Sex,
    StratumKey,
    all_strata,
)
from .periods import MonthIndex, month_range

COARSE_BAND_LABELS = ("<30", "30-69", "70-74", "75-79", "80-84", "85-89", "90-94", "95+")
N_COARSE_BANDS = len(COARSE_BAND_LABELS)
N_COLUMNS = 200


def enumerate_strata() -> tuple[StratumKey, ...]:
    """All strata in the fixed design row ordering (sex major, age minor)."""
    return all_strata()


def coarse_band(age_group: int) -> int:
    """Map a one-year age group to its coarse band index (0..7)."""
    if not 0 <= age_group <= AGE_GROUP_MAX:
        raise DomainError(f"age_group must be in 0..{AGE_GROUP_MAX}, got {age_group}")
    if age_group < 30:
        return 0
    if age_group < 70:
        return 1
    return 2 + min((age_group - 70) // 5, 5)


STRATUM_BANDS = np.array([coarse_band(a) for a in STRATUM_AGES])


def ten_year_band(age_group: int) -> int:
    """Ten-year reporting band: 0-9, ..., 80-89, 90+ (index 0..9)."""
    if not 0 <= age_group <= AGE_GROUP_MAX:
        raise DomainError(f"age_group must be in 0..{AGE_GROUP_MAX}, got {age_group}")
    return min(age_group // 10, 9)


TEN_YEAR_BAND_LABELS = tuple(
    f"{10 * i}-{10 * i + 9}" for i in range(9)
) + ("90+",)


@dataclass(frozen=True)
class DesignSpec:
    """Fit window, time origin and reference categories for the encoder.

    The age baseline (age 0) and month baseline (January) are fixed; the sex
    and coarse-band baselines are configurable and do not affect fitted means.
    """

    fit_start: MonthIndex
    fit_end: MonthIndex
    time_origin: MonthIndex | None = None
    baseline_sex: Sex = Sex.MALE
    baseline_band: int = 0

    def __post_init__(self):
        if self.fit_end < self.fit_start:
            raise DomainError(f"empty fit window {self.fit_start}..{self.fit_end}")
        if not 0 <= self.baseline_band < N_COARSE_BANDS:
            raise DomainError(f"baseline_band must be in 0..{N_COARSE_BANDS - 1}")

    @property
    def origin(self) -> MonthIndex:
        return self.time_origin if self.time_origin is not None else self.fit_start

    @property
    def nonbaseline_bands(self) -> tuple[int, ...]:
        return tuple(b for b in range(N_COARSE_BANDS) if b != self.baseline_band)

    def with_window(self, fit_start: MonthIndex, fit_end: MonthIndex) -> DesignSpec:
        return replace(self, fit_start=fit_start, fit_end=fit_end)


def column_names(spec: DesignSpec) -> list[str]:
    """Names of the 200 design columns, in column order."""
    names = ["intercept", "t"]
    names += [f"age_{a}" for a in range(1, AGE_GROUP_MAX + 1)]
    other_sex = next(s for s in SEXES if s is not spec.baseline_sex)
    names.append(f"sex_{other_sex}")
    names += [f"month_{m}" for m in range(2, 13)]
    bands = spec.nonbaseline_bands
    names += [f"band[{COARSE_BAND_LABELS[b]}]:t" for b in bands]
    names += [f"band[{COARSE_BAND_LABELS[b]}]:sex_{other_sex}" for b in bands]
    for b in bands:
        names += [f"band[{COARSE_BAND_LABELS[b]}]:month_{m}" for m in range(2, 13)]
    assert len(names) == N_COLUMNS
    return names


def encode_row(stratum: StratumKey, month: MonthIndex, spec: DesignSpec) -> np.ndarray:
    """Feature vector of length 200 for one (stratum, month) cell."""
    x = np.zeros(N_COLUMNS)
    t = month.ordinal - spec.origin.ordinal
    x[0] = 1.0
    x[1] = t
    if stratum.age_group >= 1:
        x[2 + stratum.age_group - 1] = 1.0
    sex_ind = 1.0 if stratum.sex is not spec.baseline_sex else 0.0
    x[97] = sex_ind
    if month.month >= 2:
        x[98 + month.month - 2] = 1.0
    band = coarse_band(stratum.age_group)
    bands = spec.nonbaseline_bands
    if band != spec.baseline_band:
        k = bands.index(band)
        x[109 + k] = t
        x[116 + k] = sex_ind
        if month.month >= 2:
            x[123 + 11 * k + month.month - 2] = 1.0
    return x


@dataclass(frozen=True)
class DesignMatrix:
    """Encoded rows for a set of months, one row per (month, stratum).

    Rows are ordered month-major: all 192 strata of the first month, then the
    next month, and so on. `row_strata` and `row_months` give each row's
    stratum index and month ordinal; `row_ages`, `row_sexes` and `row_bands`
    are the matching per-row attributes used for selections.
    """

    X: np.ndarray
    y: np.ndarray
    offset: np.ndarray
    columns: tuple[str, ...]
    months: tuple[MonthIndex, ...]
    row_strata: np.ndarray
    row_months: np.ndarray
    spec: DesignSpec

    def __post_init__(self):
        for name in ("X", "y", "offset", "row_strata", "row_months"):
            getattr(self, name).flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def row_ages(self) -> np.ndarray:
        return STRATUM_AGES[self.row_strata]

    @property
    def row_sexes(self) -> np.ndarray:
        return STRATUM_SEX_CODES[self.row_strata]

    @property
    def row_bands(self) -> np.ndarray:
        return STRATUM_BANDS[self.row_strata]

    @property
    def row_years(self) -> np.ndarray:
        return self.row_months // 12


def _encode_batch(months: Sequence[MonthIndex], spec: DesignSpec) -> tuple[np.ndarray, ...]:
    """Vectorised encoder for the full (month x stratum) grid; matches encode_row."""
    n_m = len(months)
    n = n_m * N_STRATA
    row_strata = np.tile(np.arange(N_STRATA), n_m)
    month_ords = np.array([m.ordinal for m in months])
    row_months = np.repeat(month_ords, N_STRATA)
    t = (row_months - spec.origin.ordinal).astype(float)
    ages = STRATUM_AGES[row_strata]
    sex_ind = (STRATUM_SEX_CODES[row_strata] != SEXES.index(spec.baseline_sex)).astype(float)
    moy = np.repeat(np.array([m.month for m in months]), N_STRATA)
    bands = STRATUM_BANDS[row_strata]

    X = np.zeros((n, N_COLUMNS))
    rows = np.arange(n)
    X[:, 0] = 1.0
    X[:, 1] = t
    has_age = ages >= 1
    X[rows[has_age], 2 + ages[has_age] - 1] = 1.0
    X[:, 97] = sex_ind
    has_moy = moy >= 2
    X[rows[has_moy], 98 + moy[has_moy] - 2] = 1.0

    band_pos = np.full(N_COARSE_BANDS, -1)
    for k, b in enumerate(spec.nonbaseline_bands):
        band_pos[b] = k
    k_of_row = band_pos[bands]
    nb = k_of_row >= 0
    X[rows[nb], 109 + k_of_row[nb]] = t[nb]
    X[rows[nb], 116 + k_of_row[nb]] = sex_ind[nb]
    nbm = nb & has_moy
    X[rows[nbm], 123 + 11 * k_of_row[nbm] + moy[nbm] - 2] = 1.0
    return X, row_strata, row_months


def write_design_csv(design: DesignMatrix, sink) -> None:
    """Debug dump of the design matrix for cross-checking against other tools."""
    writer = csv.writer(sink, lineterminator="\n")
    strata = all_strata()
    writer.writerow(["sex", "age_group", "year", "month", "response", "offset",
                     *design.columns])
    for i in range(design.n_rows):
        stratum = strata[design.row_strata[i]]
        month = MonthIndex.from_ordinal(int(design.row_months[i]))
        writer.writerow(
            [stratum.sex, stratum.age_group, month.year, month.month,
             design.y[i], repr(float(design.offset[i])),
             *(repr(float(v)) for v in design.X[i])]
        )


def build_design(
    deaths: CountPanel,
    pop: PopulationPanel,
    spec: DesignSpec,
    months: Sequence[MonthIndex] | None = None,
) -> DesignMatrix:
    """Build the design matrix, offsets and response for a set of months.

    `months` defaults to the spec's fit window. The offset for each row is
    log(population) + log(days in month); the response is the death count.
    """
    if months is None:
        months = month_range(spec.fit_start, spec.fit_end)
    months = list(months)
    if not months:
        raise DomainError("no months to encode")
    for m in months:
        if not deaths.start <= m <= deaths.end:
            raise CoverageError(f"deaths panel does not cover {m}")
        if not pop.covers_months(m, m):
            raise CoverageError(f"population panel does not cover {m}")

    X, row_strata, row_months = _encode_batch(months, spec)
    pops = pop.monthly_sizes(months)  # (N_STRATA, n_months)
    days = np.array([m.days for m in months], dtype=float)
    offset = (np.log(pops) + np.log(days)[None, :]).T.reshape(-1)
    cols = [deaths.month_offset(m) for m in months]
    y = deaths.counts[:, cols].T.reshape(-1).astype(float)
    return DesignMatrix(
        X=X,
        y=y,
        offset=offset,
        columns=tuple(column_names(spec)),
        months=tuple(months),
        row_strata=row_strata,
        row_months=row_months,
        spec=spec,
    )
