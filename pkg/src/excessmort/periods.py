"""Calendar arithmetic for monthly and quarterly panels."""

from __future__ import annotations

import calendar
import re
from dataclasses import dataclass

from .exceptions import DomainError


def days_in_month(year: int, month: int) -> int:
    """Number of days in a calendar month under the Gregorian leap-year rule."""
    return calendar.monthrange(year, month)[1]


@dataclass(frozen=True, order=True)
class MonthIndex:
    """A calendar month. Ordering follows calendar order."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise DomainError(f"month must be in 1..12, got {self.month}")

    @property
    def ordinal(self) -> int:
        """Months elapsed since 0000-01; consecutive months differ by 1."""
        return self.year * 12 + self.month - 1

    @classmethod
    def from_ordinal(cls, n: int) -> MonthIndex:
        return cls(n // 12, n % 12 + 1)

    def shift(self, months: int) -> MonthIndex:
        return MonthIndex.from_ordinal(self.ordinal + months)

    @property
    def days(self) -> int:
        return days_in_month(self.year, self.month)

    @property
    def quarter(self) -> QuarterIndex:
        return QuarterIndex(self.year, (self.month - 1) // 3 + 1)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    @classmethod
    def parse(cls, text: str) -> MonthIndex:
        m = re.fullmatch(r"(\d{4})-(\d{2})", text.strip())
        if m is None:
            raise DomainError(f"expected YYYY-MM, got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


@dataclass(frozen=True, order=True)
class QuarterIndex:
    """A calendar quarter (1..4)."""

    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise DomainError(f"quarter must be in 1..4, got {self.quarter}")

    @property
    def ordinal(self) -> int:
        return self.year * 4 + self.quarter - 1

    @classmethod
    def from_ordinal(cls, n: int) -> QuarterIndex:
        return cls(n // 4, n % 4 + 1)

    def shift(self, quarters: int) -> QuarterIndex:
        return QuarterIndex.from_ordinal(self.ordinal + quarters)

    @property
    def months(self) -> tuple[MonthIndex, MonthIndex, MonthIndex]:
        first = (self.quarter - 1) * 3 + 1
        return tuple(MonthIndex(self.year, first + i) for i in range(3))

    def __str__(self) -> str:
        return f"{self.year:04d}-Q{self.quarter}"

    @classmethod
    def parse(cls, text: str) -> QuarterIndex:
        m = re.fullmatch(r"(\d{4})-?Q(\d)", text.strip())
        if m is None:
            raise DomainError(f"expected YYYY-Qn, got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


def month_range(start: MonthIndex, end: MonthIndex) -> list[MonthIndex]:
    """Inclusive list of months from start to end."""
    if end < start:
        raise DomainError(f"empty month range {start}..{end}")
    return [MonthIndex.from_ordinal(n) for n in range(start.ordinal, end.ordinal + 1)]


def quarter_range(start: QuarterIndex, end: QuarterIndex) -> list[QuarterIndex]:
    """Inclusive list of quarters from start to end."""
    if end < start:
        raise DomainError(f"empty quarter range {start}..{end}")
    return [QuarterIndex.from_ordinal(n) for n in range(start.ordinal, end.ordinal + 1)]
