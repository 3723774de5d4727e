"""End-to-end analysis: fit, project, aggregate, benchmark and export.

One fitted model and one shared set of coefficient samples serve every
aggregation (monthly, yearly, cumulative, by age band, by sex), so the
decompositions are mutually consistent. The standardised-rate benchmark and
the covid-attribution comparison reuse the same panels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .design import (
    TEN_YEAR_BAND_LABELS,
    DesignMatrix,
    DesignSpec,
    build_design,
    ten_year_band,
)
from .exceptions import (
    AlignmentError,
    CoverageError,
    DomainError,
    NonConvergenceError,
)
from .glm import QuasiPoissonRegression
from .panels import (
    COVID_AGE_BANDS,
    N_STRATA,
    SEXES,
    STRATUM_AGES,
    STRATUM_SEX_CODES,
    CountPanel,
    CovidDeathSeries,
    PopulationPanel,
    covid_band_of_age,
    parse_covid,
    parse_deaths,
    parse_population,
)
from .periods import MonthIndex, QuarterIndex, month_range, quarter_range
from .smr import (
    RateTrend,
    StandardPopulation,
    fit_rate_trend,
    rate_series,
    smr_excess,
)
from .uncertainty import (
    DEFAULT_SAMPLES,
    ExcessEstimate,
    excess_estimate,
    iter_mu_chunks,
    sample_coefficients,
)

_CHUNK = 256


@dataclass(frozen=True)
class AnalysisConfig:
    """Inputs, windows and knobs for one end-to-end run."""

    deaths_path: Path
    population_path: Path
    fit_start: MonthIndex
    fit_end: MonthIndex
    project_start: MonthIndex
    project_end: MonthIndex
    covid_path: Path | None = None
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    std_quarter: QuarterIndex = QuarterIndex(2021, 1)
    out_dir: Path = Path("out")
    fmt: str = "csv"

    def __post_init__(self):
        if self.fit_end < self.fit_start:
            raise DomainError(f"empty fit window {self.fit_start}..{self.fit_end}")
        if self.project_end < self.project_start:
            raise DomainError(
                f"empty projection window {self.project_start}..{self.project_end}"
            )
        if not self.fit_end < self.project_start:
            raise DomainError(
                f"fit window must precede projection window "
                f"({self.fit_end} vs {self.project_start})"
            )
        if self.fmt not in ("csv", "json"):
            raise DomainError(f"format must be 'csv' or 'json', got {self.fmt!r}")
        if self.samples < 2:
            raise DomainError(f"need at least 2 samples, got {self.samples}")
        for name in ("fit_start", "project_start"):
            if getattr(self, name).month != 1:
                raise DomainError(f"{name} must be a January month for yearly outputs")
        for name in ("fit_end", "project_end"):
            if getattr(self, name).month != 12:
                raise DomainError(f"{name} must be a December month for yearly outputs")

    @property
    def fit_years(self) -> list[int]:
        return list(range(self.fit_start.year, self.fit_end.year + 1))

    @property
    def projection_years(self) -> list[int]:
        return list(range(self.project_start.year, self.project_end.year + 1))


def sampling_seed(master_seed: int, fit_start: MonthIndex,
                  fit_end: MonthIndex) -> np.random.SeedSequence:
    """Per-fit-window seed: identical windows give identical sample sets."""
    return np.random.SeedSequence(
        entropy=master_seed, spawn_key=(fit_start.ordinal, fit_end.ordinal)
    )


# Stratum groupings used for disaggregated outputs, all over the canonical
# 192-stratum ordering.
def _group_matrix() -> tuple[np.ndarray, list[tuple[str, str]]]:
    groups: list[tuple[str, str]] = []
    rows = []
    for b, label in enumerate(COVID_AGE_BANDS):
        rows.append(np.array([covid_band_of_age(a) == b for a in STRATUM_AGES]))
        groups.append(("covid_band", label))
    for code, sex in enumerate(SEXES):
        rows.append(STRATUM_SEX_CODES == code)
        groups.append(("sex", str(sex)))
    for b, label in enumerate(TEN_YEAR_BAND_LABELS):
        rows.append(np.array([ten_year_band(a) == b for a in STRATUM_AGES]))
        groups.append(("tenyear_band", label))
    return np.array(rows, dtype=float), groups


_GROUPS, _GROUP_KEYS = _group_matrix()


@dataclass
class YearlyRates:
    """Observed and modelled standardised rates for one year."""

    year: int
    observed: float
    qpr_mean: float | None
    qpr_ci: tuple[float, float] | None
    smrlr_trend: float | None


@dataclass
class AnalysisResult:
    """Everything run_analysis computes, before any file is written."""

    config: AnalysisConfig
    model: QuasiPoissonRegression
    monthly_actuals: dict[MonthIndex, int]
    monthly_expected: dict[MonthIndex, ExcessEstimate]
    yearly: dict[int, ExcessEstimate]
    cumulative: ExcessEstimate
    by_covid_band: dict[tuple[int, str], ExcessEstimate]
    by_sex: dict[tuple[int, str], ExcessEstimate]
    by_tenyear: dict[tuple[int, str], ExcessEstimate]
    rates: list[YearlyRates]
    smr_trend: RateTrend
    smr_yearly_excess: dict[int, float]
    covid: CovidDeathSeries | None
    std_total: float

    @property
    def smr_cumulative_excess(self) -> float:
        return sum(self.smr_yearly_excess.values())


def _require_coverage(deaths: CountPanel, pop: PopulationPanel,
                      config: AnalysisConfig) -> None:
    for name, start, end in (
        ("fit", config.fit_start, config.fit_end),
        ("projection", config.project_start, config.project_end),
    ):
        if not deaths.covers(start, end):
            raise CoverageError(
                f"deaths panel {deaths.start}..{deaths.end} does not cover the "
                f"{name} window {start}..{end}"
            )
        if not pop.covers_months(start, end):
            raise CoverageError(
                f"population panel {pop.start}..{pop.end} does not cover the "
                f"{name} window {start}..{end}"
            )
    pop.quarter_offset(config.std_quarter)  # raises CoverageError if absent


def fit_window_model(
    deaths: CountPanel,
    pop: PopulationPanel,
    fit_start: MonthIndex,
    fit_end: MonthIndex,
) -> tuple[QuasiPoissonRegression, DesignSpec]:
    """Fit the count model on one window; raises if the fit did not converge."""
    spec = DesignSpec(fit_start=fit_start, fit_end=fit_end)
    design = build_design(deaths, pop, spec)
    model = QuasiPoissonRegression().fit(
        design.X, design.y, offset=design.offset, column_names=list(design.columns)
    )
    if not model.converged_:
        raise NonConvergenceError(
            f"model fit on {fit_start}..{fit_end} did not converge "
            f"after {model.n_iter_} iterations"
        )
    return model, spec


@dataclass
class _Aggregates:
    """Per-sample sums accumulated in one pass over the prediction rows."""

    months: list[MonthIndex]
    month_totals: np.ndarray  # (n_months, m)
    group_by_month: np.ndarray  # (n_groups, n_months, m)
    rate_year_sums: dict[int, np.ndarray]  # year -> (m,) weighted cell sums

    def year_totals(self, year: int) -> np.ndarray:
        idx = [i for i, mo in enumerate(self.months) if mo.year == year]
        return self.month_totals[idx].sum(axis=0)

    def year_group(self, year: int, group_index: int) -> np.ndarray:
        idx = [i for i, mo in enumerate(self.months) if mo.year == year]
        return self.group_by_month[group_index, idx].sum(axis=0)


def _accumulate(
    samples: np.ndarray,
    design: DesignMatrix,
    rate_weights: dict[int, np.ndarray],
) -> _Aggregates:
    months = list(design.months)
    n_months = len(months)
    m = samples.shape[0]
    month_totals = np.empty((n_months, m))
    group_by_month = np.empty((_GROUPS.shape[0], n_months, m))
    rate_year_sums = {year: np.zeros(m) for year in rate_weights}
    year_month_idx = {
        year: [i for i, mo in enumerate(months) if mo.year == year]
        for year in rate_weights
    }
    for sl, mu in iter_mu_chunks(samples, design.X, design.offset, _CHUNK):
        if not np.isfinite(mu).all():
            raise OverflowError("expected deaths overflowed to a non-finite value")
        cells = mu.reshape(n_months, N_STRATA, sl.stop - sl.start)
        month_totals[:, sl] = cells.sum(axis=1)
        group_by_month[:, :, sl] = np.tensordot(_GROUPS, cells, axes=(1, 1))
        for year, w in rate_weights.items():
            by_stratum = cells[year_month_idx[year]].sum(axis=0)
            rate_year_sums[year][sl] = (w[None, :] @ by_stratum)[0]
    return _Aggregates(
        months=months,
        month_totals=month_totals,
        group_by_month=group_by_month,
        rate_year_sums=rate_year_sums,
    )


def _actual_month_total(deaths: CountPanel, month: MonthIndex) -> int:
    return int(deaths.counts[:, deaths.month_offset(month)].sum())


def _actual_group_year(deaths: CountPanel, group_index: int, year: int) -> int:
    cols = [deaths.month_offset(MonthIndex(year, m)) for m in range(1, 13)]
    member = _GROUPS[group_index].astype(bool)
    return int(deaths.counts[np.ix_(member, cols)].sum())


def analyse(
    deaths: CountPanel,
    pop: PopulationPanel,
    config: AnalysisConfig,
    covid: CovidDeathSeries | None = None,
) -> AnalysisResult:
    """Run the full analysis on already-parsed panels."""
    _require_coverage(deaths, pop, config)
    model, spec = fit_window_model(deaths, pop, config.fit_start, config.fit_end)
    seed = sampling_seed(config.seed, config.fit_start, config.fit_end)
    samples = sample_coefficients(model.coef_, model.covariance_, config.samples, seed)

    # One prediction pass over fit + projection months (they may be separated
    # by a gap, in which case the gap months are simply not emitted).
    pred_months = month_range(config.fit_start, config.fit_end) + month_range(
        config.project_start, config.project_end
    )
    pred = build_design(deaths, pop, spec, months=pred_months)

    std = StandardPopulation.from_panel(pop, config.std_quarter)
    rate_years = config.fit_years + config.projection_years
    rate_weights = {
        year: std.sizes / (pop.yearly_mean_sizes(year) * std.total)
        for year in rate_years
    }
    agg = _accumulate(samples, pred, rate_weights)

    monthly_actuals = {mo: _actual_month_total(deaths, mo) for mo in pred_months}
    monthly_expected = {
        mo: excess_estimate(monthly_actuals[mo], agg.month_totals[i])
        for i, mo in enumerate(agg.months)
    }

    yearly: dict[int, ExcessEstimate] = {}
    for year in config.projection_years:
        actual = deaths.year_total(year)
        yearly[year] = excess_estimate(actual, agg.year_totals(year))
    cumul_samples = np.zeros(config.samples)
    for year in config.projection_years:
        cumul_samples += agg.year_totals(year)
    cumulative = excess_estimate(
        sum(deaths.year_total(y) for y in config.projection_years), cumul_samples
    )

    by_covid_band: dict[tuple[int, str], ExcessEstimate] = {}
    by_sex: dict[tuple[int, str], ExcessEstimate] = {}
    by_tenyear: dict[tuple[int, str], ExcessEstimate] = {}
    for gi, (kind, label) in enumerate(_GROUP_KEYS):
        for year in config.projection_years:
            est = excess_estimate(
                _actual_group_year(deaths, gi, year), agg.year_group(year, gi)
            )
            if kind == "covid_band":
                by_covid_band[(year, label)] = est
            elif kind == "sex":
                by_sex[(year, label)] = est
            else:
                by_tenyear[(year, label)] = est

    # Standardised rates: observed for every fully covered year, modelled for
    # fit + projection years.
    observed_years = [
        y for y in range(deaths.start.year, deaths.end.year + 1)
        if deaths.covers(MonthIndex(y, 1), MonthIndex(y, 12))
        and pop.covers_months(MonthIndex(y, 1), MonthIndex(y, 12))
    ]
    series = rate_series(deaths, pop, std, observed_years)
    trend = fit_rate_trend(series, config.fit_years)
    rates = []
    for year in observed_years:
        if year in rate_weights:
            qpr_samples = agg.rate_year_sums[year]
            q_est = excess_estimate(0.0, qpr_samples)
            qpr_mean: float | None = q_est.expected_mean
            qpr_ci: tuple[float, float] | None = q_est.expected_ci
        else:
            qpr_mean = qpr_ci = None
        rates.append(
            YearlyRates(
                year=year,
                observed=series.rates[year],
                qpr_mean=qpr_mean,
                qpr_ci=qpr_ci,
                smrlr_trend=trend.predict(year) if year >= config.fit_start.year else None,
            )
        )
    smr_yearly = {
        year: smr_excess(deaths, pop, std, trend, year)
        for year in config.projection_years
    }

    return AnalysisResult(
        config=config,
        model=model,
        monthly_actuals=monthly_actuals,
        monthly_expected=monthly_expected,
        yearly=yearly,
        cumulative=cumulative,
        by_covid_band=by_covid_band,
        by_sex=by_sex,
        by_tenyear=by_tenyear,
        rates=rates,
        smr_trend=trend,
        smr_yearly_excess=smr_yearly,
        covid=covid,
        std_total=std.total,
    )


@dataclass
class ComparisonRow:
    """Covid-attributed deaths against the excess estimate for one period."""

    period: str
    covid_deaths: int
    excess: ExcessEstimate
    share_of_excess: float | None
    within_ci: bool


def covid_comparison(
    excess_by_period: dict[str, ExcessEstimate],
    covid_by_period: dict[str, int],
) -> list[ComparisonRow]:
    """Align per-period excess estimates with covid-attributed death counts."""
    if set(excess_by_period) != set(covid_by_period):
        missing = set(excess_by_period) ^ set(covid_by_period)
        raise AlignmentError(f"periods do not align; mismatched: {sorted(missing)}")
    rows = []
    for period in excess_by_period:
        est = excess_by_period[period]
        covid = covid_by_period[period]
        if est.excess_mean == 0.0:
            share = None  # no defined share of a zero excess
        else:
            share = covid / est.excess_mean
        rows.append(
            ComparisonRow(
                period=period,
                covid_deaths=covid,
                excess=est,
                share_of_excess=share,
                within_ci=est.excess_ci[0] <= covid <= est.excess_ci[1],
            )
        )
    return rows


@dataclass
class GroupTrend:
    """Linear trend of quarterly population for one age group."""

    label: str
    slope_per_quarter: float
    intercept: float
    fit_quarters: tuple[QuarterIndex, ...]
    projection_quarters: tuple[QuarterIndex, ...]
    observed: np.ndarray
    projected: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        return self.observed - self.projected


def population_trend_diagnostic(
    pop: PopulationPanel,
    age_threshold: int,
    fit_years: Sequence[int],
    projection_years: Sequence[int],
) -> tuple[GroupTrend, GroupTrend]:
    """OLS trends for total population under/over an age threshold, plus the
    observed-vs-projected gap for each projection quarter."""
    if not 1 <= age_threshold <= 95:
        raise DomainError(f"age_threshold must be in 1..95, got {age_threshold}")
    fit_years = sorted(fit_years)
    projection_years = sorted(projection_years)
    fit_q = [q for y in fit_years for q in quarter_range(QuarterIndex(y, 1), QuarterIndex(y, 4))]
    proj_q = [q for y in projection_years
              for q in quarter_range(QuarterIndex(y, 1), QuarterIndex(y, 4))]
    for q in fit_q + proj_q:
        pop.quarter_offset(q)

    under = STRATUM_AGES < age_threshold
    trends = []
    for label, mask in ((f"under_{age_threshold}", under),
                        (f"{age_threshold}_plus", ~under)):
        totals_fit = np.array(
            [pop.sizes[mask, pop.quarter_offset(q)].sum() for q in fit_q]
        )
        x = np.array([q.ordinal for q in fit_q], dtype=float)
        xc = x - x.mean()
        slope = float(np.sum(xc * (totals_fit - totals_fit.mean())) / np.sum(xc * xc))
        intercept = float(totals_fit.mean() - slope * x.mean())
        observed = np.array(
            [pop.sizes[mask, pop.quarter_offset(q)].sum() for q in proj_q]
        )
        projected = intercept + slope * np.array([q.ordinal for q in proj_q], dtype=float)
        trends.append(
            GroupTrend(
                label=label,
                slope_per_quarter=slope,
                intercept=intercept,
                fit_quarters=tuple(fit_q),
                projection_quarters=tuple(proj_q),
                observed=observed,
                projected=projected,
            )
        )
    return trends[0], trends[1]


@dataclass
class SensitivityRow:
    fit_start_year: int
    fit_end_year: int
    qpr: ExcessEstimate | None
    smr: float | None
    error: str | None = None


@dataclass
class SensitivityReport:
    rows: list[SensitivityRow]

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.rows)


def run_sensitivity(
    deaths: CountPanel,
    pop: PopulationPanel,
    config: AnalysisConfig,
    baseline_lengths: Sequence[int],
) -> SensitivityReport:
    """Refit with baselines of the given lengths (in years), each ending at the
    configured fit end. Rows are ordered by baseline start year; failures are
    recorded per row and do not stop the remaining rows."""
    lengths = sorted(set(baseline_lengths))
    if not lengths:
        raise DomainError("no baseline lengths requested")
    if any(l < 2 for l in lengths):
        raise DomainError(f"baseline lengths must be >= 2 years, got {lengths}")
    std = StandardPopulation.from_panel(pop, config.std_quarter)
    proj_years = config.projection_years
    rows = []
    for length in sorted(lengths, reverse=True):  # longest first = earliest start
        fit_end = config.fit_end
        fit_start = fit_end.shift(-(12 * length - 1))
        try:
            model, spec = fit_window_model(deaths, pop, fit_start, fit_end)
            seed = sampling_seed(config.seed, fit_start, fit_end)
            samples = sample_coefficients(
                model.coef_, model.covariance_, config.samples, seed
            )
            proj_months = month_range(config.project_start, config.project_end)
            pred = build_design(deaths, pop, spec, months=proj_months)
            agg = _accumulate(samples, pred, rate_weights={})
            cumul = np.zeros(config.samples)
            for year in proj_years:
                idx = [i for i, mo in enumerate(agg.months) if mo.year == year]
                cumul += agg.month_totals[idx].sum(axis=0)
            actual = sum(deaths.year_total(y) for y in proj_years)
            qpr = excess_estimate(actual, cumul)

            fit_years = list(range(fit_start.year, fit_end.year + 1))
            series = rate_series(deaths, pop, std, fit_years + proj_years)
            trend = fit_rate_trend(series, fit_years)
            smr = sum(smr_excess(deaths, pop, std, trend, y) for y in proj_years)
            rows.append(
                SensitivityRow(fit_start.year, fit_end.year, qpr, smr)
            )
        except Exception as exc:  # keep remaining rows going
            rows.append(
                SensitivityRow(fit_start.year, fit_end.year, None, None, error=str(exc))
            )
    return SensitivityReport(rows=rows)


def load_inputs(
    config: AnalysisConfig,
) -> tuple[CountPanel, PopulationPanel, CovidDeathSeries | None]:
    with open(config.deaths_path, newline="", encoding="utf-8") as f:
        deaths = parse_deaths(f)
    with open(config.population_path, newline="", encoding="utf-8") as f:
        pop = parse_population(f)
    covid = None
    if config.covid_path is not None:
        with open(config.covid_path, newline="", encoding="utf-8") as f:
            covid = parse_covid(f)
    return deaths, pop, covid


# ---------------------------------------------------------------------------
# Output writing. One file per figure/table-shaped result, fixed schemas,
# deterministic float formatting.


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_table(path: Path, fieldnames: list[str], rows: list[dict], fmt: str) -> Path:
    path = path.with_suffix(f".{fmt}")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(",".join(fieldnames) + "\n")
            for row in rows:
                f.write(",".join(_fmt(row.get(k)) for k in fieldnames) + "\n")
    else:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=2, sort_keys=True)
            f.write("\n")
    return path


def _excess_fields(est: ExcessEstimate) -> dict:
    return {
        "actual_deaths": int(est.actual),
        "expected_mean": est.expected_mean,
        "expected_lo": est.expected_ci[0],
        "expected_hi": est.expected_ci[1],
        "excess_mean": est.excess_mean,
        "excess_lo": est.excess_ci[0],
        "excess_hi": est.excess_ci[1],
    }


_EXCESS_COLS = ["actual_deaths", "expected_mean", "expected_lo", "expected_hi",
                "excess_mean", "excess_lo", "excess_hi"]
_COVID_COLS = ["covid_deaths", "covid_share_of_excess", "covid_within_ci"]


def _covid_fields(est: ExcessEstimate, covid_count: int | None) -> dict:
    if covid_count is None:
        return {k: None for k in _COVID_COLS}
    row = covid_comparison({"p": est}, {"p": covid_count})[0]
    return {
        "covid_deaths": row.covid_deaths,
        "covid_share_of_excess": row.share_of_excess,
        "covid_within_ci": row.within_ci,
    }


def write_outputs(result: AnalysisResult) -> list[Path]:
    """Write the full result bundle to the configured output directory."""
    config = result.config
    fmt = config.fmt
    out = Path(config.out_dir)
    written = []

    rows = []
    for mo, est in result.monthly_expected.items():
        rows.append({"year": mo.year, "month": mo.month, **_excess_fields(est)})
    written.append(
        _write_table(out / "monthly_baseline", ["year", "month"] + _EXCESS_COLS,
                     rows, fmt)
    )

    rows = []
    for r in result.rates:
        rows.append({
            "year": r.year,
            "observed_rate": r.observed,
            "qpr_rate_mean": r.qpr_mean,
            "qpr_rate_lo": r.qpr_ci[0] if r.qpr_ci else None,
            "qpr_rate_hi": r.qpr_ci[1] if r.qpr_ci else None,
            "smrlr_trend_rate": r.smrlr_trend,
            "smrlr_excess": result.smr_yearly_excess.get(r.year),
        })
    written.append(
        _write_table(
            out / "standardized_rates",
            ["year", "observed_rate", "qpr_rate_mean", "qpr_rate_lo",
             "qpr_rate_hi", "smrlr_trend_rate", "smrlr_excess"],
            rows, fmt,
        )
    )

    covid = result.covid
    rows = []
    for year, est in result.yearly.items():
        count = covid.year_total(year) if covid is not None else None
        rows.append({
            "year": year,
            **_excess_fields(est),
            **_covid_fields(est, count),
            "smrlr_excess": result.smr_yearly_excess.get(year),
        })
    written.append(
        _write_table(
            out / "yearly_excess",
            ["year"] + _EXCESS_COLS + _COVID_COLS + ["smrlr_excess"],
            rows, fmt,
        )
    )

    rows = []
    for mo, est in result.monthly_expected.items():
        if mo < result.config.project_start:
            continue
        if covid is not None and covid.start <= mo <= covid.end:
            count = int(covid.monthly_totals()[covid.month_offset(mo)])
        else:
            count = None
        rows.append({
            "year": mo.year, "month": mo.month,
            **_excess_fields(est),
            **_covid_fields(est, count),
        })
    written.append(
        _write_table(
            out / "monthly_excess",
            ["year", "month"] + _EXCESS_COLS + _COVID_COLS,
            rows, fmt,
        )
    )

    rows = []
    for (year, band), est in result.by_covid_band.items():
        if covid is not None:
            cols = [i for i, mo in enumerate(covid.months) if mo.year == year]
            count = int(covid.by_band[COVID_AGE_BANDS.index(band), cols].sum())
        else:
            count = None
        rows.append({
            "year": year, "age_band": band,
            **_excess_fields(est),
            **_covid_fields(est, count),
        })
    written.append(
        _write_table(
            out / "excess_by_age_band",
            ["year", "age_band"] + _EXCESS_COLS + _COVID_COLS,
            rows, fmt,
        )
    )

    rows = []
    for (year, sex), est in result.by_sex.items():
        if covid is not None:
            cols = [i for i, mo in enumerate(covid.months) if mo.year == year]
            sex_idx = [str(s) for s in SEXES].index(sex)
            count = int(covid.by_sex[sex_idx, cols].sum())
        else:
            count = None
        rows.append({
            "year": year, "sex": sex,
            **_excess_fields(est),
            **_covid_fields(est, count),
        })
    written.append(
        _write_table(
            out / "excess_by_sex",
            ["year", "sex"] + _EXCESS_COLS + _COVID_COLS,
            rows, fmt,
        )
    )

    rows = []
    for (year, band), est in result.by_tenyear.items():
        pct = {
            "excess_pct_mean": 100.0 * est.excess_mean / est.expected_mean,
            "excess_pct_lo": 100.0 * est.excess_ci[0] / est.expected_mean,
            "excess_pct_hi": 100.0 * est.excess_ci[1] / est.expected_mean,
        }
        rows.append({"year": year, "age_band": band, **_excess_fields(est), **pct})
    written.append(
        _write_table(
            out / "excess_by_tenyear_band",
            ["year", "age_band"] + _EXCESS_COLS
            + ["excess_pct_mean", "excess_pct_lo", "excess_pct_hi"],
            rows, fmt,
        )
    )

    model_path = out / "model.json"
    out.mkdir(parents=True, exist_ok=True)
    with open(model_path, "w", encoding="utf-8") as f:
        json.dump(result.model.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(model_path)

    written.append(write_summary(result))
    return written


def write_summary(result: AnalysisResult) -> Path:
    config = result.config
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cumulative = result.cumulative
    per_million = 1e6 / result.std_total
    summary = {
        "config": {
            "fit_window": [str(config.fit_start), str(config.fit_end)],
            "projection_window": [str(config.project_start), str(config.project_end)],
            "samples": config.samples,
            "seed": config.seed,
            "standard_population_quarter": str(config.std_quarter),
        },
        "model": {
            "dispersion": result.model.dispersion_,
            "iterations": result.model.n_iter_,
            "converged": result.model.converged_,
            "deviance": result.model.deviance_,
        },
        "cumulative_excess": _excess_fields(cumulative),
        "cumulative_excess_per_million": {
            "mean": cumulative.excess_mean * per_million,
            "lo": cumulative.excess_ci[0] * per_million,
            "hi": cumulative.excess_ci[1] * per_million,
        },
        "cumulative_excess_pct_of_expected": {
            "mean": 100.0 * cumulative.excess_mean / cumulative.expected_mean,
            "lo": 100.0 * cumulative.excess_ci[0] / cumulative.expected_mean,
            "hi": 100.0 * cumulative.excess_ci[1] / cumulative.expected_mean,
        },
        "yearly_excess": {
            str(year): _excess_fields(est) for year, est in result.yearly.items()
        },
        "smrlr_excess": {
            "yearly": {str(y): v for y, v in result.smr_yearly_excess.items()},
            "cumulative": result.smr_cumulative_excess,
        },
    }
    path = out / "summary.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_sensitivity(report: SensitivityReport, out_dir: Path, fmt: str) -> Path:
    rows = []
    for r in report.rows:
        rows.append({
            "fit_start_year": r.fit_start_year,
            "fit_end_year": r.fit_end_year,
            "qpr_excess_mean": r.qpr.excess_mean if r.qpr else None,
            "qpr_excess_lo": r.qpr.excess_ci[0] if r.qpr else None,
            "qpr_excess_hi": r.qpr.excess_ci[1] if r.qpr else None,
            "smrlr_excess": r.smr,
            "error": r.error,
        })
    return _write_table(
        Path(out_dir) / "sensitivity",
        ["fit_start_year", "fit_end_year", "qpr_excess_mean", "qpr_excess_lo",
         "qpr_excess_hi", "smrlr_excess", "error"],
        rows, fmt,
    )


def write_population_trend(
    under: GroupTrend, over: GroupTrend, out_dir: Path, fmt: str
) -> Path:
    rows = []
    for trend in (under, over):
        for q, obs, proj in zip(trend.projection_quarters, trend.observed,
                                trend.projected):
            rows.append({
                "group": trend.label,
                "quarter": str(q),
                "observed": float(obs),
                "projected": float(proj),
                "gap": float(obs - proj),
                "slope_per_quarter": trend.slope_per_quarter,
            })
    return _write_table(
        Path(out_dir) / "population_trend",
        ["group", "quarter", "observed", "projected", "gap", "slope_per_quarter"],
        rows, fmt,
    )


def run_analysis(config: AnalysisConfig) -> AnalysisResult:
    """Parse inputs, run the analysis and write the output bundle."""
    deaths, pop, covid = load_inputs(config)
    result = analyse(deaths, pop, config, covid=covid)
    write_outputs(result)
    return result
