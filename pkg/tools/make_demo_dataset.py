#!/usr/bin/env python3
"""Build the bundled demo dataset (data/demo/).

A national-scale synthetic population and mortality history with known
properties, shipped in the package's CSV schemas:

  * quarterly population 2010-Q1..2023-Q4 with the under-65 growth rate
    stalling from 2020 while 65+ keeps growing;
  * monthly deaths 2010..2023 whose 2010-19 baseline carries calibrated
    year-level fluctuations, and whose 2020-23 counts embed fixed yearly
    excess-death targets over the model baseline;
  * a daily covid-attributed deaths file whose yearly totals are fixed
    fractions of the 2022-23 excess targets.

Death counts are randomly rounded to base 3 before writing, mirroring a
confidentialised release. Everything is seeded; rerunning reproduces the
committed files byte for byte.
"""

from __future__ import annotations

import csv
import datetime
import sys
import warnings
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from excessmort.design import N_COLUMNS, DesignSpec, build_design
from excessmort.exceptions import ConvergenceWarning as ExcessConvergenceWarning
from excessmort.glm import QuasiPoissonRegression
from excessmort.panels import (
    COVID_AGE_BANDS,
    N_STRATA,
    STRATUM_AGES,
    STRATUM_SEX_CODES,
    CountPanel,
    PopulationPanel,
    covid_band_of_age,
    write_deaths,
    write_population,
)
from excessmort.periods import MonthIndex, QuarterIndex, month_range
from excessmort.rounding import round_counts

OUT_DIR = Path(__file__).resolve().parents[1] / "data" / "demo"

BASE_SEED = 20170
ROUND_SEED = 20173

FIT_START = MonthIndex(2014, 1)
FIT_END = MonthIndex(2019, 12)
DATA_START = MonthIndex(2010, 1)
DATA_END = MonthIndex(2023, 12)
SPEC = DesignSpec(fit_start=FIT_START, fit_end=FIT_END)

BASELINE_YEARS = list(range(2010, 2020))
PROJECTION_YEARS = [2020, 2021, 2022, 2023]

# Yearly excess-death targets built into the 2020-23 counts (relative to the
# six-year-baseline model fitted to this dataset's own 2014-19 history).
TARGET_YEARLY_EXCESS = {2020: -2276, 2021: -654, 2022: 2735, 2023: 1235}

# Cumulative 2020-23 excess targets per baseline length, used to calibrate the
# baseline year-level fluctuations so that refitting with different baselines
# reproduces this sign/magnitude pattern. Thin-margin rows are calibrated with
# some extra headroom (the realised draw and the rounding noise move each row
# by a few hundred deaths either way).
TARGET_CUMULATIVE_BY_LENGTH = {4: -1770, 5: 456, 6: 1040, 7: -784, 8: 510,
                               9: 1995, 10: 1148}
CALIBRATION_CUMULATIVE = {4: -1770, 5: 850, 6: 1040, 7: -1000, 8: 850,
                          9: 1995, 10: 1148}

# Observed age- and sex-standardised rate anchor: deaths per person-year for
# the structural (fluctuation-free) schedule in 2015.
RATE_ANCHOR_YEAR = 2015
RATE_ANCHOR = 7.40e-3

# Covid-attributed death totals: tiny in 2020-21, roughly matching the excess
# in 2022-23 (102% and 82% of the yearly excess targets).
COVID_YEARLY = {2020: 26, 2021: 26, 2022: 2790, 2023: 1013}

# 95+ population anchors (total across sexes).
ANCHOR_95 = {QuarterIndex(2014, 1): 5130.0, QuarterIndex(2023, 4): 8530.0}
FEMALE_SHARE_95 = 0.66


def build_population() -> PopulationPanel:
    """Quarterly population with a 2020 growth break below age 65."""
    quarters = (DATA_END.quarter.ordinal - DATA_START.quarter.ordinal) + 1
    ages = STRATUM_AGES.astype(float)

    base = np.empty(N_STRATA)
    shape = np.select(
        [ages < 5, ages < 15, ages < 30, ages < 45, ages < 65, ages < 70,
         ages < 75, ages < 80, ages < 85, ages < 90, ages < 95],
        [31000, 29500, 32500, 29500, 27500 - 50 * (ages - 45), 16000,
         12500, 9000, 6300, 3800, 1700],
        default=0.0,
    )
    male = STRATUM_SEX_CODES == 0
    base[male] = shape[male] * 0.995
    base[~male] = shape[~male] * 1.005

    growth_pre = np.where(ages < 65, 0.0040, 0.0070)  # per quarter
    growth_post = np.where(ages < 65, 0.0004, 0.0070)
    break_q = QuarterIndex(2020, 1).ordinal - DATA_START.quarter.ordinal

    q = np.arange(quarters, dtype=float)
    log_growth = np.where(
        q[None, :] < break_q,
        growth_pre[:, None] * q[None, :],
        growth_pre[:, None] * break_q + growth_post[:, None] * (q[None, :] - break_q),
    )
    sizes = base[:, None] * np.exp(log_growth)

    # The open-ended 95+ group follows its own anchored geometric path.
    q0 = ANCHOR_95_ORDS[0] - DATA_START.quarter.ordinal
    q1 = ANCHOR_95_ORDS[1] - DATA_START.quarter.ordinal
    v0, v1 = ANCHOR_95_VALUES
    rate = np.log(v1 / v0) / (q1 - q0)
    total95 = v0 * np.exp(rate * (q - q0))
    is95 = ages == 95
    sizes[is95 & ~male] = FEMALE_SHARE_95 * total95
    sizes[is95 & male] = (1.0 - FEMALE_SHARE_95) * total95

    return PopulationPanel(DATA_START.quarter, np.round(sizes, 1))


ANCHOR_95_ORDS = [q.ordinal for q in ANCHOR_95]
ANCHOR_95_VALUES = list(ANCHOR_95.values())


def structural_beta() -> np.ndarray:
    """True in-model coefficients: age curve, sex gap, seasonality, decline."""
    beta = np.zeros(N_COLUMNS)
    ages = np.arange(96, dtype=float)
    infant = np.log(0.0042) - 1.05 * np.minimum(ages, 5.0)
    senescent = -2.564 - 0.105 * (85.0 - ages)
    yearly = np.maximum(np.exp(infant) + np.exp(senescent), 1.25e-4)
    log_daily = np.log(yearly) - np.log(365.0)

    beta[0] = log_daily[0]
    beta[2:97] = log_daily[1:] - log_daily[0]
    beta[1] = -0.0012  # per-month decline, youngest band
    beta[97] = -0.28  # female main effect

    month_effect = {2: -0.06, 3: -0.03, 4: -0.01, 5: 0.04, 6: 0.10, 7: 0.15,
                    8: 0.13, 9: 0.07, 10: 0.02, 11: -0.02, 12: -0.04}
    for m, eff in month_effect.items():
        beta[98 + m - 2] = eff

    for k, band in enumerate(SPEC.nonbaseline_bands):
        beta[109 + k] = 0.0002 if band == 1 else 0.0004  # slower decline when old
        beta[116 + k] = 0.18 * band / 7.0  # sex gap narrows with age
        for m, eff in month_effect.items():
            beta[123 + 11 * k + m - 2] = 0.25 * (band / 7.0) * eff
    return beta


def cell_means(beta: np.ndarray, pop: PopulationPanel, months) -> np.ndarray:
    """exp(design + offset) per (month-major) cell, shape (n_months*192,)."""
    zeros = CountPanel(
        DATA_START,
        np.zeros((N_STRATA, DATA_END.ordinal - DATA_START.ordinal + 1), dtype=np.int64),
    )
    design = build_design(zeros, pop, SPEC, months=months)
    return np.exp(design.X @ beta + design.offset), design


def baseline_means(beta, pop, eps: dict[int, float]) -> np.ndarray:
    """Per-cell expected counts for 2010-2019 with year-level log fluctuations."""
    months = month_range(DATA_START, MonthIndex(2019, 12))
    mu, design = cell_means(beta, pop, months)
    year_factor = np.exp(np.array([eps.get(mo // 12, 0.0)
                                   for mo in design.row_months]))
    return mu * year_factor


_ZERO_PANEL = CountPanel(
    DATA_START,
    np.zeros((N_STRATA, DATA_END.ordinal - DATA_START.ordinal + 1), dtype=np.int64),
)


def fit_projection_means(y_cells: np.ndarray, pop: PopulationPanel,
                         fit_start: MonthIndex):
    """Fit one baseline window to the given 2010-2019 cell values (month-major,
    counts or expected counts) and return per-cell projected means for 2020-23."""
    spec = DesignSpec(fit_start=fit_start, fit_end=FIT_END)
    fit = build_design(_ZERO_PANEL, pop, spec)
    lo = (fit_start.ordinal - DATA_START.ordinal) * N_STRATA
    model = QuasiPoissonRegression().fit(fit.X, y_cells[lo:lo + fit.n_rows],
                                         offset=fit.offset)
    proj_months = month_range(MonthIndex(2020, 1), DATA_END)
    proj = build_design(_ZERO_PANEL, pop, spec, months=proj_months)
    mu = model.predict(proj.X, proj.offset)
    return mu, proj, model


def yearly_totals(mu: np.ndarray, design) -> dict[int, float]:
    out: dict[int, float] = {}
    for year in PROJECTION_YEARS:
        mask = design.row_years == year
        out[year] = float(mu[mask].sum())
    return out


def calibration_jacobian(e6_yearly: dict[int, float]) -> np.ndarray:
    """Linearised response of per-baseline cumulative expected deaths to the
    year-level log fluctuations, relative to the six-year baseline, one row per
    baseline length in ascending order (6 excluded)."""

    def h(length: int) -> np.ndarray:
        years = np.array([y for y in BASELINE_YEARS if y >= 2020 - length], dtype=float)
        ybar = years.mean()
        ss = ((years - ybar) ** 2).sum()
        row = np.zeros(len(BASELINE_YEARS))
        for j, y in enumerate(BASELINE_YEARS):
            if y < 2020 - length:
                continue
            row[j] = sum(
                e6_yearly[ystar] * (1.0 / len(years) + (y - ybar) * (ystar - ybar) / ss)
                for ystar in PROJECTION_YEARS
            )
        return row

    h6 = h(6)
    lengths = sorted(l for l in CALIBRATION_CUMULATIVE if l != 6)
    return np.array([h(length) - h6 for length in lengths])


def calibrate_fluctuations(beta, pop) -> dict[int, float]:
    """Solve for year fluctuations on noise-free expected panels: fit the model
    to the expected counts themselves so the pattern converges tightly before
    any Poisson draw happens."""
    eps = {y: 0.0 for y in BASELINE_YEARS}
    lengths = sorted(l for l in CALIBRATION_CUMULATIVE if l != 6)
    target_diff = np.array([
        CALIBRATION_CUMULATIVE[6] - CALIBRATION_CUMULATIVE[l] for l in lengths
    ], dtype=float)
    for iteration in range(10):
        values = baseline_means(beta, pop, eps)
        cum = {}
        yearly6 = None
        for length in sorted(CALIBRATION_CUMULATIVE):
            fit_start = FIT_END.shift(-(12 * length - 1))
            with warnings.catch_warnings():
                # fits to continuous expected counts sit at a deviance floor;
                # their point estimates are all the calibration needs
                warnings.simplefilter("ignore", ExcessConvergenceWarning)
                mu, proj, _ = fit_projection_means(values, pop, fit_start)
            totals = yearly_totals(mu, proj)
            cum[length] = sum(totals.values())
            if length == 6:
                yearly6 = totals
        achieved = np.array([cum[l] - cum[6] for l in lengths])
        resid = target_diff - achieved
        print(f"  calibration pass {iteration}: max residual "
              f"{np.abs(resid).max():,.0f} deaths")
        if np.abs(resid).max() < 20.0:
            break
        R = calibration_jacobian(yearly6)
        delta, *_ = np.linalg.lstsq(R, resid, rcond=None)
        for j, y in enumerate(BASELINE_YEARS):
            eps[y] += float(delta[j])
    return eps


def anchor_rate_scale(beta: np.ndarray, pop: PopulationPanel) -> np.ndarray:
    """Shift the intercept so the structural standardised rate hits the anchor."""
    from excessmort.smr import StandardPopulation

    months = month_range(MonthIndex(RATE_ANCHOR_YEAR, 1), MonthIndex(RATE_ANCHOR_YEAR, 12))
    mu, design = cell_means(beta, pop, months)
    by_stratum = mu.reshape(12, N_STRATA).sum(axis=0)
    std = StandardPopulation.from_panel(pop, QuarterIndex(2021, 1))
    n_bar = pop.yearly_mean_sizes(RATE_ANCHOR_YEAR)
    rate = float(np.sum(by_stratum * std.sizes / n_bar) / std.total)
    beta = beta.copy()
    beta[0] += np.log(RATE_ANCHOR / rate)
    print(f"  structural rate {1000 * rate:.2f} -> {1000 * RATE_ANCHOR:.2f} per 1000")
    return beta


def sampled_yearly_expected(model, pop, seed: int, samples: int) -> dict[int, float]:
    """The yearly expected-death means the default pipeline will report: mean of
    the sampled aggregated projections, using the pipeline's seed derivation."""
    from excessmort.pipeline import sampling_seed
    from excessmort.uncertainty import aggregate_expected, sample_coefficients

    draws = sample_coefficients(model.coef_, model.covariance_, samples,
                                sampling_seed(seed, FIT_START, FIT_END))
    spec = DesignSpec(fit_start=FIT_START, fit_end=FIT_END)
    out = {}
    for year in PROJECTION_YEARS:
        months = month_range(MonthIndex(year, 1), MonthIndex(year, 12))
        design = build_design(_ZERO_PANEL, pop, spec, months=months)
        out[year] = float(aggregate_expected(draws, design.X, design.offset).mean())
    return out


def exact_total_draw(mu: np.ndarray, target: int, rng) -> np.ndarray:
    """Poisson counts with the given per-cell means, adjusted to an exact total."""
    counts = rng.poisson(mu).astype(np.int64)
    diff = target - int(counts.sum())
    p = mu / mu.sum()
    while diff > 0:
        step = min(diff, 1000)
        picks = rng.choice(mu.size, size=step, p=p)
        np.add.at(counts, picks, 1)
        diff -= step
    while diff < 0:
        picks = rng.choice(mu.size, size=min(-diff, 1000), p=p)
        for i in picks:
            if counts[i] > 0:
                counts[i] -= 1
                diff += 1
                if diff == 0:
                    break
    return counts


def build_projection_counts(rounded_baseline: np.ndarray, pop) -> tuple[np.ndarray, dict]:
    """2020-23 counts anchored to the model the published data will imply.

    The baseline model is fitted to the *rounded* 2010-19 counts (what ships),
    and each projection year's total is set to that model's sampled expected
    deaths plus the year's excess target, so the default pipeline run lands on
    the targets up to the rounding of the projection counts themselves.
    """
    mu, proj, model = fit_projection_means(rounded_baseline, pop, FIT_START)
    expected = sampled_yearly_expected(model, pop, seed=0, samples=5000)
    rng = np.random.Generator(np.random.Philox(BASE_SEED + 1))
    cells = np.zeros_like(mu, dtype=np.int64)
    for year in PROJECTION_YEARS:
        mask = proj.row_years == year
        target = int(round(expected[year])) + TARGET_YEARLY_EXCESS[year]
        scale = target / float(mu[mask].sum())
        cells[mask] = exact_total_draw(mu[mask] * scale, target, rng)
    counts = cells.reshape(48, N_STRATA).T
    excess_by_band = {}
    for year in (2022, 2023):
        mask = proj.row_years == year
        for b, label in enumerate(COVID_AGE_BANDS):
            bmask = mask & np.array([covid_band_of_age(a) == b
                                     for a in proj.row_ages])
            excess_by_band[(year, label)] = float(
                cells[bmask].sum() - mu[bmask].sum()
            )
    return counts, excess_by_band


def largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer allocation of `total` proportional to non-negative weights."""
    if total == 0 or weights.sum() == 0:
        return np.zeros(weights.size, dtype=np.int64)
    raw = total * weights / weights.sum()
    alloc = np.floor(raw).astype(np.int64)
    rest = total - alloc.sum()
    order = np.argsort(-(raw - alloc))
    alloc[order[:rest]] += 1
    return alloc


def build_covid_rows(excess_by_band: dict) -> list[tuple[str, str, str, int]]:
    """Daily covid records: one row per month, band and sex, joint marginals."""
    month_profiles = {
        2020: {3: 8, 4: 14, 5: 4},
        2021: {8: 2, 9: 6, 10: 7, 11: 6, 12: 5},
        2022: {3: 220, 4: 310, 5: 260, 6: 280, 7: 420, 8: 360, 9: 240, 10: 190,
               11: 160, 12: 140},
        2023: {1: 120, 2: 90, 3: 80, 4: 70, 5: 80, 6: 110, 7: 120, 8: 90, 9: 70,
               10: 60, 11: 60, 12: 63},
    }
    band_shares = {}
    for year in (2020, 2021):
        band_shares[year] = np.array([0.10, 0.10, 0.20, 0.60])
    for year in (2022, 2023):
        w = np.array([max(excess_by_band[(year, b)], 1.0) for b in COVID_AGE_BANDS])
        band_shares[year] = w / w.sum()

    rows = []
    for year, profile in month_profiles.items():
        months = sorted(profile)
        month_alloc = largest_remainder(
            COVID_YEARLY[year], np.array([profile[m] for m in months], dtype=float)
        )
        for m, m_total in zip(months, month_alloc):
            bands = largest_remainder(int(m_total), band_shares[year])
            for b, label in enumerate(COVID_AGE_BANDS):
                female = bands[b] // 2 + (1 if (m + b) % 2 else 0)
                female = min(female, bands[b])
                male = bands[b] - female
                day = 29 if (year, m) == (2020, 3) else 15
                date = datetime.date(year, m, day).isoformat()
                if male:
                    rows.append((date, label, "male", int(male)))
                if female:
                    rows.append((date, label, "female", int(female)))
    return rows


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    print("building population panel")
    pop = build_population()
    beta = anchor_rate_scale(structural_beta(), pop)

    print("calibrating baseline fluctuations")
    eps = calibrate_fluctuations(beta, pop)
    print("  fluctuations (log):",
          {y: round(v, 4) for y, v in eps.items()})

    print("drawing and rounding the 2010-19 baseline")
    rng = np.random.Generator(np.random.Philox(BASE_SEED))
    baseline_counts = rng.poisson(baseline_means(beta, pop, eps))
    rounded_baseline = round_counts(baseline_counts, ROUND_SEED).astype(float)

    print("constructing 2020-23 counts against the rounded-baseline model")
    proj_counts, excess_by_band = build_projection_counts(rounded_baseline, pop)
    rounded_proj = round_counts(proj_counts, ROUND_SEED + 1)

    counts = np.zeros((N_STRATA, DATA_END.ordinal - DATA_START.ordinal + 1),
                      dtype=np.int64)
    counts[:, :120] = rounded_baseline.reshape(120, N_STRATA).T.astype(np.int64)
    counts[:, 120:] = rounded_proj
    rounded = CountPanel(DATA_START, counts)

    print("writing files")
    with open(OUT_DIR / "deaths_rounded.csv", "w", newline="", encoding="utf-8") as f:
        write_deaths(rounded, f)
    with open(OUT_DIR / "population.csv", "w", newline="", encoding="utf-8") as f:
        write_population(pop, f)
    covid_rows = build_covid_rows(excess_by_band)
    with open(OUT_DIR / "covid.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["date", "age_band", "sex", "count"])
        writer.writerows(covid_rows)

    verify()


def verify() -> None:
    """Run the shipped pipeline on the rounded files and check the targets."""
    import tempfile

    from excessmort.pipeline import AnalysisConfig, analyse, load_inputs, run_sensitivity

    config = AnalysisConfig(
        deaths_path=OUT_DIR / "deaths_rounded.csv",
        population_path=OUT_DIR / "population.csv",
        covid_path=OUT_DIR / "covid.csv",
        fit_start=FIT_START,
        fit_end=FIT_END,
        project_start=MonthIndex(2020, 1),
        project_end=DATA_END,
        samples=2000,
        seed=0,
        out_dir=Path(tempfile.mkdtemp(prefix="demo_verify_")),
    )
    deaths, pop, covid = load_inputs(config)
    result = analyse(deaths, pop, config, covid=covid)
    print(f"  cumulative excess: {result.cumulative.excess_mean:,.0f} "
          f"[{result.cumulative.excess_ci[0]:,.0f}, {result.cumulative.excess_ci[1]:,.0f}]")
    print(f"  cumulative expected: {result.cumulative.expected_mean:,.0f}")
    for year in PROJECTION_YEARS:
        est = result.yearly[year]
        share = covid.year_total(year) / est.excess_mean
        print(f"  {year}: actual {est.actual:,.0f}, "
              f"excess {est.excess_mean:+,.0f} (target {TARGET_YEARLY_EXCESS[year]:+,}), "
              f"covid {covid.year_total(year)} (share {100 * share:.0f}%, "
              f"inside CI: {est.excess_ci[0] <= covid.year_total(year) <= est.excess_ci[1]})")
    rates = {r.year: 1000.0 * r.observed for r in result.rates if r.year < 2020}
    print("  2010-19 standardized rates:",
          {y: round(v, 2) for y, v in sorted(rates.items())})
    report = run_sensitivity(deaths, pop, config, list(range(4, 11)))
    print("  sensitivity:")
    agree = 0
    for row in report.rows:
        length = row.fit_end_year - row.fit_start_year + 1
        target = TARGET_CUMULATIVE_BY_LENGTH[length]
        same = np.sign(row.qpr.excess_mean) == np.sign(target)
        agree += bool(same)
        print(f"    {row.fit_start_year}-{row.fit_end_year}: "
              f"{row.qpr.excess_mean:+,.0f} (target {target:+,}) "
              f"{'OK' if same else 'SIGN MISMATCH'}")
    assert abs(result.cumulative.excess_mean - 1040) <= 500
    assert abs(result.yearly[2022].excess_mean - 2735) <= 300
    assert agree >= 6
    assert all(6.8 <= v <= 8.1 for v in rates.values())
    print("verification passed")


if __name__ == "__main__":
    main()
