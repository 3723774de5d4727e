"""Command-line interface: analyse, sensitivity, diagnostics, round, synth."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .exceptions import (
    CovarianceError,
    DegenerateResponseError,
    ExcessMortError,
    NonConvergenceError,
    SingularDesignError,
)
from .panels import parse_deaths, write_deaths, write_population
from .periods import MonthIndex, QuarterIndex
from .pipeline import (
    AnalysisConfig,
    analyse,
    load_inputs,
    population_trend_diagnostic,
    run_sensitivity,
    write_outputs,
    write_population_trend,
    write_sensitivity,
)
from .rounding import random_round
from .synth import default_truth, generate_panel
from .uncertainty import DEFAULT_SAMPLES

EXIT_INPUT_ERROR = 2
EXIT_FIT_ERROR = 3
EXIT_INTERNAL_ERROR = 4

_FIT_ERRORS = (SingularDesignError, DegenerateResponseError, CovarianceError,
               NonConvergenceError)


def _fail(exc: BaseException) -> int:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, _FIT_ERRORS):
        return EXIT_FIT_ERROR
    if isinstance(exc, ExcessMortError):
        return EXIT_INPUT_ERROR
    if isinstance(exc, OSError):
        return EXIT_INPUT_ERROR
    return EXIT_INTERNAL_ERROR


class MonthParam(click.ParamType):
    name = "YYYY-MM"

    def convert(self, value, param, ctx):
        try:
            return MonthIndex.parse(value)
        except ExcessMortError as exc:
            self.fail(str(exc), param, ctx)


class QuarterParam(click.ParamType):
    name = "YYYY-Qn"

    def convert(self, value, param, ctx):
        try:
            return QuarterIndex.parse(value)
        except ExcessMortError as exc:
            self.fail(str(exc), param, ctx)


MONTH = MonthParam()
QUARTER = QuarterParam()


def parse_int_set(text: str) -> list[int]:
    """Parse '4..10' or '4,6,10' (or a mix) into a sorted list of ints."""
    values: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.update(range(int(lo), int(hi) + 1))
        else:
            values.add(int(part))
    return sorted(values)


_shared_options = [
    click.option("--deaths", "deaths_path", type=click.Path(exists=True, path_type=Path),
                 required=True, help="Deaths CSV (year,month,sex,age_group,count)."),
    click.option("--population", "population_path",
                 type=click.Path(exists=True, path_type=Path), required=True,
                 help="Population CSV (year,quarter,sex,age_group,population)."),
    click.option("--covid", "covid_path", type=click.Path(exists=True, path_type=Path),
                 default=None, help="Covid deaths CSV (date,age_band,sex,count)."),
    click.option("--fit-start", type=MONTH, default="2014-01", show_default=True),
    click.option("--fit-end", type=MONTH, default="2019-12", show_default=True),
    click.option("--project-start", type=MONTH, default="2020-01", show_default=True),
    click.option("--project-end", type=MONTH, default="2023-12", show_default=True),
    click.option("--samples", type=int, default=DEFAULT_SAMPLES, show_default=True,
                 help="Coefficient samples for the confidence intervals."),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--std-quarter", type=QUARTER, default="2021-Q1", show_default=True,
                 help="Standard population quarter."),
    click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("out"),
                 show_default=True),
    click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                 show_default=True),
]


def shared_options(command):
    for option in reversed(_shared_options):
        command = option(command)
    return command


def _build_config(**kw) -> AnalysisConfig:
    return AnalysisConfig(**kw)


@click.group()
def main():
    """Excess-mortality estimation from stratified monthly death counts."""


@main.command("analyse")
@shared_options
def analyse_cmd(**kw):
    """Fit the baseline model, project it, and write the result bundle."""
    try:
        config = _build_config(**kw)
        deaths, pop, covid = load_inputs(config)
        result = analyse(deaths, pop, config, covid=covid)
        paths = write_outputs(result)
    except Exception as exc:
        sys.exit(_fail(exc))
    est = result.cumulative
    click.echo(
        f"cumulative excess {config.project_start.year}-{config.project_end.year}: "
        f"{est.excess_mean:.0f} [{est.excess_ci[0]:.0f}, {est.excess_ci[1]:.0f}]"
    )
    for path in paths:
        click.echo(f"wrote {path}")


@main.command("sensitivity")
@shared_options
@click.option("--baselines", default="4..10", show_default=True,
              help="Baseline lengths in years, e.g. '4..10' or '4,6,10'.")
def sensitivity_cmd(baselines, **kw):
    """Refit over a range of baseline lengths and write the comparison table."""
    try:
        lengths = parse_int_set(baselines)
        config = _build_config(**kw)
        deaths, pop, _ = load_inputs(config)
        report = run_sensitivity(deaths, pop, config, lengths)
        path = write_sensitivity(report, config.out_dir, config.fmt)
    except Exception as exc:
        sys.exit(_fail(exc))
    for row in report.rows:
        if row.error is not None:
            click.echo(f"{row.fit_start_year}-{row.fit_end_year}: failed: {row.error}",
                       err=True)
        else:
            click.echo(
                f"{row.fit_start_year}-{row.fit_end_year}: "
                f"{row.qpr.excess_mean:.0f} [{row.qpr.excess_ci[0]:.0f}, "
                f"{row.qpr.excess_ci[1]:.0f}]  smr-lr {row.smr:.0f}"
            )
    click.echo(f"wrote {path}")
    if report.failed:
        sys.exit(EXIT_FIT_ERROR)


@main.command("diagnostics")
@click.option("--population", "population_path",
              type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--threshold", type=int, default=65, show_default=True,
              help="Age split for the population trend check.")
@click.option("--fit-years", default="2010..2019", show_default=True)
@click.option("--project-years", default="2020..2023", show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("out"),
              show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def diagnostics_cmd(population_path, threshold, fit_years, project_years, out_dir, fmt):
    """Population-trend diagnostic: observed vs projected totals by age group."""
    try:
        from .panels import parse_population

        with open(population_path, newline="", encoding="utf-8") as f:
            pop = parse_population(f)
        under, over = population_trend_diagnostic(
            pop, threshold, parse_int_set(fit_years), parse_int_set(project_years)
        )
        path = write_population_trend(under, over, out_dir, fmt)
    except Exception as exc:
        sys.exit(_fail(exc))
    for trend in (under, over):
        click.echo(
            f"{trend.label}: slope {trend.slope_per_quarter:.0f}/quarter, "
            f"final-gap {trend.gaps[-1]:.0f}"
        )
    click.echo(f"wrote {path}")


@main.command("round")
@click.option("--deaths", "deaths_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def round_cmd(deaths_path, seed, out_path):
    """Randomly round a deaths file to base 3 for confidentialised publication."""
    try:
        with open(deaths_path, newline="", encoding="utf-8") as f:
            panel = parse_deaths(f)
        rounded = random_round(panel, seed)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="", encoding="utf-8") as f:
            write_deaths(rounded, f)
    except Exception as exc:
        sys.exit(_fail(exc))
    click.echo(f"wrote {out_path}")


@main.command("synth")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--start", type=MONTH, default="2014-01", show_default=True)
@click.option("--end", type=MONTH, default="2023-12", show_default=True)
@click.option("--fit-start", type=MONTH, default="2014-01", show_default=True)
@click.option("--fit-end", type=MONTH, default="2019-12", show_default=True)
@click.option("--phi", type=float, default=1.0, show_default=True,
              help="Variance inflation of the generated counts (1 = Poisson).")
def synth_cmd(out_dir, seed, start, end, fit_start, fit_end, phi):
    """Generate a synthetic deaths + population dataset with known structure."""
    try:
        truth = default_truth(fit_start=fit_start, fit_end=fit_end, phi=phi, seed=seed)
        deaths, pop = generate_panel(truth, start, end)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "deaths.csv", "w", newline="", encoding="utf-8") as f:
            write_deaths(deaths, f)
        with open(out_dir / "population.csv", "w", newline="", encoding="utf-8") as f:
            write_population(pop, f)
    except Exception as exc:
        sys.exit(_fail(exc))
    click.echo(f"wrote {out_dir / 'deaths.csv'}")
    click.echo(f"wrote {out_dir / 'population.csv'}")


if __name__ == "__main__":
    main()
