import filecmp

import numpy as np
import pytest
from click.testing import CliRunner

from excessmort.cli import EXIT_FIT_ERROR, EXIT_INPUT_ERROR, main, parse_int_set
from excessmort.panels import parse_deaths


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """A small synthetic dataset written through the synth subcommand."""
    out = tmp_path_factory.mktemp("dataset")
    runner = CliRunner()
    result = runner.invoke(main, [
        "synth", "--out", str(out), "--seed", "3",
        "--start", "2012-01", "--end", "2023-12",
    ])
    assert result.exit_code == 0, result.output
    return out


def run_ok(args):
    result = CliRunner().invoke(main, args)
    assert result.exit_code == 0, result.output
    return result


def test_parse_int_set():
    assert parse_int_set("4..10") == [4, 5, 6, 7, 8, 9, 10]
    assert parse_int_set("4,6,10") == [4, 6, 10]
    assert parse_int_set("4..6,9") == [4, 5, 6, 9]


def test_synth_outputs_parse(dataset):
    with open(dataset / "deaths.csv", newline="", encoding="utf-8") as f:
        panel = parse_deaths(f)
    assert panel.n_months == 144


def test_analyse_end_to_end(dataset, tmp_path):
    out = tmp_path / "results"
    run_ok([
        "analyse",
        "--deaths", str(dataset / "deaths.csv"),
        "--population", str(dataset / "population.csv"),
        "--samples", "300", "--seed", "1",
        "--out", str(out),
    ])
    assert (out / "summary.json").exists()
    assert (out / "yearly_excess.csv").exists()


def test_analyse_deterministic_across_runs(dataset, tmp_path):
    args = [
        "analyse",
        "--deaths", str(dataset / "deaths.csv"),
        "--population", str(dataset / "population.csv"),
        "--samples", "200", "--seed", "7",
    ]
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_ok(args + ["--out", str(out_a)])
    run_ok(args + ["--out", str(out_b)])
    for path in sorted(out_a.iterdir()):
        assert filecmp.cmp(path, out_b / path.name, shallow=False), path.name


def test_sensitivity_command(dataset, tmp_path):
    out = tmp_path / "sens"
    result = run_ok([
        "sensitivity",
        "--deaths", str(dataset / "deaths.csv"),
        "--population", str(dataset / "population.csv"),
        "--samples", "200", "--baselines", "4..6",
        "--out", str(out),
    ])
    lines = (out / "sensitivity.csv").read_text().splitlines()
    assert lines[0].startswith("fit_start_year,fit_end_year,qpr_excess_mean")
    assert len(lines) == 4


def test_round_command(dataset, tmp_path):
    out_a = tmp_path / "rounded_a.csv"
    out_b = tmp_path / "rounded_b.csv"
    base = ["round", "--deaths", str(dataset / "deaths.csv"), "--seed", "11"]
    run_ok(base + ["--out", str(out_a)])
    run_ok(base + ["--out", str(out_b)])
    assert filecmp.cmp(out_a, out_b, shallow=False)
    with open(out_a, newline="", encoding="utf-8") as f:
        rounded = parse_deaths(f)
    assert np.isin(rounded.counts[rounded.counts < 6], (0, 6)).all()
    assert (rounded.counts[rounded.counts >= 6] % 3 == 0).all()


def test_diagnostics_command(dataset, tmp_path):
    out = tmp_path / "diag"
    run_ok([
        "diagnostics",
        "--population", str(dataset / "population.csv"),
        "--threshold", "65",
        "--fit-years", "2012..2019", "--project-years", "2020..2023",
        "--out", str(out),
    ])
    lines = (out / "population_trend.csv").read_text().splitlines()
    assert lines[0] == "group,quarter,observed,projected,gap,slope_per_quarter"
    assert len(lines) == 1 + 2 * 16


def test_empty_baselines_is_input_error(dataset, tmp_path):
    result = CliRunner().invoke(main, [
        "sensitivity",
        "--deaths", str(dataset / "deaths.csv"),
        "--population", str(dataset / "population.csv"),
        "--baselines", "",
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == EXIT_INPUT_ERROR


def test_missing_file_is_usage_error(tmp_path):
    result = CliRunner().invoke(main, [
        "analyse", "--deaths", str(tmp_path / "nope.csv"),
        "--population", str(tmp_path / "nope2.csv"),
    ])
    assert result.exit_code == 2


def test_malformed_input_exit_code(dataset, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("year,month,sex,age_group,count\n2014,13,male,10,5\n")
    result = CliRunner().invoke(main, [
        "analyse", "--deaths", str(bad),
        "--population", str(dataset / "population.csv"),
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == EXIT_INPUT_ERROR


def test_window_outside_coverage_exit_code(dataset, tmp_path):
    result = CliRunner().invoke(main, [
        "analyse",
        "--deaths", str(dataset / "deaths.csv"),
        "--population", str(dataset / "population.csv"),
        "--fit-start", "2004-01", "--fit-end", "2009-12",
        "--project-start", "2010-01", "--project-end", "2013-12",
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == EXIT_INPUT_ERROR


def test_degenerate_fit_exit_code(dataset, tmp_path):
    # all-zero deaths: the model has no finite MLE -> fit error exit code
    with open(dataset / "deaths.csv", newline="", encoding="utf-8") as f:
        panel = parse_deaths(f)
    zero = tmp_path / "zero.csv"
    from excessmort.panels import CountPanel, write_deaths
    zero_panel = CountPanel(panel.start, np.zeros_like(panel.counts))
    with open(zero, "w", newline="", encoding="utf-8") as f:
        write_deaths(zero_panel, f)
    result = CliRunner().invoke(main, [
        "analyse", "--deaths", str(zero),
        "--population", str(dataset / "population.csv"),
        "--fit-start", "2012-01", "--fit-end", "2019-12",
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == EXIT_FIT_ERROR
