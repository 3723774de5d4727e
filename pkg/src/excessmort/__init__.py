"""Excess-mortality estimation from age/sex-stratified monthly death counts."""

from .design import (
    COARSE_BAND_LABELS,
    DesignMatrix,
    DesignSpec,
    build_design,
    coarse_band,
    column_names,
    encode_row,
    enumerate_strata,
)
from .exceptions import (
    AlignmentError,
    CompletenessError,
    ConvergenceWarning,
    CoverageError,
    CovarianceError,
    DegenerateResponseError,
    DegreesOfFreedomError,
    DomainError,
    DuplicateRecordError,
    ExcessMortError,
    ParseError,
    SingularDesignError,
)
from .glm import QuasiPoissonRegression, pearson_dispersion, poisson_deviance
from .panels import (
    CountPanel,
    CovidDeathSeries,
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
from .periods import MonthIndex, QuarterIndex, days_in_month, month_range, quarter_range
from .pipeline import (
    AnalysisConfig,
    AnalysisResult,
    SensitivityReport,
    analyse,
    covid_comparison,
    population_trend_diagnostic,
    run_analysis,
    run_sensitivity,
)
from .rounding import random_round, round_counts
from .synth import GeneratorTruth, brute_force_expected, default_truth, generate_panel
from .smr import (
    RateTrend,
    StandardPopulation,
    StandardizedRateSeries,
    fit_rate_trend,
    rate_series,
    smr_excess,
    standardized_rate,
)
from .uncertainty import (
    DEFAULT_SAMPLES,
    ExcessEstimate,
    Selection,
    aggregate_expected,
    excess_estimate,
    percentile_interval,
    sample_coefficients,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
