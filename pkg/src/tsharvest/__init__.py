"""Epidemic, delay-tolerant harvesting of dependence time series in MANETs."""

from .harness import (
    ScenarioConfig,
    RunMetrics,
    load_config,
    preset,
    run_scenario,
    sweep,
    emit_results,
)
from .timeseries import SeriesId, TimeSeries, TimeSeriesStore, TransferDataset

__version__ = "0.1.0"
