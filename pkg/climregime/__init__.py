# isort: skip_file
# Subpackage order matters: the model layer builds on data, analysis builds on
# model, and the synthetic generator returns analysis types.
from .data import BoundingBox, DailyFieldSeries, GridGeometry, load_series, write_series
from .model import Checkpoint, TrainConfig, ViewConfig, load_checkpoint, train
from .analysis import (
    RegimeSequence,
    classify_enso,
    compare_periods,
    discretize,
    lagged_anomalies,
    monthly_frequency,
)
from .data.synthetic import SyntheticSpec, synthesize
from .config import PipelineConfig, load_pipeline_config
from .core import cmd_analyze, cmd_discretize, cmd_report, cmd_synth, cmd_train
from .exceptions import ClimRegimeError, ConfigError, DataError, NumericalError

__all__ = [
    "BoundingBox",
    "DailyFieldSeries",
    "GridGeometry",
    "load_series",
    "write_series",
    "Checkpoint",
    "TrainConfig",
    "ViewConfig",
    "load_checkpoint",
    "train",
    "RegimeSequence",
    "classify_enso",
    "compare_periods",
    "discretize",
    "lagged_anomalies",
    "monthly_frequency",
    "SyntheticSpec",
    "synthesize",
    "PipelineConfig",
    "load_pipeline_config",
    "cmd_synth",
    "cmd_train",
    "cmd_discretize",
    "cmd_analyze",
    "cmd_report",
    "ClimRegimeError",
    "ConfigError",
    "DataError",
    "NumericalError",
]

__version__ = "0.1.0"
