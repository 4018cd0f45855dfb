"""
Pipeline configuration: one JSON document resolved into nested dataclasses.

The top-level ``seed`` drives every random stream (synthetic data, view
sampling, initialization), so a config plus ``--seed`` fully determines a run.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .analysis.regimes import DEFAULT_QUANTILES, validate_quantile_grid
from .analysis.teleconnection import LagRange, Period
from .data.grid import BoundingBox
from .data.synthetic import SyntheticSpec
from .exceptions import ConfigError
from .model.encoder import EncoderDims
from .model.msn import TrainConfig
from .model.views import ViewConfig
from .util import get_logger, load_json_with_encoding
from .util.logging_utils import verbosity_to_level

logger = get_logger(level=logging.DEBUG)

THREADS_ENV = "REGIME_THREADS"
DATA_SOURCES = ("synthetic", "file")


def set_v_config(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class DataConfig:
    source: str = "synthetic"
    path: Optional[str] = None
    format: Optional[str] = None
    oni_path: Optional[str] = None

    def validate(self) -> None:
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}, got {self.source!r}")
        if self.source == "file" and not self.path:
            raise ConfigError("data.path is required when data.source is 'file'")
        if self.source == "file" and not self.oni_path:
            raise ConfigError("data.oni_path is required when data.source is 'file'")


@dataclass
class AnalysisConfig:
    lags: LagRange = field(default_factory=LagRange)
    periods: List[Period] = field(default_factory=list)
    quantiles: List[float] = field(default_factory=lambda: list(DEFAULT_QUANTILES))
    channels: Optional[List[str]] = None
    n_min: int = 30
    window: int = 13
    n_groups: int = 4
    enso_threshold: float = 0.5
    enso_persistence: int = 5
    top_n: int = 5

    def validate(self) -> None:
        validate_quantile_grid(self.quantiles)
        if self.n_min < 0:
            raise ConfigError(f"n_min must be non-negative, got {self.n_min}")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 1, got {self.window}")
        if self.n_groups < 1:
            raise ConfigError(f"n_groups must be positive, got {self.n_groups}")
        if self.enso_threshold <= 0 or self.enso_persistence < 1:
            raise ConfigError("enso_threshold must be positive and enso_persistence >= 1")
        if self.top_n < 1:
            raise ConfigError(f"top_n must be positive, got {self.top_n}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lags": [self.lags.tau_min, self.lags.tau_max],
            "periods": [p.label for p in self.periods],
            "quantiles": list(self.quantiles),
            "channels": self.channels,
            "n_min": self.n_min,
            "window": self.window,
            "n_groups": self.n_groups,
            "enso_threshold": self.enso_threshold,
            "enso_persistence": self.enso_persistence,
            "top_n": self.top_n,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AnalysisConfig":
        fields_ = dict(data)
        if "lags" in fields_:
            tau_min, tau_max = fields_["lags"]
            fields_["lags"] = LagRange(int(tau_min), int(tau_max))
        if "periods" in fields_:
            fields_["periods"] = [Period.parse(p) for p in fields_["periods"]]
        try:
            cfg = cls(**fields_)
        except TypeError as e:
            raise ConfigError(f"Invalid analysis config: {e}") from e
        cfg.validate()
        return cfg


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: Optional[SyntheticSpec] = None
    bbox: Optional[BoundingBox] = None
    test_years: List[int] = field(default_factory=list)
    views: ViewConfig = field(default_factory=ViewConfig)
    encoder: EncoderDims = field(default_factory=EncoderDims)
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: str = "output"
    seed: int = 0

    def validate(self) -> None:
        self.data.validate()
        if self.data.source == "synthetic" and self.synthetic is None:
            raise ConfigError("A 'synthetic' section is required when data.source is 'synthetic'")
        if self.synthetic is not None:
            self.synthetic.validate()
        self.views.validate()
        self.encoder.validate()
        self.train.validate()
        self.analysis.validate()

    def apply_overrides(
        self,
        seed: Optional[int] = None,
        epochs: Optional[int] = None,
        output_dir: Optional[str] = None,
    ) -> None:
        """Apply CLI overrides and propagate the master seed."""
        if seed is not None:
            self.seed = seed
        if epochs is not None:
            self.train.epochs = epochs
        if output_dir is not None:
            self.output_dir = output_dir
        self.train.seed = self.seed
        if self.synthetic is not None:
            self.synthetic.seed = self.seed
        self.validate()

    def to_dict(self) -> Dict[str, Any]:
        bbox = self.bbox
        return {
            "data": {
                "source": self.data.source,
                "path": self.data.path,
                "format": self.data.format,
                "oni_path": self.data.oni_path,
            },
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "bbox": (
                {
                    "lat_min": bbox.lat_min,
                    "lat_max": bbox.lat_max,
                    "lon_min": bbox.lon_min,
                    "lon_max": bbox.lon_max,
                }
                if bbox
                else None
            ),
            "test_years": list(self.test_years),
            "views": self.views.to_dict(),
            "encoder": self.encoder.to_dict(),
            "train": self.train.to_dict(),
            "analysis": self.analysis.to_dict(),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        known = {
            "data", "synthetic", "bbox", "test_years", "views", "encoder",
            "train", "analysis", "output_dir", "seed",
        }  # fmt: skip
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config section(s): {sorted(unknown)}")

        try:
            cfg = cls(
                data=DataConfig(**data.get("data", {})),
                synthetic=(
                    SyntheticSpec.from_dict(data["synthetic"]) if data.get("synthetic") else None
                ),
                bbox=BoundingBox.from_dict(data["bbox"]) if data.get("bbox") else None,
                test_years=[int(y) for y in data.get("test_years", [])],
                views=ViewConfig.from_dict(data.get("views", {})),
                encoder=EncoderDims.from_dict(data.get("encoder", {})),
                train=TrainConfig.from_dict(data.get("train", {})),
                analysis=AnalysisConfig.from_dict(data.get("analysis", {})),
                output_dir=str(data.get("output_dir", "output")),
                seed=int(data.get("seed", 0)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            # Also covers DataError from grid geometry and bounding boxes
            raise ConfigError(f"Invalid config: {e}") from e
        except KeyError as e:
            raise ConfigError(f"Config is missing {e}") from e
        cfg.apply_overrides()
        return cfg


def load_pipeline_config(path: str) -> PipelineConfig:
    """Load and validate a pipeline config JSON file."""
    cfg = PipelineConfig.from_dict(load_json_with_encoding(path))
    logger.info(f"Loaded pipeline config from {path} (seed {cfg.seed})")
    return cfg


def resolve_threads() -> int:
    """Worker thread cap from ``REGIME_THREADS``; 1 when unset."""
    value = os.environ.get(THREADS_ENV)
    if value is None or not value.strip():
        return 1
    try:
        threads = int(value.strip())
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from e
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {threads}")
    return threads
