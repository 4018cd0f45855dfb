import datetime as dt
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, replace
from typing import Any, Dict, List

import numpy as np
import pytest

from climregime.analysis import RegimeSequence
from climregime.data import DailyFieldSeries, GridGeometry, compute_channel_stats, normalize
from climregime.data.synthetic import SyntheticSpec, synthesize
from climregime.model import EncoderDims, TrainConfig, ViewConfig, train
from climregime.model.trainer import TrainResult

DESK_SEEDS = (0, 1, 2)
DESK_VIEWS = ViewConfig(
    out_size=8,
    patch_size=4,
    n_anchors=2,
    target_scale=(0.9, 1.0),
    anchor_scale=(0.8, 1.0),
    mask_ratio=0.25,
)
DESK_DIMS = EncoderDims(embed=16, hidden=32, latent=16)
DESK_TRAIN = TrainConfig(
    n_prototypes=8,
    epochs=20,
    batch_size=128,
    base_lr=1e-2,
    final_lr=1e-4,
    ema_momentum=0.95,
    ema_momentum_final=0.95,
)


def desk_spec(seed: int, **overrides: Any) -> SyntheticSpec:
    """Six planted regimes over six years on an 8x8 grid, low noise, no seasonal cycle"""
    settings: Dict[str, Any] = dict(
        geometry=GridGeometry(lat_min=0.0, lat_max=7.0, lon_min=0.0, lon_max=7.0, resolution=1.0),
        n_regimes=6,
        start_year=1990,
        end_year=1995,
        seasonal_amplitude=0.0,
        noise_sigma=0.1,
        channel_names=("tmin", "tmax", "precip"),
        seed=seed,
    )
    settings.update(overrides)
    return SyntheticSpec(**settings)


@dataclass
class DeskRun:
    series: DailyFieldSeries
    true_labels: RegimeSequence
    memax: TrainResult
    control: TrainResult


@pytest.fixture
def temp_dir():
    """Create and cleanup a temporary directory"""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def small_geometry():
    """4x4 grid at 1 degree"""
    return GridGeometry(lat_min=10.0, lat_max=13.0, lon_min=70.0, lon_max=73.0, resolution=1.0)


@pytest.fixture
def small_spec(small_geometry: GridGeometry):
    """Two-year synthetic spec with three regimes"""
    return SyntheticSpec(
        geometry=small_geometry,
        n_regimes=3,
        start_year=1990,
        end_year=1991,
        coupling_strength=0.3,
        seed=11,
    )


@pytest.fixture
def tiny_series():
    """Ten days on a 2x2 grid with two channels"""
    rng = np.random.default_rng(5)
    dates = [dt.date(2000, 1, 1) + dt.timedelta(days=i) for i in range(10)]
    values = rng.normal(20.0, 3.0, size=(10, 2, 2, 2)).astype(np.float32).astype(np.float64)
    return DailyFieldSeries.from_arrays(
        dates=dates,
        lats=np.array([-1.0, -0.5]),
        lons=np.array([30.0, 30.5]),
        channel_names=["tmin", "tmax"],
        values=values,
    )


@pytest.fixture
def tiny_view_cfg():
    """8x8 views of four 4x4 patches, one of them masked"""
    return ViewConfig(out_size=8, patch_size=4, n_anchors=2, mask_ratio=0.25)


@pytest.fixture
def tiny_dims():
    return EncoderDims(embed=6, hidden=7, latent=5)


@pytest.fixture
def tiny_train_cfg():
    return TrainConfig(n_prototypes=4, epochs=2, batch_size=64, seed=3)


@pytest.fixture
def make_sequence():
    """Factory for consecutive-day regime sequences"""

    def _make(start: dt.date, labels: List[int], n_clusters: int) -> RegimeSequence:
        dates = [start + dt.timedelta(days=i) for i in range(len(labels))]
        return RegimeSequence(dates=dates, labels=np.array(labels), n_clusters=n_clusters)

    return _make


@pytest.fixture
def pipeline_config_dict(temp_dir: str) -> Dict[str, Any]:
    """Desk-scale synthetic pipeline config writing into the temp dir"""
    return {
        "data": {"source": "synthetic"},
        "synthetic": {
            "geometry": {
                "lat_min": 10.0,
                "lat_max": 13.0,
                "lon_min": 70.0,
                "lon_max": 73.0,
                "resolution": 1.0,
            },
            "n_regimes": 3,
            "start_year": 1990,
            "end_year": 1991,
            "coupling_strength": 0.3,
        },
        "test_years": [1991],
        "views": {"out_size": 8, "patch_size": 4, "n_anchors": 2, "mask_ratio": 0.25},
        "encoder": {"embed": 8, "hidden": 8, "latent": 6},
        "train": {"n_prototypes": 4, "epochs": 1, "batch_size": 128},
        "analysis": {"lags": [-2, 2], "n_min": 1, "n_groups": 2, "top_n": 2},
        "output_dir": os.path.join(temp_dir, "out"),
        "seed": 7,
    }


@pytest.fixture
def pipeline_config_file(pipeline_config_dict: Dict[str, Any], temp_dir: str) -> str:
    """Save the pipeline config to a temporary file"""
    file_path = os.path.join(temp_dir, "config.json")
    with open(file_path, "w") as f:
        json.dump(pipeline_config_dict, f)
    return file_path


@pytest.fixture(scope="session")
def desk_runs() -> Dict[int, DeskRun]:
    """Per seed: the normalized desk series, its planted labels, and training with and without ME-MAX"""
    runs: Dict[int, DeskRun] = {}
    for seed in DESK_SEEDS:
        series, true_labels, _ = synthesize(desk_spec(seed))
        series = normalize(series, compute_channel_stats(series))
        trained = {
            weight: train(
                series,
                DESK_VIEWS,
                DESK_DIMS,
                replace(DESK_TRAIN, memax_weight=weight, seed=seed),
                show_progress=False,
            )
            for weight in (1.0, 0.0)
        }
        runs[seed] = DeskRun(series, true_labels, memax=trained[1.0], control=trained[0.0])
    return runs


@pytest.fixture
def coupled_pipeline_dict(temp_dir: str) -> Dict[str, Any]:
    """Desk setup with regime 2 boosted two months after El Nino onset, fast ENSO cycle"""
    spec = desk_spec(
        seed=0,
        enso_coupled_regime=2,
        coupling_strength=0.3,
        coupling_lag_months=2,
        enso_period_months=20,
        enso_phase_months=5,
    )
    return {
        "data": {"source": "synthetic"},
        "synthetic": spec.to_dict(),
        "test_years": [],
        "views": DESK_VIEWS.to_dict(),
        "encoder": DESK_DIMS.to_dict(),
        "train": DESK_TRAIN.to_dict(),
        "analysis": {"lags": [-3, 3], "periods": ["1990-1995"], "n_min": 5, "n_groups": 1, "top_n": 3},
        "output_dir": os.path.join(temp_dir, "coupled"),
        "seed": 0,
    }


# Configure pytest
def pytest_configure(config: pytest.Config):
    """Configure pytest with custom markers"""
    config.addinivalue_line(
        "markers",
        "slow: marks tests as slow (deselect with '-m \"not slow\"')",
    )
    config.addinivalue_line("markers", "integration: marks tests as integration tests")
    config.addinivalue_line("markers", "unit: marks tests as unit tests")
