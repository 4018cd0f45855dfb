"""
Gridded daily field data model: geometry, series container, spatial and
temporal subsetting, and per-channel normalization.

A series is held as an ``xarray.DataArray`` with dimensions
``(time, lat, lon, channel)``; missing grid cells are tracked by a separate
boolean ``(time, lat, lon)`` array so that normalization can zero-fill them
without losing the information.
"""

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import xarray as xr

from ..exceptions import DataError
from ..util.logging_utils import get_logger, verbosity_to_level

logger = get_logger(level=logging.DEBUG)

COORD_DECIMALS = 9


def set_v_grid(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


def grid_centers(start: float, count: int, resolution: float) -> np.ndarray:
    """Cell centers ``start + i * resolution``, rounded to kill float drift."""
    return np.round(start + np.arange(count) * resolution, COORD_DECIMALS)


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self) -> None:
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise DataError(f"Invalid bounding box: {self}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BoundingBox":
        return cls(
            lat_min=float(data["lat_min"]),
            lat_max=float(data["lat_max"]),
            lon_min=float(data["lon_min"]),
            lon_max=float(data["lon_max"]),
        )


@dataclass(frozen=True)
class GridGeometry:
    """Regular lat/lon grid whose centers include both bound endpoints."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    resolution: float

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise DataError(f"Grid resolution must be positive, got {self.resolution}")
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise DataError(
                "Grid bounds must satisfy lat_min < lat_max and lon_min < lon_max, "
                f"got lat [{self.lat_min}, {self.lat_max}] lon [{self.lon_min}, {self.lon_max}]"
            )

    @property
    def height(self) -> int:
        return int(round((self.lat_max - self.lat_min) / self.resolution)) + 1

    @property
    def width(self) -> int:
        return int(round((self.lon_max - self.lon_min) / self.resolution)) + 1

    @property
    def bounds(self) -> BoundingBox:
        return BoundingBox(self.lat_min, self.lat_max, self.lon_min, self.lon_max)

    def lat_centers(self) -> np.ndarray:
        return grid_centers(self.lat_min, self.height, self.resolution)

    def lon_centers(self) -> np.ndarray:
        return grid_centers(self.lon_min, self.width, self.resolution)

    def to_dict(self) -> Dict[str, float]:
        return {
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
            "resolution": self.resolution,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridGeometry":
        return cls(
            lat_min=float(data["lat_min"]),
            lat_max=float(data["lat_max"]),
            lon_min=float(data["lon_min"]),
            lon_max=float(data["lon_max"]),
            resolution=float(data["resolution"]),
        )

    @classmethod
    def from_centers(cls, lats: np.ndarray, lons: np.ndarray) -> "GridGeometry":
        """Infer the geometry of a regular grid from its sorted cell centers."""
        if len(lats) < 2 or len(lons) < 2:
            raise DataError(
                f"A grid needs at least 2x2 cells, got {len(lats)}x{len(lons)}"
            )
        spacings = np.concatenate([np.diff(lats), np.diff(lons)])
        resolution = round(float(spacings[0]), COORD_DECIMALS)
        if resolution <= 0 or not np.allclose(
            spacings, resolution, rtol=0, atol=1e-6 * resolution
        ):
            raise DataError("Grid centers are not regularly spaced at one resolution")
        return cls(
            lat_min=round(float(lats[0]), COORD_DECIMALS),
            lat_max=round(float(lats[-1]), COORD_DECIMALS),
            lon_min=round(float(lons[0]), COORD_DECIMALS),
            lon_max=round(float(lons[-1]), COORD_DECIMALS),
            resolution=resolution,
        )


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and standard deviation, from the training split."""

    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChannelStats":
        return cls(
            mean=tuple(float(v) for v in data["mean"]),
            std=tuple(float(v) for v in data["std"]),
        )


@dataclass
class DailyField:
    date: dt.date
    values: np.ndarray
    channel_names: List[str]
    missing_mask: np.ndarray


@dataclass
class DailyFieldSeries:
    """Date-ordered gridded fields sharing one geometry and channel set."""

    data: xr.DataArray
    missing: xr.DataArray
    geometry: GridGeometry
    channel_stats: Optional[ChannelStats] = field(default=None)

    def __post_init__(self) -> None:
        if tuple(self.data.dims) != ("time", "lat", "lon", "channel"):
            raise DataError(f"Unexpected series dimensions {self.data.dims}")
        if self.data.sizes["channel"] < 1:
            raise DataError("A series needs at least one channel")
        times = self.data["time"].values
        if len(times) > 1 and not np.all(times[1:] > times[:-1]):
            raise DataError("Series dates must be strictly increasing")
        if self.data.sizes["lat"] != self.geometry.height or (
            self.data.sizes["lon"] != self.geometry.width
        ):
            raise DataError(
                f"Grid shape {self.data.sizes['lat']}x{self.data.sizes['lon']} does not "
                f"match geometry {self.geometry.height}x{self.geometry.width}"
            )

    @classmethod
    def from_arrays(
        cls,
        dates: Sequence[dt.date],
        lats: np.ndarray,
        lons: np.ndarray,
        channel_names: Sequence[str],
        values: np.ndarray,
        missing: Optional[np.ndarray] = None,
        geometry: Optional[GridGeometry] = None,
        channel_stats: Optional[ChannelStats] = None,
    ) -> "DailyFieldSeries":
        """Build a series from a ``(time, lat, lon, channel)`` value array."""
        values = np.asarray(values, dtype=np.float64)
        if missing is None:
            missing = np.isnan(values).any(axis=-1)
        time_index = pd.DatetimeIndex(pd.to_datetime(list(dates)))
        coords = {"time": time_index, "lat": np.asarray(lats), "lon": np.asarray(lons)}
        data = xr.DataArray(
            values,
            dims=("time", "lat", "lon", "channel"),
            coords={**coords, "channel": list(channel_names)},
        )
        mask = xr.DataArray(
            np.asarray(missing, dtype=bool), dims=("time", "lat", "lon"), coords=coords
        )
        if geometry is None:
            geometry = GridGeometry.from_centers(np.asarray(lats), np.asarray(lons))
        return cls(data=data, missing=mask, geometry=geometry, channel_stats=channel_stats)

    def __len__(self) -> int:
        return int(self.data.sizes["time"])

    @property
    def channel_names(self) -> List[str]:
        return [str(c) for c in self.data["channel"].values]

    @property
    def dates(self) -> List[dt.date]:
        return [ts.date() for ts in pd.DatetimeIndex(self.data["time"].values)]

    @property
    def years(self) -> np.ndarray:
        return pd.DatetimeIndex(self.data["time"].values).year.to_numpy()

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.data.values)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.asarray(self.missing.values)

    def field(self, index: int) -> DailyField:
        return DailyField(
            date=self.dates[index],
            values=self.values[index],
            channel_names=self.channel_names,
            missing_mask=self.missing_mask[index],
        )

    def isel_time(self, indices: Iterable[int]) -> "DailyFieldSeries":
        idx = np.asarray(list(indices), dtype=int)
        return DailyFieldSeries(
            data=self.data.isel(time=idx),
            missing=self.missing.isel(time=idx),
            geometry=self.geometry,
            channel_stats=self.channel_stats,
        )


def spatial_subset(series: DailyFieldSeries, bbox: BoundingBox) -> DailyFieldSeries:
    """Keep exactly the grid centers inside the closed bounding box."""
    tol = 1e-6 * series.geometry.resolution
    lats = series.data["lat"].values
    lons = series.data["lon"].values
    lat_idx = np.flatnonzero((lats >= bbox.lat_min - tol) & (lats <= bbox.lat_max + tol))
    lon_idx = np.flatnonzero((lons >= bbox.lon_min - tol) & (lons <= bbox.lon_max + tol))

    if lat_idx.size == 0 or lon_idx.size == 0:
        raise DataError(
            f"Bounding box {bbox} does not intersect grid {series.geometry.bounds}"
        )
    if lat_idx.size < 2 or lon_idx.size < 2:
        raise DataError(
            f"Bounding box keeps only {lat_idx.size}x{lon_idx.size} cells; need at least 2x2"
        )

    data = series.data.isel(lat=lat_idx, lon=lon_idx)
    geometry = GridGeometry.from_centers(data["lat"].values, data["lon"].values)
    logger.info(
        f"Spatial subset: {series.geometry.height}x{series.geometry.width} -> "
        f"{geometry.height}x{geometry.width} cells"
    )
    return DailyFieldSeries(
        data=data,
        missing=series.missing.isel(lat=lat_idx, lon=lon_idx),
        geometry=geometry,
        channel_stats=series.channel_stats,
    )


def split_by_years(
    series: DailyFieldSeries, test_years: Iterable[int]
) -> Tuple[DailyFieldSeries, DailyFieldSeries]:
    """Partition days into (train, test) by calendar year; order is preserved."""
    held_out = set(int(y) for y in test_years)
    in_test = np.isin(series.years, list(held_out))
    train = series.isel_time(np.flatnonzero(~in_test))
    test = series.isel_time(np.flatnonzero(in_test))
    logger.info(f"Year split: {len(train)} train days, {len(test)} test days")
    return train, test


def compute_channel_stats(series: DailyFieldSeries) -> ChannelStats:
    """Per-channel mean and (population) standard deviation over non-missing cells."""
    if len(series) == 0:
        raise DataError("Cannot compute channel statistics of an empty series")
    values = series.values
    present = ~series.missing_mask
    means: List[float] = []
    stds: List[float] = []
    for c in range(values.shape[-1]):
        pooled = values[..., c][present]
        if pooled.size == 0:
            raise DataError(f"Channel {series.channel_names[c]!r} has no observed cells")
        means.append(float(pooled.mean()))
        stds.append(float(pooled.std()))
    return ChannelStats(mean=tuple(means), std=tuple(stds))


def normalize(series: DailyFieldSeries, stats: ChannelStats) -> DailyFieldSeries:
    """Z-score each channel; missing cells become exactly 0 afterwards."""
    n_channels = len(series.channel_names)
    if len(stats.mean) != n_channels or len(stats.std) != n_channels:
        raise DataError(
            f"Channel statistics cover {len(stats.mean)} channels, series has {n_channels}"
        )
    std = np.asarray(stats.std, dtype=np.float64)
    if np.any(~(std > 0)):
        bad = [series.channel_names[i] for i in np.flatnonzero(~(std > 0))]
        raise DataError(f"Zero standard deviation for channel(s) {bad}")

    mean = np.asarray(stats.mean, dtype=np.float64)
    values = (series.values - mean) / std
    values[series.missing_mask] = 0.0
    return DailyFieldSeries(
        data=series.data.copy(data=values),
        missing=series.missing.copy(),
        geometry=series.geometry,
        channel_stats=stats,
    )
