import logging
import os
from typing import List

import numpy as np
import pandas as pd

from ..exceptions import DataError
from ..util.logging_utils import get_logger, verbosity_to_level
from ..util.packed import read_packed, write_packed
from .grid import DailyFieldSeries, GridGeometry

logger = get_logger(level=logging.DEBUG)

CSV_COLUMNS = ["date", "lat", "lon", "channel", "value"]
SERIES_FORMATS = ("csv_long", "packed_binary")
PACKED_ORDER = "day,channel,lat,lon"


def set_v_file_han(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


def infer_format(path: str) -> str:
    """Guess the series format from the file extension."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".csv":
        return "csv_long"
    if ext in (".bin", ".packed"):
        return "packed_binary"
    raise DataError(f"Cannot infer series format from extension of {path}")


def load_series(path: str, format: str) -> DailyFieldSeries:
    """
    Load a gridded daily series from disk.

    Args:
        path: File to read
        format: ``csv_long`` or ``packed_binary``

    Returns:
        A date-sorted series with missing cells flagged in its mask

    Raises:
        DataError: On malformed headers, duplicate records or a grid shape
            that changes between dates
    """
    if not os.path.exists(path):
        raise DataError(f"Series file not found: {path}")
    if format == "csv_long":
        series = _load_csv_long(path)
    elif format == "packed_binary":
        series = _load_packed(path)
    else:
        raise DataError(f"Unsupported series format: {format}. Must be one of {SERIES_FORMATS}")

    logger.info(
        f"Loaded {len(series)} day(s) on a {series.geometry.height}x{series.geometry.width} "
        f"grid with channels {series.channel_names} from {path}"
    )
    return series


def write_series(series: DailyFieldSeries, path: str, format: str) -> None:
    """Write ``series`` in one of the supported formats."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    if format == "csv_long":
        _write_csv_long(series, path)
    elif format == "packed_binary":
        _write_packed(series, path)
    else:
        raise DataError(f"Unsupported series format: {format}. Must be one of {SERIES_FORMATS}")
    logger.info(f"Wrote {len(series)} day(s) to {path}")


# pyright: reportUnknownMemberType=false
def _load_csv_long(path: str) -> DailyFieldSeries:
    try:
        df = pd.read_csv(
            path,
            dtype={"date": str, "channel": str},
            keep_default_na=False,
            na_values=[""],
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise DataError(f"{path}: unreadable CSV ({e})") from e

    if list(df.columns) != CSV_COLUMNS:
        raise DataError(
            f"{path}: malformed header {list(df.columns)}, expected {CSV_COLUMNS}"
        )
    if df.empty:
        raise DataError(f"{path}: no records")

    try:
        df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d")
        df["value"] = df["value"].astype(np.float64)
    except (ValueError, TypeError) as e:
        raise DataError(f"{path}: bad date or value field ({e})") from e

    key = ["date", "lat", "lon", "channel"]
    duplicated = df.duplicated(subset=key)
    if duplicated.any():
        first = df[duplicated].iloc[0]
        raise DataError(
            f"{path}: duplicate record for date={first['date'].date()} "
            f"lat={first['lat']} lon={first['lon']} channel={first['channel']}"
        )

    dates = np.sort(df["date"].unique())
    lats = np.sort(df["lat"].unique())
    lons = np.sort(df["lon"].unique())
    channels: List[str] = list(dict.fromkeys(df["channel"].tolist()))

    cells_per_day = len(lats) * len(lons) * len(channels)
    per_day = df.groupby("date").size()
    if (per_day != cells_per_day).any():
        bad = per_day[per_day != cells_per_day].index[0]
        raise DataError(
            f"{path}: inconsistent grid shape on {pd.Timestamp(bad).date()} "
            f"({per_day[bad]} records, expected {cells_per_day})"
        )

    values = np.full((len(dates), len(lats), len(lons), len(channels)), np.nan)
    t = np.searchsorted(dates, df["date"].to_numpy())
    i = np.searchsorted(lats, df["lat"].to_numpy())
    j = np.searchsorted(lons, df["lon"].to_numpy())
    c = pd.Index(channels).get_indexer(df["channel"])
    values[t, i, j, c] = df["value"].to_numpy()

    return DailyFieldSeries.from_arrays(
        dates=list(pd.DatetimeIndex(dates).date),
        lats=lats,
        lons=lons,
        channel_names=channels,
        values=values,
    )


def _write_csv_long(series: DailyFieldSeries, path: str) -> None:
    flat = series.data.to_series().reset_index()
    flat.columns = CSV_COLUMNS
    flat["date"] = pd.DatetimeIndex(flat["date"]).strftime("%Y-%m-%d")
    flat.to_csv(path, index=False, na_rep="")


def _load_packed(path: str) -> DailyFieldSeries:
    header, payload = read_packed(path)
    try:
        geometry = GridGeometry.from_dict(header["geometry"])
        channels = [str(c) for c in header["channel_names"]]
        dates = pd.to_datetime(header["dates"], format="%Y-%m-%d")
        lats = np.asarray(header["lat"], dtype=np.float64)
        lons = np.asarray(header["lon"], dtype=np.float64)
        order = header["order"]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: malformed header ({e})") from e

    if order != PACKED_ORDER:
        raise DataError(f"{path}: unsupported element order {order!r}")
    if len(dates) > 1 and not (dates[1:] > dates[:-1]).all():
        raise DataError(f"{path}: dates are not strictly increasing")

    shape = (len(dates), len(channels), len(lats), len(lons))
    if payload.size != int(np.prod(shape)):
        raise DataError(
            f"{path}: payload holds {payload.size} values, header implies {shape}"
        )
    values = payload.reshape(shape).transpose(0, 2, 3, 1)
    return DailyFieldSeries.from_arrays(
        dates=list(dates.date),
        lats=lats,
        lons=lons,
        channel_names=channels,
        values=values,
        geometry=geometry,
    )


def _write_packed(series: DailyFieldSeries, path: str) -> None:
    header = {
        "geometry": series.geometry.to_dict(),
        "channel_names": series.channel_names,
        "dates": [d.isoformat() for d in series.dates],
        "lat": [float(v) for v in series.data["lat"].values],
        "lon": [float(v) for v in series.data["lon"].values],
        "order": PACKED_ORDER,
    }
    write_packed(path, header, series.values.transpose(0, 3, 1, 2))
