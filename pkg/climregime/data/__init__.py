from .file_handler import infer_format, load_series, set_v_file_han, write_series
from .grid import (
    BoundingBox,
    ChannelStats,
    DailyField,
    DailyFieldSeries,
    GridGeometry,
    compute_channel_stats,
    normalize,
    set_v_grid,
    spatial_subset,
    split_by_years,
)

__all__ = [
    "BoundingBox",
    "ChannelStats",
    "DailyField",
    "DailyFieldSeries",
    "GridGeometry",
    "compute_channel_stats",
    "normalize",
    "spatial_subset",
    "split_by_years",
    "infer_format",
    "load_series",
    "write_series",
    "set_v_grid",
    "set_v_file_han",
]
