import datetime as dt
import os

import numpy as np
import pandas as pd
import pytest
from scipy.stats import chi2_contingency

from climregime.analysis import classify_enso
from climregime.data import (
    BoundingBox,
    ChannelStats,
    DailyFieldSeries,
    GridGeometry,
    compute_channel_stats,
    infer_format,
    load_series,
    normalize,
    spatial_subset,
    split_by_years,
    write_series,
)
from climregime.data.synthetic import SyntheticSpec, enso_state_at, regime_patterns, synthesize
from climregime.exceptions import ConfigError, DataError


def _write_csv(path: str, rows: list) -> str:
    pd.DataFrame(rows, columns=["date", "lat", "lon", "channel", "value"]).to_csv(
        path, index=False
    )
    return path


def _single_day_rows() -> list:
    return [
        ("2000-01-01", lat, lon, channel, 10.0 * lat + lon + (0.5 if channel == "tmax" else 0.0))
        for lat in (0.0, 1.0)
        for lon in (0.0, 1.0)
        for channel in ("tmin", "tmax")
    ]


class TestGridGeometry:
    """Test grid geometry arithmetic"""

    def test_inclusive_cell_counts(self):
        """Test that both bound endpoints are grid centers"""
        geometry = GridGeometry(
            lat_min=-22.0, lat_max=-7.0, lon_min=-57.5, lon_max=-43.0, resolution=0.1
        )
        assert geometry.height == 151
        assert geometry.width == 146
        assert geometry.lat_centers()[0] == -22.0
        assert geometry.lat_centers()[-1] == -7.0

    def test_invalid_resolution(self):
        with pytest.raises(DataError):
            GridGeometry(lat_min=0.0, lat_max=1.0, lon_min=0.0, lon_max=1.0, resolution=0.0)

    def test_inverted_bounds(self):
        with pytest.raises(DataError):
            GridGeometry(lat_min=1.0, lat_max=0.0, lon_min=0.0, lon_max=1.0, resolution=0.5)

    def test_dict_round_trip(self, small_geometry: GridGeometry):
        assert GridGeometry.from_dict(small_geometry.to_dict()) == small_geometry


class TestLoadSeries:
    """Test reading gridded series from disk"""

    def test_single_day_csv(self, temp_dir: str):
        """Test the minimal well-formed long CSV"""
        path = _write_csv(os.path.join(temp_dir, "day.csv"), _single_day_rows())
        series = load_series(path, "csv_long")

        assert len(series) == 1
        assert series.geometry.height == 2
        assert series.geometry.width == 2
        assert series.channel_names == ["tmin", "tmax"]
        assert series.values[0, 1, 0, 0] == 10.0
        assert series.values[0, 1, 1, 1] == 11.5
        assert not series.missing_mask.any()

    def test_duplicate_record(self, temp_dir: str):
        rows = _single_day_rows()
        rows.append(rows[0])
        path = _write_csv(os.path.join(temp_dir, "dup.csv"), rows)
        with pytest.raises(DataError, match="duplicate record"):
            load_series(path, "csv_long")

    def test_inconsistent_grid(self, temp_dir: str):
        """Test that a day with fewer cells is rejected"""
        rows = _single_day_rows()
        rows += [("2000-01-02",) + r[1:] for r in _single_day_rows()[:-2]]
        path = _write_csv(os.path.join(temp_dir, "ragged.csv"), rows)
        with pytest.raises(DataError, match="inconsistent grid shape"):
            load_series(path, "csv_long")

    def test_malformed_header(self, temp_dir: str):
        path = os.path.join(temp_dir, "bad.csv")
        pd.DataFrame({"day": ["2000-01-01"], "value": [1.0]}).to_csv(path, index=False)
        with pytest.raises(DataError, match="malformed header"):
            load_series(path, "csv_long")

    def test_missing_value_flags_cell(self, temp_dir: str):
        rows = _single_day_rows()
        rows[0] = rows[0][:4] + (None,)
        path = _write_csv(os.path.join(temp_dir, "gap.csv"), rows)
        series = load_series(path, "csv_long")
        assert series.missing_mask[0, 0, 0]
        assert series.missing_mask.sum() == 1

    def test_missing_file(self, temp_dir: str):
        with pytest.raises(DataError, match="not found"):
            load_series(os.path.join(temp_dir, "nope.csv"), "csv_long")

    def test_unsupported_format(self, temp_dir: str):
        path = _write_csv(os.path.join(temp_dir, "day.csv"), _single_day_rows())
        with pytest.raises(DataError, match="Unsupported series format"):
            load_series(path, "netcdf")

    def test_infer_format(self):
        assert infer_format("a/b/series.csv") == "csv_long"
        assert infer_format("series.bin") == "packed_binary"
        with pytest.raises(DataError):
            infer_format("series.nc")


class TestWriteSeries:
    """Test lossless round trips through both formats"""

    def test_packed_round_trip_is_bitwise(self, small_spec: SyntheticSpec, temp_dir: str):
        series = synthesize(small_spec)[0].isel_time(range(10))
        path = os.path.join(temp_dir, "series.bin")
        write_series(series, path, "packed_binary")
        loaded = load_series(path, "packed_binary")

        assert loaded.dates == series.dates
        assert loaded.channel_names == series.channel_names
        assert loaded.geometry == series.geometry
        np.testing.assert_array_equal(loaded.values, series.values)

    def test_csv_round_trip_keeps_missing(self, tiny_series: DailyFieldSeries, temp_dir: str):
        values = tiny_series.values.copy()
        values[3, 1, 0, :] = np.nan
        series = DailyFieldSeries.from_arrays(
            dates=tiny_series.dates,
            lats=tiny_series.data["lat"].values,
            lons=tiny_series.data["lon"].values,
            channel_names=tiny_series.channel_names,
            values=values,
        )
        path = os.path.join(temp_dir, "series.csv")
        write_series(series, path, "csv_long")
        loaded = load_series(path, "csv_long")

        np.testing.assert_array_equal(loaded.missing_mask, series.missing_mask)
        present = ~series.missing_mask
        np.testing.assert_array_equal(loaded.values[present], series.values[present])

    def test_creates_parent_directory(self, tiny_series: DailyFieldSeries, temp_dir: str):
        path = os.path.join(temp_dir, "nested", "dir", "series.bin")
        write_series(tiny_series, path, "packed_binary")
        assert os.path.exists(path)


class TestSubsetting:
    """Test spatial and temporal subsetting"""

    def test_full_bbox_is_identity(self, small_spec: SyntheticSpec):
        series = synthesize(small_spec)[0]
        subset = spatial_subset(series, series.geometry.bounds)
        assert subset.geometry == series.geometry
        np.testing.assert_array_equal(subset.values, series.values)

    def test_inner_bbox(self, small_spec: SyntheticSpec):
        series = synthesize(small_spec)[0]
        subset = spatial_subset(series, BoundingBox(11.0, 12.0, 71.0, 73.0))
        assert (subset.geometry.height, subset.geometry.width) == (2, 3)
        np.testing.assert_array_equal(subset.values, series.values[:, 1:3, 1:4, :])

    def test_bbox_outside_grid(self, small_spec: SyntheticSpec):
        series = synthesize(small_spec)[0]
        with pytest.raises(DataError, match="does not intersect"):
            spatial_subset(series, BoundingBox(-40.0, -30.0, 0.0, 10.0))

    def test_split_without_test_years(self, tiny_series: DailyFieldSeries):
        train, test = split_by_years(tiny_series, [])
        assert len(train) == len(tiny_series)
        assert len(test) == 0

    def test_split_by_years(self, small_spec: SyntheticSpec):
        series = synthesize(small_spec)[0]
        train, test = split_by_years(series, [1991])
        assert len(test) == 365
        assert set(test.years) == {1991}
        assert set(train.years) == {1990}

    def test_split_all_years(self, small_spec: SyntheticSpec):
        series = synthesize(small_spec)[0]
        train, test = split_by_years(series, [1990, 1991])
        assert len(train) == 0
        assert len(test) == len(series)


class TestNormalize:
    """Test per-channel z-scoring"""

    def test_self_statistics(self, small_spec: SyntheticSpec):
        series = synthesize(small_spec)[0]
        normalized = normalize(series, compute_channel_stats(series))
        for c in range(len(series.channel_names)):
            layer = normalized.values[..., c]
            assert abs(layer.mean()) < 1e-9
            assert abs(layer.std() - 1.0) < 1e-9

    def test_identity_statistics(self, tiny_series: DailyFieldSeries):
        normalized = normalize(tiny_series, ChannelStats(mean=(0.0, 0.0), std=(1.0, 1.0)))
        np.testing.assert_array_equal(normalized.values, tiny_series.values)

    def test_missing_cells_become_zero(self, tiny_series: DailyFieldSeries):
        values = tiny_series.values.copy()
        values[0, 0, 0, :] = np.nan
        series = DailyFieldSeries.from_arrays(
            dates=tiny_series.dates,
            lats=tiny_series.data["lat"].values,
            lons=tiny_series.data["lon"].values,
            channel_names=tiny_series.channel_names,
            values=values,
        )
        normalized = normalize(series, compute_channel_stats(series))
        assert np.all(normalized.values[0, 0, 0, :] == 0.0)
        assert normalized.missing_mask[0, 0, 0]

    def test_constant_channel(self, tiny_series: DailyFieldSeries):
        values = tiny_series.values.copy()
        values[..., 1] = 7.0
        series = DailyFieldSeries.from_arrays(
            dates=tiny_series.dates,
            lats=tiny_series.data["lat"].values,
            lons=tiny_series.data["lon"].values,
            channel_names=tiny_series.channel_names,
            values=values,
        )
        with pytest.raises(DataError, match="Zero standard deviation"):
            normalize(series, compute_channel_stats(series))


class TestSynthesize:
    """Test the planted-regime generator"""

    def test_deterministic(self, small_spec: SyntheticSpec):
        first = synthesize(small_spec)
        second = synthesize(small_spec)
        np.testing.assert_array_equal(first[0].values, second[0].values)
        np.testing.assert_array_equal(first[1].labels, second[1].labels)
        pd.testing.assert_frame_equal(first[2].table, second[2].table)

    def test_noise_free_days_equal_patterns(self, small_geometry: GridGeometry):
        spec = SyntheticSpec(
            geometry=small_geometry,
            n_regimes=4,
            start_year=1990,
            end_year=1990,
            noise_sigma=0.0,
            seasonal_amplitude=0.0,
            seed=2,
        )
        series, labels, _ = synthesize(spec)
        np.testing.assert_array_equal(series.values, regime_patterns(spec)[labels.labels])

    def test_oni_follows_square_wave(self, small_spec: SyntheticSpec):
        _, _, oni = synthesize(small_spec)
        assert len(oni) == 24
        assert oni.values[0] == 1.0
        assert enso_state_at(12, small_spec) == "Neutral"
        assert oni.values[12] == 0.0

    def test_invalid_spec(self, small_geometry: GridGeometry):
        with pytest.raises(ConfigError):
            synthesize(SyntheticSpec(geometry=small_geometry, coupling_strength=1.5))
        with pytest.raises(ConfigError):
            synthesize(SyntheticSpec(geometry=small_geometry, n_regimes=3, enso_coupled_regime=3))

    def test_spec_dict_round_trip(self, small_spec: SyntheticSpec):
        assert SyntheticSpec.from_dict(small_spec.to_dict()) == small_spec

    @pytest.mark.slow
    def test_uncoupled_regimes_independent_of_enso(self):
        """Test that regime draws ignore ENSO when coupling is off"""
        geometry = GridGeometry(
            lat_min=0.0, lat_max=1.0, lon_min=0.0, lon_max=1.0, resolution=1.0
        )
        rejections = 0
        for seed in range(20):
            spec = SyntheticSpec(
                geometry=geometry,
                n_regimes=4,
                start_year=1990,
                end_year=1997,
                coupling_strength=0.0,
                channel_names=("t",),
                seed=seed,
            )
            _, labels, oni = synthesize(spec)
            states = classify_enso(oni).state_by_ordinal()
            day_states = [states[d.year * 12 + d.month - 1] for d in labels.dates]
            table = pd.crosstab(np.asarray(labels.labels), np.asarray(day_states)).to_numpy()
            _, p_value, _, _ = chi2_contingency(table)
            rejections += p_value <= 0.01
        assert rejections <= 1

    def test_dates_cover_whole_years(self, small_spec: SyntheticSpec):
        series, labels, _ = synthesize(small_spec)
        assert series.dates[0] == dt.date(1990, 1, 1)
        assert series.dates[-1] == dt.date(1991, 12, 31)
        assert labels.dates == series.dates
