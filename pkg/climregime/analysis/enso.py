"""ONI ingestion and run-length ENSO state classification."""

import logging
import os
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from ..exceptions import DataError
from ..util.logging_utils import get_logger, verbosity_to_level

logger = get_logger(level=logging.DEBUG)

EL_NINO = "ElNino"
NEUTRAL = "Neutral"
LA_NINA = "LaNina"
ENSO_STATES = (EL_NINO, NEUTRAL, LA_NINA)

ONI_COLUMNS = ["year", "month", "oni"]


def set_v_enso(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


def month_ordinal(year: int, month: int) -> int:
    """Months since year 0, so that lags are plain integer offsets."""
    return int(year) * 12 + int(month) - 1


def ordinal_to_year_month(ordinal: int) -> Tuple[int, int]:
    return ordinal // 12, ordinal % 12 + 1


def _check_monthly_index(table: pd.DataFrame, what: str) -> np.ndarray:
    ordinals = table["year"].to_numpy(dtype=np.int64) * 12 + (
        table["month"].to_numpy(dtype=np.int64) - 1
    )
    if ((table["month"] < 1) | (table["month"] > 12)).any():
        raise DataError(f"{what}: month values must lie in 1..12")
    if len(ordinals) > 1 and not np.all(np.diff(ordinals) == 1):
        raise DataError(f"{what}: months must be strictly increasing without gaps")
    return ordinals


@dataclass
class OniSeries:
    """Monthly Oceanic Nino Index values, gap-free and increasing."""

    table: pd.DataFrame

    def __post_init__(self) -> None:
        self.table = self.table[ONI_COLUMNS].reset_index(drop=True).copy()
        self.table["year"] = self.table["year"].astype(int)
        self.table["month"] = self.table["month"].astype(int)
        self.table["oni"] = self.table["oni"].astype(float)
        _check_monthly_index(self.table, "ONI series")
        if not np.all(np.isfinite(self.table["oni"].to_numpy())):
            raise DataError("ONI series contains non-finite values")

    def __len__(self) -> int:
        return len(self.table)

    @property
    def ordinals(self) -> np.ndarray:
        return self.table["year"].to_numpy() * 12 + self.table["month"].to_numpy() - 1

    @property
    def values(self) -> np.ndarray:
        return self.table["oni"].to_numpy(dtype=np.float64)


@dataclass
class EnsoStateSeries:
    """Monthly ENSO states on the same index as the ONI series they came from."""

    table: pd.DataFrame

    def __post_init__(self) -> None:
        self.table = self.table[["year", "month", "state"]].reset_index(drop=True).copy()
        _check_monthly_index(self.table, "ENSO state series")
        unknown = set(self.table["state"]) - set(ENSO_STATES)
        if unknown:
            raise DataError(f"Unknown ENSO state(s): {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.table)

    @property
    def ordinals(self) -> np.ndarray:
        return self.table["year"].to_numpy() * 12 + self.table["month"].to_numpy() - 1

    def state_by_ordinal(self) -> Dict[int, str]:
        return dict(zip(self.ordinals.tolist(), self.table["state"].tolist()))


def load_oni(path: str) -> OniSeries:
    """Read an ONI CSV with header ``year,month,oni``."""
    if not os.path.exists(path):
        raise DataError(f"ONI file not found: {path}")
    df = pd.read_csv(path)
    if list(df.columns) != ONI_COLUMNS:
        raise DataError(f"{path}: malformed header {list(df.columns)}, expected {ONI_COLUMNS}")
    oni = OniSeries(df)
    logger.info(f"Loaded {len(oni)} ONI months from {path}")
    return oni


def write_oni(oni: OniSeries, path: str) -> None:
    oni.table.to_csv(path, index=False)


def run_length_states(
    values: np.ndarray, threshold: float = 0.5, persistence: int = 5
) -> np.ndarray:
    """
    Label each month ElNino / LaNina / Neutral from consecutive-run membership.

    A month is El Nino (La Nina) when it lies in a run of at least
    ``persistence`` consecutive months with value >= +threshold
    (<= -threshold).
    """
    values = np.asarray(values, dtype=np.float64)
    states = np.full(values.shape, NEUTRAL, dtype=object)
    for label, hot in ((EL_NINO, values >= threshold), (LA_NINA, values <= -threshold)):
        if not hot.any():
            continue
        # Boundaries of runs of True
        padded = np.concatenate([[False], hot, [False]])
        edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
        for start, stop in zip(edges[::2], edges[1::2]):
            if stop - start >= persistence:
                states[start:stop] = label
    return states


def classify_enso(
    oni: OniSeries, threshold: float = 0.5, persistence: int = 5
) -> EnsoStateSeries:
    """
    Derive monthly ENSO states from ONI using a threshold and persistence rule.

    Args:
        oni: Monthly ONI series
        threshold: Magnitude in degrees C that an event month must reach
        persistence: Minimum run length in months; 1 gives plain thresholding

    Returns:
        EnsoStateSeries on the same months as ``oni``
    """
    if threshold <= 0:
        raise DataError(f"ENSO threshold must be positive, got {threshold}")
    if persistence < 1:
        raise DataError(f"ENSO persistence must be at least 1 month, got {persistence}")

    states = run_length_states(oni.values, threshold, persistence)
    table = oni.table[["year", "month"]].copy()
    table["state"] = states
    result = EnsoStateSeries(table)

    counts = table["state"].value_counts()
    logger.info(
        "ENSO months: "
        + ", ".join(f"{s}={int(counts.get(s, 0))}" for s in ENSO_STATES)
    )
    return result
