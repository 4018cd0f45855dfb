"""
Synthetic gridded climate generator with planted regimes and ENSO coupling.

Each day picks one of ``n_regimes`` fixed spatial patterns, adds a shared
seasonal cycle and Gaussian noise. During synthetic El Nino months (a
square wave in the month index) the coupled regime's daily probability is
raised by ``coupling_strength``; ``coupling_lag_months`` delays that boost
relative to the ENSO state. Values are emitted at float32 precision so the
series survives the packed binary format bit for bit.
"""

import datetime as dt
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from ..analysis.enso import EL_NINO, LA_NINA, NEUTRAL, OniSeries
from ..analysis.regimes import RegimeSequence
from ..exceptions import ConfigError
from ..util.logging_utils import get_logger, verbosity_to_level
from .grid import DailyFieldSeries, GridGeometry

logger = get_logger(level=logging.DEBUG)

ONI_BY_STATE = {EL_NINO: 1.0, NEUTRAL: 0.0, LA_NINA: -1.0}


def set_v_synthetic(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class SyntheticSpec:
    geometry: GridGeometry
    n_regimes: int = 6
    start_year: int = 1990
    end_year: int = 1995
    enso_coupled_regime: int = 0
    coupling_strength: float = 0.0
    seasonal_amplitude: float = 3.0
    noise_sigma: float = 0.5
    seed: int = 0
    channel_names: Tuple[str, ...] = ("tmin", "tmax")
    pattern_amplitude: float = 4.0
    enso_period_months: int = 48
    enso_phase_months: int = 12
    coupling_lag_months: int = 0

    def validate(self) -> None:
        if not 1 <= self.n_regimes <= 64:
            raise ConfigError(f"n_regimes must lie in [1, 64], got {self.n_regimes}")
        if not 0.0 <= self.coupling_strength <= 1.0:
            raise ConfigError(
                f"coupling_strength must lie in [0, 1], got {self.coupling_strength}"
            )
        if not 0 <= self.enso_coupled_regime < self.n_regimes:
            raise ConfigError(
                f"enso_coupled_regime {self.enso_coupled_regime} outside [0, {self.n_regimes})"
            )
        if self.start_year > self.end_year:
            raise ConfigError(f"start_year {self.start_year} is after end_year {self.end_year}")
        if self.noise_sigma < 0 or self.seasonal_amplitude < 0:
            raise ConfigError("noise_sigma and seasonal_amplitude must be non-negative")
        if not self.channel_names:
            raise ConfigError("At least one channel name is required")
        if not 1 <= self.enso_phase_months <= self.enso_period_months // 2:
            raise ConfigError(
                "enso_phase_months must lie in [1, enso_period_months / 2], got "
                f"{self.enso_phase_months} for period {self.enso_period_months}"
            )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["geometry"] = self.geometry.to_dict()
        data["channel_names"] = list(self.channel_names)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticSpec":
        fields = dict(data)
        try:
            fields["geometry"] = GridGeometry.from_dict(fields["geometry"])
        except KeyError as e:
            raise ConfigError(f"Synthetic spec is missing {e}") from e
        if "channel_names" in fields:
            fields["channel_names"] = tuple(fields["channel_names"])
        try:
            spec = cls(**fields)
        except TypeError as e:
            raise ConfigError(f"Invalid synthetic spec: {e}") from e
        spec.validate()
        return spec


def enso_state_at(ordinal_offset: int, spec: SyntheticSpec) -> str:
    """Square-wave ENSO state for a month counted from January of ``start_year``."""
    position = ordinal_offset % spec.enso_period_months
    if position < spec.enso_phase_months:
        return EL_NINO
    half = spec.enso_period_months // 2
    if half <= position < half + spec.enso_phase_months:
        return LA_NINA
    return NEUTRAL


def regime_patterns(spec: SyntheticSpec) -> np.ndarray:
    """
    The fixed ``(G, H, W, V)`` regime patterns for ``spec``, float32-exact.

    Each pattern is a channel baseline plus a random offset, a random planar
    gradient and a Gaussian warm or cold blob.
    """
    rng = np.random.default_rng(spec.seed)
    return _draw_patterns(spec, rng)


def _draw_patterns(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    g_count = spec.n_regimes
    n_channels = len(spec.channel_names)
    height, width = spec.geometry.height, spec.geometry.width
    y = np.linspace(-1.0, 1.0, height)[:, None]
    x = np.linspace(-1.0, 1.0, width)[None, :]
    amp = spec.pattern_amplitude

    baselines = np.array([18.0 + 12.0 * c if c < 2 else 20.0 for c in range(n_channels)])
    patterns = np.empty((g_count, height, width, n_channels))
    for g in range(g_count):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        gradient = np.cos(angle) * x + np.sin(angle) * y
        cy, cx = rng.uniform(-0.6, 0.6, size=2)
        blob = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * 0.35**2))
        for c in range(n_channels):
            offset = rng.uniform(-amp, amp)
            blob_sign = rng.choice([-1.0, 1.0])
            patterns[g, :, :, c] = (
                baselines[c] + offset + 0.5 * amp * gradient + blob_sign * amp * blob
            )
    return patterns.astype(np.float32).astype(np.float64)


def _daily_probabilities(spec: SyntheticSpec, coupled: bool) -> np.ndarray:
    g_count = spec.n_regimes
    if g_count == 1:
        return np.ones(1)
    probs = np.full(g_count, 1.0 / g_count)
    if coupled and spec.coupling_strength > 0:
        boosted = min(1.0, 1.0 / g_count + spec.coupling_strength)
        probs[:] = (1.0 - boosted) / (g_count - 1)
        probs[spec.enso_coupled_regime] = boosted
    return probs


def synthesize(
    spec: SyntheticSpec,
) -> Tuple[DailyFieldSeries, RegimeSequence, OniSeries]:
    """
    Generate a planted-regime daily series, its true labels and a matching ONI.

    Args:
        spec: Generator settings; fully deterministic given ``spec.seed``

    Returns:
        Tuple of (series, true regime labels, monthly ONI series)
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    patterns = _draw_patterns(spec, rng)

    dates = pd.date_range(
        dt.date(spec.start_year, 1, 1), dt.date(spec.end_year, 12, 31), freq="D"
    )
    month_offset = (dates.year.to_numpy() - spec.start_year) * 12 + dates.month.to_numpy() - 1

    # Regime draw: one uniform per day against the cumulative probabilities
    uniforms = rng.random(len(dates))
    labels = np.empty(len(dates), dtype=np.int64)
    cumulative = {
        coupled: np.cumsum(_daily_probabilities(spec, coupled)) for coupled in (False, True)
    }
    for t, offset in enumerate(month_offset):
        coupled = enso_state_at(int(offset) - spec.coupling_lag_months, spec) == EL_NINO
        cdf = cumulative[coupled]
        labels[t] = min(int(np.searchsorted(cdf, uniforms[t], side="right")), spec.n_regimes - 1)

    doy = dates.dayofyear.to_numpy()
    seasonal = spec.seasonal_amplitude * np.cos(2.0 * np.pi * (doy - 15) / 365.25)
    noise = rng.standard_normal((len(dates),) + patterns.shape[1:])
    values = patterns[labels] + seasonal[:, None, None, None] + spec.noise_sigma * noise
    values = values.astype(np.float32).astype(np.float64)

    geometry = spec.geometry
    series = DailyFieldSeries.from_arrays(
        dates=list(dates.date),
        lats=geometry.lat_centers(),
        lons=geometry.lon_centers(),
        channel_names=list(spec.channel_names),
        values=values,
        geometry=geometry,
    )
    true_labels = RegimeSequence(
        dates=list(dates.date), labels=labels, n_clusters=spec.n_regimes
    )

    n_months = (spec.end_year - spec.start_year + 1) * 12
    oni_rows: List[Dict[str, Any]] = []
    for offset in range(n_months):
        oni_rows.append(
            {
                "year": spec.start_year + offset // 12,
                "month": offset % 12 + 1,
                "oni": ONI_BY_STATE[enso_state_at(offset, spec)],
            }
        )
    oni = OniSeries(pd.DataFrame(oni_rows))

    logger.info(
        f"Synthesized {len(dates)} days, {spec.n_regimes} regimes, "
        f"coupling {spec.coupling_strength} on regime {spec.enso_coupled_regime} "
        f"(lag {spec.coupling_lag_months} months)"
    )
    return series, true_labels, oni
