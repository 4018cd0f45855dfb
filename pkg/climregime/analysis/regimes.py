"""
Regime inference and characterization: argmax assignment, full-field
discretization, monthly frequencies, seasonal meta-clusters, delta-quantile
anomalies, and sequence statistics (transitions, persistence, purity).
"""

import datetime as dt
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..data.grid import DailyFieldSeries
from ..exceptions import ConfigError, DataError
from ..model.encoder import EncoderParams, forward_pooled, pool_view
from ..model.msn import PrototypeBank
from ..model.views import full_view
from ..util.logging_utils import get_logger, verbosity_to_level

logger = get_logger(level=logging.DEBUG)

SEASONS = ("DJF", "MAM", "JJA", "SON")
UNUSED = "unused"
SEASON_OF_MONTH = {
    12: "DJF", 1: "DJF", 2: "DJF",
    3: "MAM", 4: "MAM", 5: "MAM",
    6: "JJA", 7: "JJA", 8: "JJA",
    9: "SON", 10: "SON", 11: "SON",
}  # fmt: skip
DEFAULT_QUANTILES = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
INFERENCE_CHUNK = 256


def set_v_regimes(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class RegimeSequence:
    """Date-ordered regime labels in ``[0, n_clusters)``."""

    dates: List[dt.date]
    labels: np.ndarray
    n_clusters: int

    def __post_init__(self) -> None:
        self.dates = [pd.Timestamp(d).date() for d in self.dates]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.dates) != len(self.labels):
            raise DataError(
                f"{len(self.dates)} dates but {len(self.labels)} labels in regime sequence"
            )
        if self.n_clusters < 1:
            raise DataError(f"n_clusters must be positive, got {self.n_clusters}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("Regime sequence dates must be strictly increasing")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_clusters):
            raise DataError(f"Regime labels must lie in [0, {self.n_clusters})")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def date_index(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(pd.to_datetime(self.dates))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"date": [d.isoformat() for d in self.dates], "cluster": self.labels}
        )


def write_regimes(seq: RegimeSequence, path: str) -> None:
    seq.to_frame().to_csv(path, index=False)


def load_regimes(path: str, n_clusters: Optional[int] = None) -> RegimeSequence:
    """Read a ``date,cluster`` CSV; ``n_clusters`` defaults to max label + 1."""
    if not os.path.exists(path):
        raise DataError(f"Regime file not found: {path}")
    df = pd.read_csv(path, dtype={"date": str})
    if list(df.columns) != ["date", "cluster"]:
        raise DataError(f"{path}: malformed header {list(df.columns)}, expected ['date', 'cluster']")
    try:
        dates = pd.to_datetime(df["date"], format="%Y-%m-%d")
    except ValueError as e:
        raise DataError(f"{path}: bad date field ({e})") from e
    labels = df["cluster"].to_numpy(dtype=np.int64)
    if n_clusters is None:
        n_clusters = int(labels.max()) + 1 if labels.size else 1
    return RegimeSequence(dates=list(dates.dt.date), labels=labels, n_clusters=n_clusters)


def assign_regime(z: np.ndarray, bank: PrototypeBank) -> int:
    """Index of the most cosine-similar prototype; ties go to the lowest index."""
    return int(np.argmax(bank.prototypes @ np.asarray(z)))


def assign_regimes(latents: np.ndarray, bank: PrototypeBank) -> np.ndarray:
    return np.argmax(np.atleast_2d(latents) @ bank.prototypes.T, axis=1)


def _pool_days(
    values: np.ndarray, indices: np.ndarray, out_size: int, patch_size: int
) -> np.ndarray:
    return np.stack(
        [pool_view(full_view(values[i], out_size, patch_size), patch_size) for i in indices]
    )


def discretize(
    target_params: EncoderParams,
    bank: PrototypeBank,
    series: DailyFieldSeries,
    out_size: int,
    patch_size: int,
    n_jobs: int = 1,
) -> RegimeSequence:
    """
    Label every day of a normalized series with its regime.

    Each day's full field is resampled to ``out_size`` as one unmasked view,
    encoded by the target encoder and assigned to the nearest prototype.

    Args:
        target_params: EMA encoder used for inference
        bank: Prototype bank
        series: Series normalized with the training statistics
        out_size: Encoder input side length
        patch_size: Encoder patch size
        n_jobs: Worker threads; output order and values do not depend on it

    Returns:
        RegimeSequence with one label per day
    """
    values = np.nan_to_num(series.values)
    chunks = [
        np.arange(i, min(i + INFERENCE_CHUNK, len(series)))
        for i in range(0, len(series), INFERENCE_CHUNK)
    ]
    pooled_chunks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_pool_days)(values, idx, out_size, patch_size) for idx in chunks
    )

    labels: List[np.ndarray] = []
    degenerate = 0
    for pooled in pooled_chunks:
        cache = forward_pooled(target_params, pooled)
        degenerate += cache.n_degenerate
        labels.append(assign_regimes(cache.z, bank))
    if degenerate:
        logger.warning(f"{degenerate} day(s) had a degenerate encoding and fell back to e1")

    seq = RegimeSequence(
        dates=series.dates,
        labels=np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64),
        n_clusters=bank.n_prototypes,
    )
    logger.info(
        f"Discretized {len(seq)} days into {len(np.unique(seq.labels))} of "
        f"{seq.n_clusters} regimes"
    )
    return seq


@dataclass
class MonthlyFrequencyTable:
    """``K x 12`` day counts and per-month percentages (columns sum to 100)."""

    counts: np.ndarray
    freq: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.counts.shape[0])

    def to_frame(self) -> pd.DataFrame:
        k, m = np.meshgrid(np.arange(self.n_clusters), np.arange(1, 13), indexing="ij")
        return pd.DataFrame(
            {
                "cluster": k.ravel(),
                "month": m.ravel(),
                "count": self.counts.ravel(),
                "percent": self.freq.ravel(),
            }
        )


def monthly_frequency(seq: RegimeSequence) -> MonthlyFrequencyTable:
    if len(seq) == 0:
        raise DataError("Cannot compute monthly frequencies of an empty sequence")
    months = seq.date_index.month.to_numpy() - 1
    counts = np.zeros((seq.n_clusters, 12), dtype=np.int64)
    np.add.at(counts, (seq.labels, months), 1)
    totals = counts.sum(axis=0)
    freq = np.zeros(counts.shape)
    present = totals > 0
    freq[:, present] = 100.0 * counts[:, present] / totals[present]
    return MonthlyFrequencyTable(counts=counts, freq=freq)


def seasonal_meta_clusters(table: MonthlyFrequencyTable) -> Dict[int, str]:
    """Season of each cluster's peak month (earliest month on ties)."""
    meta: Dict[int, str] = {}
    for k in range(table.n_clusters):
        if table.counts[k].sum() == 0:
            meta[k] = UNUSED
            continue
        peak_month = int(np.argmax(table.freq[k])) + 1
        meta[k] = SEASON_OF_MONTH[peak_month]
    return meta


def validate_quantile_grid(grid: Sequence[float]) -> np.ndarray:
    q = np.asarray(grid, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise ConfigError("Quantile grid must be a non-empty list")
    if not (np.all(q > 0) and np.all(q < 1)):
        raise ConfigError(f"Quantile levels must lie strictly inside (0, 1), got {q.tolist()}")
    if q.size > 1 and not np.all(np.diff(q) > 0):
        raise ConfigError("Quantile grid must be strictly increasing")
    return q


def _day_positions(seq: RegimeSequence, series: DailyFieldSeries) -> np.ndarray:
    index = pd.DatetimeIndex(series.data["time"].values)
    positions = index.get_indexer(seq.date_index)
    if np.any(positions < 0):
        missing = seq.dates[int(np.flatnonzero(positions < 0)[0])]
        raise DataError(f"Regime date {missing} is not in the series")
    return positions


def quantile_anomalies(
    seq: RegimeSequence,
    series: DailyFieldSeries,
    quantile_grid: Sequence[float] = DEFAULT_QUANTILES,
    channels: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    Delta-quantiles of each cluster's pooled raw values against all days.

    All non-missing grid-cell values of a cluster's days are pooled, and the
    linear-interpolation empirical quantile is compared with the same
    quantile over every day in ``seq``.

    Args:
        seq: Regime labels; every date must exist in ``series``
        series: Raw (not normalized) series
        quantile_grid: Strictly increasing levels in (0, 1)
        channels: Channels to analyze; all of them when None

    Returns:
        DataFrame ``cluster,channel,quantile,delta_c``; NaN for empty clusters
    """
    q = validate_quantile_grid(quantile_grid)
    names = series.channel_names
    channels = list(channels) if channels is not None else names
    unknown = [c for c in channels if c not in names]
    if unknown:
        raise DataError(f"Unknown channel(s) {unknown}; series has {names}")

    positions = _day_positions(seq, series)
    values = series.values[positions]
    present = ~series.missing_mask[positions]

    rows: List[Tuple[int, str, float, float]] = []
    for channel in channels:
        c = names.index(channel)
        layer = values[..., c]
        reference = np.quantile(layer[present], q)
        for k in range(seq.n_clusters):
            in_k = seq.labels == k
            pooled = layer[in_k][present[in_k]]
            delta = np.quantile(pooled, q) - reference if pooled.size else np.full(q.size, np.nan)
            rows.extend((k, channel, float(level), float(d)) for level, d in zip(q, delta))
    return pd.DataFrame(rows, columns=["cluster", "channel", "quantile", "delta_c"])


def _consecutive(seq: RegimeSequence) -> np.ndarray:
    """Boolean per adjacent pair: True when the two dates are one day apart."""
    days = seq.date_index.to_numpy().astype("datetime64[D]").astype(np.int64)
    return np.diff(days) == 1


def transition_matrix(seq: RegimeSequence) -> Tuple[np.ndarray, np.ndarray]:
    """
    Day-to-day transition counts and row-normalized probabilities.

    Only pairs of consecutive calendar days count; rows without outgoing
    transitions are NaN.
    """
    k = seq.n_clusters
    counts = np.zeros((k, k), dtype=np.int64)
    linked = _consecutive(seq)
    np.add.at(counts, (seq.labels[:-1][linked], seq.labels[1:][linked]), 1)
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(totals > 0, counts / np.maximum(totals, 1), np.nan)
    return counts, probs


def transitions_frame(seq: RegimeSequence) -> pd.DataFrame:
    counts, probs = transition_matrix(seq)
    i, j = np.meshgrid(np.arange(seq.n_clusters), np.arange(seq.n_clusters), indexing="ij")
    return pd.DataFrame(
        {
            "from_cluster": i.ravel(),
            "to_cluster": j.ravel(),
            "count": counts.ravel(),
            "probability": probs.ravel(),
        }
    )


def persistence_stats(seq: RegimeSequence) -> pd.DataFrame:
    """Run-length statistics per cluster; a date gap ends a run."""
    runs: Dict[int, List[int]] = {k: [] for k in range(seq.n_clusters)}
    if len(seq):
        linked = _consecutive(seq)
        length = 1
        for t in range(1, len(seq)):
            if linked[t - 1] and seq.labels[t] == seq.labels[t - 1]:
                length += 1
            else:
                runs[int(seq.labels[t - 1])].append(length)
                length = 1
        runs[int(seq.labels[-1])].append(length)

    rows = []
    for k, lengths in runs.items():
        rows.append(
            {
                "cluster": k,
                "n_runs": len(lengths),
                "mean_run": float(np.mean(lengths)) if lengths else np.nan,
                "max_run": max(lengths) if lengths else 0,
            }
        )
    return pd.DataFrame(rows, columns=["cluster", "n_runs", "mean_run", "max_run"])


def sample_regime_days(
    seq: RegimeSequence, cluster: int, n: int, rng: np.random.Generator
) -> List[dt.date]:
    """Up to ``n`` distinct dates of ``cluster``, drawn uniformly, in date order."""
    candidates = np.flatnonzero(seq.labels == cluster)
    if candidates.size == 0 or n <= 0:
        return []
    if candidates.size > n:
        candidates = np.sort(rng.choice(candidates, size=n, replace=False))
    return [seq.dates[i] for i in candidates]


def _aligned_labels(pred: RegimeSequence, true: RegimeSequence) -> Tuple[np.ndarray, np.ndarray]:
    if pred.dates != true.dates:
        raise DataError("Predicted and true regime sequences cover different dates")
    return pred.labels, true.labels


def majority_relabel(pred: RegimeSequence, true: RegimeSequence) -> Dict[int, int]:
    """Map each used predicted cluster to its most frequent true label (lowest on ties)."""
    p, t = _aligned_labels(pred, true)
    mapping: Dict[int, int] = {}
    for k in np.unique(p):
        mapping[int(k)] = int(np.argmax(np.bincount(t[p == k], minlength=true.n_clusters)))
    return mapping


def purity(pred: RegimeSequence, true: RegimeSequence) -> float:
    """Fraction of days whose predicted cluster's majority true label is their own."""
    p, t = _aligned_labels(pred, true)
    if p.size == 0:
        raise DataError("Purity of an empty sequence is undefined")
    mapping = majority_relabel(pred, true)
    relabeled = np.array([mapping[int(k)] for k in p])
    return float(np.mean(relabeled == t))
