"""
ENSO teleconnection statistics over a daily regime sequence.

Daily labels are bridged to monthly ENSO states by counting days per
(month, cluster). Conditional probabilities pool those day counts over all
target months whose ENSO state ``lag`` months earlier matches the condition,
so ``lag > 0`` means the regime follows ENSO and ``lag < 0`` means it leads.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

from ..exceptions import ConfigError, DataError, NumericalError
from ..util.logging_utils import get_logger, verbosity_to_level
from .enso import EL_NINO, NEUTRAL, EnsoStateSeries, month_ordinal, ordinal_to_year_month
from .regimes import UNUSED, RegimeSequence

logger = get_logger(level=logging.DEBUG)

ANOMALY_COLUMNS = [
    "period",
    "month",
    "lag",
    "cluster",
    "p_enso",
    "p_neutral",
    "delta_p",
    "n_enso",
    "n_neutral",
]
ALL_MONTHS = "all"
FLAT_GROUP = "flat"
ZERO_SUM_TOL = 1e-12
SEASON_PREFIX = {"DJF": "Su", "MAM": "A", "JJA": "W", "SON": "S", UNUSED: "U"}

MonthFilter = Optional[int]


def set_v_teleconnection(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass(frozen=True)
class Period:
    """Inclusive calendar-year range."""

    start_year: int
    end_year: int

    def __post_init__(self) -> None:
        if self.start_year > self.end_year:
            raise ConfigError(f"Period start {self.start_year} is after end {self.end_year}")

    @property
    def label(self) -> str:
        return f"{self.start_year}-{self.end_year}"

    def contains(self, years: np.ndarray) -> np.ndarray:
        return (years >= self.start_year) & (years <= self.end_year)

    @classmethod
    def parse(cls, value: Union[str, Sequence[int], "Period"]) -> "Period":
        if isinstance(value, Period):
            return value
        if isinstance(value, str):
            try:
                start, end = (int(v) for v in value.split("-"))
            except ValueError as e:
                raise ConfigError(f"Period {value!r} must look like 1961-2024") from e
            return cls(start, end)
        start, end = value
        return cls(int(start), int(end))


@dataclass(frozen=True)
class LagRange:
    tau_min: int = -12
    tau_max: int = 12

    def __post_init__(self) -> None:
        if self.tau_min > self.tau_max:
            raise ConfigError(f"Lag range [{self.tau_min}, {self.tau_max}] is empty")

    def lags(self) -> List[int]:
        return list(range(self.tau_min, self.tau_max + 1))


@dataclass
class MonthlyCounts:
    """Day counts per (present month, cluster); months are ordinals ``year * 12 + month - 1``."""

    ordinals: np.ndarray
    counts: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.counts.shape[1])

    @property
    def days(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def years(self) -> np.ndarray:
        return self.ordinals // 12

    @property
    def months(self) -> np.ndarray:
        return self.ordinals % 12 + 1

    def count(self, year: int, month: int, cluster: int) -> int:
        hit = np.flatnonzero(self.ordinals == month_ordinal(year, month))
        return int(self.counts[hit[0], cluster]) if hit.size else 0

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (int(o // 12), int(o % 12 + 1), k, int(c))
            for o, row in zip(self.ordinals, self.counts)
            for k, c in enumerate(row)
        ]
        return pd.DataFrame(rows, columns=["year", "month", "cluster", "count"])


@dataclass
class ConditionalResult:
    probs: np.ndarray
    n_days: int


def monthly_regime_counts(seq: RegimeSequence) -> MonthlyCounts:
    """Exact day counts per (year, month, cluster); months with no days are absent."""
    if len(seq) == 0:
        raise DataError("Cannot count an empty regime sequence")
    index = seq.date_index
    day_ordinals = index.year.to_numpy() * 12 + index.month.to_numpy() - 1
    ordinals, position = np.unique(day_ordinals, return_inverse=True)
    counts = np.zeros((ordinals.size, seq.n_clusters), dtype=np.int64)
    np.add.at(counts, (position, seq.labels), 1)
    return MonthlyCounts(ordinals=ordinals.astype(np.int64), counts=counts)


def _source_states(counts: MonthlyCounts, states: EnsoStateSeries, lag: int) -> np.ndarray:
    lookup = states.state_by_ordinal()
    return np.array([lookup.get(int(o) - lag) for o in counts.ordinals], dtype=object)


def _select(
    counts: MonthlyCounts,
    states: EnsoStateSeries,
    condition: str,
    period: Period,
    month_filter: MonthFilter,
    lag: int,
) -> np.ndarray:
    keep = period.contains(counts.years)
    if month_filter is not None:
        keep &= counts.months == month_filter
    return keep & (_source_states(counts, states, lag) == condition)


def conditional_probs(
    counts: MonthlyCounts,
    states: EnsoStateSeries,
    condition: str,
    period: Period,
    month_filter: MonthFilter = None,
    lag: int = 0,
    n_min: int = 30,
) -> ConditionalResult:
    """
    P(k | condition) from pooled day counts.

    Args:
        counts: Monthly day counts per cluster
        states: Monthly ENSO states; months outside their coverage are skipped
        condition: ENSO state the source month must have
        period: Years of the target months
        month_filter: Restrict target months to this calendar month
        lag: Target month t is conditioned on the state at month t - lag
        n_min: Minimum pooled days before a probability is reported

    Returns:
        ConditionalResult with NaN probabilities below ``n_min`` days
    """
    if month_filter is not None and not 1 <= month_filter <= 12:
        raise ConfigError(f"month must lie in 1..12, got {month_filter}")
    selected = _select(counts, states, condition, period, month_filter, lag)
    pooled = counts.counts[selected].sum(axis=0)
    total = int(pooled.sum())
    if total == 0 or total < n_min:
        return ConditionalResult(probs=np.full(counts.n_clusters, np.nan), n_days=total)
    return ConditionalResult(probs=pooled / total, n_days=total)


def probability_anomaly(p_enso: np.ndarray, p_neutral: np.ndarray) -> np.ndarray:
    """Elementwise El Nino minus Neutral; a missing side gives a missing entry."""
    p_enso = np.asarray(p_enso, dtype=np.float64)
    p_neutral = np.asarray(p_neutral, dtype=np.float64)
    if p_enso.shape != p_neutral.shape:
        raise DataError(f"Distribution shapes differ: {p_enso.shape} vs {p_neutral.shape}")
    return p_enso - p_neutral


def _anomaly_slice(
    counts: MonthlyCounts,
    states: EnsoStateSeries,
    period: Period,
    month_filter: MonthFilter,
    lag: int,
    n_min: int,
) -> pd.DataFrame:
    enso = conditional_probs(counts, states, EL_NINO, period, month_filter, lag, n_min)
    neutral = conditional_probs(counts, states, NEUTRAL, period, month_filter, lag, n_min)
    k = counts.n_clusters
    return pd.DataFrame(
        {
            "period": [period.label] * k,
            "month": [ALL_MONTHS if month_filter is None else month_filter] * k,
            "lag": [lag] * k,
            "cluster": np.arange(k),
            "p_enso": enso.probs,
            "p_neutral": neutral.probs,
            "delta_p": probability_anomaly(enso.probs, neutral.probs),
            "n_enso": [enso.n_days] * k,
            "n_neutral": [neutral.n_days] * k,
        },
        columns=ANOMALY_COLUMNS,
    )


def _concat(slices: List[pd.DataFrame]) -> pd.DataFrame:
    if not slices:
        return pd.DataFrame(columns=ANOMALY_COLUMNS)
    table = pd.concat(slices, ignore_index=True)
    table["month"] = table["month"].astype(object)
    return table


def lagged_anomalies(
    counts: MonthlyCounts,
    states: EnsoStateSeries,
    lags: LagRange,
    period: Period,
    n_min: int = 30,
) -> pd.DataFrame:
    """ΔP_k(τ) for every lag in ``lags`` over all calendar months."""
    return _concat([_anomaly_slice(counts, states, period, None, lag, n_min) for lag in lags.lags()])


def month_conditioned_anomalies(
    counts: MonthlyCounts,
    states: EnsoStateSeries,
    month: int,
    lags: LagRange,
    period: Period,
    n_min: int = 30,
) -> pd.DataFrame:
    """ΔP_k(m, τ): lagged anomalies restricted to target months in calendar month ``month``."""
    if not 1 <= month <= 12:
        raise ConfigError(f"month must lie in 1..12, got {month}")
    return _concat(
        [_anomaly_slice(counts, states, period, month, lag, n_min) for lag in lags.lags()]
    )


def compare_periods(
    counts: MonthlyCounts,
    states: EnsoStateSeries,
    periods: Sequence[Period],
    n_min: int = 30,
) -> pd.DataFrame:
    """Lag-0 ΔP_k computed independently for each period."""
    return _concat([_anomaly_slice(counts, states, p, None, 0, n_min) for p in periods])


def check_zero_sum(table: pd.DataFrame, tol: float = ZERO_SUM_TOL) -> None:
    """Raise if any fully observed (period, month, lag) slice has Σ_k ΔP_k != 0."""
    for key, group in table.groupby(["period", "month", "lag"], sort=False):
        delta = group["delta_p"].to_numpy(dtype=np.float64)
        if np.all(np.isfinite(delta)) and abs(delta.sum()) > tol:
            raise NumericalError(f"ΔP does not sum to zero for slice {key}: {delta.sum():.3e}")


def write_anomaly_table(table: pd.DataFrame, path: str) -> None:
    table.to_csv(path, index=False, na_rep="", float_format="%.17g")


def frequency_timeseries(
    counts: MonthlyCounts,
    cluster: int,
    window: int = 13,
    states: Optional[EnsoStateSeries] = None,
) -> pd.DataFrame:
    """
    Monthly occurrence fraction of ``cluster`` with a centered running mean.

    The running mean at month t averages the fractions of the months present
    within ``window // 2`` months of t, so the window shrinks at the ends and
    across gaps.

    Returns:
        DataFrame ``year,month,cluster,fraction,running_mean,enso_state``
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"Running-mean window must be odd and >= 1, got {window}")
    if not 0 <= cluster < counts.n_clusters:
        raise ConfigError(f"Cluster {cluster} outside [0, {counts.n_clusters})")

    days = counts.days
    fraction = counts.counts[:, cluster] / days
    half = window // 2
    lo = np.searchsorted(counts.ordinals, counts.ordinals - half, side="left")
    hi = np.searchsorted(counts.ordinals, counts.ordinals + half, side="right")
    cumulative = np.concatenate([[0.0], np.cumsum(fraction)])
    running = (cumulative[hi] - cumulative[lo]) / (hi - lo)
    if window == 1:
        running = fraction.copy()

    lookup = states.state_by_ordinal() if states is not None else {}
    years, months = zip(*(ordinal_to_year_month(int(o)) for o in counts.ordinals))
    return pd.DataFrame(
        {
            "year": years,
            "month": months,
            "cluster": cluster,
            "fraction": fraction,
            "running_mean": running,
            "enso_state": [lookup.get(int(o), "") for o in counts.ordinals],
        }
    )


def _lag_profiles(
    lag_table: pd.DataFrame, period: Optional[str], month: Union[str, int]
) -> pd.DataFrame:
    table = lag_table[lag_table["month"].astype(str) == str(month)]
    if period is not None:
        table = table[table["period"] == period]
    if table.empty:
        raise DataError("Lag table has no rows for the requested period and month")
    if table["period"].nunique() > 1:
        raise DataError("Lag table spans several periods; pass the period to group")
    profiles = table.pivot(index="cluster", columns="lag", values="delta_p")
    complete = profiles.dropna(axis=1, how="any")
    if complete.shape[1] == 0:
        raise DataError("No lag is observed for every cluster; cannot group profiles")
    if complete.shape[1] < profiles.shape[1]:
        logger.debug(f"Dropped {profiles.shape[1] - complete.shape[1]} incomplete lag column(s)")
    return complete.sort_index()


def _standardized(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    flat = np.ptp(values, axis=1) <= 1e-15
    shaped = values[~flat]
    z = (shaped - shaped.mean(axis=1, keepdims=True)) / shaped.std(axis=1, keepdims=True)
    return flat, z


def distinct_profile_count(
    lag_table: pd.DataFrame, period: Optional[str] = None, month: Union[str, int] = ALL_MONTHS
) -> int:
    """Number of distinct non-flat lag profiles, up to shift and scale."""
    _, z = _standardized(_lag_profiles(lag_table, period, month).to_numpy(dtype=np.float64))
    return int(np.unique(np.round(z, 10), axis=0).shape[0]) if z.shape[0] else 0


def group_by_lag_profile(
    lag_table: pd.DataFrame,
    n_groups: int,
    period: Optional[str] = None,
    month: Union[str, int] = ALL_MONTHS,
) -> Dict[int, str]:
    """
    Group clusters whose lagged ΔP profiles are correlated.

    Constant profiles go to the ``flat`` group. The rest are clustered by
    average linkage under correlation distance and cut into ``n_groups``
    groups, numbered ``G1, G2, ...`` in order of their lowest cluster index.

    Raises:
        ConfigError: If ``n_groups`` is not positive or exceeds the cluster count
        DataError: If ``n_groups`` exceeds the number of distinct profiles
    """
    profiles = _lag_profiles(lag_table, period, month)
    clusters = profiles.index.to_numpy()
    if not 1 <= n_groups <= len(clusters):
        raise ConfigError(f"n_groups must lie in [1, {len(clusters)}], got {n_groups}")

    values = profiles.to_numpy(dtype=np.float64)
    flat, z = _standardized(values)
    groups: Dict[int, str] = {int(k): FLAT_GROUP for k in clusters[flat]}
    if z.shape[0] == 0:
        return groups

    distinct = np.unique(np.round(z, 10), axis=0).shape[0]
    if n_groups > distinct:
        raise DataError(
            f"n_groups={n_groups} exceeds the {distinct} distinct lag profile(s)"
        )

    if z.shape[0] == 1 or n_groups == 1:
        raw = np.ones(z.shape[0], dtype=int)
    else:
        distances = np.clip(pdist(z, metric="correlation"), 0.0, None)
        raw = fcluster(linkage(distances, method="average"), t=n_groups, criterion="maxclust")

    # Renumber by first appearance, i.e. by lowest member cluster index
    order: Dict[int, int] = {}
    for k, g in zip(clusters[~flat], raw):
        order.setdefault(int(g), len(order) + 1)
        groups[int(k)] = f"G{order[int(g)]}"
    return dict(sorted(groups.items()))


def label_groups_by_season(groups: Dict[int, str], meta: Dict[int, str]) -> Dict[int, str]:
    """
    Readable labels combining each cluster's season and lag-profile group.

    The label is the season prefix (``Su``, ``A``, ``W``, ``S`` or ``U``) plus
    the rank of the (season, group) pair among that season's groups, ranked
    by lowest member cluster.
    """
    ranks: Dict[Tuple[str, str], int] = {}
    per_season: Dict[str, int] = {}
    labels: Dict[int, str] = {}
    for k in sorted(groups):
        season = meta.get(k, UNUSED)
        key = (season, groups[k])
        if key not in ranks:
            per_season[season] = per_season.get(season, 0) + 1
            ranks[key] = per_season[season]
        labels[k] = f"{SEASON_PREFIX[season]}{ranks[key]}"
    return labels


def groups_frame(groups: Dict[int, str], labels: Optional[Dict[int, str]] = None) -> pd.DataFrame:
    frame = pd.DataFrame({"cluster": list(groups), "group": list(groups.values())})
    if labels is not None:
        frame["label"] = [labels.get(k, "") for k in groups]
    return frame


def brute_force_conditional(
    seq: RegimeSequence,
    states: EnsoStateSeries,
    condition: str,
    period: Period,
    month_filter: MonthFilter = None,
    lag: int = 0,
    n_min: int = 30,
) -> ConditionalResult:
    """Day-by-day recount of ``conditional_probs`` without the monthly bridge."""
    lookup = states.state_by_ordinal()
    pooled = np.zeros(seq.n_clusters, dtype=np.int64)
    for date, label in zip(seq.dates, seq.labels):
        if not period.start_year <= date.year <= period.end_year:
            continue
        if month_filter is not None and date.month != month_filter:
            continue
        if lookup.get(month_ordinal(date.year, date.month) - lag) != condition:
            continue
        pooled[label] += 1
    total = int(pooled.sum())
    if total == 0 or total < n_min:
        return ConditionalResult(probs=np.full(seq.n_clusters, np.nan), n_days=total)
    return ConditionalResult(probs=pooled / total, n_days=total)


def oracle_check(
    table: pd.DataFrame,
    seq: RegimeSequence,
    states: EnsoStateSeries,
    periods: Dict[str, Period],
    n_min: int,
) -> int:
    """
    Recompute every slice of ``table`` day by day and require exact equality.

    Returns:
        Number of slices checked

    Raises:
        NumericalError: On the first mismatch
    """
    checked = 0
    for (label, month, lag), group in table.groupby(["period", "month", "lag"], sort=False):
        period = periods[label]
        month_filter = None if str(month) == ALL_MONTHS else int(month)
        group = group.sort_values("cluster")
        for condition, column, n_column in (
            (EL_NINO, "p_enso", "n_enso"),
            (NEUTRAL, "p_neutral", "n_neutral"),
        ):
            ref = brute_force_conditional(
                seq, states, condition, period, month_filter, int(lag), n_min
            )
            got = group[column].to_numpy(dtype=np.float64)
            same = np.array_equal(got, ref.probs, equal_nan=True)
            if not same or int(group[n_column].iloc[0]) != ref.n_days:
                raise NumericalError(
                    f"Oracle mismatch for {condition} in slice "
                    f"(period={label}, month={month}, lag={lag})"
                )
        checked += 1
    return checked
