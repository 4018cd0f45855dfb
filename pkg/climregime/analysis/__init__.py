from .enso import (
    EL_NINO,
    LA_NINA,
    NEUTRAL,
    EnsoStateSeries,
    OniSeries,
    classify_enso,
    load_oni,
    set_v_enso,
    write_oni,
)
from .regimes import (
    MonthlyFrequencyTable,
    RegimeSequence,
    assign_regime,
    discretize,
    load_regimes,
    monthly_frequency,
    persistence_stats,
    purity,
    quantile_anomalies,
    seasonal_meta_clusters,
    set_v_regimes,
    transition_matrix,
    write_regimes,
)
from .teleconnection import (
    LagRange,
    MonthlyCounts,
    Period,
    compare_periods,
    conditional_probs,
    frequency_timeseries,
    group_by_lag_profile,
    label_groups_by_season,
    lagged_anomalies,
    month_conditioned_anomalies,
    monthly_regime_counts,
    probability_anomaly,
    set_v_teleconnection,
)

__all__ = [
    "EL_NINO",
    "LA_NINA",
    "NEUTRAL",
    "EnsoStateSeries",
    "OniSeries",
    "classify_enso",
    "load_oni",
    "write_oni",
    "MonthlyFrequencyTable",
    "RegimeSequence",
    "assign_regime",
    "discretize",
    "load_regimes",
    "monthly_frequency",
    "persistence_stats",
    "purity",
    "quantile_anomalies",
    "seasonal_meta_clusters",
    "transition_matrix",
    "write_regimes",
    "LagRange",
    "MonthlyCounts",
    "Period",
    "compare_periods",
    "conditional_probs",
    "frequency_timeseries",
    "group_by_lag_profile",
    "label_groups_by_season",
    "lagged_anomalies",
    "month_conditioned_anomalies",
    "monthly_regime_counts",
    "probability_anomaly",
    "set_v_enso",
    "set_v_regimes",
    "set_v_teleconnection",
]
