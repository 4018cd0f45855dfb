import logging
import os
import time
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .analysis import (
    EnsoStateSeries,
    OniSeries,
    RegimeSequence,
    classify_enso,
    discretize,
    load_oni,
    load_regimes,
    monthly_frequency,
    monthly_regime_counts,
    persistence_stats,
    purity,
    quantile_anomalies,
    seasonal_meta_clusters,
    set_v_enso,
    set_v_regimes,
    set_v_teleconnection,
    write_oni,
    write_regimes,
)
from .analysis.regimes import transitions_frame
from .analysis.teleconnection import (
    ANOMALY_COLUMNS,
    Period,
    check_zero_sum,
    compare_periods,
    distinct_profile_count,
    frequency_timeseries,
    group_by_lag_profile,
    groups_frame,
    label_groups_by_season,
    lagged_anomalies,
    month_conditioned_anomalies,
    oracle_check,
    write_anomaly_table,
)
from .config import PipelineConfig, resolve_threads, set_v_config
from .data import (
    DailyFieldSeries,
    compute_channel_stats,
    infer_format,
    load_series,
    normalize,
    set_v_file_han,
    set_v_grid,
    spatial_subset,
    split_by_years,
    write_series,
)
from .data.synthetic import set_v_synthetic, synthesize
from .exceptions import ConfigError, DataError
from .model import (
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
    set_v_checkpoint,
    set_v_encoder,
    set_v_msn,
    set_v_trainer,
    set_v_views,
    train,
)
from .util import Colors, dump_json, get_logger, load_json_with_encoding, set_v_json_utl

logger = get_logger(level=logging.DEBUG)
always_logger = get_logger(name="log_always", level=logging.INFO)

MANIFEST = "manifest.json"
SERIES_FILE = "series.bin"
TRUE_LABELS_FILE = "true_labels.csv"
ONI_FILE = "oni.csv"
CHECKPOINT_FILE = "checkpoint.bin"
TRAIN_REPORT_FILE = "train_report.csv"
REGIMES_FILE = "regimes.csv"
SUMMARY_FILE = "summary.json"

ANALYSIS_FILES = {
    "monthly_frequency": "monthly_frequency.csv",
    "meta_clusters": "meta_clusters.csv",
    "quantile_anomalies": "quantile_anomalies.csv",
    "delta_p": "delta_p.csv",
    "lagged_anomalies": "lagged_anomalies.csv",
    "month_conditioned": "month_conditioned.csv",
    "timeseries": "timeseries.csv",
    "groups": "groups.csv",
    "enso_states": "enso_states.csv",
}
EXTRA_ANALYSIS_FILES = {
    "transitions": "transitions.csv",
    "persistence": "persistence.csv",
}


def set_verbosity(verbosity: int) -> None:

    if verbosity == 0:
        logger.setLevel(logging.WARNING)

    elif verbosity == 1:
        logger.setLevel(logging.INFO)

    elif verbosity == 2:
        logger.setLevel(logging.DEBUG)

    else:
        logger.warning(
            f"Invalid verbosity level: {verbosity}. Defaulting to WARNING level (verbosity level = 0)."
        )
        logger.setLevel(logging.WARNING)

    set_v_config(verbosity)
    set_v_json_utl(verbosity)
    set_v_grid(verbosity)
    set_v_file_han(verbosity)
    set_v_synthetic(verbosity)
    set_v_views(verbosity)
    set_v_encoder(verbosity)
    set_v_msn(verbosity)
    set_v_trainer(verbosity)
    set_v_checkpoint(verbosity)
    set_v_regimes(verbosity)
    set_v_enso(verbosity)
    set_v_teleconnection(verbosity)


# Helper functions for printing/logging
def print_command_header(command: str, cfg: PipelineConfig) -> None:
    always_logger.info(f"\n{'='*60}")
    always_logger.info(f"{Colors.BLUE}CLIMREGIME {command.upper()}{Colors.RESET}")
    always_logger.info(f"{'='*60}")
    always_logger.info(f"Data source: {cfg.data.source}")
    always_logger.info(f"Output directory: {cfg.output_dir}")
    always_logger.info(f"Seed: {cfg.seed}")


def print_command_footer(command: str, saved: Dict[str, str], start_time: float) -> None:
    always_logger.info(f"\n{'='*60}")
    always_logger.info(f"{Colors.GREEN}{command.upper()} COMPLETE{Colors.RESET}")
    always_logger.info(f"{'='*60}")
    for name, path in saved.items():
        always_logger.info(f"  Saved {name} to: {path}")
    always_logger.info(f"Elapsed: {time.time() - start_time:.2f} seconds")


def _out(cfg: PipelineConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def write_manifest(cfg: PipelineConfig, command: str, record: Dict[str, Any]) -> str:
    """Merge this command's record into ``manifest.json`` next to its artifacts."""
    path = _out(cfg, MANIFEST)
    manifest: Dict[str, Any] = {}
    if os.path.exists(path):
        try:
            manifest = load_json_with_encoding(path)
        except ConfigError:
            logger.warning(f"Replacing unreadable manifest at {path}")
    manifest["config"] = cfg.to_dict()
    commands = manifest.setdefault("commands", {})
    commands[command] = record
    dump_json(manifest, path)
    return path


def load_dataset(
    cfg: PipelineConfig,
) -> Tuple[DailyFieldSeries, OniSeries, Optional[RegimeSequence]]:
    """Raw series (bbox applied), ONI and, for synthetic data, the true labels."""
    true_labels: Optional[RegimeSequence] = None
    if cfg.data.source == "synthetic":
        assert cfg.synthetic is not None
        series, true_labels, oni = synthesize(cfg.synthetic)
    else:
        assert cfg.data.path is not None and cfg.data.oni_path is not None
        fmt = cfg.data.format or infer_format(cfg.data.path)
        series = load_series(cfg.data.path, fmt)
        oni = load_oni(cfg.data.oni_path)
    if cfg.bbox is not None:
        series = spatial_subset(series, cfg.bbox)
    return series, oni, true_labels


def cmd_synth(cfg: PipelineConfig) -> Dict[str, str]:
    """Write the synthetic series, its true labels and its ONI series."""
    if cfg.synthetic is None:
        raise ConfigError("synth needs a 'synthetic' section in the config")
    start = time.time()
    print_command_header("synth", cfg)

    series, true_labels, oni = synthesize(cfg.synthetic)
    saved = {
        "series": _out(cfg, SERIES_FILE),
        "true labels": _out(cfg, TRUE_LABELS_FILE),
        "ONI": _out(cfg, ONI_FILE),
    }
    write_series(series, saved["series"], "packed_binary")
    write_regimes(true_labels, saved["true labels"])
    write_oni(oni, saved["ONI"])
    saved["manifest"] = write_manifest(
        cfg,
        "synth",
        {"days": len(series), "artifacts": [SERIES_FILE, TRUE_LABELS_FILE, ONI_FILE]},
    )
    print_command_footer("synth", saved, start)
    return saved


def cmd_train(
    cfg: PipelineConfig, n_jobs: Optional[int] = None, show_progress: bool = True
) -> Dict[str, str]:
    """Train on the non-test years and write the checkpoint and per-epoch report."""
    start = time.time()
    print_command_header("train", cfg)
    n_jobs = n_jobs or resolve_threads()

    series, _, _ = load_dataset(cfg)
    train_set, test_set = split_by_years(series, cfg.test_years)
    if len(train_set) == 0:
        raise DataError("No training days remain after removing the test years")
    stats = compute_channel_stats(train_set)
    result = train(
        normalize(train_set, stats),
        cfg.views,
        cfg.encoder,
        cfg.train,
        n_jobs=n_jobs,
        show_progress=show_progress,
    )

    ckpt = Checkpoint(
        anchor=result.anchor,
        target=result.target,
        bank=result.bank,
        view_config=cfg.views,
        channel_names=series.channel_names,
        channel_stats=stats,
        metadata={"epochs": cfg.train.epochs, "seed": cfg.seed, "train_days": len(train_set)},
    )
    saved = {"checkpoint": _out(cfg, CHECKPOINT_FILE), "train report": _out(cfg, TRAIN_REPORT_FILE)}
    save_checkpoint(ckpt, saved["checkpoint"])
    result.report.write_csv(saved["train report"])

    final_usage = result.report.records[-1].usage_entropy if len(result.report) else None
    saved["manifest"] = write_manifest(
        cfg,
        "train",
        {
            "train_days": len(train_set),
            "test_days": len(test_set),
            "degenerate_encodes": result.report.n_degenerate,
            "final_usage_entropy": final_usage,
            "artifacts": [CHECKPOINT_FILE, TRAIN_REPORT_FILE],
        },
    )
    print_command_footer("train", saved, start)
    return saved


def cmd_discretize(
    cfg: PipelineConfig, checkpoint_path: Optional[str] = None, n_jobs: Optional[int] = None
) -> Dict[str, str]:
    """Label every day of the (bbox-subset) series with the trained target encoder."""
    start = time.time()
    print_command_header("discretize", cfg)
    n_jobs = n_jobs or resolve_threads()

    ckpt = load_checkpoint(checkpoint_path or _out(cfg, CHECKPOINT_FILE))
    series, _, true_labels = load_dataset(cfg)
    if ckpt.channel_names != series.channel_names:
        raise DataError(
            f"Checkpoint channels {ckpt.channel_names} differ from series channels "
            f"{series.channel_names}"
        )
    stats = ckpt.channel_stats or compute_channel_stats(series)
    seq = discretize(
        ckpt.target,
        ckpt.bank,
        normalize(series, stats),
        ckpt.view_config.out_size,
        ckpt.view_config.patch_size,
        n_jobs=n_jobs,
    )

    saved = {"regimes": _out(cfg, REGIMES_FILE)}
    write_regimes(seq, saved["regimes"])
    record: Dict[str, Any] = {"days": len(seq), "artifacts": [REGIMES_FILE]}
    if true_labels is not None:
        record["purity"] = purity(seq, true_labels)
        always_logger.info(f"Purity against planted regimes: {record['purity']:.4f}")
    saved["manifest"] = write_manifest(cfg, "discretize", record)
    print_command_footer("discretize", saved, start)
    return saved


def resolve_periods(cfg: PipelineConfig, seq: RegimeSequence) -> List[Period]:
    if cfg.analysis.periods:
        return list(cfg.analysis.periods)
    return [Period(seq.dates[0].year, seq.dates[-1].year)]


def _analysis_tables(
    cfg: PipelineConfig,
    seq: RegimeSequence,
    series: DailyFieldSeries,
    states: EnsoStateSeries,
) -> Dict[str, pd.DataFrame]:
    a = cfg.analysis
    periods = resolve_periods(cfg, seq)
    counts = monthly_regime_counts(seq)

    freq = monthly_frequency(seq)
    meta = seasonal_meta_clusters(freq)
    peak = {k: int(np.argmax(freq.freq[k])) + 1 for k in meta}
    meta_table = pd.DataFrame(
        {
            "cluster": list(meta),
            "season": list(meta.values()),
            "peak_month": [peak[k] if meta[k] != "unused" else "" for k in meta],
        }
    )

    delta = compare_periods(counts, states, periods, a.n_min)
    lagged = pd.concat(
        [lagged_anomalies(counts, states, a.lags, p, a.n_min) for p in periods],
        ignore_index=True,
    )
    by_month = pd.concat(
        [
            month_conditioned_anomalies(counts, states, m, a.lags, p, a.n_min)
            for p in periods
            for m in range(1, 13)
        ],
        ignore_index=True,
    )
    timeseries = pd.concat(
        [frequency_timeseries(counts, k, a.window, states) for k in range(seq.n_clusters)],
        ignore_index=True,
    )

    groups_table = pd.DataFrame({"cluster": range(seq.n_clusters), "group": "", "label": ""})
    first = periods[0].label
    try:
        distinct = distinct_profile_count(lagged, period=first)
        n_groups = max(1, min(a.n_groups, distinct, seq.n_clusters))
        if n_groups < a.n_groups:
            logger.warning(f"Only {distinct} distinct lag profile(s); using {n_groups} group(s)")
        groups = group_by_lag_profile(lagged, n_groups, period=first)
        groups_table = groups_frame(groups, label_groups_by_season(groups, meta))
    except DataError as e:
        logger.warning(f"Lag-profile grouping skipped: {e}")

    return {
        "monthly_frequency": freq.to_frame(),
        "meta_clusters": meta_table,
        "quantile_anomalies": quantile_anomalies(seq, series, a.quantiles, a.channels),
        "delta_p": delta,
        "lagged_anomalies": lagged,
        "month_conditioned": by_month,
        "timeseries": timeseries,
        "groups": groups_table,
        "enso_states": states.table,
        "transitions": transitions_frame(seq),
        "persistence": persistence_stats(seq),
    }


def cmd_analyze(
    cfg: PipelineConfig,
    regimes_path: Optional[str] = None,
    oni_path: Optional[str] = None,
    oracle: bool = False,
) -> Dict[str, str]:
    """
    Compute every regime and teleconnection statistic and write them as CSV.

    Args:
        cfg: Pipeline config
        regimes_path: Regime CSV; defaults to the output directory's regimes.csv
        oni_path: ONI CSV overriding the configured source
        oracle: Recount every ΔP slice day by day and require exact agreement

    Returns:
        Mapping of artifact name to written path
    """
    start = time.time()
    print_command_header("analyze", cfg)

    seq = load_regimes(regimes_path or _out(cfg, REGIMES_FILE), cfg.train.n_prototypes)
    if len(seq) == 0:
        raise DataError("Regime sequence is empty")
    series, oni, _ = load_dataset(cfg)
    if oni_path:
        oni = load_oni(oni_path)
    states = classify_enso(oni, cfg.analysis.enso_threshold, cfg.analysis.enso_persistence)

    tables = _analysis_tables(cfg, seq, series, states)
    anomaly_tables = ("delta_p", "lagged_anomalies", "month_conditioned")
    for name in anomaly_tables:
        check_zero_sum(tables[name])

    record: Dict[str, Any] = {"days": len(seq)}
    if oracle:
        periods = {p.label: p for p in resolve_periods(cfg, seq)}
        checked = sum(
            oracle_check(tables[name], seq, states, periods, cfg.analysis.n_min)
            for name in anomaly_tables
        )
        record["oracle_slices"] = checked
        always_logger.info(f"{Colors.GREEN}✓ Oracle agreed on {checked} slices{Colors.RESET}")

    saved: Dict[str, str] = {}
    for name, filename in {**ANALYSIS_FILES, **EXTRA_ANALYSIS_FILES}.items():
        path = _out(cfg, filename)
        if name in anomaly_tables:
            write_anomaly_table(tables[name], path)
        else:
            tables[name].to_csv(path, index=False, na_rep="", float_format="%.17g")
        saved[name] = path

    record["artifacts"] = sorted({**ANALYSIS_FILES, **EXTRA_ANALYSIS_FILES}.values())
    saved["manifest"] = write_manifest(cfg, "analyze", record)
    print_command_footer("analyze", saved, start)
    return saved


def _read_analysis(analysis_dir: str, name: str) -> pd.DataFrame:
    path = os.path.join(analysis_dir, ANALYSIS_FILES[name])
    if not os.path.exists(path):
        raise DataError(f"Analysis artifact missing: {path}")
    table = pd.read_csv(path, dtype={"month": str, "period": str})
    missing = set(ANOMALY_COLUMNS) - set(table.columns)
    if missing:
        raise DataError(f"{path}: missing column(s) {sorted(missing)}")
    return table


def _peak(table: pd.DataFrame, cluster: int, column: str) -> Optional[int]:
    rows = table[(table["cluster"] == cluster) & table["delta_p"].notna()]
    if rows.empty:
        return None
    magnitude = rows["delta_p"].abs().to_numpy()
    # First row of maximal magnitude, rows being sorted by the key column
    return int(rows[column].to_numpy()[int(np.argmax(magnitude))])


def summarize(
    delta: pd.DataFrame, lagged: pd.DataFrame, by_month: pd.DataFrame, top_n: int
) -> Dict[str, Any]:
    """Top-``top_n`` clusters by |ΔP| per period with their peak lag and peak month."""
    summary: Dict[str, Any] = {"top_n": top_n, "periods": {}}
    for period, group in delta.groupby("period", sort=False):
        observed = group[group["delta_p"].notna()].copy()
        observed["magnitude"] = observed["delta_p"].abs()
        observed = observed.sort_values(["magnitude", "cluster"], ascending=[False, True])
        lag_rows = lagged[lagged["period"] == period].sort_values("lag")
        month_rows = by_month[(by_month["period"] == period) & (by_month["lag"] == 0)].copy()
        month_rows["month"] = month_rows["month"].astype(int)
        month_rows = month_rows.sort_values("month")

        entries = []
        for _, row in observed.head(top_n).iterrows():
            k = int(row["cluster"])
            entries.append(
                {
                    "cluster": k,
                    "delta_p": float(row["delta_p"]),
                    "peak_lag": _peak(lag_rows, k, "lag"),
                    "peak_month": _peak(month_rows, k, "month"),
                }
            )
        summary["periods"][str(period)] = entries
    return summary


def cmd_report(cfg: PipelineConfig, analysis_dir: Optional[str] = None) -> Dict[str, str]:
    """Summarize an analysis directory into summary.json plus wide plot-ready tables."""
    start = time.time()
    print_command_header("report", cfg)
    analysis_dir = analysis_dir or cfg.output_dir
    if not os.path.isdir(analysis_dir) or not os.listdir(analysis_dir):
        raise DataError(f"Analysis directory is empty or missing: {analysis_dir}")

    delta = _read_analysis(analysis_dir, "delta_p")
    lagged = _read_analysis(analysis_dir, "lagged_anomalies")
    by_month = _read_analysis(analysis_dir, "month_conditioned")

    summary = summarize(delta, lagged, by_month, cfg.analysis.top_n)
    saved = {
        "summary": _out(cfg, SUMMARY_FILE),
        "delta_p wide": _out(cfg, "delta_p_wide.csv"),
        "lag heatmap": _out(cfg, "lag_heatmap.csv"),
        "month heatmap": _out(cfg, "month_heatmap.csv"),
    }
    dump_json(summary, saved["summary"])

    delta.pivot(index="cluster", columns="period", values="delta_p").to_csv(
        saved["delta_p wide"], na_rep="", float_format="%.17g"
    )
    lagged.pivot(index=["period", "cluster"], columns="lag", values="delta_p").to_csv(
        saved["lag heatmap"], na_rep="", float_format="%.17g"
    )
    lag0 = by_month[by_month["lag"] == 0].copy()
    lag0["month"] = lag0["month"].astype(int)
    lag0.pivot(index=["period", "cluster"], columns="month", values="delta_p").to_csv(
        saved["month heatmap"], na_rep="", float_format="%.17g"
    )

    for period, entries in summary["periods"].items():
        clusters = ", ".join(f"{e['cluster']} ({e['delta_p']:+.4f})" for e in entries)
        always_logger.info(f"Period {period}: top clusters {clusters or 'none'}")
    artifacts = [os.path.basename(saved[name]) for name in saved]
    saved["manifest"] = write_manifest(cfg, "report", {"artifacts": artifacts})
    print_command_footer("report", saved, start)
    return saved

