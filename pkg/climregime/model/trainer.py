"""
Training loop: views -> loss and gradients -> AdamW on the anchor encoder and
prototypes -> prototype renormalization -> EMA update of the target encoder.

Every sample's views come from its own generator seeded by
``(seed, epoch, sample index)``, so the result does not depend on how many
worker threads build views or evaluate chunks.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from ..data.grid import DailyFieldSeries
from ..exceptions import DataError, NumericalError
from ..util.logging_utils import get_logger, verbosity_to_level
from .encoder import EncoderDims, EncoderParams, ema_update, init_params
from .msn import PrototypeBank, TrainConfig, ViewBatch, batch_gradients, init_bank, normalize_rows
from .optim import AdamState, adamw_step, cosine_lr, ema_momentum_at
from .views import View, ViewConfig, make_views

logger = get_logger(level=logging.DEBUG)

REPORT_COLUMNS = ["epoch", "loss", "mean_entropy", "lr", "usage_entropy"]

# Stream tags mixed into the seed so each random purpose gets its own stream
_INIT_STREAM = 0
_BANK_STREAM = 1
_SHUFFLE_STREAM = 2
_VIEW_STREAM = 3


def set_v_trainer(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    mean_entropy: float
    lr: float
    usage_entropy: float
    usage: np.ndarray
    n_degenerate: int = 0


@dataclass
class TrainReport:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_degenerate(self) -> int:
        return sum(r.n_degenerate for r in self.records)

    def to_frame(self) -> pd.DataFrame:
        rows = [[getattr(r, c) for c in REPORT_COLUMNS] for r in self.records]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def usage_frame(self) -> pd.DataFrame:
        """Long table ``epoch,cluster,count`` of target assignments per epoch."""
        rows = [
            (r.epoch, k, int(c)) for r in self.records for k, c in enumerate(r.usage)
        ]
        return pd.DataFrame(rows, columns=["epoch", "cluster", "count"])

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


@dataclass
class TrainResult:
    anchor: EncoderParams
    target: EncoderParams
    bank: PrototypeBank
    report: TrainReport


def usage_entropy(counts: np.ndarray) -> float:
    """Entropy in nats of the cluster-usage histogram."""
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def _sample_views(
    values: np.ndarray, index: int, epoch: int, seed: int, view_cfg: ViewConfig
) -> Tuple[View, List[View]]:
    rng = np.random.default_rng([seed, _VIEW_STREAM, epoch, index])
    return make_views(values[index], view_cfg, rng)


def initial_state(
    input_dim: int, dims: EncoderDims, cfg: TrainConfig
) -> Tuple[EncoderParams, EncoderParams, PrototypeBank]:
    anchor = init_params(dims, input_dim, seed=[cfg.seed, _INIT_STREAM])
    bank = init_bank(cfg.n_prototypes, dims.latent, seed=[cfg.seed, _BANK_STREAM])
    return anchor, anchor.copy(), bank


def _pack(anchor: EncoderParams, bank: PrototypeBank) -> Dict[str, np.ndarray]:
    params = {f"anchor.{k}": v for k, v in anchor.tensors().items()}
    params["bank"] = bank.prototypes
    return params


def _unpack(params: Dict[str, np.ndarray]) -> Tuple[EncoderParams, PrototypeBank]:
    anchor = EncoderParams.from_tensors(
        {k[len("anchor.") :]: v for k, v in params.items() if k.startswith("anchor.")}
    )
    return anchor, PrototypeBank(params["bank"])


def train(
    dataset: DailyFieldSeries,
    view_cfg: ViewConfig,
    dims: EncoderDims,
    cfg: TrainConfig,
    n_jobs: int = 1,
    show_progress: bool = True,
) -> TrainResult:
    """
    Train the anchor encoder and prototype bank on a normalized series.

    Args:
        dataset: Normalized daily series (missing cells already zero)
        view_cfg: Crop sizes, patch size, anchor count and mask ratio
        dims: Encoder widths
        cfg: Objective, optimizer and schedule settings
        n_jobs: Worker threads; results are identical for any value
        show_progress: Display a per-epoch progress bar

    Returns:
        TrainResult with both encoders, the bank and a per-epoch report

    Raises:
        DataError: If the dataset is empty
        NumericalError: If a batch loss is not finite
    """
    if len(dataset) == 0:
        raise DataError("Cannot train on an empty dataset")
    view_cfg.validate()
    dims.validate()
    cfg.validate()

    values = np.nan_to_num(dataset.values)
    n_samples = values.shape[0]
    input_dim = view_cfg.patch_size**2 * values.shape[-1]
    anchor, target, bank = initial_state(input_dim, dims, cfg)

    params = _pack(anchor, bank)
    decay_keys = [k for k in params if k.endswith(".weight")]
    state = AdamState.zeros_like(params)
    n_batches = math.ceil(n_samples / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    step = 0
    report = TrainReport()

    logger.info(
        f"Training on {n_samples} days: K={cfg.n_prototypes}, d={dims.latent}, "
        f"{cfg.epochs} epochs x {n_batches} batches, {n_jobs} thread(s)"
    )

    epochs = tqdm(range(cfg.epochs), desc="Training", unit="epoch", disable=not show_progress)
    for epoch in epochs:
        lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr, cfg.final_lr)
        order = np.random.default_rng([cfg.seed, _SHUFFLE_STREAM, epoch]).permutation(n_samples)

        loss_sum = 0.0
        entropy_sum = 0.0
        n_pairs = 0
        usage = np.zeros(cfg.n_prototypes, dtype=np.int64)
        degenerate = 0

        for start in range(0, n_samples, cfg.batch_size):
            indices = order[start : start + cfg.batch_size]
            samples = Parallel(n_jobs=n_jobs, prefer="threads")(
                delayed(_sample_views)(values, int(i), epoch, cfg.seed, view_cfg)
                for i in indices
            )
            batch = ViewBatch.from_views(samples, view_cfg.patch_size)
            result = batch_gradients(anchor, target, bank, batch, cfg, n_jobs=n_jobs)
            diag = result.diagnostics
            if not math.isfinite(diag.loss):
                raise NumericalError(
                    f"Non-finite loss {diag.loss} at epoch {epoch}, batch {start // cfg.batch_size}"
                )

            grads = _pack(result.anchor, PrototypeBank(result.bank))
            params, state = adamw_step(
                params, grads, state, lr, cfg.weight_decay, decay_keys=decay_keys
            )
            params["bank"] = normalize_rows(params["bank"])
            anchor, bank = _unpack(params)

            momentum = ema_momentum_at(
                step, total_steps, cfg.ema_momentum, cfg.ema_momentum_final, cfg.ema_schedule
            )
            target = ema_update(target, anchor, momentum)
            step += 1

            weight = len(indices)
            loss_sum += diag.loss * weight
            entropy_sum += diag.mean_entropy * weight
            n_pairs += weight
            usage += np.bincount(diag.target_assignments, minlength=cfg.n_prototypes)
            degenerate += diag.n_degenerate

        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / n_pairs,
            mean_entropy=entropy_sum / n_pairs,
            lr=lr,
            usage_entropy=usage_entropy(usage),
            usage=usage,
            n_degenerate=degenerate,
        )
        report.records.append(record)
        if degenerate:
            logger.warning(f"Epoch {epoch}: {degenerate} degenerate encode(s) fell back to e1")
        logger.debug(
            f"Epoch {epoch}: loss={record.loss:.6f} usage_entropy={record.usage_entropy:.4f} lr={lr:.3g}"
        )
        epochs.set_postfix(loss=f"{record.loss:.4f}", usage=f"{record.usage_entropy:.3f}")

    if report.records:
        last = report.records[-1]
        logger.info(
            f"Final epoch: loss={last.loss:.6f}, usage entropy={last.usage_entropy:.4f} "
            f"(max {math.log(cfg.n_prototypes):.4f})"
        )
    return TrainResult(anchor=anchor, target=target, bank=bank, report=report)
