"""
Prototype assignment and the masked-siamese training objective.

Targets come from the EMA encoder at the sharp temperature ``tau_target`` and
are treated as constants; anchors come from the trainable encoder at
``tau_anchor``. The loss is the mean cross-entropy over (sample, anchor)
pairs minus ``memax_weight`` times the entropy of the batch-mean prediction.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..exceptions import ConfigError
from ..util.logging_utils import get_logger, verbosity_to_level
from .encoder import (
    EncoderParams,
    ForwardCache,
    SeedLike,
    backward_pooled,
    forward_pooled,
    pool_view,
)
from .views import View

logger = get_logger(level=logging.DEBUG)

LOG_EPS = 1e-12
CHUNK_ROWS = 64
MEMAX_SIDES = ("anchor", "target")
EMA_SCHEDULES = ("constant", "cosine")


def set_v_msn(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class PrototypeBank:
    """``K x d`` matrix of unit-norm prototype rows."""

    prototypes: np.ndarray

    @property
    def n_prototypes(self) -> int:
        return int(self.prototypes.shape[0])

    @property
    def latent_dim(self) -> int:
        return int(self.prototypes.shape[1])

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(self.prototypes.copy())


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.maximum(norms, LOG_EPS)


def init_bank(n_prototypes: int, latent_dim: int, seed: SeedLike) -> PrototypeBank:
    if n_prototypes < 1 or latent_dim < 1:
        raise ConfigError(
            f"Prototype bank needs positive sizes, got K={n_prototypes} d={latent_dim}"
        )
    rng = np.random.default_rng(seed)
    return PrototypeBank(normalize_rows(rng.standard_normal((n_prototypes, latent_dim))))


@dataclass
class TrainConfig:
    n_prototypes: int = 30
    tau_anchor: float = 0.1
    tau_target: float = 0.025
    memax_weight: float = 1.0
    memax_on: str = "anchor"
    epochs: int = 300
    batch_size: int = 512
    base_lr: float = 1e-3
    final_lr: float = 1e-5
    weight_decay: float = 0.04
    ema_momentum: float = 0.996
    ema_momentum_final: float = 1.0
    ema_schedule: str = "constant"
    seed: int = 0

    def validate(self) -> None:
        if self.n_prototypes < 1:
            raise ConfigError(f"n_prototypes must be positive, got {self.n_prototypes}")
        if not 0 < self.tau_target < self.tau_anchor:
            raise ConfigError(
                f"Temperatures must satisfy 0 < tau_target < tau_anchor, got "
                f"tau_target={self.tau_target} tau_anchor={self.tau_anchor}"
            )
        if self.memax_weight < 0:
            raise ConfigError(f"memax_weight must be non-negative, got {self.memax_weight}")
        if self.memax_on not in MEMAX_SIDES:
            raise ConfigError(f"memax_on must be one of {MEMAX_SIDES}, got {self.memax_on!r}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not (self.base_lr > 0 and self.final_lr > 0 and self.weight_decay > 0):
            raise ConfigError("base_lr, final_lr and weight_decay must be positive")
        for name in ("ema_momentum", "ema_momentum_final"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.ema_schedule not in EMA_SCHEDULES:
            raise ConfigError(
                f"ema_schedule must be one of {EMA_SCHEDULES}, got {self.ema_schedule!r}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        try:
            cfg = cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid train config: {e}") from e
        cfg.validate()
        return cfg


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def prototype_probs(z: np.ndarray, bank: PrototypeBank, tau: float) -> np.ndarray:
    """
    Softmax over prototypes of ``<z, q_k> / tau``.

    Works on a single latent ``(d,)`` or a batch ``(N, d)``.
    """
    if tau <= 0:
        raise ConfigError(f"Temperature must be positive, got {tau}")
    return _softmax(np.asarray(z) @ bank.prototypes.T / tau)


def entropy(p: np.ndarray) -> np.ndarray:
    return -np.sum(p * np.log(p + LOG_EPS), axis=-1)


def cross_entropy(target: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    return -np.sum(target * np.log(anchor + LOG_EPS), axis=-1)


def memax(mean_anchor_probs: np.ndarray) -> float:
    """Entropy of the batch-mean assignment; the loss subtracts ``lambda`` times this."""
    return float(entropy(np.asarray(mean_anchor_probs)))


@dataclass
class ViewBatch:
    """Pooled patch vectors for a batch: one target and ``M`` anchors per sample."""

    target_pooled: np.ndarray
    anchor_pooled: np.ndarray

    @property
    def batch_size(self) -> int:
        return int(self.target_pooled.shape[0])

    @property
    def n_anchors(self) -> int:
        return int(self.anchor_pooled.shape[1])

    @classmethod
    def from_views(
        cls, samples: Sequence[Tuple[View, List[View]]], patch_size: int
    ) -> "ViewBatch":
        if not samples:
            raise ConfigError("A batch needs at least one sample")
        targets = np.stack([pool_view(t, patch_size) for t, _ in samples])
        anchors = np.stack(
            [np.stack([pool_view(a, patch_size) for a in anchors]) for _, anchors in samples]
        )
        return cls(target_pooled=targets, anchor_pooled=anchors)


@dataclass
class LossDiagnostics:
    loss: float
    cross_entropy: float
    memax_anchor: float
    memax_target: float
    mean_entropy: float
    target_assignments: np.ndarray
    n_degenerate: int


@dataclass
class BatchGradients:
    anchor: EncoderParams
    bank: np.ndarray
    diagnostics: LossDiagnostics


def _chunks(n_rows: int, size: int = CHUNK_ROWS) -> List[slice]:
    return [slice(i, min(i + size, n_rows)) for i in range(0, n_rows, size)]


def _forward_probs(
    params: EncoderParams, prototypes: np.ndarray, pooled: np.ndarray, tau: float
) -> Tuple[ForwardCache, np.ndarray]:
    cache = forward_pooled(params, pooled)
    return cache, _softmax(cache.z @ prototypes.T / tau)


def _objective(
    anchor_probs: np.ndarray, target_rows: np.ndarray, cfg: TrainConfig, memax_target: float
) -> Tuple[float, float, float]:
    ce = float(np.mean(cross_entropy(target_rows, anchor_probs)))
    h_anchor = memax(anchor_probs.mean(axis=0))
    regularizer = h_anchor if cfg.memax_on == "anchor" else memax_target
    return ce - cfg.memax_weight * regularizer, ce, h_anchor


def anchor_objective(
    params: EncoderParams,
    prototypes: np.ndarray,
    anchor_pooled: np.ndarray,
    target_rows: np.ndarray,
    cfg: TrainConfig,
    memax_target: float = 0.0,
) -> float:
    """
    Loss as a function of the anchor branch only, with target rows held fixed.

    ``anchor_pooled`` is ``(N, input_dim)`` and ``target_rows`` the matching
    ``(N, K)`` target distributions.
    """
    _, probs = _forward_probs(params, prototypes, anchor_pooled, cfg.tau_anchor)
    return _objective(probs, target_rows, cfg, memax_target)[0]


def _chunk_backward(
    params: EncoderParams,
    prototypes: np.ndarray,
    cache: ForwardCache,
    probs: np.ndarray,
    target_rows: np.ndarray,
    mean_probs: np.ndarray,
    n_total: int,
    cfg: TrainConfig,
) -> Tuple[EncoderParams, np.ndarray]:
    grad_p = -target_rows / (probs + LOG_EPS) / n_total
    if cfg.memax_on == "anchor" and cfg.memax_weight:
        dh = np.log(mean_probs + LOG_EPS) + mean_probs / (mean_probs + LOG_EPS)
        grad_p = grad_p + cfg.memax_weight * dh / n_total
    grad_s = probs * (grad_p - np.sum(grad_p * probs, axis=1, keepdims=True))
    grad_z = grad_s @ prototypes / cfg.tau_anchor
    grad_bank = grad_s.T @ cache.z / cfg.tau_anchor
    return backward_pooled(params, cache, grad_z), grad_bank


def _parallel_map(fn: Any, items: List[Any], n_jobs: int) -> List[Any]:
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(item) for item in items)


def _compute(
    anchor_params: EncoderParams,
    target_params: EncoderParams,
    bank: PrototypeBank,
    batch: ViewBatch,
    cfg: TrainConfig,
    n_jobs: int,
    with_gradients: bool,
) -> BatchGradients:
    prototypes = bank.prototypes
    n_anchors = batch.n_anchors
    anchor_rows = batch.anchor_pooled.reshape(batch.batch_size * n_anchors, -1)

    target_out = _parallel_map(
        lambda s: _forward_probs(target_params, prototypes, batch.target_pooled[s], cfg.tau_target),
        _chunks(batch.batch_size),
        n_jobs,
    )
    target_probs = np.concatenate([p for _, p in target_out])
    target_rows = np.repeat(target_probs, n_anchors, axis=0)
    memax_target = memax(target_probs.mean(axis=0))

    slices = _chunks(anchor_rows.shape[0])
    anchor_out = _parallel_map(
        lambda s: _forward_probs(anchor_params, prototypes, anchor_rows[s], cfg.tau_anchor),
        slices,
        n_jobs,
    )
    anchor_probs = np.concatenate([p for _, p in anchor_out])
    loss, ce, h_anchor = _objective(anchor_probs, target_rows, cfg, memax_target)

    n_degenerate = sum(c.n_degenerate for c, _ in target_out) + sum(
        c.n_degenerate for c, _ in anchor_out
    )
    diagnostics = LossDiagnostics(
        loss=loss,
        cross_entropy=ce,
        memax_anchor=h_anchor,
        memax_target=memax_target,
        mean_entropy=float(np.mean(entropy(anchor_probs))),
        target_assignments=np.argmax(target_probs, axis=1),
        n_degenerate=int(n_degenerate),
    )

    grad_anchor = anchor_params.zeros_like()
    grad_bank = np.zeros_like(prototypes)
    if with_gradients:
        mean_probs = anchor_probs.mean(axis=0)
        n_total = anchor_rows.shape[0]
        parts = _parallel_map(
            lambda i: _chunk_backward(
                anchor_params,
                prototypes,
                anchor_out[i][0],
                anchor_out[i][1],
                target_rows[slices[i]],
                mean_probs,
                n_total,
                cfg,
            ),
            list(range(len(slices))),
            n_jobs,
        )
        # Fixed reduction order keeps results independent of n_jobs
        for enc_grad, bank_grad in parts:
            grad_anchor.add_(enc_grad)
            grad_bank += bank_grad
    return BatchGradients(anchor=grad_anchor, bank=grad_bank, diagnostics=diagnostics)


def batch_loss(
    anchor_params: EncoderParams,
    target_params: EncoderParams,
    bank: PrototypeBank,
    batch: ViewBatch,
    cfg: TrainConfig,
    n_jobs: int = 1,
) -> Tuple[float, LossDiagnostics]:
    """
    Mean pairwise cross-entropy minus the weighted ME-MAX entropy.

    Args:
        anchor_params: Trainable encoder
        target_params: EMA encoder; only used to build constant targets
        bank: Prototype bank
        batch: Pooled target and anchor views
        cfg: Temperatures, ME-MAX weight and side
        n_jobs: Worker threads for the chunked forward passes

    Returns:
        Tuple of (loss, diagnostics)
    """
    result = _compute(anchor_params, target_params, bank, batch, cfg, n_jobs, False)
    return result.diagnostics.loss, result.diagnostics


def batch_gradients(
    anchor_params: EncoderParams,
    target_params: EncoderParams,
    bank: PrototypeBank,
    batch: ViewBatch,
    cfg: TrainConfig,
    n_jobs: int = 1,
) -> BatchGradients:
    """Exact gradients of ``batch_loss`` for the anchor encoder and the bank."""
    return _compute(anchor_params, target_params, bank, batch, cfg, n_jobs, True)
