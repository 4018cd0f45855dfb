"""
Mask-aware patch encoder with exact analytic backpropagation.

Pipeline: patchify -> mean of the unmasked flattened patches -> linear patch
embedding -> tanh MLP layer -> linear layer -> L2 normalization. Because the
embedding is linear, embedding each patch and then mean-pooling equals
embedding the pooled patch vector, which is what the batched code does.
"""

import logging
from dataclasses import dataclass, fields
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigError, NumericalError
from ..util.logging_utils import get_logger, verbosity_to_level
from .views import View

logger = get_logger(level=logging.DEBUG)

NORM_FLOOR = 1e-12

SeedLike = Union[int, Sequence[int]]

TENSOR_NAMES = (
    "patch_embed.weight",
    "patch_embed.bias",
    "mlp1.weight",
    "mlp1.bias",
    "mlp2.weight",
    "mlp2.bias",
)


def set_v_encoder(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class EncoderDims:
    embed: int = 64
    hidden: int = 128
    latent: int = 128

    def validate(self) -> None:
        for name in ("embed", "hidden", "latent"):
            if getattr(self, name) < 1:
                raise ConfigError(f"Encoder dimension {name} must be positive")

    def to_dict(self) -> Dict[str, int]:
        return {"embed": self.embed, "hidden": self.hidden, "latent": self.latent}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EncoderDims":
        try:
            dims = cls(**{k: int(v) for k, v in data.items()})
        except TypeError as e:
            raise ConfigError(f"Invalid encoder dims: {e}") from e
        dims.validate()
        return dims


@dataclass
class EncoderParams:
    """One encoder instance; the anchor and the EMA target share this shape."""

    patch_embed_w: np.ndarray
    patch_embed_b: np.ndarray
    mlp1_w: np.ndarray
    mlp1_b: np.ndarray
    mlp2_w: np.ndarray
    mlp2_b: np.ndarray

    @property
    def input_dim(self) -> int:
        return int(self.patch_embed_w.shape[0])

    @property
    def dims(self) -> EncoderDims:
        return EncoderDims(
            embed=int(self.patch_embed_w.shape[1]),
            hidden=int(self.mlp1_w.shape[1]),
            latent=int(self.mlp2_w.shape[1]),
        )

    def tensors(self) -> Dict[str, np.ndarray]:
        """Arrays keyed by their checkpoint names, in a fixed order."""
        return dict(zip(TENSOR_NAMES, (getattr(self, f.name) for f in fields(self))))

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> "EncoderParams":
        try:
            arrays = [np.asarray(tensors[name], dtype=np.float64) for name in TENSOR_NAMES]
        except KeyError as e:
            raise ConfigError(f"Encoder tensor {e} is missing") from e
        return cls(*arrays)

    def copy(self) -> "EncoderParams":
        return EncoderParams(*(getattr(self, f.name).copy() for f in fields(self)))

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(*(np.zeros_like(getattr(self, f.name)) for f in fields(self)))

    def add_(self, other: "EncoderParams") -> None:
        for f in fields(self):
            getattr(self, f.name).__iadd__(getattr(other, f.name))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.tensors().values())


@dataclass
class ForwardCache:
    """Intermediates of a batched forward pass, kept for the backward pass."""

    pooled: np.ndarray
    h0: np.ndarray
    h1: np.ndarray
    y: np.ndarray
    norm: np.ndarray
    z: np.ndarray
    degenerate: np.ndarray

    @property
    def n_degenerate(self) -> int:
        return int(self.degenerate.sum())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(dims: EncoderDims, input_dim: int, seed: SeedLike) -> EncoderParams:
    """
    Glorot-uniform weights and zero biases, deterministic per seed.

    Args:
        dims: Embedding, hidden and latent widths
        input_dim: Flattened patch length ``P * P * V``
        seed: Seed for the weight draws

    Returns:
        Freshly initialized encoder parameters
    """
    dims.validate()
    if input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {input_dim}")
    rng = np.random.default_rng(seed)
    return EncoderParams(
        patch_embed_w=_glorot(rng, input_dim, dims.embed),
        patch_embed_b=np.zeros(dims.embed),
        mlp1_w=_glorot(rng, dims.embed, dims.hidden),
        mlp1_b=np.zeros(dims.hidden),
        mlp2_w=_glorot(rng, dims.hidden, dims.latent),
        mlp2_b=np.zeros(dims.latent),
    )


def patchify(values: np.ndarray, patch_size: int) -> np.ndarray:
    """``(S, S, V)`` -> ``(n_patches, P*P*V)``, patches in row-major order."""
    size, _, n_channels = values.shape
    side = size // patch_size
    blocks = values.reshape(side, patch_size, side, patch_size, n_channels)
    return blocks.transpose(0, 2, 1, 3, 4).reshape(side * side, -1)


def pool_view(view: View, patch_size: int) -> np.ndarray:
    """Mean of the unmasked flattened patches of ``view``."""
    if view.out_size % patch_size:
        raise ConfigError(
            f"View side {view.out_size} is not divisible by patch_size {patch_size}"
        )
    patches = patchify(view.values, patch_size)
    side = view.out_size // patch_size
    mask = np.asarray(view.mask, dtype=bool)
    if mask.shape != (side, side):
        raise ConfigError(
            f"View mask has shape {mask.shape}, expected {(side, side)} for patch_size {patch_size}"
        )
    keep = ~mask.reshape(-1)
    if not keep.any():
        raise NumericalError("Cannot encode a view whose patches are all masked")
    return patches[keep].mean(axis=0)


def forward_pooled(params: EncoderParams, pooled: np.ndarray) -> ForwardCache:
    """Encode a ``(N, input_dim)`` batch of pooled patch vectors."""
    pooled = np.atleast_2d(pooled)
    h0 = pooled @ params.patch_embed_w + params.patch_embed_b
    h1 = np.tanh(h0 @ params.mlp1_w + params.mlp1_b)
    y = h1 @ params.mlp2_w + params.mlp2_b
    norm = np.linalg.norm(y, axis=1)
    degenerate = norm <= NORM_FLOOR

    z = np.zeros_like(y)
    ok = ~degenerate
    z[ok] = y[ok] / norm[ok, None]
    # Fallback direction for a vanishing pre-normalization vector
    z[degenerate, 0] = 1.0
    return ForwardCache(
        pooled=pooled, h0=h0, h1=h1, y=y, norm=norm, z=z, degenerate=degenerate
    )


def normalize_backward(z: np.ndarray, norm: np.ndarray, grad_z: np.ndarray) -> np.ndarray:
    """Pull ``grad_z`` back through ``z = y / |y|``; rows with zero norm get 0."""
    grad_z = np.atleast_2d(grad_z)
    z = np.atleast_2d(z)
    norm = np.atleast_1d(norm)
    proj = np.sum(z * grad_z, axis=1, keepdims=True)
    grad_y = np.zeros_like(grad_z)
    ok = norm > NORM_FLOOR
    grad_y[ok] = (grad_z[ok] - z[ok] * proj[ok]) / norm[ok, None]
    return grad_y


def backward_pooled(
    params: EncoderParams, cache: ForwardCache, grad_z: np.ndarray
) -> EncoderParams:
    """Parameter gradients of ``sum(z * grad_z)`` for a cached batch."""
    grad_y = normalize_backward(cache.z, cache.norm, grad_z)

    g_mlp2_w = cache.h1.T @ grad_y
    g_mlp2_b = grad_y.sum(axis=0)
    g_a1 = (grad_y @ params.mlp2_w.T) * (1.0 - cache.h1**2)
    g_mlp1_w = cache.h0.T @ g_a1
    g_mlp1_b = g_a1.sum(axis=0)
    g_h0 = g_a1 @ params.mlp1_w.T
    g_embed_w = cache.pooled.T @ g_h0
    g_embed_b = g_h0.sum(axis=0)
    return EncoderParams(g_embed_w, g_embed_b, g_mlp1_w, g_mlp1_b, g_mlp2_w, g_mlp2_b)


def encode(params: EncoderParams, view: View, patch_size: int) -> Tuple[np.ndarray, bool]:
    """
    Map one view to a unit-norm latent.

    Returns:
        Tuple of (latent vector, degenerate flag). A degenerate encode has a
        zero pre-normalization vector and returns the first basis vector.
    """
    cache = forward_pooled(params, pool_view(view, patch_size)[None, :])
    return cache.z[0], bool(cache.degenerate[0])


def encode_backward(
    params: EncoderParams, view: View, upstream: np.ndarray, patch_size: int
) -> EncoderParams:
    """Exact gradients of ``encode(params, view) . upstream`` for every parameter."""
    cache = forward_pooled(params, pool_view(view, patch_size)[None, :])
    return backward_pooled(params, cache, np.asarray(upstream, dtype=np.float64)[None, :])


def encode_views(
    params: EncoderParams, views: List[View], patch_size: int
) -> Tuple[np.ndarray, int]:
    """Batched encode; returns ``(N, d)`` latents and the degenerate count."""
    pooled = np.stack([pool_view(v, patch_size) for v in views])
    cache = forward_pooled(params, pooled)
    return cache.z, cache.n_degenerate


def ema_update(
    target: EncoderParams, anchor: EncoderParams, momentum: float
) -> EncoderParams:
    """Return ``momentum * target + (1 - momentum) * anchor`` entrywise."""
    if not 0.0 <= momentum <= 1.0:
        raise ConfigError(f"EMA momentum must lie in [0, 1], got {momentum}")
    updated: List[np.ndarray] = []
    for f in fields(target):
        t = getattr(target, f.name)
        a = getattr(anchor, f.name)
        if t.shape != a.shape:
            raise ConfigError(f"EMA shape mismatch for {f.name}: {t.shape} vs {a.shape}")
        if momentum == 1.0:
            updated.append(t.copy())
        elif momentum == 0.0:
            updated.append(a.copy())
        else:
            updated.append(momentum * t + (1.0 - momentum) * a)
    return EncoderParams(*updated)
