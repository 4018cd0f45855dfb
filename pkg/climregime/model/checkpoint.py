"""Checkpoints: both encoders plus the prototype bank in packed framing."""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..data.grid import ChannelStats
from ..exceptions import ConfigError, DataError
from ..util.logging_utils import get_logger, verbosity_to_level
from ..util.packed import read_packed, write_packed
from .encoder import EncoderParams
from .msn import PrototypeBank
from .views import ViewConfig

logger = get_logger(level=logging.DEBUG)


def set_v_checkpoint(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass
class Checkpoint:
    anchor: EncoderParams
    target: EncoderParams
    bank: PrototypeBank
    view_config: ViewConfig
    channel_names: List[str]
    channel_stats: Optional[ChannelStats] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_prototypes(self) -> int:
        return self.bank.n_prototypes


def _named_tensors(ckpt: Checkpoint) -> Dict[str, np.ndarray]:
    tensors: Dict[str, np.ndarray] = {}
    for prefix, params in (("anchor", ckpt.anchor), ("target", ckpt.target)):
        for name, array in params.tensors().items():
            tensors[f"{prefix}.{name}"] = array
    tensors["bank"] = ckpt.bank.prototypes
    return tensors


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write ``ckpt``; tensors are stored as little-endian f32 in header order."""
    tensors = _named_tensors(ckpt)
    header = {
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
        "view_config": ckpt.view_config.to_dict(),
        "channel_names": list(ckpt.channel_names),
        "channel_stats": ckpt.channel_stats.to_dict() if ckpt.channel_stats else None,
        "n_prototypes": ckpt.n_prototypes,
        "metadata": ckpt.metadata,
    }
    payload = np.concatenate([v.reshape(-1) for v in tensors.values()])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_packed(path, header, payload)
    logger.info(f"Saved checkpoint with {len(tensors)} tensors to {path}")


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise DataError(f"Checkpoint not found: {path}")
    header, payload = read_packed(path)
    try:
        specs = [(t["name"], tuple(int(s) for s in t["shape"])) for t in header["tensors"]]
        view_config = ViewConfig.from_dict(header["view_config"])
        channel_names = [str(c) for c in header["channel_names"]]
        stats = header.get("channel_stats")
        metadata = dict(header.get("metadata") or {})
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: malformed checkpoint header ({e})") from e

    expected = sum(int(np.prod(shape)) for _, shape in specs)
    if payload.size != expected:
        raise DataError(f"{path}: payload holds {payload.size} values, header implies {expected}")

    tensors: Dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in specs:
        size = int(np.prod(shape))
        tensors[name] = payload[offset : offset + size].reshape(shape)
        offset += size

    def instance(prefix: str) -> EncoderParams:
        n = len(prefix) + 1
        try:
            return EncoderParams.from_tensors(
                {k[n:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
            )
        except ConfigError as e:
            raise DataError(f"{path}: {prefix} encoder incomplete ({e})") from e

    if "bank" not in tensors:
        raise DataError(f"{path}: checkpoint has no prototype bank")
    ckpt = Checkpoint(
        anchor=instance("anchor"),
        target=instance("target"),
        bank=PrototypeBank(tensors["bank"]),
        view_config=view_config,
        channel_names=channel_names,
        channel_stats=ChannelStats.from_dict(stats) if stats else None,
        metadata=metadata,
    )
    logger.info(f"Loaded checkpoint from {path}: K={ckpt.n_prototypes}")
    return ckpt
