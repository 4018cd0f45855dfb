from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint, set_v_checkpoint
from .encoder import (
    EncoderDims,
    EncoderParams,
    ema_update,
    encode,
    encode_backward,
    init_params,
    set_v_encoder,
)
from .msn import (
    PrototypeBank,
    TrainConfig,
    ViewBatch,
    batch_gradients,
    batch_loss,
    cross_entropy,
    memax,
    prototype_probs,
    set_v_msn,
)
from .optim import AdamState, adamw_step, cosine_lr
from .trainer import TrainReport, TrainResult, set_v_trainer, train
from .views import View, ViewConfig, make_views, mask_patches, random_resized_crop, set_v_views

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "EncoderDims",
    "EncoderParams",
    "ema_update",
    "encode",
    "encode_backward",
    "init_params",
    "PrototypeBank",
    "TrainConfig",
    "ViewBatch",
    "batch_gradients",
    "batch_loss",
    "cross_entropy",
    "memax",
    "prototype_probs",
    "AdamState",
    "adamw_step",
    "cosine_lr",
    "TrainReport",
    "TrainResult",
    "train",
    "View",
    "ViewConfig",
    "make_views",
    "mask_patches",
    "random_resized_crop",
    "set_v_checkpoint",
    "set_v_encoder",
    "set_v_msn",
    "set_v_trainer",
    "set_v_views",
]
