"""
Multi-view generation: random resized crops resampled to a fixed square,
and random whole-patch masking for anchor views.

All randomness flows through the ``numpy.random.Generator`` passed in.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from scipy import ndimage

from ..data.grid import DailyField
from ..exceptions import ConfigError
from ..util.logging_utils import get_logger, verbosity_to_level

logger = get_logger(level=logging.DEBUG)

TARGET = "target"
ANCHOR = "anchor"
ASPECT_RANGE = (3.0 / 4.0, 4.0 / 3.0)

FieldLike = Union[DailyField, np.ndarray]


def set_v_views(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


@dataclass(frozen=True)
class CropBox:
    top: int
    left: int
    height: int
    width: int


@dataclass
class View:
    """An ``S x S x V`` crop with a per-patch mask (True = masked)."""

    values: np.ndarray
    mask: np.ndarray
    crop_box: CropBox
    kind: str = TARGET

    @property
    def out_size(self) -> int:
        return int(self.values.shape[0])


@dataclass
class ViewConfig:
    out_size: int = 32
    patch_size: int = 4
    n_anchors: int = 2
    target_scale: Tuple[float, float] = (0.6, 1.0)
    anchor_scale: Tuple[float, float] = (0.2, 0.6)
    mask_ratio: float = 0.15

    @property
    def patches_per_side(self) -> int:
        return self.out_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.patches_per_side**2

    @property
    def n_masked(self) -> int:
        return masked_patch_count(self.mask_ratio, self.n_patches)

    def validate(self) -> None:
        if self.out_size < 2:
            raise ConfigError(f"out_size must be at least 2, got {self.out_size}")
        if self.patch_size < 1 or self.out_size % self.patch_size:
            raise ConfigError(
                f"out_size {self.out_size} is not divisible by patch_size {self.patch_size}"
            )
        if self.n_anchors < 1:
            raise ConfigError(f"n_anchors must be at least 1, got {self.n_anchors}")
        for name in ("target_scale", "anchor_scale"):
            low, high = getattr(self, name)
            if not 0.0 < low <= high <= 1.0:
                raise ConfigError(f"{name} must satisfy 0 < low <= high <= 1, got {(low, high)}")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must lie in [0, 1), got {self.mask_ratio}")
        if self.n_masked >= self.n_patches:
            raise ConfigError(
                f"mask_ratio {self.mask_ratio} would mask all {self.n_patches} patches"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "out_size": self.out_size,
            "patch_size": self.patch_size,
            "n_anchors": self.n_anchors,
            "target_scale": list(self.target_scale),
            "anchor_scale": list(self.anchor_scale),
            "mask_ratio": self.mask_ratio,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ViewConfig":
        fields = dict(data)
        for name in ("target_scale", "anchor_scale"):
            if name in fields:
                fields[name] = tuple(float(v) for v in fields[name])
        try:
            cfg = cls(**fields)
        except TypeError as e:
            raise ConfigError(f"Invalid view config: {e}") from e
        cfg.validate()
        return cfg


def masked_patch_count(ratio: float, n_patches: int) -> int:
    """``round(ratio * n_patches)`` with halves rounded up."""
    return int(np.floor(ratio * n_patches + 0.5))


def _field_values(field: FieldLike) -> np.ndarray:
    values = field.values if isinstance(field, DailyField) else field
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    return values


def resample(values: np.ndarray, box: CropBox, out_size: int) -> np.ndarray:
    """
    Bilinearly resample the ``box`` region to ``out_size x out_size``.

    Output cell centers map onto the box with corners aligned, so the first
    and last output rows sit exactly on the box's first and last rows.
    """
    rows = np.linspace(box.top, box.top + box.height - 1, out_size)
    cols = np.linspace(box.left, box.left + box.width - 1, out_size)
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    out = np.empty((out_size, out_size, values.shape[-1]))
    for c in range(values.shape[-1]):
        out[:, :, c] = ndimage.map_coordinates(
            values[:, :, c], [grid_r, grid_c], order=1, mode="nearest"
        )
    return out


def sample_crop_box(
    height: int,
    width: int,
    scale: Tuple[float, float],
    rng: np.random.Generator,
    ratio: Tuple[float, float] = ASPECT_RANGE,
) -> CropBox:
    area = height * width
    target_area = rng.uniform(scale[0], scale[1]) * area
    aspect = rng.uniform(ratio[0], ratio[1])
    w = int(round(np.sqrt(target_area * aspect)))
    h = int(round(np.sqrt(target_area / aspect)))
    w = int(np.clip(w, 2, width))
    h = int(np.clip(h, 2, height))
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return CropBox(top=top, left=left, height=h, width=w)


def random_resized_crop(
    field: FieldLike,
    scale: Tuple[float, float],
    out_size: int,
    rng: np.random.Generator,
    ratio: Tuple[float, float] = ASPECT_RANGE,
    patch_size: int = 1,
) -> View:
    """
    Crop a random rectangle covering a ``scale`` fraction of the field and
    resample it to a square.

    Args:
        field: A daily field or an ``H x W x V`` array
        scale: Interval the crop's area fraction is drawn from
        out_size: Side length of the output view in cells
        rng: Source of all randomness
        ratio: Interval the width/height aspect is drawn from
        patch_size: Patch side the empty mask is laid out for

    Returns:
        An unmasked view with its source crop box

    Raises:
        ConfigError: If out_size is not divisible by patch_size
    """
    if patch_size < 1 or out_size % patch_size:
        raise ConfigError(f"View side {out_size} is not divisible by patch_size {patch_size}")
    values = _field_values(field)
    height, width = values.shape[:2]
    box = sample_crop_box(height, width, scale, rng, ratio)
    out = resample(values, box, out_size)
    side = out_size // patch_size
    return View(values=out, mask=np.zeros((side, side), dtype=bool), crop_box=box)


def full_view(field: FieldLike, out_size: int, patch_size: int) -> View:
    """The whole field resampled to ``out_size``, with nothing masked."""
    values = _field_values(field)
    box = CropBox(top=0, left=0, height=values.shape[0], width=values.shape[1])
    side = out_size // patch_size
    return View(
        values=resample(values, box, out_size),
        mask=np.zeros((side, side), dtype=bool),
        crop_box=box,
    )


def mask_patches(
    view: View, patch_size: int, ratio: float, rng: np.random.Generator
) -> View:
    """Zero out ``round(ratio * n_patches)`` distinct patches chosen uniformly."""
    size = view.out_size
    if size % patch_size:
        raise ConfigError(f"View side {size} is not divisible by patch_size {patch_size}")
    side = size // patch_size
    n_patches = side * side
    n_masked = masked_patch_count(ratio, n_patches)

    mask = np.zeros(n_patches, dtype=bool)
    if n_masked:
        mask[rng.choice(n_patches, size=n_masked, replace=False)] = True
    mask = mask.reshape(side, side)
    if view.mask.shape == mask.shape:
        mask |= view.mask

    values = view.values.copy()
    cell_mask = np.kron(mask, np.ones((patch_size, patch_size), dtype=bool)).astype(bool)
    values[cell_mask] = 0.0
    return View(values=values, mask=mask, crop_box=view.crop_box, kind=ANCHOR)


def make_views(
    field: FieldLike, cfg: ViewConfig, rng: np.random.Generator
) -> Tuple[View, List[View]]:
    """One unmasked target view and ``cfg.n_anchors`` masked anchor views."""
    target = random_resized_crop(
        field, cfg.target_scale, cfg.out_size, rng, patch_size=cfg.patch_size
    )
    target.kind = TARGET

    anchors: List[View] = []
    for _ in range(cfg.n_anchors):
        crop = random_resized_crop(
            field, cfg.anchor_scale, cfg.out_size, rng, patch_size=cfg.patch_size
        )
        anchors.append(mask_patches(crop, cfg.patch_size, cfg.mask_ratio, rng))
    return target, anchors
