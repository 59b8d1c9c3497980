"""Mosaic4/Mosaic9 composition with exact label transforms and the epoch schedule.

Geometry is an axis-aligned 2x2 or 3x3 grid whose interior grid lines are
jittered; each source image is stretched to its cell, so every label transform
is a pure affine map and exactly invertible for unclipped boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import ImageRecord, NormBox
from .errors import (
    ConfigInvalid,
    EpochOutOfRange,
    SingularPlacement,
    WrongSourceCount,
)

VARIANT_GRID = {"mosaic4": 2, "mosaic9": 3}


@dataclass(frozen=True)
class ScheduleSpec:
    """Mosaic on/off schedule over training epochs."""

    total_epochs: int
    cutoff: int

    def __post_init__(self) -> None:
        if self.total_epochs <= 0:
            raise ConfigInvalid("total_epochs must be positive")
        if not 0 <= self.cutoff <= self.total_epochs:
            raise ConfigInvalid("cutoff must lie in [0, total_epochs]")


def cutoff_for_usage_ratio(total_epochs: int, usage_ratio: float = 0.8) -> int:
    """Cutoff epochs that keep mosaic active for the given fraction of training."""
    if not 0 <= usage_ratio <= 1:
        raise ConfigInvalid("usage_ratio must lie in [0, 1]")
    return round((1.0 - usage_ratio) * total_epochs)


def mosaic_schedule(epoch: int, spec: ScheduleSpec) -> bool:
    """True (mosaic on) for epochs before total_epochs - cutoff, False after."""
    if not 0 <= epoch < spec.total_epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {spec.total_epochs})")
    return epoch < spec.total_epochs - spec.cutoff


@dataclass(frozen=True)
class MosaicSpec:
    variant: str = "mosaic9"
    output_size: tuple[int, int] = (640, 640)  # (W, H)
    jitter: float = 0.25
    min_visible_fraction: float = 0.10
    min_pixel_size: int = 2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANT_GRID:
            raise ConfigInvalid(f"variant must be mosaic4|mosaic9, got {self.variant!r}")
        if self.output_size[0] < 2 or self.output_size[1] < 2:
            raise ConfigInvalid("output_size must be at least 2x2")
        if not 0 <= self.jitter < 0.5:
            raise ConfigInvalid("jitter must lie in [0, 0.5)")
        if not 0 < self.min_visible_fraction <= 1:
            raise ConfigInvalid("min_visible_fraction must lie in (0, 1]")

    @property
    def grid_size(self) -> int:
        return VARIANT_GRID[self.variant]

    @property
    def source_count(self) -> int:
        return self.grid_size ** 2


@dataclass(frozen=True)
class Placement:
    """Affine map from source-normalized to composite-normalized coordinates."""

    scale_x: float
    scale_y: float
    offset_x: float
    offset_y: float


@dataclass(frozen=True)
class LabelOrigin:
    source_index: int
    box_index: int
    clipped: bool


@dataclass
class MosaicSample:
    image: np.ndarray  # (H, W, 3) uint8
    labels: list[NormBox]
    provenance: list[tuple[str, Placement]]
    label_origins: list[LabelOrigin]


def forward_map_label(box: NormBox, placement: Placement) -> NormBox:
    return NormBox(
        box.class_id,
        placement.offset_x + box.cx * placement.scale_x,
        placement.offset_y + box.cy * placement.scale_y,
        box.w * placement.scale_x,
        box.h * placement.scale_y,
    )


def inverse_map_label(box: NormBox, placement: Placement) -> NormBox:
    if placement.scale_x == 0 or placement.scale_y == 0:
        raise SingularPlacement("zero-scale placement is not invertible")
    return NormBox(
        box.class_id,
        (box.cx - placement.offset_x) / placement.scale_x,
        (box.cy - placement.offset_y) / placement.scale_y,
        box.w / placement.scale_x,
        box.h / placement.scale_y,
    )


def _grid_lines(n_cells: int, length: int, jitter: float, rng: np.random.Generator) -> list[int]:
    lines = [0]
    cell = length / n_cells
    for i in range(1, n_cells):
        pos = i * cell + rng.uniform(-jitter, jitter) * cell
        lines.append(int(round(min(max(pos, 1), length - 1))))
    lines.append(length)
    if any(b <= a for a, b in zip(lines, lines[1:])):
        # Extreme jitter at tiny output sizes can collapse a cell; fall back
        # to the unjittered grid rather than emit zero-size cells.
        lines = [int(round(i * cell)) for i in range(n_cells)] + [length]
    return lines


def _resize_bilinear(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.fromarray(image).resize(size, Image.BILINEAR))


def _clip_to_cell(box: NormBox, placement: Placement) -> tuple[NormBox | None, bool]:
    """Clip a composite-frame box to its cell extent; None if degenerate."""
    x0, y0 = placement.offset_x, placement.offset_y
    x1, y1 = x0 + placement.scale_x, y0 + placement.scale_y
    lo_x = max(box.cx - box.w / 2, x0)
    hi_x = min(box.cx + box.w / 2, x1)
    lo_y = max(box.cy - box.h / 2, y0)
    hi_y = min(box.cy + box.h / 2, y1)
    if hi_x <= lo_x or hi_y <= lo_y:
        return None, True
    clipped = NormBox(box.class_id, (lo_x + hi_x) / 2, (lo_y + hi_y) / 2,
                      hi_x - lo_x, hi_y - lo_y)
    was_clipped = (clipped.w < box.w - 1e-12) or (clipped.h < box.h - 1e-12)
    return clipped, was_clipped


def compose_mosaic(
    sources: Sequence[tuple[ImageRecord, np.ndarray]],
    spec: MosaicSpec,
    rng: np.random.Generator | None = None,
) -> MosaicSample:
    n = spec.grid_size
    if len(sources) != n * n:
        raise WrongSourceCount(f"{spec.variant} needs {n * n} sources, got {len(sources)}")
    if rng is None:
        rng = np.random.default_rng(spec.rng_seed)
    out_w, out_h = spec.output_size
    xs = _grid_lines(n, out_w, spec.jitter, rng)
    ys = _grid_lines(n, out_h, spec.jitter, rng)

    canvas = np.zeros((out_h, out_w, 3), dtype=np.uint8)
    labels: list[NormBox] = []
    provenance: list[tuple[str, Placement]] = []
    origins: list[LabelOrigin] = []
    for idx, (record, image) in enumerate(sources):
        row, col = divmod(idx, n)
        x0, x1 = xs[col], xs[col + 1]
        y0, y1 = ys[row], ys[row + 1]
        cell_w, cell_h = x1 - x0, y1 - y0
        canvas[y0:y1, x0:x1] = _resize_bilinear(np.ascontiguousarray(image), (cell_w, cell_h))
        placement = Placement(cell_w / out_w, cell_h / out_h, x0 / out_w, y0 / out_h)
        provenance.append((record.image_id, placement))
        for box_index, box in enumerate(record.labels):
            mapped = forward_map_label(box, placement)
            clipped, was_clipped = _clip_to_cell(mapped, placement)
            if clipped is None:
                continue
            visible = (clipped.w * clipped.h) / (mapped.w * mapped.h)
            if visible < spec.min_visible_fraction:
                continue
            if clipped.w * out_w < spec.min_pixel_size or clipped.h * out_h < spec.min_pixel_size:
                continue
            labels.append(clipped)
            origins.append(LabelOrigin(idx, box_index, was_clipped))
    return MosaicSample(canvas, labels, provenance, origins)


@dataclass(frozen=True)
class PlanItem:
    kind: str  # "image" | "mosaic"
    image_ids: tuple[str, ...]
    sample_seed: tuple[int, ...] = ()


@dataclass(frozen=True)
class EpochPlan:
    epoch: int
    mosaic_on: bool
    items: tuple[PlanItem, ...]


def build_epoch_plan(
    image_ids: Sequence[str],
    spec: MosaicSpec,
    schedule: ScheduleSpec,
    epoch: int,
) -> EpochPlan:
    """Deterministic per-epoch sample plan; mosaic groups drawn without replacement."""
    if not image_ids:
        raise ConfigInvalid("cannot plan an epoch over an empty dataset")
    ids = sorted(image_ids)
    rng = np.random.default_rng([spec.rng_seed, epoch])
    order = [ids[i] for i in rng.permutation(len(ids))]
    on = mosaic_schedule(epoch, schedule)
    if not on:
        items = tuple(PlanItem("image", (i,)) for i in order)
        return EpochPlan(epoch, False, items)

    group = spec.source_count
    items_list: list[PlanItem] = []
    for start in range(0, len(order), group):
        chunk = order[start:start + group]
        if len(chunk) < group:
            # Top up the final short group from earlier ids, avoiding duplicates
            # inside the composite.
            fill_pool = [i for i in order if i not in chunk]
            need = group - len(chunk)
            if len(fill_pool) >= need:
                picks = rng.choice(len(fill_pool), size=need, replace=False)
                chunk = chunk + [fill_pool[int(p)] for p in picks]
            else:
                # Dataset smaller than the grid: repeats are unavoidable.
                picks = rng.choice(len(order), size=need, replace=True)
                chunk = chunk + [order[int(p)] for p in picks]
        sample_index = len(items_list)
        items_list.append(
            PlanItem("mosaic", tuple(chunk), (spec.rng_seed, epoch, sample_index))
        )
    return EpochPlan(epoch, True, tuple(items_list))
