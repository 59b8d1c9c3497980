"""Object-scale statistics: area ratios, small-object classification, filtering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset, ImageRecord, NormBox
from .errors import ConfigInvalid, EmptyBins

SCALE_EXTREME_SMALL = "extreme_small"
SCALE_SMALL = "small"
SCALE_MEDIUM_LARGE = "medium_large"

# COCO-referenced small-object cutoff: 0.58% of image area.
DEFAULT_SMALL_THRESHOLD = 0.0058
DEFAULT_EXTREME_SMALL_THRESHOLD = 0.001


@dataclass(frozen=True)
class ScalePolicy:
    small_threshold: float = DEFAULT_SMALL_THRESHOLD
    extreme_small_threshold: float = DEFAULT_EXTREME_SMALL_THRESHOLD
    on_empty_image: str = "keep"

    def __post_init__(self) -> None:
        if not 0 <= self.extreme_small_threshold < self.small_threshold < 1:
            raise ConfigInvalid(
                "thresholds must satisfy 0 <= extreme_small < small < 1, got "
                f"({self.extreme_small_threshold}, {self.small_threshold})"
            )
        if self.on_empty_image not in ("keep", "drop"):
            raise ConfigInvalid(f"on_empty_image must be keep|drop, got {self.on_empty_image!r}")


@dataclass(frozen=True)
class ScaleRecord:
    image_id: str
    box_index: int
    class_id: int
    area_ratio: float
    scale_class: str


@dataclass(frozen=True)
class RemovalReport:
    policy: ScalePolicy
    removed_per_class: tuple[int, ...]
    images_dropped: tuple[str, ...]

    @property
    def removed_total(self) -> int:
        return sum(self.removed_per_class)


def area_ratio(box: NormBox) -> float:
    """Fraction of image area covered by the box (dimensionless, resolution-free)."""
    return box.w * box.h


def classify_scale(box: NormBox, policy: ScalePolicy = ScalePolicy()) -> str:
    # Strict less-than at both thresholds; a ratio exactly at a threshold
    # falls in the larger class.
    ratio = area_ratio(box)
    if ratio < policy.extreme_small_threshold:
        return SCALE_EXTREME_SMALL
    if ratio < policy.small_threshold:
        return SCALE_SMALL
    return SCALE_MEDIUM_LARGE


def scale_records(records: Iterable[ImageRecord], policy: ScalePolicy = ScalePolicy()) -> list[ScaleRecord]:
    out = []
    for rec in records:
        for idx, box in enumerate(rec.labels):
            out.append(
                ScaleRecord(rec.image_id, idx, box.class_id, area_ratio(box),
                            classify_scale(box, policy))
            )
    return out


def filter_dataset(dataset: Dataset, policy: ScalePolicy = ScalePolicy()) -> tuple[Dataset, RemovalReport]:
    """Drop extreme-small annotations; surviving annotations are kept verbatim."""
    removed = [0] * len(dataset.classes)
    dropped_images: list[str] = []
    new_records: dict[str, ImageRecord] = {}
    for image_id, rec in dataset.records.items():
        kept = tuple(
            b for b in rec.labels if classify_scale(b, policy) != SCALE_EXTREME_SMALL
        )
        for b in rec.labels:
            if classify_scale(b, policy) == SCALE_EXTREME_SMALL:
                removed[b.class_id] += 1
        if not kept and rec.labels and policy.on_empty_image == "drop":
            dropped_images.append(image_id)
            continue
        new_records[image_id] = (
            rec if kept == rec.labels
            else ImageRecord(rec.image_id, rec.width, rec.height, kept, rec.source_split)
        )
    report = RemovalReport(policy, tuple(removed), tuple(sorted(dropped_images)))
    return dataset.with_records(new_records), report


@dataclass(frozen=True)
class ScaleHistogram:
    bin_edges: tuple[float, ...]
    counts_total: tuple[int, ...]
    counts_per_class: tuple[tuple[int, ...], ...]  # [class][bin]


def scale_histogram(records: Iterable[ImageRecord], bin_edges: Sequence[float],
                    num_classes: int = 3) -> ScaleHistogram:
    """Half-open bins [e_k, e_{k+1}); ratios outside the edge range are dropped."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges.size < 2:
        raise EmptyBins("need at least 2 bin edges")
    if np.any(np.diff(edges) <= 0):
        raise EmptyBins("bin edges must be strictly increasing")
    n_bins = edges.size - 1
    total = np.zeros(n_bins, dtype=int)
    per_class = np.zeros((num_classes, n_bins), dtype=int)
    for rec in records:
        for box in rec.labels:
            ratio = area_ratio(box)
            k = int(np.searchsorted(edges, ratio, side="right")) - 1
            if k == n_bins and ratio == edges[-1]:
                k = n_bins - 1  # top edge closes the last bin
            if 0 <= k < n_bins:
                total[k] += 1
                per_class[box.class_id, k] += 1
    return ScaleHistogram(
        tuple(edges.tolist()),
        tuple(total.tolist()),
        tuple(tuple(row) for row in per_class.tolist()),
    )
