"""Core dataset types: normalized boxes, YOLO-format label IO, splits and counts.

Directory layout understood by :func:`load_dataset`::

    root/
      classes.txt        one class name per line
      train.txt          one image_id per line
      valid.txt
      pool.txt
      labels/<id>.txt    "class cx cy w h" per box
      images/<id>.<ext>  optional; only needed for pixel-level work
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataError, MalformedLine, OutOfRange, UnknownClass

EPS = 1e-6
COORD_PRECISION = 6

SPLIT_TRAIN = "train"
SPLIT_VALID = "valid"
SPLIT_POOL = "unlabeled-pool"
SPLITS = (SPLIT_TRAIN, SPLIT_VALID, SPLIT_POOL)
_MANIFESTS = {SPLIT_TRAIN: "train.txt", SPLIT_VALID: "valid.txt", SPLIT_POOL: "pool.txt"}

DEFAULT_CLASSES = ("tomato", "green tomato", "tomato flower")


@dataclass(frozen=True)
class NormBox:
    """One annotation in normalized center format."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def validate(self, num_classes: int | None = None, eps: float = EPS) -> "NormBox":
        if self.class_id < 0:
            raise UnknownClass(f"negative class id {self.class_id}")
        if num_classes is not None and self.class_id >= num_classes:
            raise UnknownClass(f"class id {self.class_id} >= {num_classes} classes")
        if not (-eps <= self.cx <= 1 + eps and -eps <= self.cy <= 1 + eps):
            raise OutOfRange(f"center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (eps < self.w <= 1 + eps and eps < self.h <= 1 + eps):
            raise OutOfRange(f"size ({self.w}, {self.h}) outside (0, 1]")
        if (self.cx - self.w / 2 < -eps or self.cx + self.w / 2 > 1 + eps
                or self.cy - self.h / 2 < -eps or self.cy + self.h / 2 > 1 + eps):
            raise OutOfRange("box extent leaves the unit square")
        return self


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    labels: tuple[NormBox, ...]
    source_split: str = SPLIT_TRAIN

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise DataError(f"{self.image_id}: non-positive image dimensions")
        if self.source_split not in SPLITS:
            raise DataError(f"{self.image_id}: unknown split {self.source_split!r}")


@dataclass(frozen=True)
class ClassTable:
    names: tuple[str, ...] = DEFAULT_CLASSES

    def __post_init__(self) -> None:
        if not self.names or len(set(self.names)) != len(self.names):
            raise DataError("class names must be unique and non-empty")
        if any(not n for n in self.names):
            raise DataError("class names must be non-empty strings")

    def __len__(self) -> int:
        return len(self.names)

    def name(self, class_id: int) -> str:
        return self.names[class_id]


@dataclass(frozen=True)
class DatasetSummary:
    """Per-split image counts and per-class annotation counts."""

    image_counts: Mapping[str, int]
    annotation_counts: Mapping[str, tuple[int, ...]]

    def total_annotations(self, split: str) -> int:
        return sum(self.annotation_counts[split])


@dataclass(frozen=True)
class Dataset:
    classes: ClassTable
    records: Mapping[str, ImageRecord]

    def __post_init__(self) -> None:
        for image_id, rec in self.records.items():
            if rec.image_id != image_id:
                raise DataError(f"record key {image_id!r} != record id {rec.image_id!r}")

    def split_ids(self, split: str) -> list[str]:
        return sorted(i for i, r in self.records.items() if r.source_split == split)

    def split_records(self, split: str) -> list[ImageRecord]:
        return [self.records[i] for i in self.split_ids(split)]

    def with_records(self, records: Mapping[str, ImageRecord]) -> "Dataset":
        return replace(self, records=dict(records))


def parse_label_file(text: str, num_classes: int | None = None) -> list[NormBox]:
    """Parse YOLO label lines ("class cx cy w h") into validated boxes."""
    boxes: list[NormBox] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise MalformedLine(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise MalformedLine(f"line {lineno}: non-numeric field ({exc})") from exc
        boxes.append(NormBox(class_id, cx, cy, w, h).validate(num_classes))
    return boxes


def serialize_label_file(labels: Iterable[NormBox]) -> str:
    return "".join(
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n" for b in labels
    )


def summarize(records: Iterable[ImageRecord], num_classes: int = 3) -> DatasetSummary:
    image_counts = {s: 0 for s in SPLITS}
    ann_counts = {s: [0] * num_classes for s in SPLITS}
    for rec in records:
        image_counts[rec.source_split] += 1
        for box in rec.labels:
            ann_counts[rec.source_split][box.class_id] += 1
    return DatasetSummary(
        image_counts=image_counts,
        annotation_counts={s: tuple(c) for s, c in ann_counts.items()},
    )


def class_annotation_counts(records: Iterable[ImageRecord], num_classes: int) -> tuple[int, ...]:
    counts = [0] * num_classes
    for rec in records:
        for box in rec.labels:
            counts[box.class_id] += 1
    return tuple(counts)


def _image_size(images_dir: Path, image_id: str, default: tuple[int, int]) -> tuple[int, int]:
    if images_dir.is_dir():
        for path in sorted(images_dir.glob(f"{image_id}.*")):
            try:
                from PIL import Image

                with Image.open(path) as im:
                    return im.size
            except Exception:
                continue
    return default


def load_class_table(path: Path) -> ClassTable:
    names = tuple(line.strip() for line in path.read_text().splitlines() if line.strip())
    return ClassTable(names)


def load_dataset(root: str | Path, default_size: tuple[int, int] = (640, 640)) -> Dataset:
    """Load a dataset directory. Source files are never modified."""
    root = Path(root)
    classes_path = root / "classes.txt"
    classes = load_class_table(classes_path) if classes_path.exists() else ClassTable()
    records: dict[str, ImageRecord] = {}
    for split, manifest in _MANIFESTS.items():
        manifest_path = root / manifest
        if not manifest_path.exists():
            continue
        for image_id in (l.strip() for l in manifest_path.read_text().splitlines()):
            if not image_id:
                continue
            if image_id in records:
                raise DataError(f"duplicate image id {image_id!r} across manifests")
            label_path = root / "labels" / f"{image_id}.txt"
            labels = (
                tuple(parse_label_file(label_path.read_text(), len(classes)))
                if label_path.exists()
                else ()
            )
            width, height = _image_size(root / "images", image_id, default_size)
            records[image_id] = ImageRecord(image_id, width, height, labels, split)
    return Dataset(classes=classes, records=records)


def save_dataset(dataset: Dataset, root: str | Path) -> None:
    """Write classes, manifests and label files in the standard layout."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "classes.txt").write_text("".join(f"{n}\n" for n in dataset.classes.names))
    labels_dir = root / "labels"
    labels_dir.mkdir(exist_ok=True)
    for split, manifest in _MANIFESTS.items():
        ids = dataset.split_ids(split)
        (root / manifest).write_text("".join(f"{i}\n" for i in ids))
        for image_id in ids:
            rec = dataset.records[image_id]
            (labels_dir / f"{image_id}.txt").write_text(serialize_label_file(rec.labels))
