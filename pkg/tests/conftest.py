import numpy as np
import pytest

from alforge.dataset import ClassTable, Dataset, ImageRecord, NormBox


def random_box(rng, class_id=None, num_classes=3, min_ratio=5e-5, max_ratio=0.3):
    """A valid normalized box with area ratio drawn log-uniformly."""
    if class_id is None:
        class_id = int(rng.integers(0, num_classes))
    ratio = float(np.exp(rng.uniform(np.log(min_ratio), np.log(max_ratio))))
    aspect = float(np.exp(rng.uniform(-0.7, 0.7)))
    w = min(np.sqrt(ratio * aspect), 1.0)
    h = min(ratio / w, 1.0)
    cx = float(rng.uniform(w / 2, 1 - w / 2)) if w < 1 else 0.5
    cy = float(rng.uniform(h / 2, 1 - h / 2)) if h < 1 else 0.5
    return NormBox(class_id, cx, cy, float(w), float(h))


def make_records(n_images, ann_counts, split, rng, prefix, size=(640, 640)):
    """n_images records carrying exactly ann_counts[c] boxes of each class."""
    boxes_per_image = [[] for _ in range(n_images)]
    slots = []
    for class_id, count in enumerate(ann_counts):
        slots.extend([class_id] * count)
    for i, class_id in enumerate(slots):
        boxes_per_image[i % n_images].append(random_box(rng, class_id))
    records = {}
    for i in range(n_images):
        image_id = f"{prefix}{i:05d}"
        records[image_id] = ImageRecord(
            image_id, size[0], size[1], tuple(boxes_per_image[i]), split)
    return records


def paper_surrogate(seed=0):
    """Desk-scale stand-in matching the published per-split counts."""
    rng = np.random.default_rng(seed)
    records = {}
    records.update(make_records(2186, (7424, 2607, 1091), "train", rng, "tr"))
    records.update(make_records(548, (1872, 620, 278), "valid", rng, "va"))
    return Dataset(ClassTable(), records)


def al_surrogate(seed=0, n_labeled=230, n_pool=1956, n_valid=120,
                 pool_ann=(3000, 1100, 450), labeled_ann=(742, 291, 110),
                 valid_ann=(420, 140, 60)):
    """Initial labeled set + unlabeled pool + validation split for loop tests."""
    rng = np.random.default_rng(seed)
    records = {}
    records.update(make_records(n_labeled, labeled_ann, "train", rng, "lab"))
    records.update(make_records(n_pool, pool_ann, "unlabeled-pool", rng, "pool"))
    records.update(make_records(n_valid, valid_ann, "valid", rng, "val"))
    return Dataset(ClassTable(), records)


@pytest.fixture(scope="session")
def paper_dataset():
    return paper_surrogate(seed=7)


@pytest.fixture(scope="session")
def al_dataset():
    return al_surrogate(seed=11)
