"""Prediction providers: external file adapter and a synthetic noise detector.

The synthetic detector stands in for a trained model so the full selection
loop runs at desk scale: per-class recall and confidence rise with the amount
of labeled data via a saturating curve, small boxes receive lower confidence,
and localization noise plus Poisson false positives are optional.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .active_learning import Detection
from .dataset import ImageRecord, NormBox
from .errors import ConfigInvalid, MalformedPredictionLine, MissingImage
from .scale import area_ratio


def parse_prediction_file(text: str, image_id: str, num_classes: int | None = None) -> list[Detection]:
    """Parse "class cx cy w h score" lines."""
    out: list[Detection] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise MalformedPredictionLine(
                f"{image_id} line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h, score = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise MalformedPredictionLine(f"{image_id} line {lineno}: {exc}") from exc
        if not 0 <= score <= 1:
            raise MalformedPredictionLine(
                f"{image_id} line {lineno}: score {score} outside [0, 1]")
        box = NormBox(class_id, cx, cy, w, h).validate(num_classes)
        out.append(Detection(image_id, box, score))
    return out


def serialize_predictions(detections: Iterable[Detection]) -> str:
    return "".join(
        f"{d.box.class_id} {d.box.cx:.6f} {d.box.cy:.6f} {d.box.w:.6f} {d.box.h:.6f} {d.score:.6f}\n"
        for d in detections
    )


def load_external_predictions(
    directory: str | Path,
    expected_ids: Sequence[str],
    num_classes: int | None = None,
    strict: bool = False,
) -> dict[str, list[Detection]]:
    """Load preds/<image_id>.txt files; missing files mean "no detections"."""
    directory = Path(directory)
    predictions: dict[str, list[Detection]] = {}
    for image_id in expected_ids:
        path = directory / f"{image_id}.txt"
        if not path.exists():
            if strict:
                raise MissingImage(f"no prediction file for {image_id!r} in {directory}")
            warnings.warn(f"no prediction file for {image_id!r}; assuming no detections")
            predictions[image_id] = []
            continue
        predictions[image_id] = parse_prediction_file(path.read_text(), image_id, num_classes)
    return predictions


def save_predictions(directory: str | Path, predictions: Mapping[str, Sequence[Detection]]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for image_id, dets in predictions.items():
        (directory / f"{image_id}.txt").write_text(serialize_predictions(dets))


class ExternalDetector:
    """Detector backed by a prediction directory per round: <root>/round<t>/."""

    def __init__(self, root: str | Path, num_classes: int | None = None, strict: bool = False):
        self.root = Path(root)
        self.num_classes = num_classes
        self.strict = strict
        self._round = 0

    def __call__(self, records, labeled_size, class_counts):
        round_dir = self.root / f"round{self._round}"
        if not round_dir.is_dir():
            round_dir = self.root
        preds = load_external_predictions(
            round_dir, [r.image_id for r in records], self.num_classes, self.strict)
        return preds

    def advance_round(self) -> None:
        self._round += 1


def learning_curve(labeled_size: int, v0: float, v_max: float, tau: float) -> float:
    """Saturating monotone curve v(n) = v_max - (v_max - v0) * exp(-n / tau)."""
    if labeled_size < 0:
        raise ConfigInvalid("labeled_size must be >= 0")
    if tau <= 0:
        return v_max
    return v_max - (v_max - v0) * math.exp(-labeled_size / tau)


@dataclass(frozen=True)
class SyntheticDetectorConfig:
    # Per-class detection probability at zero / unlimited labeled data.
    recall_base: tuple[float, ...] = (0.3, 0.3, 0.3)
    recall_max: tuple[float, ...] = (0.95, 0.95, 0.95)
    recall_tau: float = 1000.0
    # Confidence: clipped Gaussian whose mean follows the learning curve.
    score_mean_base: float = 0.4
    score_mean_max: float = 0.9
    score_tau: float = 1000.0
    score_std: float = 0.05
    # Boxes below small_ref area ratio get their mean reduced linearly, down to
    # (mean - small_penalty) at area ratio 0.
    small_penalty: float = 0.0
    small_ref: float = 0.0058
    # Localization jitter stddev as a fraction of box size.
    loc_jitter: float = 0.0
    # Expected false positives per image (Poisson) and their score model.
    fp_rate: float = 0.0
    fp_score_mean: float = 0.3
    fp_score_std: float = 0.1
    # When True, learning curves are driven per class by labeled annotation
    # counts rather than the labeled image count.
    per_class_counts: bool = True
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if len(self.recall_base) != len(self.recall_max):
            raise ConfigInvalid("recall_base and recall_max must have equal length")
        for v in (*self.recall_base, *self.recall_max):
            if not 0 <= v <= 1:
                raise ConfigInvalid("recall probabilities must lie in [0, 1]")
        if self.score_std < 0 or self.fp_score_std < 0 or self.loc_jitter < 0:
            raise ConfigInvalid("stddevs must be >= 0")
        if self.fp_rate < 0:
            raise ConfigInvalid("fp_rate must be >= 0")

    @classmethod
    def from_file(cls, path: str | Path) -> "SyntheticDetectorConfig":
        data = json.loads(Path(path).read_text())
        for key in ("recall_base", "recall_max"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigInvalid(f"bad synthetic detector config: {exc}") from exc

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


def _image_rng(seed: int, image_id: str, driver: int) -> np.random.Generator:
    digest = hashlib.blake2s(image_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "big"), driver])


class SyntheticDetector:
    """Oracle-noise detector: perturbs ground truth per the config."""

    def __init__(self, config: SyntheticDetectorConfig):
        self.config = config

    def _effective(self, class_id: int, driver: int) -> tuple[float, float]:
        cfg = self.config
        r = learning_curve(driver, cfg.recall_base[class_id], cfg.recall_max[class_id],
                           cfg.recall_tau)
        mean = learning_curve(driver, cfg.score_mean_base, cfg.score_mean_max, cfg.score_tau)
        return r, mean

    def predict_image(self, record: ImageRecord, labeled_size: int,
                      class_counts: tuple[int, ...] | None = None) -> list[Detection]:
        cfg = self.config
        driver_key = labeled_size if not cfg.per_class_counts or class_counts is None else sum(class_counts)
        rng = _image_rng(cfg.rng_seed, record.image_id, driver_key)
        detections: list[Detection] = []
        for box in record.labels:
            driver = (
                class_counts[box.class_id]
                if cfg.per_class_counts and class_counts is not None
                else labeled_size
            )
            recall, mean = self._effective(box.class_id, driver)
            if rng.random() >= recall:
                continue
            ratio = area_ratio(box)
            if cfg.small_penalty > 0 and ratio < cfg.small_ref:
                mean = mean - cfg.small_penalty * (1.0 - ratio / cfg.small_ref)
            score = float(np.clip(rng.normal(mean, cfg.score_std) if cfg.score_std > 0 else mean,
                                  0.0, 1.0))
            if cfg.loc_jitter > 0:
                cx = box.cx + rng.normal(0, cfg.loc_jitter * box.w)
                cy = box.cy + rng.normal(0, cfg.loc_jitter * box.h)
                w = box.w * float(np.clip(1 + rng.normal(0, cfg.loc_jitter), 0.2, 2.0))
                h = box.h * float(np.clip(1 + rng.normal(0, cfg.loc_jitter), 0.2, 2.0))
                cx = float(np.clip(cx, w / 2, 1 - w / 2)) if w < 1 else 0.5
                cy = float(np.clip(cy, h / 2, 1 - h / 2)) if h < 1 else 0.5
                w, h = min(w, 1.0), min(h, 1.0)
                pred_box = NormBox(box.class_id, cx, cy, w, h)
            else:
                pred_box = box
            detections.append(Detection(record.image_id, pred_box, score))
        if cfg.fp_rate > 0:
            n_fp = int(rng.poisson(cfg.fp_rate))
            n_classes = len(cfg.recall_base)
            for _ in range(n_fp):
                w = float(rng.uniform(0.02, 0.15))
                h = float(rng.uniform(0.02, 0.15))
                cx = float(rng.uniform(w / 2, 1 - w / 2))
                cy = float(rng.uniform(h / 2, 1 - h / 2))
                score = float(np.clip(rng.normal(cfg.fp_score_mean, cfg.fp_score_std), 0.0, 1.0))
                class_id = int(rng.integers(0, n_classes))
                detections.append(Detection(record.image_id, NormBox(class_id, cx, cy, w, h), score))
        return detections

    def __call__(self, records: Sequence[ImageRecord], labeled_size: int,
                 class_counts: tuple[int, ...] = ()) -> dict[str, list[Detection]]:
        counts = class_counts if class_counts else None
        return {
            r.image_id: self.predict_image(r, labeled_size, counts) for r in records
        }


def noiseless_config(num_classes: int = 3, seed: int = 0) -> SyntheticDetectorConfig:
    """All noise disabled: predictions exactly equal ground truth with s = 1."""
    return SyntheticDetectorConfig(
        recall_base=(1.0,) * num_classes,
        recall_max=(1.0,) * num_classes,
        score_mean_base=1.0,
        score_mean_max=1.0,
        score_std=0.0,
        small_penalty=0.0,
        loc_jitter=0.0,
        fp_rate=0.0,
        rng_seed=seed,
    )
