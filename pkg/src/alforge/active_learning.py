"""Least-confidence active learning: scoring, Top-K querying, pool updates, rounds."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .dataset import Dataset, ImageRecord, NormBox, class_annotation_counts
from .errors import ConfigInvalid, DetectorCoverageGap, SelectionNotInPool

METHOD_AVERAGE = "average"
METHOD_MAX = "max"
METHOD_SUM = "sum"
METHODS = (METHOD_AVERAGE, METHOD_MAX, METHOD_SUM)

UPDATE_MOVE = "move"
UPDATE_COPY = "copy"


@dataclass(frozen=True)
class Detection:
    """One predicted box with its confidence score."""

    image_id: str
    box: NormBox
    score: float

    def __post_init__(self) -> None:
        if not 0 <= self.score <= 1:
            raise ConfigInvalid(f"score {self.score} outside [0, 1]")


def box_uncertainty(detection: Detection) -> float:
    """Least-confidence uncertainty of a single prediction."""
    return 1.0 - detection.score


@dataclass(frozen=True)
class SelectionPolicy:
    method: str = METHOD_MAX
    k: int = 500
    pool_update: str = UPDATE_MOVE
    # Images with zero detections: the average/max formulas are undefined, so
    # the policy assigns a score (default: maximally uncertain). Sum keeps the
    # literal empty-sum value 0.
    empty_image_score_average: float = 1.0
    empty_image_score_max: float = 1.0
    empty_image_score_sum: float = 0.0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigInvalid(f"method must be one of {METHODS}, got {self.method!r}")
        if self.k < 1:
            raise ConfigInvalid("k must be >= 1")
        if self.pool_update not in (UPDATE_MOVE, UPDATE_COPY):
            raise ConfigInvalid(f"pool_update must be move|copy, got {self.pool_update!r}")

    def empty_image_score(self, method: str) -> float:
        return {
            METHOD_AVERAGE: self.empty_image_score_average,
            METHOD_MAX: self.empty_image_score_max,
            METHOD_SUM: self.empty_image_score_sum,
        }[method]


@dataclass(frozen=True)
class UncertaintyReport:
    image_id: str
    box_uncertainties: tuple[float, ...]
    method: str
    value: float

    @property
    def detection_count(self) -> int:
        return len(self.box_uncertainties)


def aggregate(
    detections: Sequence[Detection],
    method: str,
    policy: SelectionPolicy | None = None,
) -> float:
    """Reduce per-box uncertainties to one image-level score."""
    if method not in METHODS:
        raise ConfigInvalid(f"unknown aggregation method {method!r}")
    us = [box_uncertainty(d) for d in detections]
    if not us:
        policy = policy or SelectionPolicy(method=method)
        return policy.empty_image_score(method)
    if method == METHOD_AVERAGE:
        return sum(us) / len(us)
    if method == METHOD_MAX:
        return max(us)
    return sum(us)


def score_images(
    predictions: Mapping[str, Sequence[Detection]],
    method: str,
    policy: SelectionPolicy | None = None,
) -> dict[str, UncertaintyReport]:
    reports = {}
    for image_id, dets in predictions.items():
        reports[image_id] = UncertaintyReport(
            image_id,
            tuple(box_uncertainty(d) for d in dets),
            method,
            aggregate(dets, method, policy),
        )
    return reports


def query_top_k(
    reports: Mapping[str, UncertaintyReport],
    policy: SelectionPolicy,
) -> list[str]:
    """The K highest-uncertainty ids, descending score, ties by ascending id."""
    ranked = sorted(reports.values(), key=lambda r: (-r.value, r.image_id))
    return [r.image_id for r in ranked[: policy.k]]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: tuple[str, ...]  # raw selection, ranked order
    net_new: tuple[str, ...]
    labeled_size: int
    class_counts: tuple[int, ...]


@dataclass(frozen=True)
class PoolState:
    round: int
    labeled: frozenset[str]
    unlabeled: frozenset[str]
    history: tuple[RoundRecord, ...] = ()


def initial_state(labeled_ids: Iterable[str], unlabeled_ids: Iterable[str]) -> PoolState:
    labeled = frozenset(labeled_ids)
    unlabeled = frozenset(unlabeled_ids)
    if labeled & unlabeled:
        raise ConfigInvalid("labeled and unlabeled id sets overlap")
    return PoolState(0, labeled, unlabeled)


def apply_selection(
    state: PoolState,
    selected: Sequence[str],
    policy: SelectionPolicy,
    dataset: Dataset | None = None,
) -> PoolState:
    """Advance the pool one round under the Move or Copy update rule."""
    missing = [i for i in selected if i not in state.unlabeled]
    if missing:
        raise SelectionNotInPool(f"{len(missing)} selected ids not in pool: {missing[:5]}")
    selected_set = set(selected)
    net_new = tuple(i for i in selected if i not in state.labeled)
    labeled = state.labeled | selected_set
    if policy.pool_update == UPDATE_MOVE:
        unlabeled = state.unlabeled - selected_set
    else:
        unlabeled = state.unlabeled
    num_classes = len(dataset.classes) if dataset is not None else 3
    class_counts = (
        class_annotation_counts((dataset.records[i] for i in labeled), num_classes)
        if dataset is not None
        else (0,) * num_classes
    )
    record = RoundRecord(state.round + 1, tuple(selected), net_new, len(labeled), class_counts)
    return PoolState(state.round + 1, labeled, unlabeled, state.history + (record,))


# A detector maps (records to predict on, labeled image count, per-class labeled
# annotation counts) to per-image detection lists.
Detector = Callable[[Sequence[ImageRecord], int, tuple[int, ...]], Mapping[str, Sequence[Detection]]]


@dataclass(frozen=True)
class RoundReport:
    round: int
    labeled_size: int
    unlabeled_size: int
    net_new: int
    class_counts: tuple[int, ...]
    map50: float | None = None
    precision: float | None = None
    recall: float | None = None
    per_class_ap: tuple[float | None, ...] = ()
    duration_s: float = 0.0


def _labeled_stats(state: PoolState, dataset: Dataset) -> tuple[int, tuple[int, ...]]:
    counts = class_annotation_counts(
        (dataset.records[i] for i in state.labeled), len(dataset.classes)
    )
    return len(state.labeled), counts


def _evaluate_round(detector, dataset, eval_records, labeled_size, class_counts):
    from .metrics import MatchConfig, evaluate

    preds = detector(eval_records, labeled_size, class_counts)
    detections = {r.image_id: list(preds.get(r.image_id, ())) for r in eval_records}
    summary = evaluate(detections, eval_records, MatchConfig())
    return summary


def run_rounds(
    state: PoolState,
    detector: Detector,
    policy: SelectionPolicy,
    max_rounds: int,
    dataset: Dataset,
    eval_records: Sequence[ImageRecord] | None = None,
) -> tuple[PoolState, list[RoundReport]]:
    """Iterate score -> select -> apply; returns the final state and round log.

    The log's first entry describes the initial state (round index as given).
    Selected images reveal their ground-truth labels from the dataset; the
    detector is any callable following the Detector protocol.
    """
    reports: list[RoundReport] = []

    def snapshot(st: PoolState, net_new: int, duration: float) -> RoundReport:
        labeled_size, class_counts = _labeled_stats(st, dataset)
        map50 = prec = rec = None
        per_class: tuple[float | None, ...] = ()
        if eval_records is not None:
            summary = _evaluate_round(detector, dataset, eval_records, labeled_size, class_counts)
            map50, prec, rec = summary.map50, summary.precision, summary.recall
            per_class = tuple(summary.per_class_ap.get(c) for c in range(len(dataset.classes)))
        return RoundReport(st.round, labeled_size, len(st.unlabeled), net_new,
                           class_counts, map50, prec, rec, per_class, duration)

    reports.append(snapshot(state, 0, 0.0))
    for _ in range(max_rounds):
        if not state.unlabeled:
            break
        start = time.perf_counter()
        labeled_size, class_counts = _labeled_stats(state, dataset)
        pool_records = [dataset.records[i] for i in sorted(state.unlabeled)]
        predictions = detector(pool_records, labeled_size, class_counts)
        missing = [r.image_id for r in pool_records if r.image_id not in predictions]
        if missing:
            raise DetectorCoverageGap(f"no predictions for {len(missing)} pooled images")
        pool_preds = {r.image_id: predictions[r.image_id] for r in pool_records}
        scored = score_images(pool_preds, policy.method, policy)
        selected = query_top_k(scored, policy)
        state = apply_selection(state, selected, policy, dataset)
        net_new = len(state.history[-1].net_new)
        reports.append(snapshot(state, net_new, time.perf_counter() - start))
    return state, reports
