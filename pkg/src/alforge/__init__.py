"""alforge: detector-agnostic active-learning dataset engine for object detection.

Analyzes datasets by object scale, generates mosaic-augmented samples under a
dynamic schedule, runs uncertainty-driven annotation-selection rounds against a
pluggable detector, and evaluates detections with P/R/mAP metrics.
"""

__version__ = "0.1.0"

from .active_learning import (
    Detection,
    PoolState,
    SelectionPolicy,
    UncertaintyReport,
    aggregate,
    apply_selection,
    box_uncertainty,
    initial_state,
    query_top_k,
    run_rounds,
    score_images,
)
from .dataset import (
    ClassTable,
    Dataset,
    DatasetSummary,
    ImageRecord,
    NormBox,
    load_dataset,
    parse_label_file,
    save_dataset,
    serialize_label_file,
    summarize,
)
from .detectors import (
    SyntheticDetector,
    SyntheticDetectorConfig,
    learning_curve,
    load_external_predictions,
    noiseless_config,
)
from .metrics import EvalSummary, MatchConfig, average_precision, evaluate, iou
from .mosaic import (
    MosaicSample,
    MosaicSpec,
    ScheduleSpec,
    build_epoch_plan,
    compose_mosaic,
    cutoff_for_usage_ratio,
    inverse_map_label,
    mosaic_schedule,
)
from .scale import (
    ScalePolicy,
    area_ratio,
    classify_scale,
    filter_dataset,
    scale_histogram,
)
