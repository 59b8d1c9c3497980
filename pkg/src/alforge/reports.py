"""Round-log CSV emission and appendix-shaped summary tables.

The machine contract is CSV; the aligned-text variants are for reading.
Round log columns: round,labeled,net_new,count_c0,count_c1,count_c2[,mAP50,P,R].
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .active_learning import RoundReport

MAX_ROUND_COLUMNS = 8


def round_log_header(num_classes: int, with_metrics: bool) -> list[str]:
    cols = ["round", "labeled", "net_new"] + [f"count_c{i}" for i in range(num_classes)]
    if with_metrics:
        cols += ["mAP50", "P", "R"]
    return cols


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def write_round_log(path: str | Path, reports: Sequence[RoundReport],
                    num_classes: int = 3) -> None:
    with_metrics = any(r.map50 is not None for r in reports)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(round_log_header(num_classes, with_metrics))
        for r in reports:
            row = [r.round, r.labeled_size, r.net_new, *r.class_counts]
            if with_metrics:
                row += [_fmt(r.map50), _fmt(r.precision), _fmt(r.recall)]
            writer.writerow(row)


def write_round_detail(path: str | Path, reports: Sequence[RoundReport],
                       num_classes: int = 3) -> None:
    """Extended log with per-class AP, used by the stage summary table."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "labeled", *[f"count_c{i}" for i in range(num_classes)],
             "mAP50", *[f"ap_c{i}" for i in range(num_classes)]])
        for r in reports:
            aps = list(r.per_class_ap) + [None] * (num_classes - len(r.per_class_ap))
            writer.writerow([r.round, r.labeled_size, *r.class_counts, _fmt(r.map50),
                             *[_fmt(a) for a in aps]])


def read_round_log(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _grid_csv(rows: Sequence[tuple[str, str, Sequence[str]]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    header = ["Method", "Strategy"] + [f"Round{i}" for i in range(1, MAX_ROUND_COLUMNS + 1)]
    writer.writerow(header)
    for method, strategy, values in rows:
        padded = list(values)[:MAX_ROUND_COLUMNS]
        padded += [""] * (MAX_ROUND_COLUMNS - len(padded))
        writer.writerow([method, strategy, *padded])
    return out.getvalue()


def _grid_text(title: str, rows: Sequence[tuple[str, str, Sequence[str]]]) -> str:
    header = ["Method", "Strategy"] + [f"Round{i}" for i in range(1, MAX_ROUND_COLUMNS + 1)]
    table = [header]
    for method, strategy, values in rows:
        padded = list(values)[:MAX_ROUND_COLUMNS]
        padded += [""] * (MAX_ROUND_COLUMNS - len(padded))
        table.append([method, strategy, *padded])
    widths = [max(len(str(row[i])) for row in table) for i in range(len(header))]
    lines = [title]
    for row in table:
        lines.append("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def growth_grid(logs: Mapping[tuple[str, str], Sequence[Mapping[str, str]]]) -> tuple[str, str]:
    """Method x strategy grid of labeled-set sizes per round (CSV, text)."""
    rows = [
        (method.capitalize(), strategy.capitalize(), [row["labeled"] for row in log])
        for (method, strategy), log in sorted(logs.items())
    ]
    return _grid_csv(rows), _grid_text("Dataset Increase at Each Stage", rows)


def score_grid(logs: Mapping[tuple[str, str], Sequence[Mapping[str, str]]]) -> tuple[str, str]:
    """Method x strategy grid of mAP50 per round (CSV, text)."""
    rows = [
        (method.capitalize(), strategy.capitalize(),
         [row.get("mAP50", "") for row in log])
        for (method, strategy), log in sorted(logs.items())
    ]
    return _grid_csv(rows), _grid_text("Training Score Results at Each Stage", rows)


@dataclass(frozen=True)
class StageRow:
    label: str  # e.g. "Initial (230)"
    map50: str
    per_class: tuple[tuple[str, str], ...]  # (mAP, label count) per class


def stage_table(rows: Sequence[StageRow], class_names: Sequence[str]) -> tuple[str, str]:
    """Initial / best / full stage summary: per-class mAP and label counts."""
    out = io.StringIO()
    writer = csv.writer(out)
    header = ["Stage", "mAP"] + [f"{n} (mAP/labels)" for n in class_names]
    writer.writerow(header)
    text_rows = [header]
    for row in rows:
        cells = [row.label, row.map50] + [f"{m} / {n}" for m, n in row.per_class]
        writer.writerow(cells)
        text_rows.append(cells)
    widths = [max(len(str(r[i])) for r in text_rows) for i in range(len(header))]
    lines = ["Number of Categories and Scores"]
    for r in text_rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip())
    return out.getvalue(), "\n".join(lines) + "\n"


def stage_rows_from_detail(detail: Sequence[Mapping[str, str]],
                           num_classes: int = 3) -> list[StageRow]:
    """Initial, best (by mAP), full rows from an extended round-detail log."""
    if not detail:
        return []

    def to_row(entry: Mapping[str, str], label: str) -> StageRow:
        per_class = tuple(
            (entry.get(f"ap_c{i}", "") or "-", entry.get(f"count_c{i}", ""))
            for i in range(num_classes)
        )
        return StageRow(f"{label} ({entry['labeled']})", entry.get("mAP50", "") or "-", per_class)

    scored = [e for e in detail if e.get("mAP50")]
    best = max(scored, key=lambda e: float(e["mAP50"])) if scored else detail[-1]
    return [
        to_row(detail[0], "Initial"),
        to_row(best, "Active Learning"),
        to_row(detail[-1], "Full"),
    ]
