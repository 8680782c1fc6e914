"""Gradient-flow diagnostics over the backward pass.

The quantity of interest is the ratio

    ||dJ/d rep(keyword leaf)|| / ||dJ/d rep(root)||

for one tree: how much of the error signal injected at the root survives
the walk down to the leaf that actually determines the class. A ratio near
zero means the keyword's embedding barely moves no matter how wrong the
prediction was; a ratio above one means the signal grew on the way down.
A companion ratio uses the keyword leaf's mem-part error in the numerator
(identically zero for the plain model, informative for the gated one).

Ratios are undefined (nan) when the root error is exactly zero; summaries
exclude those records but report how many there were.

Collection is a pure observer: it reads finished backward traces via the
trainer's sink hook and never touches the model, so training with or
without collection produces identical parameters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .model import ForwardTrace
from .numerics import l2_norm
from .treebank import LabeledExample

VANISHED_THRESHOLD = 1e-6
EXPLODING_THRESHOLD = 1.0


def _require_errors(trace: ForwardTrace) -> int:
    if trace.err_rep is None:
        raise ValueError("trace has no error vectors; run backward first")
    keyword = trace.schedule.keyword_node
    if keyword < 0:
        raise ValueError("tree has no unique keyword leaf")
    return keyword


def gradient_ratio(trace: ForwardTrace) -> float:
    """Keyword-leaf rep error norm over root rep error norm; nan if the
    root error vanishes exactly."""
    keyword = _require_errors(trace)
    root_norm = l2_norm(trace.err_rep[trace.schedule.root])
    if root_norm == 0.0:
        return float("nan")
    return l2_norm(trace.err_rep[keyword]) / root_norm


def mem_gradient_ratio(trace: ForwardTrace) -> float:
    """Keyword-leaf mem error norm over root rep error norm (the root's own
    mem error is identically zero, so the rep norm anchors both ratios)."""
    keyword = _require_errors(trace)
    root_norm = l2_norm(trace.err_rep[trace.schedule.root])
    if root_norm == 0.0:
        return float("nan")
    return l2_norm(trace.err_mem[keyword]) / root_norm


@dataclass(frozen=True)
class RatioRecord:
    epoch: int
    tree_id: int
    keyword_depth: int
    ratio: float
    mem_ratio: float


class RatioCollector:
    """Sink for trainer hooks; one record per completed backward pass."""

    def __init__(self, examples: Sequence[LabeledExample]):
        self._depths = [ex.keyword_depth for ex in examples]
        self.records: list[RatioRecord] = []

    def sink(self, epoch: int, tree_id: int, trace: ForwardTrace) -> None:
        self.records.append(
            RatioRecord(
                epoch=epoch,
                tree_id=tree_id,
                keyword_depth=self._depths[tree_id],
                ratio=gradient_ratio(trace),
                mem_ratio=mem_gradient_ratio(trace),
            )
        )


@dataclass(frozen=True)
class SummaryCell:
    epoch: int
    depth: int
    count: int
    q1: float
    median: float
    q3: float
    frac_exploding: float
    frac_vanished: float


@dataclass
class RatioSummary:
    cells: list[SummaryCell]
    undefined: int  # records dropped for nan ratios

    def cell(self, epoch: int, depth: int) -> Optional[SummaryCell]:
        for c in self.cells:
            if c.epoch == epoch and c.depth == depth:
                return c
        return None


def summarize(records: Sequence[RatioRecord]) -> RatioSummary:
    """Quartiles and threshold fractions per (epoch, keyword depth) cell.

    Quartiles interpolate linearly between order statistics. Exploding
    means ratio > 1, vanished means ratio < 1e-6; fractions are over the
    cell's defined (non-nan) records only.
    """
    groups: dict[tuple[int, int], list[float]] = {}
    undefined = 0
    for rec in records:
        if np.isnan(rec.ratio):
            undefined += 1
            continue
        groups.setdefault((rec.epoch, rec.keyword_depth), []).append(rec.ratio)
    cells = []
    for (epoch, depth) in sorted(groups):
        vals = np.asarray(groups[(epoch, depth)])
        q1, median, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
        cells.append(
            SummaryCell(
                epoch=epoch,
                depth=depth,
                count=vals.size,
                q1=float(q1),
                median=float(median),
                q3=float(q3),
                frac_exploding=float(np.mean(vals > EXPLODING_THRESHOLD)),
                frac_vanished=float(np.mean(vals < VANISHED_THRESHOLD)),
            )
        )
    return RatioSummary(cells=cells, undefined=undefined)


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

_RECORD_FIELDS = ["epoch", "tree_id", "keyword_depth", "ratio", "mem_ratio"]
_SUMMARY_FIELDS = [
    "epoch", "depth", "count", "q1", "median", "q3", "frac_exploding", "frac_vanished",
]


def write_ratio_records(records: Sequence[RatioRecord], path: Union[str, Path]) -> Path:
    """One row per (epoch, tree) in sorted order; nan ratios kept as 'nan'."""
    return append_ratio_records(records, path, header=True)


def append_ratio_records(records: Sequence[RatioRecord], path: Union[str, Path],
                         header: bool = False) -> Path:
    """Append rows in (epoch, tree_id) order; header=True starts the file over.

    Flushing one epoch's records at a time, in epoch order, yields a file
    byte-identical to a single write_ratio_records call with everything.
    """
    path = Path(path)
    ordered = sorted(records, key=lambda r: (r.epoch, r.tree_id))
    with open(path, "w" if header else "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(_RECORD_FIELDS)
        for rec in ordered:
            writer.writerow(
                [rec.epoch, rec.tree_id, rec.keyword_depth,
                 repr(float(rec.ratio)), repr(float(rec.mem_ratio))]
            )
    return path


def read_ratio_records(path: Union[str, Path]) -> list[RatioRecord]:
    path = Path(path)
    out: list[RatioRecord] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _RECORD_FIELDS:
            raise ValueError(f"{path}: header {reader.fieldnames}, expected {_RECORD_FIELDS}")
        for row in reader:
            try:
                out.append(
                    RatioRecord(
                        epoch=int(row["epoch"]),
                        tree_id=int(row["tree_id"]),
                        keyword_depth=int(row["keyword_depth"]),
                        ratio=float(row["ratio"]),
                        mem_ratio=float(row["mem_ratio"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path} line {reader.line_num}: bad row ({exc})") from exc
    return out


def write_ratio_summary(summary: RatioSummary, path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_SUMMARY_FIELDS)
        for c in summary.cells:
            writer.writerow(
                [c.epoch, c.depth, c.count, repr(c.q1), repr(c.median), repr(c.q3),
                 repr(c.frac_exploding), repr(c.frac_vanished)]
            )
    return path


def read_ratio_summary(path: Union[str, Path]) -> list[SummaryCell]:
    path = Path(path)
    out: list[SummaryCell] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _SUMMARY_FIELDS:
            raise ValueError(f"{path}: header {reader.fieldnames}, expected {_SUMMARY_FIELDS}")
        for row in reader:
            try:
                out.append(
                    SummaryCell(
                        epoch=int(row["epoch"]),
                        depth=int(row["depth"]),
                        count=int(row["count"]),
                        q1=float(row["q1"]),
                        median=float(row["median"]),
                        q3=float(row["q3"]),
                        frac_exploding=float(row["frac_exploding"]),
                        frac_vanished=float(row["frac_vanished"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path} line {reader.line_num}: bad row ({exc})") from exc
    return out
