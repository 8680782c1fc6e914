"""Result aggregation: run summaries, accuracy curves, and ratio figures.

A training invocation leaves behind one ``summary.json`` per model/dataset
cell (several seeds, one dataset). This module turns collections of those
summaries into accuracy-vs-index tables and figures, and turns ratio CSVs
into per-epoch depth profiles and fixed-depth epoch traces.

Figures are static SVG. Rendering is pinned to the Agg backend with a fixed
hash salt and no creation date, so rerunning a report produces byte-identical
files; each figure carries a trailing comment naming its input files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .diagnostics import RatioSummary, read_ratio_records, read_ratio_summary, summarize
from .model import check_kind
from .trainer import EpochRecord

# Written into every SVG so identical inputs yield identical bytes.
_SVG_HASHSALT = "treegrad"

_CHANCE_ACCURACY = 0.1  # ten balanced classes


def _pyplot():
    # imported on first plot call so table-only use stays light
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return matplotlib, plt


# ---------------------------------------------------------------------------
# Run summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    """Outcome of `runs` training runs (one per seed) on a single dataset."""

    model: str
    experiment: int
    index: int
    dataset_seed: int
    sizes: tuple
    config: dict
    run_seeds: tuple
    best_epochs: tuple
    dev_accuracies: tuple
    test_accuracies: tuple

    def __post_init__(self):
        check_kind(self.model)
        if self.experiment not in (1, 2):
            raise ValueError(f"experiment must be 1 or 2, got {self.experiment}")
        n = len(self.run_seeds)
        if n == 0:
            raise ValueError("summary needs at least one run")
        for name in ("best_epochs", "dev_accuracies", "test_accuracies"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length != number of runs ({n})")

    @property
    def runs(self) -> int:
        return len(self.run_seeds)

    @property
    def best_run(self) -> int:
        """Run index with the highest dev accuracy; ties go to the earliest."""
        return int(np.argmax(self.dev_accuracies))

    @property
    def max_test_accuracy(self) -> float:
        return float(max(self.test_accuracies))

    def test_quartiles(self) -> tuple:
        q1, median, q3 = np.percentile(np.asarray(self.test_accuracies),
                                       [25.0, 50.0, 75.0])
        return float(q1), float(median), float(q3)


def write_run_summary(summary: RunSummary, path: Union[str, Path]) -> Path:
    """Serialize to JSON with derived fields included for human readers."""
    q1, median, q3 = summary.test_quartiles()
    best = summary.best_run
    payload = {
        "model": summary.model,
        "dataset": {
            "experiment": summary.experiment,
            "index": summary.index,
            "seed": summary.dataset_seed,
            "sizes": list(summary.sizes),
        },
        "config": summary.config,
        "runs": [
            {
                "run": k,
                "seed": int(summary.run_seeds[k]),
                "best_epoch": int(summary.best_epochs[k]),
                "dev_accuracy": float(summary.dev_accuracies[k]),
                "test_accuracy": float(summary.test_accuracies[k]),
            }
            for k in range(summary.runs)
        ],
        "best": {
            "run": best,
            "dev_accuracy": float(summary.dev_accuracies[best]),
            "test_accuracy": float(summary.test_accuracies[best]),
        },
        "max_test_accuracy": summary.max_test_accuracy,
        "test_quartiles": {"q1": q1, "median": median, "q3": q3},
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_run_summary(path: Union[str, Path]) -> RunSummary:
    """Read a summary back; derived fields in the file are ignored."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    try:
        ds = payload["dataset"]
        runs = payload["runs"]
        return RunSummary(
            model=payload["model"],
            experiment=int(ds["experiment"]),
            index=int(ds["index"]),
            dataset_seed=int(ds["seed"]),
            sizes=tuple(int(s) for s in ds["sizes"]),
            config=dict(payload["config"]),
            run_seeds=tuple(int(r["seed"]) for r in runs),
            best_epochs=tuple(int(r["best_epoch"]) for r in runs),
            dev_accuracies=tuple(float(r["dev_accuracy"]) for r in runs),
            test_accuracies=tuple(float(r["test_accuracy"]) for r in runs),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: missing or malformed field ({exc!r})") from exc


# ---------------------------------------------------------------------------
# Accuracy curves (one point per summary, one series per model)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    model: str
    experiment: int
    index: int
    runs: int
    best: float  # max test accuracy over runs
    q1: float
    median: float
    q3: float


def accuracy_curve_rows(summaries: Sequence[RunSummary]) -> list:
    """One row per summary, sorted by (model, index).

    All summaries must come from the same experiment, and no (model, index)
    pair may appear twice: each point on a curve has exactly one source.
    """
    if len(summaries) == 0:
        raise ValueError("no run summaries given")
    experiments = {s.experiment for s in summaries}
    if len(experiments) > 1:
        raise ValueError(f"summaries mix experiments {sorted(experiments)}")
    seen = set()
    for s in summaries:
        key = (s.model, s.index)
        if key in seen:
            raise ValueError(f"duplicate summary for model={s.model} i={s.index}")
        seen.add(key)
    rows = []
    for s in sorted(summaries, key=lambda s: (s.model, s.index)):
        q1, median, q3 = s.test_quartiles()
        rows.append(
            CurvePoint(
                model=s.model,
                experiment=s.experiment,
                index=s.index,
                runs=s.runs,
                best=s.max_test_accuracy,
                q1=q1,
                median=median,
                q3=q3,
            )
        )
    return rows


_CURVE_FIELDS = ["model", "experiment", "i", "runs", "best", "q1", "median", "q3"]


def write_accuracy_curve(rows: Sequence[CurvePoint], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CURVE_FIELDS)
        for r in rows:
            writer.writerow(
                [r.model, r.experiment, r.index, r.runs, repr(r.best),
                 repr(r.q1), repr(r.median), repr(r.q3)]
            )
    return path


_MODEL_STYLE = {"rnn": ("tab:blue", "o"), "rlstm": ("tab:orange", "s")}

_X_LABEL = {
    1: "length band i (sentence lengths 10i-9 .. 10i)",
    2: "keyword depth band i (depths i or i+1)",
}


def plot_accuracy_curve(
    rows: Sequence[CurvePoint],
    path: Union[str, Path],
    sources: Sequence[str],
    title: Optional[str] = None,
) -> Path:
    """Best accuracy per index with an interquartile band per model."""
    if len(rows) == 0:
        raise ValueError("no curve points to plot")
    _, plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for kind in ("rnn", "rlstm"):
        pts = [r for r in rows if r.model == kind]
        if not pts:
            continue
        xs = [r.index for r in pts]
        color, marker = _MODEL_STYLE[kind]
        ax.plot(xs, [r.best for r in pts], color=color, marker=marker,
                label=f"{kind} (best of {pts[0].runs})")
        ax.fill_between(xs, [r.q1 for r in pts], [r.q3 for r in pts],
                        color=color, alpha=0.2, linewidth=0)
    ax.axhline(_CHANCE_ACCURACY, color="gray", linestyle=":", linewidth=1,
               label="chance")
    ax.set_xlabel(_X_LABEL[rows[0].experiment])
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_xticks(sorted({r.index for r in rows}))
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, linewidth=0.3, alpha=0.5)
    return _save_svg(fig, path, sources)


# ---------------------------------------------------------------------------
# Ratio figures
# ---------------------------------------------------------------------------


def load_ratio_input(path: Union[str, Path]) -> RatioSummary:
    """Accept either a raw records CSV or an already-summarized CSV."""
    path = Path(path)
    with open(path, newline="") as fh:
        header = fh.readline().strip()
    if header == "epoch,tree_id,keyword_depth,ratio,mem_ratio":
        return summarize(read_ratio_records(path))
    if header.startswith("epoch,depth,count"):
        return RatioSummary(cells=read_ratio_summary(path), undefined=0)
    raise ValueError(f"{path}: unrecognized ratio CSV header {header!r}")


def _log_safe(values) -> np.ndarray:
    # log axes cannot show zeros; turn them into gaps instead
    arr = np.asarray(values, dtype=float)
    arr[arr <= 0.0] = np.nan
    return arr


def plot_ratio_vs_depth(
    summary: RatioSummary,
    path: Union[str, Path],
    sources: Sequence[str],
    title: Optional[str] = None,
    min_count: int = 1,
) -> Path:
    """Median ratio vs keyword depth, one series per epoch, log scale."""
    cells = [c for c in summary.cells if c.count >= min_count]
    if not cells:
        raise ValueError("no summary cells to plot")
    epochs = sorted({c.epoch for c in cells})
    _, plt = _pyplot()
    cmap = plt.get_cmap("viridis")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for j, epoch in enumerate(epochs):
        series = sorted((c for c in cells if c.epoch == epoch),
                        key=lambda c: c.depth)
        xs = [c.depth for c in series]
        color = cmap(j / max(len(epochs) - 1, 1))
        ax.plot(xs, _log_safe([c.median for c in series]), color=color,
                marker=".", label=f"epoch {epoch}")
        ax.fill_between(xs, _log_safe([c.q1 for c in series]),
                        _log_safe([c.q3 for c in series]),
                        color=color, alpha=0.15, linewidth=0)
    ax.set_yscale("log")
    ax.set_xlabel("keyword depth")
    ax.set_ylabel("|err(keyword leaf)| / |err(root)|")
    ax.set_xticks(sorted({c.depth for c in cells}))
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8, ncols=2)
    ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
    return _save_svg(fig, path, sources)


@dataclass(frozen=True)
class EpochPoint:
    epoch: int
    count: int
    q1: float
    median: float
    q3: float
    dev_accuracy: Optional[float]  # None when no train log was supplied


def ratio_vs_epoch_rows(
    summary: RatioSummary,
    depth: int,
    log: Optional[Sequence[EpochRecord]] = None,
) -> list:
    """Fixed-depth slice across epochs, joined with dev accuracy if given."""
    dev = {rec.epoch: rec.dev_accuracy for rec in log} if log is not None else {}
    rows = [
        EpochPoint(epoch=c.epoch, count=c.count, q1=c.q1, median=c.median,
                   q3=c.q3, dev_accuracy=dev.get(c.epoch))
        for c in sorted(summary.cells, key=lambda c: c.epoch)
        if c.depth == depth
    ]
    if not rows:
        depths = sorted({c.depth for c in summary.cells})
        raise ValueError(f"no cells at depth {depth}; have depths {depths}")
    return rows


_EPOCH_FIELDS = ["epoch", "count", "q1", "median", "q3", "dev_accuracy"]


def write_ratio_vs_epoch(rows: Sequence[EpochPoint], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_EPOCH_FIELDS)
        for r in rows:
            dev = "" if r.dev_accuracy is None else repr(float(r.dev_accuracy))
            writer.writerow([r.epoch, r.count, repr(r.q1), repr(r.median),
                             repr(r.q3), dev])
    return path


def plot_ratio_vs_epoch(
    rows: Sequence[EpochPoint],
    depth: int,
    path: Union[str, Path],
    sources: Sequence[str],
    title: Optional[str] = None,
) -> Path:
    """Ratio trajectory at one depth; dev accuracy overlaid when present."""
    if len(rows) == 0:
        raise ValueError("no epoch points to plot")
    _, plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    xs = [r.epoch for r in rows]
    ax.plot(xs, _log_safe([r.median for r in rows]), color="tab:blue",
            marker=".", label=f"median ratio, depth {depth}")
    ax.fill_between(xs, _log_safe([r.q1 for r in rows]),
                    _log_safe([r.q3 for r in rows]),
                    color="tab:blue", alpha=0.15, linewidth=0)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("|err(keyword leaf)| / |err(root)|")
    handles, labels = ax.get_legend_handles_labels()
    devs = [(r.epoch, r.dev_accuracy) for r in rows if r.dev_accuracy is not None]
    if devs:
        twin = ax.twinx()
        (line,) = twin.plot([e for e, _ in devs], [a for _, a in devs],
                            color="tab:green", linestyle="--", marker="x",
                            label="dev accuracy")
        twin.set_ylabel("dev accuracy")
        twin.set_ylim(0.0, 1.05)
        handles.append(line)
        labels.append(line.get_label())
    if title:
        ax.set_title(title)
    ax.legend(handles, labels, loc="best", fontsize=9)
    ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
    return _save_svg(fig, path, sources)


# ---------------------------------------------------------------------------
# Deterministic SVG output
# ---------------------------------------------------------------------------


def _save_svg(fig, path: Union[str, Path], sources: Sequence[str]) -> Path:
    """Write the figure and append a comment naming its data sources."""
    matplotlib, plt = _pyplot()
    path = Path(path)
    try:
        with matplotlib.rc_context({"svg.hashsalt": _SVG_HASHSALT}):
            # no Date metadata: reruns must produce identical bytes
            fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(f"<!-- data: {', '.join(str(s) for s in sources)} -->\n")
    return path
