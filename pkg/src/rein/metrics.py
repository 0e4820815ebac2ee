"""Rollout MSE, edge recovery accuracy, diversity, and seed summaries."""
from __future__ import annotations

import csv
import itertools
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass
class MetricReport:
    name: str
    value: float
    dispersion: float
    n: int
    tag: str = ""
    episode_dispersion: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a metric report needs n >= 1")
        if self.dispersion < 0:
            raise ValueError("dispersion must be non-negative")


def _np(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def mse_at_steps(pred, truth, steps: Sequence[int], name: str = "mse") -> list[MetricReport]:
    """MSE at each 1-based horizon in ``steps``.

    ``pred`` and ``truth`` are (episodes, horizon, objects, coords).  The
    value averages over objects, coordinates and episodes; dispersion is the
    std of per-episode values.
    """
    pred, truth = _np(pred), _np(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    horizon = pred.shape[1]
    if not steps or max(steps) > horizon or min(steps) < 1:
        raise ValueError(f"steps {list(steps)} need a horizon of at least {max(steps, default=0)}, got {horizon}")
    err = (pred - truth) ** 2
    reports = []
    for k in steps:
        per_episode = err[:, k - 1].reshape(err.shape[0], -1).mean(axis=1)
        reports.append(MetricReport(name, float(per_episode.mean()), float(per_episode.std()),
                                    len(per_episode), f"step{k}"))
    return reports


def _pair_labels(scores, symmetric: bool) -> tuple[np.ndarray, np.ndarray]:
    """Pair index arrays and hard labels for (E, n, n[, K]) predictions."""
    arr = _np(scores)
    n = arr.shape[1]
    if symmetric:
        if arr.ndim == 4:
            arr = 0.5 * (arr + np.swapaxes(arr, 1, 2))
        rows, cols = np.triu_indices(n, k=1)
    else:
        rows, cols = np.where(~np.eye(n, dtype=bool))
    labels = arr[:, rows, cols]
    if labels.ndim == 3:
        labels = labels.argmax(axis=-1)
    return labels.astype(np.int64), (rows, cols)


def edge_accuracy(pred, truth, edge_types: int | None = None, symmetric: bool = True,
                  name: str = "edge_accuracy") -> MetricReport:
    """Fraction of pairs whose relation type matches the ground truth.

    ``pred`` is either per-type scores (E, n, n, K) (probabilities or
    logits) or hard labels (E, n, n); ``truth`` is (E, n, n) labels.  Type 0
    is "no relation" and is never relabelled; the other predicted types are
    matched to true types by the best bijection over the whole set.
    """
    truth = np.asarray(_np(truth), dtype=np.int64)
    if truth.ndim == 2:
        truth = truth[None]
        pred = _np(pred)[None]
    labels, (rows, cols) = _pair_labels(pred, symmetric)
    true = truth[:, rows, cols]
    if labels.shape != true.shape:
        raise ValueError("prediction and ground truth cover different object counts")
    k = edge_types or int(max(labels.max(initial=0), true.max(initial=0)) + 1)
    best = None
    for perm in itertools.permutations(range(1, k)):
        mapping = np.array((0,) + perm)
        per_episode = (mapping[labels] == true).mean(axis=1)
        if best is None or per_episode.mean() > best.mean():
            best = per_episode
    return MetricReport(name, float(best.mean()), float(best.std()), len(best))


def diversity(a, b) -> float:
    """Mean Euclidean distance between paired feature vectors."""
    a, b = _np(a), _np(b)
    if a.shape != b.shape or a.shape[0] < 1:
        raise ValueError(f"feature sets must be equal-size and non-empty, got {a.shape} and {b.shape}")
    return float(np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1).mean())


def summarize(values, name: str = "metric", tag: str = "") -> MetricReport:
    """Mean and population std across seeds.

    ``values`` is 1-D (one value per seed) or (seeds, episodes); in the
    latter case per-seed means are summarised and the std across all
    episodes is reported separately.
    """
    arr = _np(values)
    if arr.size == 0:
        raise ValueError("summarize needs at least one value")
    episode_std = None
    if arr.ndim == 2:
        episode_std = float(arr.std())
        arr = arr.mean(axis=1)
    return MetricReport(name, float(arr.mean()), float(arr.std()), len(arr), tag, episode_std)


def write_csv(path: str | Path, reports: Iterable[MetricReport]) -> None:
    reports = list(reports)
    fields = list(MetricReport.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in reports:
            w.writerow(asdict(r))


def format_table(reports: Iterable[MetricReport]) -> str:
    lines = [f"{'metric':<24}{'tag':<12}{'value':>14}{'±':>3}{'disp':>12}{'n':>7}"]
    for r in reports:
        lines.append(f"{r.name:<24}{r.tag:<12}{r.value:>14.6g}{'':>3}{r.dispersion:>12.4g}{r.n:>7}")
    return "\n".join(lines)
