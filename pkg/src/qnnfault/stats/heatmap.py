"""Per-layer drop probabilities and the entropy-based fault-tolerance score.

The fault-tolerance score is our operationalization: for every (layer, fault
count) cell, ``p`` is the fraction of trials whose accuracy drop exceeds a
threshold; a layer's score is the mean binary entropy ``h(p)`` over its cells
and its per-cell fault-tolerance likelihood is ``1 - p``.
"""
from __future__ import annotations

import csv
import html
from dataclasses import dataclass

import numpy as np

from ..campaign import ResultsTable
from ..errors import InvalidValueError, SchemaError

ENTROPY_NOTE = "score = mean binary entropy of per-cell drop probability (operational definition)"


@dataclass
class HeatmapGrid:
    layers: list
    counts: list
    prob: np.ndarray  # NaN where a cell has no trials
    trials: np.ndarray
    threshold: float

    @property
    def empty(self) -> np.ndarray:
        return self.trials == 0

    @property
    def shape(self):
        return self.prob.shape


def layer_drop_probability(table: ResultsTable, threshold: float = 1.0, layers=None, counts=None,
                           wbits: int | None = None, mode: str | None = None) -> HeatmapGrid:
    """Fraction of trials with ``drop > threshold`` per (layer, fault count).

    Optional ``wbits``/``mode`` filters select one architecture/fault-mode
    panel; otherwise matching trials are pooled.
    """
    if threshold < 0:
        raise InvalidValueError("threshold must be non-negative")
    recs = [r for r in table.records
            if (wbits is None or r.wbits == wbits) and (mode is None or r.fault_mode == mode.upper())]
    if any(r.layer == 0 for r in recs):
        raise SchemaError("heatmap needs in-layer results (layer >= 1)")
    layers = sorted({r.layer for r in recs}) if layers is None else list(layers)
    counts = sorted({r.n_faults for r in recs}) if counts is None else list(counts)
    li = {v: i for i, v in enumerate(layers)}
    ci = {v: i for i, v in enumerate(counts)}
    hits = np.zeros((len(layers), len(counts)), dtype=np.int64)
    trials = np.zeros_like(hits)
    for r in recs:
        if r.layer in li and r.n_faults in ci:
            i, j = li[r.layer], ci[r.n_faults]
            trials[i, j] += 1
            hits[i, j] += r.drop > threshold
    with np.errstate(invalid="ignore", divide="ignore"):
        prob = np.where(trials > 0, hits / np.maximum(trials, 1), np.nan)
    return HeatmapGrid(layers, counts, prob, trials, threshold)


def binary_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.where((p <= 0) | (p >= 1), 0.0, h)


@dataclass
class EntropyScores:
    layers: list
    entropy: np.ndarray
    likelihood: np.ndarray
    mean_drop_prob: np.ndarray
    ranking: list  # most vulnerable layer first
    note: str = ENTROPY_NOTE


def layer_entropy_score(grid: HeatmapGrid) -> EntropyScores:
    valid = ~grid.empty
    h = np.where(valid, binary_entropy(np.nan_to_num(grid.prob)), np.nan)
    with np.errstate(invalid="ignore"):
        entropy = np.nanmean(np.where(valid, h, np.nan), axis=1) if valid.any() else \
            np.full(len(grid.layers), np.nan)
        mean_p = np.nanmean(grid.prob, axis=1) if valid.any() else np.full(len(grid.layers), np.nan)
    order = sorted(range(len(grid.layers)), key=lambda i: (-np.nan_to_num(mean_p[i], nan=-1.0), i))
    return EntropyScores(list(grid.layers), entropy, 1.0 - grid.prob, mean_p,
                         [grid.layers[i] for i in order])


def save_heatmap(grid: HeatmapGrid, path) -> None:
    """CSV: header of fault counts, one row per layer; empty cells are written as ``nan``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer"] + [str(c) for c in grid.counts])
        for layer, row in zip(grid.layers, grid.prob):
            w.writerow([layer] + [repr(float(v)) for v in row])


def render_svg(grid: HeatmapGrid, title: str = "") -> str:
    """Static SVG with each cell's probability written in its square."""
    cell, left, top = 56, 70, 50
    width = left + cell * len(grid.counts) + 20
    height = top + cell * len(grid.layers) + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">']
    if title:
        out.append(f'<text x="{left}" y="20" font-size="14">{html.escape(title)}</text>')
    for j, c in enumerate(grid.counts):
        out.append(f'<text x="{left + j * cell + cell / 2}" y="{top - 8}" text-anchor="middle">{c}</text>')
    for i, layer in enumerate(grid.layers):
        y = top + i * cell
        out.append(f'<text x="{left - 8}" y="{y + cell / 2 + 4}" text-anchor="end">L{layer}</text>')
        for j in range(len(grid.counts)):
            p = grid.prob[i, j]
            x = left + j * cell
            if np.isnan(p):
                fill, label = "#dddddd", "n/a"
            else:
                shade = int(round(255 * (1 - p)))
                fill, label = f"rgb(255,{shade},{shade})", f"{p:.2f}"
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#444"/>')
            out.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle">{label}</text>')
    out.append(f'<text x="{left}" y="{height - 12}">fault count (columns), layer (rows), '
               f'threshold {grid.threshold:g} pt</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
