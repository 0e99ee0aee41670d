"""Gradient-times-input attribution over the fused input window.

The fused input is one block of the head concatenation, so attributing on
it gives a (time step x feature) map directly: the score is the sum of the
selected forecast entries, its gradient with respect to the input is
multiplied by the input, rectified, and scaled by the global maximum.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .data import Instance
from .errors import ConfigError, ShapeError
from .network import ModelConfig, ParamStore, forward_graph, param_vars


@dataclass
class TargetSelector:
    """Which forecast entries feed the score; ``None`` means all of them."""

    targets: Optional[Sequence[int]] = None   # 0-based target columns
    horizons: Optional[Sequence[int]] = None  # 0-based horizon steps

    def mask(self, k: int, n: int) -> np.ndarray:
        rows = range(k) if self.horizons is None else list(self.horizons)
        cols = range(n) if self.targets is None else list(self.targets)
        rows, cols = list(rows), list(cols)
        if not rows or not cols:
            raise ConfigError("target selector is empty")
        if min(rows) < 0 or max(rows) >= k or min(cols) < 0 or max(cols) >= n:
            raise ConfigError(f"target selector outside the {k} x {n} forecast block")
        m = np.zeros((k, n))
        m[np.ix_(rows, cols)] = 1.0
        return m


@dataclass
class SaliencyMap:
    weights: np.ndarray        # w x D, non-negative, max-normalized when possible
    raw_importance: np.ndarray  # relu(gradient * input) before normalization
    gradient: np.ndarray       # d score / d input
    row_labels: list[int]      # time offsets -w+1 .. 0 of the past rows
    shifted_row_labels: list[int]  # offsets of the shifted covariate rows
    column_labels: list[str]
    all_zero: bool

    def column_importance(self) -> dict[str, float]:
        return dict(zip(self.column_labels, self.weights.sum(axis=0).tolist()))

    def to_text(self, which: str = "weights") -> str:
        matrix = {"weights": self.weights, "raw": self.raw_importance, "gradient": self.gradient}[which]
        lines = [",".join(["offset"] + self.column_labels)]
        for off, row in zip(self.row_labels, matrix):
            lines.append(",".join([str(off)] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"

    def write(self, path, which: str = "weights") -> None:
        Path(path).write_text(self.to_text(which))


def input_gradient(params: ParamStore, cfg: ModelConfig, fused: np.ndarray,
                   selector: TargetSelector) -> np.ndarray:
    """Gradient of the selected-output sum with respect to the fused input."""
    fused = np.asarray(fused, dtype=np.float64)
    if fused.shape != (cfg.w, cfg.d_fused):
        raise ShapeError(f"instance input {fused.shape} does not match model ({cfg.w}, {cfg.d_fused})")
    mask = selector.mask(cfg.k, cfg.n_targets)
    graph = ad.Graph()
    pv = param_vars(graph, params, trainable=False)
    x = graph.leaf(fused, "input")
    score = ad.total(forward_graph(pv, cfg, x), mask)
    return graph.backward(score)["input"]


def grad_cam(params: ParamStore, cfg: ModelConfig, instance: Instance,
             selector: Optional[TargetSelector] = None,
             column_labels: Optional[Sequence[str]] = None, shift: int = 0) -> SaliencyMap:
    selector = selector or TargetSelector()
    fused = np.asarray(instance.fused, dtype=np.float64)
    grad = input_gradient(params, cfg, fused, selector)
    raw = np.maximum(grad * fused, 0.0)
    peak = raw.max()
    weights = raw / peak if peak > 0 else raw.copy()
    labels = list(column_labels) if column_labels is not None else [f"f{i}" for i in range(cfg.d_fused)]
    if len(labels) != cfg.d_fused:
        raise ShapeError(f"{len(labels)} column labels for {cfg.d_fused} features")
    rows = list(range(-cfg.w + 1, 1))
    return SaliencyMap(
        weights=weights,
        raw_importance=raw,
        gradient=grad,
        row_labels=rows,
        shifted_row_labels=[r + shift for r in rows],
        column_labels=labels,
        all_zero=not peak > 0,
    )
