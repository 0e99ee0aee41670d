"""Error metrics in original units."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Instance, NormStats, denormalize_targets, stack_instances
from .errors import DataError, ShapeError
from .network import ModelConfig, ParamStore, check_params, predict


@dataclass
class EvalResult:
    mae: float
    rmse: float
    per_horizon_mae: list[float]
    n_instances: int

    def to_text(self) -> str:
        lines = ["metric,value", f"mae,{self.mae!r}", f"rmse,{self.rmse!r}",
                 f"n_instances,{self.n_instances}"]
        lines += [f"mae_h{h},{v!r}" for h, v in enumerate(self.per_horizon_mae, start=1)]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} and truth {truth.shape} differ")
    if pred.size == 0:
        raise DataError("empty test set")
    return pred, truth


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def evaluate(params: ParamStore, cfg: ModelConfig, test_instances: Sequence[Instance],
             stats: NormStats) -> EvalResult:
    """Forecast every test instance and score it against the truth after denormalizing."""
    if not test_instances:
        raise DataError("empty test set")
    check_params(params, cfg)
    X, Y = stack_instances(test_instances)
    pred = denormalize_targets(predict(params, cfg, X), stats)
    truth = denormalize_targets(Y, stats)
    per_h = np.mean(np.abs(pred - truth), axis=(0, 2))
    return EvalResult(mae(pred, truth), rmse(pred, truth), [float(v) for v in per_h], len(test_instances))
