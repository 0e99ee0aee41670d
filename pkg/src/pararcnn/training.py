"""Mini-batch Adam training with L1/L2 penalties and early stopping."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .data import Instance, stack_instances
from .errors import ConfigError, DataError, TrainingDiverged
from .network import ModelConfig, ParamStore, check_params, forward_graph, is_weight, param_vars, predict

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    l1: float = 1e-5
    l2: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 10
    val_fraction: float = 0.1
    seed: int = 0
    clip_norm: Optional[float] = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.l1 < 0 or self.l2 < 0:
            raise ConfigError("regularization factors must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if not 0 < self.val_fraction <= 0.5:
            raise ConfigError(f"val_fraction must be in (0, 0.5], got {self.val_fraction}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive or None")


@dataclass
class TrainReport:
    train_loss: list[float]
    val_loss: list[float]
    stopped_epoch: int
    best_epoch: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_text(self) -> str:
        lines = [
            f"# best_epoch {self.best_epoch}",
            f"# stopped_epoch {self.stopped_epoch}",
            "epoch,train_loss,val_loss",
        ]
        for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            lines.append(f"{e},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def regularization_penalty(params: ParamStore, l1: float, l2: float) -> float:
    """``l1 * sum|w| + l2 * sum w**2`` over weight matrices and kernels."""
    total = 0.0
    for name, value in params.items():
        if is_weight(name):
            total += l1 * np.abs(value).sum() + l2 * np.square(value).sum()
    return float(total)


def _penalty_grad(value: np.ndarray, l1: float, l2: float) -> np.ndarray:
    return l1 * np.sign(value) + 2.0 * l2 * value


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ParamStore, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in params.names():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def loss_and_grads(params: ParamStore, cfg: ModelConfig, X: np.ndarray, Y: np.ndarray):
    """Batch MSE and its gradient with respect to every parameter."""
    graph = ad.Graph()
    pv = param_vars(graph, params)
    pred = forward_graph(pv, cfg, graph.constant(X))
    loss = ad.mse(pred, Y)
    return float(loss.value), graph.backward(loss)


def dataset_mse(params: ParamStore, cfg: ModelConfig, X: np.ndarray, Y: np.ndarray) -> float:
    pred = predict(params, cfg, X)
    return float(np.mean((pred - Y) ** 2))


def chronological_val_split(instances: Sequence[Instance], val_fraction: float):
    n = len(instances)
    if n < 2:
        raise DataError(f"need at least 2 instances to hold out validation data, got {n}")
    n_val = min(max(int(math.floor(val_fraction * n)), 1), n - 1)
    return list(instances[:n - n_val]), list(instances[n - n_val:])


def train(params: ParamStore, cfg: ModelConfig, instances: Sequence[Instance],
          tcfg: TrainConfig, val_instances: Optional[Sequence[Instance]] = None):
    """Fit ``params`` and return the parameters of the best validation epoch with a report.

    Without ``val_instances`` the chronological tail of ``instances``
    (``val_fraction`` of them) is held out for early stopping.  The input
    ``params`` is not modified.
    """
    if not instances:
        raise DataError("empty training set")
    check_params(params, cfg)
    if val_instances is None:
        train_set, val_set = chronological_val_split(instances, tcfg.val_fraction)
    else:
        train_set, val_set = list(instances), list(val_instances)
        if not val_set:
            raise DataError("empty validation set")
    X, Y = stack_instances(train_set)
    Xv, Yv = stack_instances(val_set)

    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(tcfg.learning_rate)
    current = params.copy()
    best = current.copy()
    best_val = math.inf
    best_epoch = 0
    train_hist: list[float] = []
    val_hist: list[float] = []
    started = time.perf_counter()
    n = len(X)
    epoch = 0
    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for b, lo in enumerate(range(0, n, tcfg.batch_size)):
            idx = order[lo:lo + tcfg.batch_size]
            mse, grads = loss_and_grads(current, cfg, X[idx], Y[idx])
            objective = mse + regularization_penalty(current, tcfg.l1, tcfg.l2)
            if tcfg.l1 or tcfg.l2:
                for name in grads:
                    if is_weight(name):
                        grads[name] = grads[name] + _penalty_grad(current[name], tcfg.l1, tcfg.l2)
            _check_finite(objective, grads, epoch, b)
            if tcfg.clip_norm is not None:
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > tcfg.clip_norm:
                    scale = tcfg.clip_norm / norm
                    grads = {k: g * scale for k, g in grads.items()}
            opt.step(current, grads)
            running += objective * len(idx)
        train_hist.append(running / n)
        val = dataset_mse(current, cfg, Xv, Yv)
        if not math.isfinite(val):
            raise TrainingDiverged(f"validation loss became {val} in epoch {epoch}", epoch=epoch)
        val_hist.append(val)
        if val < best_val:
            best_val, best_epoch = val, epoch
            best = current.copy()
        log.debug("epoch %d train %.6g val %.6g", epoch, train_hist[-1], val)
        if epoch - best_epoch >= tcfg.patience:
            break
    report = TrainReport(train_hist, val_hist, stopped_epoch=epoch, best_epoch=best_epoch,
                         wall_time=time.perf_counter() - started)
    return best, report


def _check_finite(loss: float, grads: dict, epoch: int, batch: int) -> None:
    bad = next((name for name, g in grads.items() if not np.isfinite(g).all()), None)
    if math.isfinite(loss) and bad is None:
        return
    raise TrainingDiverged(
        f"non-finite training state at epoch {epoch}, batch {batch}: loss={loss}, "
        f"first non-finite gradient: {bad}",
        epoch=epoch, batch=batch, parameter=bad,
    )
