"""One-parameter hyperparameter studies: shift length, depth, skip strategy."""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .config import RunConfig, validate
from .data import WindowConfig
from .errors import ConfigError
from .network import SkipStrategy, layer_widths
from .pipeline import fit_and_score, load_data, prepare

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("shift", "layers", "skip")
SWEEP_WIDTH_DIVISOR = 8


@dataclass
class SweepSpec:
    param: str
    values: list
    seeds: list[int]
    base: RunConfig

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {self.param!r}; choose from {SWEEP_PARAMS}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")


@dataclass
class SweepRow:
    value: object
    seed: int
    mae: float
    rmse: float


@dataclass
class SweepSummary:
    value: object
    median_mae: float
    min_mae: float
    max_mae: float
    median_rmse: float


@dataclass
class SweepResult:
    param: str
    rows: list[SweepRow] = field(default_factory=list)

    def values(self) -> list:
        seen = []
        for r in self.rows:
            if r.value not in seen:
                seen.append(r.value)
        return seen

    def maes(self, value) -> list[float]:
        return [r.mae for r in self.rows if r.value == value]

    def median_mae(self, value) -> float:
        return statistics.median(self.maes(value))

    def summary(self) -> list[SweepSummary]:
        out = []
        for v in self.values():
            maes = self.maes(v)
            rmses = [r.rmse for r in self.rows if r.value == v]
            out.append(SweepSummary(v, statistics.median(maes), min(maes), max(maes),
                                    statistics.median(rmses)))
        return out

    def rows_text(self) -> str:
        lines = ["param_value,seed,mae,rmse"]
        lines += [f"{r.value},{r.seed},{r.mae!r},{r.rmse!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        lines = ["param_value,median_mae,min,max"]
        lines += [f"{s.value},{s.median_mae!r},{s.min_mae!r},{s.max_mae!r}" for s in self.summary()]
        return "\n".join(lines) + "\n"

    def write(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rows = directory / f"sweep_{self.param}.txt"
        summary = directory / f"sweep_{self.param}_summary.txt"
        rows.write_text(self.rows_text())
        summary.write_text(self.summary_text())
        return rows, summary


def reduced(base: RunConfig, divisor: int = SWEEP_WIDTH_DIVISOR) -> RunConfig:
    """Copy of ``base`` using the halving width rule scaled down by ``divisor``."""
    run = base.copy()
    run.model.width_divisor = divisor
    run.model.cnn_filters = None
    run.model.rnn_units = None
    return run


def _with_shift(run: RunConfig, s) -> RunConfig:
    run.window = WindowConfig(run.window.w, run.window.k, int(s))
    return run


def _with_layers(run: RunConfig, L) -> RunConfig:
    layer_widths(int(L), run.model.width_divisor)
    run.model.layers = int(L)
    run.model.cnn_filters = None
    run.model.rnn_units = None
    return run


def _with_skip(run: RunConfig, strategy) -> RunConfig:
    run.model.skip = SkipStrategy.parse(strategy).value
    return run


_SETTERS: dict[str, Callable] = {"shift": _with_shift, "layers": _with_layers, "skip": _with_skip}


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Train and evaluate one model per (value, seed); rows come out in value-major order.

    Every configuration is validated before any training starts.
    """
    setter = _SETTERS[spec.param]
    cells = []
    for value in spec.values:
        run = setter(spec.base.copy(), value)
        validate(run)
        cells.append((value, run))
    frame = load_data(spec.base)
    result = SweepResult(spec.param)
    for value, run in cells:
        prepared = prepare(run, frame)
        for seed in spec.seeds:
            cell = run.copy()
            cell.seed = int(seed)
            _, report, metrics = fit_and_score(cell, prepared)
            log.info("%s=%s seed=%s mae=%.5g rmse=%.5g (epochs %d)", spec.param, value, seed,
                     metrics.mae, metrics.rmse, report.stopped_epoch)
            result.rows.append(SweepRow(value, int(seed), metrics.mae, metrics.rmse))
    return result


def sweep_shift(base: RunConfig, s_values: Sequence[int], seeds: Sequence[int]) -> SweepResult:
    bad = [s for s in s_values if not 1 <= int(s) <= base.window.w + base.window.k]
    if bad:
        raise ConfigError(f"shift values {bad} outside [1, w+k] = [1, {base.window.w + base.window.k}]")
    return run_sweep(SweepSpec("shift", [int(s) for s in s_values], list(seeds), base))


def sweep_layers(base: RunConfig, L_values: Sequence[int], seeds: Sequence[int]) -> SweepResult:
    return run_sweep(SweepSpec("layers", [int(L) for L in L_values], list(seeds), base))


def sweep_skip(base: RunConfig, strategies: Sequence, seeds: Sequence[int]) -> SweepResult:
    names = [SkipStrategy.parse(s).value for s in strategies]
    return run_sweep(SweepSpec("skip", names, list(seeds), base))
