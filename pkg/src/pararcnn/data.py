"""Series ingestion, min-max scaling and shifted instance construction."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError, WindowError

MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}


class ColumnRole(str, enum.Enum):
    TARGET = "target"
    OBSERVED = "observed"
    FUTURE = "future"

    @classmethod
    def parse(cls, value) -> "ColumnRole":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "target": cls.TARGET,
            "observed": cls.OBSERVED,
            "observedcovariate": cls.OBSERVED,
            "observed_covariate": cls.OBSERVED,
            "future": cls.FUTURE,
            "futurecovariate": cls.FUTURE,
            "future_covariate": cls.FUTURE,
        }
        if key not in aliases:
            raise SchemaError(f"unknown column role {value!r}")
        return aliases[key]


@dataclass
class SeriesFrame:
    """A ``T x D`` table of values with one role per column."""

    names: list[str]
    roles: list[ColumnRole]
    values: np.ndarray
    timestamps: Optional[list[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise DataError(f"values of shape {self.values.shape} do not match {len(self.names)} columns")
        if len(self.roles) != len(self.names):
            raise DataError("every column needs exactly one role")
        self.roles = [ColumnRole.parse(r) for r in self.roles]
        if ColumnRole.TARGET not in self.roles:
            raise SchemaError("at least one target column is required")

    def __len__(self):
        return self.values.shape[0]

    def _cols(self, role):
        return [i for i, r in enumerate(self.roles) if r is role]

    @property
    def target_columns(self) -> list[int]:
        return self._cols(ColumnRole.TARGET)

    @property
    def observed_columns(self) -> list[int]:
        return self._cols(ColumnRole.OBSERVED)

    @property
    def future_columns(self) -> list[int]:
        return self._cols(ColumnRole.FUTURE)

    @property
    def n_targets(self) -> int:
        return len(self.target_columns)

    @property
    def fused_width(self) -> int:
        return len(self.names) + len(self.future_columns)

    def fused_labels(self, shift: int) -> list[str]:
        """Feature labels of the fused input, shifted covariates suffixed."""
        names = [self.names[i] for i in self.target_columns + self.observed_columns + self.future_columns]
        return names + [f"{self.names[i]}(+{shift})" for i in self.future_columns]

    def head(self, rows: int) -> "SeriesFrame":
        ts = None if self.timestamps is None else self.timestamps[:rows]
        return replace(self, values=self.values[:rows].copy(), timestamps=ts)


@dataclass(frozen=True)
class WindowConfig:
    w: int
    k: int
    s: int

    def __post_init__(self):
        if self.w < 1 or self.k < 1:
            raise ConfigError(f"window and horizon must be >= 1 (w={self.w}, k={self.k})")
        if not 1 <= self.s <= self.w + self.k:
            raise ConfigError(f"shift s={self.s} outside [1, w+k] = [1, {self.w + self.k}]")

    @property
    def reach(self) -> int:
        return max(self.s, self.k)

    def min_length(self) -> int:
        return self.w + self.reach


@dataclass
class Instance:
    fused: np.ndarray   # w x (N + M + 2Q)
    target: np.ndarray  # k x N
    anchor: int         # 1-indexed t: last observed row


@dataclass
class NormStats:
    names: list[str]
    roles: list[ColumnRole]
    mins: np.ndarray
    maxs: np.ndarray
    constant: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if np.any(self.maxs < self.mins):
            raise DataError("normalizer max below min")
        if self.constant is None:
            self.constant = self.maxs == self.mins

    @property
    def spans(self) -> np.ndarray:
        return np.where(self.constant, 1.0, self.maxs - self.mins)

    @property
    def target_columns(self) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r is ColumnRole.TARGET]


# ---------------------------------------------------------------------------
# ingestion


def _parse_cell(text: str, row: int, col: str) -> float:
    token = text.strip()
    if token.lower() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"non-numeric cell {text!r} in column {col!r}, row {row}") from None
    if math.isinf(value):
        raise DataError(f"infinite cell in column {col!r}, row {row}")
    return value


def _fill_missing(values: np.ndarray, names: Sequence[str]) -> np.ndarray:
    out = values.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        mask = np.isnan(col)
        if not mask.any():
            continue
        if mask.all():
            raise DataError(f"column {names[j]!r} has no values")
        # forward fill, then back fill the leading gap
        idx = np.where(~mask, np.arange(len(col)), 0)
        np.maximum.accumulate(idx, out=idx)
        filled = col[idx]
        first = np.argmax(~mask)
        filled[:first] = col[first]
        out[:, j] = filled
    return out


def load_frame(path, schema: Mapping[str, object]) -> SeriesFrame:
    """Read a comma-separated file with a header row.

    ``schema`` maps column names to roles; columns are kept in schema order.
    Header columns absent from the schema are ignored, except that a leading
    one is kept as timestamps.  Missing cells are forward- then back-filled.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    if not schema:
        raise SchemaError("schema is empty")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    missing = [name for name in schema if name not in header]
    if missing:
        raise SchemaError(f"schema columns not in header of {path}: {missing}")
    names = list(schema)
    roles = [ColumnRole.parse(schema[n]) for n in names]
    positions = [header.index(n) for n in names]
    stamp_pos = 0 if header[0] not in schema else None

    values = np.empty((len(rows) - 1, len(names)))
    stamps = [] if stamp_pos is not None else None
    for r, row in enumerate(rows[1:]):
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        for c, (name, pos) in enumerate(zip(names, positions)):
            values[r, c] = _parse_cell(row[pos], r + 2, name)
        if stamps is not None:
            stamps.append(row[stamp_pos].strip())
    values = _fill_missing(values, names)
    return SeriesFrame(names, roles, values, stamps)


def write_frame(frame: SeriesFrame, path) -> None:
    """Write a frame in the format :func:`load_frame` reads (lossless floats)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        stamps = frame.timestamps or [str(i) for i in range(len(frame))]
        out.writerow(["time"] + list(frame.names))
        for stamp, row in zip(stamps, frame.values):
            out.writerow([stamp] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# normalization


def fit_normalizer(frame: SeriesFrame, train_fraction: float = 0.8) -> NormStats:
    if not 0 < train_fraction <= 1:
        raise ConfigError(f"train_fraction must be in (0, 1], got {train_fraction}")
    rows = int(math.floor(train_fraction * len(frame)))
    if rows < 1:
        raise DataError("training split is empty")
    part = frame.values[:rows]
    return NormStats(list(frame.names), list(frame.roles), part.min(axis=0), part.max(axis=0))


def _check_stats(frame: SeriesFrame, stats: NormStats):
    if list(frame.names) != list(stats.names):
        raise DataError(f"normalizer columns {stats.names} do not match frame columns {frame.names}")


def normalize(frame: SeriesFrame, stats: NormStats) -> SeriesFrame:
    """Min-max scale each column; constant columns map to 0. No clamping."""
    _check_stats(frame, stats)
    scaled = (frame.values - stats.mins) / stats.spans
    scaled[:, stats.constant] = 0.0
    return replace(frame, values=scaled)


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values) * stats.spans + stats.mins


def denormalize_targets(block: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map a ``[..., k, N]`` block of scaled targets back to original units."""
    cols = stats.target_columns
    block = np.asarray(block, dtype=np.float64)
    if block.shape[-1] != len(cols):
        raise DataError(f"block has {block.shape[-1]} target columns, normalizer has {len(cols)}")
    return block * stats.spans[cols] + stats.mins[cols]


# ---------------------------------------------------------------------------
# instances


def build_instances(frame: SeriesFrame, cfg: WindowConfig) -> list[Instance]:
    """One instance per anchor ``t`` in ``[w, T - max(s, k)]`` (1-indexed).

    Fused row ``j`` holds targets, observed covariates and future covariates at
    row ``t - w + 1 + j`` followed by the future covariates at ``t - w + 1 + j + s``.
    """
    T = len(frame)
    if T < cfg.min_length():
        raise WindowError(
            f"series of length {T} too short: need at least w + max(s, k) = {cfg.min_length()} rows"
        )
    past_cols = frame.target_columns + frame.observed_columns + frame.future_columns
    past = frame.values[:, past_cols]
    future = frame.values[:, frame.future_columns]
    targets = frame.values[:, frame.target_columns]
    w, k, s = cfg.w, cfg.k, cfg.s
    out = []
    for t in range(w, T - cfg.reach + 1):
        lo = t - w  # 0-indexed first window row
        fused = np.concatenate([past[lo:t], future[lo + s:t + s]], axis=1)
        out.append(Instance(fused, targets[t:t + k].copy(), t))
    return out


def stack_instances(instances: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray]:
    """Batch instances into ``[B, w, D]`` inputs and ``[B, k, N]`` targets."""
    if not instances:
        raise DataError("no instances to stack")
    return (np.stack([i.fused for i in instances]), np.stack([i.target for i in instances]))


def split_train_test(instances: Sequence[Instance], fraction: float = 0.8):
    """Chronological split; the first ``floor(fraction * n)`` instances train."""
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n = len(instances)
    if n < 2:
        raise DataError(f"need at least 2 instances to split, got {n}")
    cut = min(max(int(math.floor(fraction * n)), 1), n - 1)
    ordered = sorted(instances, key=lambda i: i.anchor)
    return ordered[:cut], ordered[cut:]


# ---------------------------------------------------------------------------
# synthetic data

COVARIATE_MEMORY = 0.9
TARGET_FROM_COVARIATE = 0.6
TARGET_MEMORY = 0.3


def synth_generate(seed: int, T: int, noise_scale: float = 0.1) -> SeriesFrame:
    """Target ``z`` driven by the contemporaneous future covariate ``y``.

    ``y`` and ``x`` are independent AR(1) processes with unit innovations;
    ``z_t = 0.6 y_t + 0.3 z_{t-1} + eps_t`` with ``eps ~ N(0, noise_scale)``.
    Knowing ``y`` over the horizon therefore helps forecast ``z``.
    """
    if T < 200:
        raise ConfigError(f"synthetic series needs T >= 200, got {T}")
    if noise_scale < 0:
        raise ConfigError("noise_scale must be non-negative")
    rng = np.random.default_rng(seed)
    innov = rng.standard_normal((T, 2))
    eps = rng.standard_normal(T) * noise_scale
    y = np.empty(T)
    x = np.empty(T)
    z = np.empty(T)
    y[0], x[0] = innov[0]
    z[0] = TARGET_FROM_COVARIATE * y[0] + eps[0]
    for t in range(1, T):
        y[t] = COVARIATE_MEMORY * y[t - 1] + innov[t, 0]
        x[t] = COVARIATE_MEMORY * x[t - 1] + innov[t, 1]
        z[t] = TARGET_FROM_COVARIATE * y[t] + TARGET_MEMORY * z[t - 1] + eps[t]
    return SeriesFrame(
        names=["z", "x", "y"],
        roles=[ColumnRole.TARGET, ColumnRole.OBSERVED, ColumnRole.FUTURE],
        values=np.column_stack([z, x, y]),
        timestamps=[str(i) for i in range(T)],
    )


SYNTH_SCHEMA = {"z": "target", "x": "observed", "y": "future"}
