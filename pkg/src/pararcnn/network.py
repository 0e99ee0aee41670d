"""Parallel CNN/RNN forecaster with configurable skip connections.

Both branches read the fused ``w x D`` input and emit full sequences of
length ``w``.  The head concatenates ``[fused, cnn_out, rnn_out]`` along the
feature axis, flattens time-major, and maps to ``k * N`` outputs with one
dense layer, so the whole horizon comes out of a single pass.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, ConfigError, ShapeError

DEFAULT_FILTERS = (256, 128, 64, 32)
DEFAULT_UNITS = (128, 64, 32, 16)


class SkipStrategy(str, enum.Enum):
    ONCE = "once"            # original input re-enters at the last layer only
    DENSE = "dense"          # every earlier output plus the original input
    L_TO_NEXT = "ltonext"    # previous layer output plus the one before it
    L_TO_INPUT = "ltoinput"  # original input re-enters at every layer
    NONE = "none"

    @classmethod
    def parse(cls, value) -> "SkipStrategy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if member.value == key or member.name.replace("_", "").lower() == key:
                return member
        raise ConfigError(f"unknown skip strategy {value!r}")


@dataclass
class ModelConfig:
    w: int
    k: int
    n_targets: int
    d_fused: int
    cnn_filters: list[int] = field(default_factory=lambda: list(DEFAULT_FILTERS))
    rnn_units: list[int] = field(default_factory=lambda: list(DEFAULT_UNITS))
    kernel_size: int = 3
    skip: SkipStrategy = SkipStrategy.L_TO_INPUT
    conv_activation: str = "relu"

    def __post_init__(self):
        self.cnn_filters = [int(f) for f in self.cnn_filters]
        self.rnn_units = [int(u) for u in self.rnn_units]
        self.skip = SkipStrategy.parse(self.skip)
        self.validate()

    def validate(self):
        if len(self.cnn_filters) != len(self.rnn_units):
            raise ConfigError(
                f"cnn_filters ({len(self.cnn_filters)}) and rnn_units ({len(self.rnn_units)}) "
                "must have the same number of layers"
            )
        if self.n_layers < 1:
            raise ConfigError("model needs at least one layer")
        if min(self.cnn_filters + self.rnn_units) < 1:
            raise ConfigError("layer widths must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.kernel_size > self.w:
            raise ConfigError(f"kernel_size {self.kernel_size} exceeds window {self.w}")
        if min(self.w, self.k, self.n_targets, self.d_fused) < 1:
            raise ConfigError("w, k, n_targets and d_fused must be >= 1")
        if self.conv_activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown conv activation {self.conv_activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.cnn_filters)

    @property
    def head_width(self) -> int:
        return self.d_fused + self.cnn_filters[-1] + self.rnn_units[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skip"] = self.skip.value
        return d


def layer_widths(n_layers: int, divisor: int = 1) -> tuple[list[int], list[int]]:
    """Halving rule: layer ``i`` gets ``256 / divisor / 2**i`` filters and half as many units."""
    if n_layers < 1:
        raise ConfigError("number of layers must be >= 1")
    base_f = DEFAULT_FILTERS[0] / divisor
    base_u = DEFAULT_UNITS[0] / divisor
    filters = [base_f / 2 ** i for i in range(n_layers)]
    units = [base_u / 2 ** i for i in range(n_layers)]
    bad = [v for v in filters + units if v < 1 or v != int(v)]
    if bad:
        raise ConfigError(
            f"{n_layers} layers underflow the halving rule (width {min(filters + units)} < 1)"
        )
    return [int(f) for f in filters], [int(u) for u in units]


# ---------------------------------------------------------------------------
# skip connections


def input_widths(strategy: SkipStrategy, d_fused: int, widths: Sequence[int]) -> list[int]:
    """Feature width entering each layer of a branch whose outputs are ``widths``."""
    strategy = SkipStrategy.parse(strategy)
    L = len(widths)
    out = [d_fused]
    for l in range(1, L):
        prev = widths[l - 1]
        if strategy is SkipStrategy.NONE:
            out.append(prev)
        elif strategy is SkipStrategy.L_TO_INPUT:
            out.append(prev + d_fused)
        elif strategy is SkipStrategy.ONCE:
            out.append(prev + d_fused if l == L - 1 else prev)
        elif strategy is SkipStrategy.DENSE:
            out.append(d_fused + sum(widths[:l]))
        elif strategy is SkipStrategy.L_TO_NEXT:
            out.append(prev + (d_fused if l == 1 else widths[l - 2]))
    return out


def apply_skip(strategy, layer_index: int, layer_input, original_input,
               all_prev_outputs: Sequence, n_layers: Optional[int] = None):
    """Assemble the input of layer ``layer_index`` (0-based) under ``strategy``.

    ``layer_input`` is the plain input (the previous output, or the original
    input for layer 0); ``all_prev_outputs`` are the outputs of layers
    ``0..layer_index-1``.  Everything is joined on the feature axis.
    """
    strategy = SkipStrategy.parse(strategy)
    if layer_index == 0 or strategy is SkipStrategy.NONE:
        return layer_input
    if strategy is SkipStrategy.L_TO_INPUT:
        return ad.concat([layer_input, original_input])
    if strategy is SkipStrategy.ONCE:
        if n_layers is None:
            raise ValueError("ONCE needs the number of layers")
        if layer_index == n_layers - 1:
            return ad.concat([layer_input, original_input])
        return layer_input
    if strategy is SkipStrategy.DENSE:
        return ad.concat([original_input] + list(all_prev_outputs[:layer_index]))
    if strategy is SkipStrategy.L_TO_NEXT:
        before = original_input if layer_index == 1 else all_prev_outputs[layer_index - 2]
        return ad.concat([layer_input, before])
    raise ConfigError(f"unhandled skip strategy {strategy}")


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Ordered, named parameter arrays."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | Iterable = ()):
        self._arrays: dict[str, np.ndarray] = {}
        items = arrays.items() if isinstance(arrays, Mapping) else arrays
        for name, value in items:
            self._arrays[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name, value):
        if name in self._arrays and np.shape(value) != self._arrays[name].shape:
            raise ShapeError(f"{name}: cannot replace {self._arrays[name].shape} with {np.shape(value)}")
        self._arrays[name] = np.array(value, dtype=np.float64)

    def __contains__(self, name):
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def items(self):
        return self._arrays.items()

    def names(self) -> list[str]:
        return list(self._arrays)

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self._arrays.items()})

    def size(self) -> int:
        return int(sum(v.size for v in self._arrays.values()))

    def shapes(self) -> dict[str, tuple]:
        return {k: v.shape for k, v in self._arrays.items()}

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self._arrays.values())

    def __eq__(self, other):
        if not isinstance(other, ParamStore) or self.names() != other.names():
            return False
        return all(np.array_equal(self[k], other[k]) for k in self)

    def __repr__(self):
        return f"ParamStore({len(self)} tensors, {self.size()} values)"


def is_weight(name: str) -> bool:
    """Weight matrices and kernels; biases are not."""
    return not name.endswith(".b")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes = {}
    cnn_in = input_widths(cfg.skip, cfg.d_fused, cfg.cnn_filters)
    for l, (c_in, c_out) in enumerate(zip(cnn_in, cfg.cnn_filters)):
        shapes[f"cnn.{l}.K"] = (cfg.kernel_size, c_in, c_out)
        shapes[f"cnn.{l}.b"] = (c_out,)
    rnn_in = input_widths(cfg.skip, cfg.d_fused, cfg.rnn_units)
    for l, (d_in, units) in enumerate(zip(rnn_in, cfg.rnn_units)):
        shapes[f"rnn.{l}.W"] = (d_in, units)
        shapes[f"rnn.{l}.U"] = (units, units)
        shapes[f"rnn.{l}.b"] = (units,)
    shapes["head.W"] = (cfg.w * cfg.head_width, cfg.k * cfg.n_targets)
    shapes["head.b"] = (cfg.k * cfg.n_targets,)
    return shapes


def _fans(name: str, shape: tuple) -> tuple[int, int]:
    if len(shape) == 3:  # conv kernel
        return shape[0] * shape[1], shape[0] * shape[2]
    return shape[0], shape[1]


def build_model(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Glorot-uniform weights, zero biases."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if is_weight(name):
            fan_in, fan_out = _fans(name, shape)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    return ParamStore(params)


def check_params(params: ParamStore, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    for name, shape in expected.items():
        if name not in params:
            raise ShapeError(f"parameter {name} missing (expected shape {shape})")
        if params[name].shape != shape:
            raise ShapeError(f"parameter {name} has shape {params[name].shape}, model expects {shape}")
    extra = [n for n in params if n not in expected]
    if extra:
        raise ShapeError(f"unknown parameters for this model: {extra}")


# ---------------------------------------------------------------------------
# forward


def _branch(x, cfg: ModelConfig, layer_fn, n_layers: int):
    outputs = []
    h = x
    for l in range(n_layers):
        inp = apply_skip(cfg.skip, l, h, x, outputs, n_layers=n_layers)
        h = layer_fn(l, inp)
        outputs.append(h)
    return h


def forward_graph(pv: Mapping[str, ad.Var], cfg: ModelConfig, x: ad.Var) -> ad.Var:
    """Record the model on ``x.graph``; ``x`` is ``[..., w, D]``, result ``[..., k, N]``."""
    if x.shape[-2:] != (cfg.w, cfg.d_fused):
        raise ShapeError(f"input {x.shape} does not end in (w, D) = ({cfg.w}, {cfg.d_fused})")
    lead = x.shape[:-2]

    def conv(l, inp):
        y = ad.conv1d(inp, pv[f"cnn.{l}.K"], pv[f"cnn.{l}.b"], padding="same")
        return ad.activation(y, cfg.conv_activation)

    def rnn(l, inp):
        return ad.rnn_layer(inp, pv[f"rnn.{l}.U"], pv[f"rnn.{l}.W"], pv[f"rnn.{l}.b"])

    cnn_out = _branch(x, cfg, conv, cfg.n_layers)
    rnn_out = _branch(x, cfg, rnn, cfg.n_layers)
    joined = ad.concat([x, cnn_out, rnn_out], axis=-1)
    flat = ad.reshape(joined, lead + (cfg.w * cfg.head_width,))
    out = ad.dense(flat, pv["head.W"], pv["head.b"])
    return ad.reshape(out, lead + (cfg.k, cfg.n_targets))


def param_vars(graph: ad.Graph, params: ParamStore, trainable: bool = True) -> dict[str, ad.Var]:
    if trainable:
        return {name: graph.leaf(value, name) for name, value in params.items()}
    return {name: graph.constant(value) for name, value in params.items()}


def forward(params: ParamStore, cfg: ModelConfig, fused) -> np.ndarray:
    """Predict the ``k x N`` block for one ``w x D`` input (or a leading batch of them)."""
    fused = np.asarray(fused, dtype=np.float64)
    graph = ad.Graph()
    pv = param_vars(graph, params, trainable=False)
    x = graph.constant(fused)
    return np.array(forward_graph(pv, cfg, x).value)


def predict(params: ParamStore, cfg: ModelConfig, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Batched :func:`forward` over ``[B, w, D]`` with a fixed chunking order."""
    X = np.asarray(X, dtype=np.float64)
    chunks = [forward(params, cfg, X[i:i + batch_size]) for i in range(0, len(X), batch_size)]
    return np.concatenate(chunks, axis=0)


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: b"PRCN", u32 version, then records until EOF:
#   u32 name length, utf-8 name, u32 rank, rank x u32 dims, little-endian f64 payload

MAGIC = b"PRCN"
FORMAT_VERSION = 1


def save_params(params: ParamStore, path) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", FORMAT_VERSION)
    for name, value in params.items():
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", value.ndim)
        buf += struct.pack(f"<{value.ndim}I", *value.shape)
        buf += np.ascontiguousarray(value, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_params(path, cfg: Optional[ModelConfig] = None) -> ParamStore:
    """Read a checkpoint; when ``cfg`` is given, names and shapes are checked against it."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    if len(data) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = 8
    arrays = {}

    def read(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated record")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    while pos < len(data):
        (n,) = read("<I")
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated record name")
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = read("<I")
        dims = read(f"<{rank}I") if rank else ()
        count = int(np.prod(dims)) if rank else 1
        if pos + 8 * count > len(data):
            raise CheckpointError(f"{path}: truncated payload for {name}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(dims)
        pos += 8 * count
        if name in arrays:
            raise CheckpointError(f"{path}: duplicate parameter {name}")
        arrays[name] = arr.astype(np.float64)
    params = ParamStore(arrays)
    if cfg is not None:
        expected = param_shapes(cfg)
        unknown = [n for n in params if n not in expected]
        if unknown:
            raise CheckpointError(f"{path}: unknown parameter names {unknown}")
        check_params(params, cfg)
    return params
