"""End-to-end steps shared by the command line and the sweeps."""
from __future__ import annotations

from dataclasses import dataclass

from .config import RunConfig
from .data import (Instance, NormStats, SeriesFrame, build_instances, fit_normalizer, load_frame,
                   normalize, split_train_test, synth_generate)
from .evaluation import EvalResult, evaluate
from .network import ModelConfig, ParamStore, build_model
from .training import TrainReport, train


@dataclass
class Prepared:
    frame: SeriesFrame
    stats: NormStats
    train: list[Instance]
    test: list[Instance]
    model_cfg: ModelConfig
    labels: list[str]


def load_data(run: RunConfig) -> SeriesFrame:
    spec = run.data
    if spec.synth is not None:
        s = spec.synth
        return synth_generate(s.seed, s.T, s.noise_scale)
    return load_frame(spec.path, spec.schema)


def prepare(run: RunConfig, frame: SeriesFrame | None = None) -> Prepared:
    frame = load_data(run) if frame is None else frame
    stats = fit_normalizer(frame, run.data.train_fraction)
    scaled = normalize(frame, stats)
    instances = build_instances(scaled, run.window)
    train_set, test_set = split_train_test(instances, run.data.train_fraction)
    model_cfg = run.model.model_config(run.window.w, run.window.k, frame.n_targets, frame.fused_width)
    return Prepared(frame, stats, train_set, test_set, model_cfg, frame.fused_labels(run.window.s))


def fit(run: RunConfig, prepared: Prepared) -> tuple[ParamStore, TrainReport]:
    params = build_model(prepared.model_cfg, seed=run.seed)
    run.train.seed = run.seed
    return train(params, prepared.model_cfg, prepared.train, run.train)


def fit_and_score(run: RunConfig, prepared: Prepared | None = None) -> tuple[ParamStore, TrainReport, EvalResult]:
    prepared = prepare(run) if prepared is None else prepared
    params, report = fit(run, prepared)
    return params, report, evaluate(params, prepared.model_cfg, prepared.test, prepared.stats)
