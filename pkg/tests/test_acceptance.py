"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The trained-model criteria (shift benefit, plateau, skip study, saliency
localization) share one cache of trained runs, so the s=6 / LtoInput models
are trained once.
"""
import functools
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from pararcnn import autodiff as ad
from pararcnn.cli import main
from pararcnn.config import config_from_dict
from pararcnn.data import (SeriesFrame, WindowConfig, build_instances, denormalize, fit_normalizer, load_frame,
                           normalize, stack_instances, synth_generate)
from pararcnn.evaluation import mae, rmse
from pararcnn.explain import TargetSelector, grad_cam, input_gradient
from pararcnn.network import (ModelConfig, build_model, forward, forward_graph, load_params, param_vars, predict,
                              save_params)
from pararcnn.pipeline import fit_and_score, prepare
from pararcnn.training import TrainConfig, dataset_mse, train

from gradcases import OPS, gradient_gap, op_case
from oracles import FD_RTOL, central_difference, loop_mae, loop_rmse, naive_instances, relative_error

FIXTURES = Path(__file__).parent / "fixtures"
SEEDS_3 = (0, 1, 2)
SEEDS_5 = (0, 1, 2, 3, 4)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:>2} ({title}): {detail}")
        assert ok, detail
    return emit


# -- shared synthetic study ------------------------------------------------------

def _study_config(s, skip, seed):
    return config_from_dict({
        "data": {"synth": {"T": 3000, "noise_scale": 0.1, "seed": 0}},
        "window": {"w": 24, "k": 6, "s": s},
        "model": {"layers": 4, "width_divisor": 8, "skip": skip},
        "seed": seed,
    })


@functools.lru_cache(maxsize=None)
def _prepared(s):
    return prepare(_study_config(s, "ltoinput", 0))


@functools.lru_cache(maxsize=None)
def trained(s, skip, seed):
    """(params, report, metrics, prepared, seconds) for one synthetic-study cell."""
    run = _study_config(s, skip, seed)
    prepared = _prepared(s)
    if skip != "ltoinput":
        prepared = prepare(run, prepared.frame)
    start = time.perf_counter()
    params, report, metrics = fit_and_score(run, prepared)
    return params, report, metrics, prepared, time.perf_counter() - start


def median_mae(s, skip, seeds):
    return statistics.median(trained(s, skip, seed)[2].mae for seed in seeds)


def _elapsed(cells):
    return sum(trained(*cell)[4] for cell in cells)


# -- 1 ---------------------------------------------------------------------------

def test_criterion_01_gradient_correctness(verdict):
    start = time.perf_counter()
    worst_op = {name: max(gradient_gap(*op_case(name, np.random.default_rng(seed)), seed) for seed in range(10))
                for name in OPS}
    worst_model = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        cfg = ModelConfig(w=8, k=2, n_targets=1, d_fused=4, cnn_filters=[8, 4], rnn_units=[8, 4])
        params = build_model(cfg, seed)
        X, Y = rng.random((1, 8, 4)), rng.random((1, 2, 1))

        def loss_of(p):
            g = ad.Graph()
            return ad.mse(forward_graph(param_vars(g, p), cfg, g.constant(X)), Y), g

        loss, g = loss_of(params)
        grads = g.backward(loss)
        for name in params:
            def f(v, name=name):
                q = params.copy()
                q[name] = v
                return float(loss_of(q)[0].value)
            worst_model = max(worst_model, relative_error(grads[name], central_difference(f, params[name])))
    seconds = time.perf_counter() - start
    worst = max(max(worst_op.values()), worst_model)
    verdict(1, "gradient correctness", worst < FD_RTOL and seconds < 120,
            f"worst op error {max(worst_op.values()):.2e}, full model {worst_model:.2e} "
            f"(tol {FD_RTOL:g}), {seconds:.1f}s")


# -- 2 ---------------------------------------------------------------------------

def test_criterion_02_instance_builder_grid(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    full = SeriesFrame(["t", "o", "f1", "f2"], ["target", "observed", "future", "future"],
                       rng.standard_normal((60, 4)))
    values = full.values.tolist()
    roles = [r.value for r in full.roles]
    cases = mismatches = 0
    for w in range(2, 7):
        for k in range(1, 5):
            for s in range(1, w + k + 1):
                cfg = WindowConfig(w, k, s)
                for T in range(w + max(s, k), 61):
                    got = build_instances(full.head(T), cfg)
                    want = naive_instances(values[:T], roles, w, k, s)
                    cases += 1
                    same = len(got) == len(want) and all(
                        i.anchor == t and np.array_equal(i.fused, f) and np.array_equal(i.target, y)
                        for i, (t, f, y) in zip(got, want))
                    mismatches += not same
    seconds = time.perf_counter() - start
    verdict(2, "instance-builder oracle", mismatches == 0 and seconds < 60,
            f"{cases} grid cases, {mismatches} mismatches, {seconds:.1f}s")


# -- 3 ---------------------------------------------------------------------------

def test_criterion_03_one_shot_invariant(verdict):
    rng = np.random.default_rng(3)
    failures = []
    for trial, (w, k, n_t) in enumerate([(6, 2, 1), (8, 3, 2), (5, 5, 1), (4, 1, 3)]):
        roles = ["target"] * n_t + ["observed", "future"]
        frame = SeriesFrame([f"c{i}" for i in range(len(roles))], roles, rng.standard_normal((40, len(roles))))
        window = WindowConfig(w, k, min(2, w + k))
        cfg = ModelConfig(w=w, k=k, n_targets=n_t, d_fused=frame.fused_width, cnn_filters=[4, 2], rnn_units=[4, 2])
        params = build_model(cfg, trial)
        before = build_instances(frame, window)
        out = predict(params, cfg, stack_instances(before)[0])
        if out.shape[1:] != (k, n_t):
            failures.append(f"shape {out.shape}")
        for inst in before:
            mutated = frame.values.copy()
            mutated[inst.anchor:, frame.target_columns] += 100.0  # every target at or after t+1
            again = build_instances(SeriesFrame(frame.names, frame.roles, mutated), window)
            twin = next(i for i in again if i.anchor == inst.anchor)
            if forward(params, cfg, twin.fused).tobytes() != forward(params, cfg, inst.fused).tobytes():
                failures.append(f"anchor {inst.anchor}")
                break
    verdict(3, "one-shot invariant", not failures,
            "future-target mutation leaves outputs bitwise unchanged; output k x N" if not failures
            else f"violations: {failures}")


# -- 4 / 5 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_04_shift_benefit(verdict):
    m1, m6 = median_mae(1, "ltoinput", SEEDS_3), median_mae(6, "ltoinput", SEEDS_3)
    seconds = _elapsed([(s, "ltoinput", seed) for s in (1, 6) for seed in SEEDS_3])
    verdict(4, "shift benefit", m6 <= 0.8 * m1 and seconds < 600,
            f"median MAE s=1 {m1:.4f}, s=6 {m6:.4f}, ratio {m6 / m1:.3f} (need <= 0.8), {seconds:.0f}s")


@pytest.mark.slow
def test_criterion_05_shift_plateau(verdict):
    m1, m6, m24 = (median_mae(s, "ltoinput", SEEDS_3) for s in (1, 6, 24))
    gap, spread = m1 - m6, abs(m6 - m24)
    verdict(5, "shift plateau", spread < 0.25 * gap,
            f"|MAE(s=k) - MAE(s=w)| = {spread:.4f} vs 0.25 x gap {0.25 * gap:.4f}")


# -- 6 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_skip_study(verdict):
    none, lto = median_mae(6, "none", SEEDS_5), median_mae(6, "ltoinput", SEEDS_5)
    verdict(6, "skip-connection study", none >= lto,
            f"median MAE none {none:.4f} vs ltoinput {lto:.4f} over {len(SEEDS_5)} seeds")


# -- 7 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_overfit(verdict):
    frame = synth_generate(0, 3000, 0.1)
    instances = build_instances(normalize(frame, fit_normalizer(frame, 0.8)), WindowConfig(24, 6, 6))[:64]
    cfg = ModelConfig(w=24, k=6, n_targets=1, d_fused=4, cnn_filters=[16, 8], rnn_units=[16, 8])
    start = time.perf_counter()
    losses = []
    for seed in SEEDS_3:
        tcfg = TrainConfig(l1=0.0, l2=0.0, max_epochs=2000, patience=2000, seed=seed)
        params, report = train(build_model(cfg, seed), cfg, instances, tcfg, val_instances=instances)
        X, Y = stack_instances(instances)
        losses.append(dataset_mse(params, cfg, X, Y))
    seconds = time.perf_counter() - start
    hits = sum(v < 1e-3 for v in losses)
    verdict(7, "overfit sanity", hits >= 2 and seconds < 300,
            f"train MSE per seed {[f'{v:.1e}' for v in losses]}, {hits}/3 below 1e-3, {seconds:.0f}s")


# -- 8 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_saliency_localization(verdict):
    per_seed = []
    for seed in SEEDS_3:
        params, _, _, prepared, _ = trained(6, "ltoinput", seed)
        totals = np.zeros(prepared.model_cfg.d_fused)
        sample = prepared.test[::10]
        for inst in sample:
            totals += grad_cam(params, prepared.model_cfg, inst, shift=6).weights.sum(axis=0)
        per_seed.append(totals / len(sample))
    labels = _prepared(6).labels
    covariates = [i for i, name in enumerate(labels) if name != "z"]
    medians = np.median(np.array(per_seed), axis=0)
    winner = labels[max(covariates, key=lambda i: medians[i])]

    cfg = ModelConfig(w=5, k=2, n_targets=1, d_fused=4, cnn_filters=[3, 2], rnn_units=[3, 2])
    params = build_model(cfg, 1)
    fused = np.random.default_rng(1).random((5, 4))
    grad = input_gradient(params, cfg, fused, TargetSelector())
    fd = relative_error(grad, central_difference(lambda x: float(forward(params, cfg, x).sum()), fused))
    summary = ", ".join(f"{labels[i]} {medians[i]:.2f}" for i in covariates)
    verdict(8, "saliency localization", winner == "y(+6)" and fd < FD_RTOL,
            f"median column sums: {summary}; top covariate {winner}; FD error {fd:.1e}")


# -- 9 ---------------------------------------------------------------------------

def test_criterion_09_metrics_oracle(verdict):
    rng = np.random.default_rng(9)
    worst, ordered = 0.0, 0
    for _ in range(100):
        shape = tuple(rng.integers(1, 6, size=3))
        pred, truth = rng.standard_normal(shape) * 10, rng.standard_normal(shape) * 10
        worst = max(worst, abs(mae(pred, truth) - loop_mae(pred, truth)), abs(rmse(pred, truth) - loop_rmse(pred, truth)))
        ordered += rmse(pred, truth) >= mae(pred, truth)
    values = rng.standard_normal((50, 3)) * np.array([5.0, 0.1, 3.0]) + np.array([2.0, -1.0, 0.0])
    frame = SeriesFrame(["a", "b", "c"], ["target", "observed", "future"], values)
    stats = fit_normalizer(frame, 0.8)
    round_trip = float(np.abs(denormalize(normalize(frame, stats).values, stats) - values).max())
    verdict(9, "metrics oracle", worst <= 1e-12 and ordered == 100 and round_trip <= 1e-12,
            f"loop-oracle gap {worst:.1e}, rmse >= mae in {ordered}/100, round trip {round_trip:.1e}")


# -- 10 --------------------------------------------------------------------------

def test_criterion_10_determinism_and_persistence(verdict, tmp_path):
    run = config_from_dict({
        "data": {"synth": {"T": 400, "noise_scale": 0.1, "seed": 2}},
        "window": {"w": 12, "k": 3, "s": 3},
        "model": {"layers": 3, "width_divisor": 8},
        "train": {"max_epochs": 8},
        "seed": 5, "deterministic": True,
    })
    p1, r1, m1 = fit_and_score(run.copy())
    p2, r2, m2 = fit_and_score(run.copy())
    same_runs = r1.to_text() == r2.to_text() and m1.to_text() == m2.to_text() and p1 == p2
    save_params(p1, tmp_path / "a.prcn")
    loaded = load_params(tmp_path / "a.prcn")
    save_params(loaded, tmp_path / "b.prcn")
    prepared = prepare(run)
    X = stack_instances(prepared.test)[0]
    cfg = prepared.model_cfg
    bitwise = (predict(loaded, cfg, X).tobytes() == predict(p1, cfg, X).tobytes()
               and (tmp_path / "a.prcn").read_bytes() == (tmp_path / "b.prcn").read_bytes())
    verdict(10, "determinism and persistence", same_runs and bitwise,
            f"repeat runs identical: {same_runs}; checkpoint round trip bitwise: {bitwise}")


# -- 11 --------------------------------------------------------------------------

def test_criterion_11_real_data_pipeline(verdict, tmp_path, capsys):
    config = FIXTURES / "water_stage.yaml"
    frame = load_frame(FIXTURES / "water_stage_excerpt.csv",
                       {"WS_S1": "target", "WS_S4": "observed", "FLOW_S25": "observed",
                        "RAIN": "future", "GATE_S25": "future", "PUMP_S26": "future"})
    stage = frame.values[:, 0]
    in_range = len(frame) == 1000 and stage.min() >= -1.25 and stage.max() <= 4.05
    codes = [main([cmd, "--config", str(config), "--out", str(tmp_path)]) for cmd in ("train", "eval", "explain")]
    capsys.readouterr()
    metrics = dict(line.split(",") for line in (tmp_path / "metrics.txt").read_text().splitlines()[1:])
    saliency = np.loadtxt(tmp_path / "saliency.txt", delimiter=",", skiprows=1)
    finite = all(np.isfinite(float(v)) for v in metrics.values()) and np.isfinite(saliency).all()
    verdict(11, "real-data pipeline liveness", codes == [0, 0, 0] and finite and in_range,
            f"exit codes {codes}, mae {float(metrics['mae']):.4f}, rmse {float(metrics['rmse']):.4f}, "
            f"finite outputs: {finite}")
