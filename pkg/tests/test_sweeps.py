import statistics

import pytest

from pararcnn.config import config_from_dict
from pararcnn.errors import ConfigError
from pararcnn.network import layer_widths
from pararcnn.sweeps import SweepResult, SweepRow, SweepSpec, reduced, run_sweep, sweep_layers, sweep_shift, sweep_skip


def _base(**train):
    t = {"max_epochs": 2, "patience": 2, "batch_size": 16}
    t.update(train)
    return config_from_dict({
        "data": {"synth": {"T": 200, "noise_scale": 0.1, "seed": 0}},
        "window": {"w": 8, "k": 2, "s": 2},
        "model": {"layers": 2, "width_divisor": 16},
        "train": t,
    })


def test_reduced_widths():
    assert reduced(_base()).model.widths() == ([32, 16], [16, 8])
    assert layer_widths(4, 8) == ([32, 16, 8, 4], [16, 8, 4, 2])


def test_layer_sweep_rejects_too_deep():
    with pytest.raises(ConfigError):
        sweep_layers(_base(), [2, 9], [0])


def test_shift_sweep_rejects_out_of_range():
    with pytest.raises(ConfigError):
        sweep_shift(_base(), [0, 3], [0])
    with pytest.raises(ConfigError):
        sweep_shift(_base(), [11], [0])


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("depth", [1], [0], _base())
    with pytest.raises(ConfigError):
        SweepSpec("shift", [], [0], _base())
    with pytest.raises(ConfigError):
        sweep_skip(_base(), ["sideways"], [0])


def test_single_value_single_row():
    result = sweep_shift(_base(), [3], [0])
    assert len(result.rows) == 1
    assert result.rows[0].value == 3 and result.rows[0].seed == 0


def test_summary_recomputes_from_rows():
    rows = [SweepRow(1, s, m, m * 2) for s, m in enumerate([0.3, 0.1, 0.2])]
    rows += [SweepRow(6, s, m, m * 2) for s, m in enumerate([0.05, 0.07])]
    result = SweepResult("shift", rows)
    summary = {s.value: s for s in result.summary()}
    assert summary[1].median_mae == statistics.median([0.3, 0.1, 0.2]) == 0.2
    assert (summary[1].min_mae, summary[1].max_mae) == (0.1, 0.3)
    assert summary[6].median_mae == pytest.approx(0.06)
    lines = result.summary_text().splitlines()
    assert lines[0] == "param_value,median_mae,min,max"
    assert lines[1] == "1,0.2,0.1,0.3"


def test_sweep_is_reproducible_and_writes_files(tmp_path):
    spec = SweepSpec("skip", ["none", "ltoinput"], [0, 1], _base())
    a, b = run_sweep(spec), run_sweep(spec)
    assert a.rows_text() == b.rows_text()
    assert [(r.value, r.seed) for r in a.rows] == [("none", 0), ("none", 1), ("ltoinput", 0), ("ltoinput", 1)]
    rows, summary = a.write(tmp_path)
    assert rows.name == "sweep_skip.txt" and summary.name == "sweep_skip_summary.txt"
    assert rows.read_text().splitlines()[0] == "param_value,seed,mae,rmse"
    assert len(summary.read_text().splitlines()) == 3


def test_seeds_change_results():
    result = sweep_shift(_base(), [2], [0, 1])
    assert result.rows[0].mae != result.rows[1].mae
