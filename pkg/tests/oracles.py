"""Independent reference computations used as test oracles."""
import math

import numpy as np

FD_STEP = 1e-5
FD_RTOL = 1e-4


def central_difference(f, x, h=FD_STEP):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x.copy())
        x[idx] = old - h
        fm = f(x.copy())
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    """Largest ``|a - n| / max(1, |n|)`` over all entries."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def naive_instances(values, roles, w, k, s):
    """Element-by-element triple loop over (anchor, window row, column)."""
    T, D = len(values), len(values[0])
    tgt = [c for c in range(D) if roles[c] == "target"]
    obs = [c for c in range(D) if roles[c] == "observed"]
    fut = [c for c in range(D) if roles[c] == "future"]
    out = []
    for t in range(w, T - max(s, k) + 1):  # 1-indexed anchor
        fused = []
        for j in range(w):
            row = t - w + 1 + j  # 1-indexed
            entries = []
            for c in tgt + obs + fut:
                entries.append(values[row - 1][c])
            for c in fut:
                entries.append(values[row + s - 1][c])
            fused.append(entries)
        target = []
        for i in range(k):
            target.append([values[t + i][c] for c in tgt])
        out.append((t, fused, target))
    return out


def loop_mae(pred, truth):
    p, t = np.ravel(pred).tolist(), np.ravel(truth).tolist()
    total = 0.0
    for a, b in zip(p, t):
        total += abs(a - b)
    return total / len(p)


def loop_rmse(pred, truth):
    p, t = np.ravel(pred).tolist(), np.ravel(truth).tolist()
    total = 0.0
    for a, b in zip(p, t):
        total += (a - b) ** 2
    return math.sqrt(total / len(p))
