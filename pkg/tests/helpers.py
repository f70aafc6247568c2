"""Independent oracles: central finite differences and a plain-numpy MLP."""

import numpy as np

H = 1e-5


def central_diff(f, x: np.ndarray, h=H) -> np.ndarray:
    """Gradient of scalar ``f`` w.r.t. array ``x`` (perturbed in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric, floor=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, floor); max over elements."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def np_mlp(layers, x):
    """Forward pass over ``[(W, b, act), ...]`` using raw arrays only."""
    h = x
    for w, b, act in layers:
        h = h @ w + b
        if act == "tanh":
            h = np.tanh(h)
    return h


def mlp_arrays(mlp):
    return [(l.weight.values, l.bias.values, l.activation) for l in mlp.layers]
