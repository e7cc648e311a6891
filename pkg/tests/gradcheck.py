"""Central finite-difference gradient checks for single layers, in float64."""

import numpy as np

from wavewatch.neural import ConvTranspose1D, Conv1D, Dense, Dropout, Flatten, ReLU, Reshape, Sigmoid

EPS = 1e-5
LAYER_KINDS = ("dense", "conv1d", "convt1d", "dropout", "relu", "sigmoid", "flatten", "reshape")


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def _away_from_kinks(x, rng):
    # keep ReLU inputs out of the +-eps band around zero
    small = np.abs(x) < 1e-2
    x[small] = np.sign(x[small] + 1e-12) * rng.uniform(0.05, 0.5, small.sum())
    return x


def random_layer(kind, rng):
    """A randomly sized layer of ``kind`` plus a matching input batch."""
    batch = int(rng.integers(1, 4))
    if kind == "dense":
        i, o = rng.integers(1, 8, 2)
        return Dense(int(i), int(o), l2=0.0, rng=rng, dtype=np.float64), rng.normal(size=(batch, i))
    if kind in ("conv1d", "convt1d"):
        length = int(rng.integers(3, 20))
        c, f = (int(v) for v in rng.integers(1, 4, 2))
        k, s = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        cls = Conv1D if kind == "conv1d" else ConvTranspose1D
        layer = cls(c, f, k, s, rng=rng, dtype=np.float64)
        layer.params["b"] = rng.normal(size=layer.params["b"].shape)
        return layer, rng.normal(size=(batch, length, c))
    shape = (batch, int(rng.integers(1, 6)), int(rng.integers(1, 6)))
    x = rng.normal(size=shape)
    if kind == "dropout":
        return Dropout(float(rng.uniform(0.1, 0.6))), x
    if kind == "relu":
        return ReLU(), _away_from_kinks(x, rng)
    if kind == "sigmoid":
        return Sigmoid(), 3 * x
    if kind == "flatten":
        return Flatten(), x
    if kind == "reshape":
        return Reshape((shape[2], shape[1])), x
    raise ValueError(kind)


def check_layer(layer, x, seed=0):
    """Max relative error between analytic and numeric gradients (input and every parameter)."""
    rng = np.random.default_rng(seed)
    training = isinstance(layer, Dropout)

    def run(inp):
        # dropout masks are redrawn from the same seed so the function is fixed
        return layer.forward(inp, training=training, rng=np.random.default_rng(seed + 1))

    y = run(x)
    proj = rng.normal(size=y.shape)
    dx = layer.backward(proj)
    analytic = {"x": dx, **{k: g.copy() for k, g in layer.grads.items()}}

    def objective():
        out = run(x)
        layer._cache = None
        return float(np.sum(out * proj))

    worst = 0.0
    targets = {"x": x, **layer.params}
    for name, arr in targets.items():
        num = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + EPS
            plus = objective()
            arr[idx] = orig - EPS
            minus = objective()
            arr[idx] = orig
            num[idx] = (plus - minus) / (2 * EPS)
        worst = max(worst, rel_error(analytic[name], num))
    return worst


def run_trials(kind, trials=50, seed=0):
    rng = np.random.default_rng([seed, LAYER_KINDS.index(kind)])
    return max(check_layer(*random_layer(kind, rng), seed=t) for t in range(trials))
