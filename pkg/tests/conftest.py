import numpy as np
import pytest


def mlp_numpy(weights, biases, x):
    """Plain numpy ReLU MLP, independent of the tape."""
    h = x
    for s, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w.T + b
        if s < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def central_difference(fn, arrays, step=1e-5):
    """Central finite-difference gradient of scalar ``fn()`` w.r.t. each
    array in ``arrays`` (perturbed in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = a[i]
            a[i] = orig + step
            up = fn()
            a[i] = orig - step
            down = fn()
            a[i] = orig
            g[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def two_moon_pair():
    from kcmlab import two_moons

    return two_moons(1000, 0.2, 0), two_moons(1000, 0.2, 1, split="test")
