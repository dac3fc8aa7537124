"""Empirical Rademacher complexity estimators and bound constants.

The empirical Rademacher complexity of a class ``G`` on a sample
``z_1..z_n`` is ``E_eps sup_{g in G} (1/n) sum_i eps_i g(z_i)`` with
independent uniform signs ``eps_i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ContractError
from .kernel import OffsetBatch
from .models import MlpParams, SpectralBudget, forward, init_mlp, spectral_norm
from .tensor import Tensor

EXHAUSTIVE_MAX_N = 20
CSV_HEADER = "method,n,M,value,stderr"


@dataclass(frozen=True)
class FunctionClassSpec:
    """``linear-l2-ball`` with ``radius``, or ``mlp-spectral`` with per-layer
    spectral radii and layer widths ``dims`` (bias-free layers)."""

    kind: str
    radius: float = 1.0
    budget: SpectralBudget | None = None
    dims: tuple[int, ...] = ()
    offsets: OffsetBatch | None = None  # convolve every member with this kernel sample

    def __post_init__(self):
        if self.kind == "linear-l2-ball":
            if not self.radius > 0:
                raise ContractError(f"radius must be positive, got {self.radius}")
        elif self.kind == "mlp-spectral":
            if self.budget is None or len(self.budget.radii) != len(self.dims) - 1:
                raise ContractError("mlp-spectral class needs one radius per layer")
        else:
            raise ContractError(f"unknown function class {self.kind!r}")


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    stderr: float
    method: str
    n: int
    M: int

    def csv_row(self) -> str:
        return f"{self.method},{self.n},{self.M},{self.value:.17g},{self.stderr:.17g}"


def sign_vectors(n: int) -> np.ndarray:
    """All ``2^n`` sign vectors, one per row."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def _estimate(values: np.ndarray, method: str, n: int, exhaustive: bool) -> RademacherEstimate:
    m = len(values)
    if exhaustive or m < 2:
        return RademacherEstimate(float(values.mean()), 0.0, method, n, m)
    return RademacherEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(m)), method, n, m)


def rademacher_linear_l2(sample: np.ndarray, radius: float = 1.0, method: str = "auto",
                         M: int = 100_000, rng: np.random.Generator | None = None,
                         offsets: OffsetBatch | None = None, chunk: int = 8192) -> RademacherEstimate:
    """Rademacher complexity of ``{x -> w.x : ||w||_2 <= radius}``.

    The inner supremum is ``(radius/n) ||sum_i eps_i x_i||_2``. ``method`` is
    ``exhaustive`` (all sign vectors, n <= 20), ``monte-carlo`` (``M`` sign
    draws, with standard error) or ``auto``. With ``offsets`` each member is
    replaced by its Monte Carlo kernel convolution ``w.(x - mean u)``.
    """
    x = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    n = len(x)
    if n < 1:
        raise ContractError("need at least one sample point")
    if offsets is not None:
        # w.(x - u) averaged over the offsets is w.(mean_i (x - u_i))
        x = (x[None, :, :] - offsets.offsets[:, None, :]).mean(axis=0)
    if method == "auto":
        method = "exhaustive" if n <= EXHAUSTIVE_MAX_N else "monte-carlo"
    if method == "exhaustive":
        if n > EXHAUSTIVE_MAX_N:
            raise CapacityError(f"exhaustive enumeration over 2^{n} sign vectors exceeds 2^{EXHAUSTIVE_MAX_N}")
        signs = sign_vectors(n)
    elif method == "monte-carlo":
        rng = rng if rng is not None else np.random.default_rng(0)
        signs = None
    else:
        raise ContractError(f"unknown method {method!r}")

    def sup(eps: np.ndarray) -> np.ndarray:
        return radius / n * np.linalg.norm(eps @ x, axis=1)

    if signs is not None:
        vals = np.concatenate([sup(signs[i:i + chunk]) for i in range(0, len(signs), chunk)])
        return _estimate(vals, method, n, exhaustive=True)
    vals = []
    remaining = M
    while remaining > 0:
        k = min(chunk, remaining)
        vals.append(sup(rng.choice((-1.0, 1.0), size=(k, n))))
        remaining -= k
    return _estimate(np.concatenate(vals), method, n, exhaustive=False)


def project_spectral(params: MlpParams, budget: SpectralBudget) -> None:
    """Rescale each weight matrix in place so that ``||W_s||_2 <= r_s``."""
    for w, r in zip(params.weights, budget.radii):
        s = spectral_norm(w)
        if s > r:
            w.data *= r / s


def _objective(params: MlpParams, x: np.ndarray, eps: np.ndarray) -> Tensor:
    out = forward(params, x).reshape(-1)
    return (out * Tensor(eps)).mean()


def rademacher_mlp_lower_bound(cls: FunctionClassSpec, sample: np.ndarray, M: int = 20,
                               steps: int = 50, lr: float = 0.1, init: str = "random",
                               rng: np.random.Generator | None = None) -> RademacherEstimate:
    """Lower estimate of the Rademacher complexity of a spectrally bounded MLP class.

    For each of ``M`` sign draws the correlation ``(1/n) sum eps_i f_W(x_i)``
    is maximised by projected gradient ascent over the weights; every iterate
    stays in the class, so the best value found never exceeds the true
    supremum. Biases are held at zero.
    """
    if cls.kind != "mlp-spectral":
        raise ContractError("rademacher_mlp_lower_bound needs an mlp-spectral class")
    x = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    n = len(x)
    rng = rng if rng is not None else np.random.default_rng(0)
    best = np.empty(M)
    for m in range(M):
        eps = rng.choice((-1.0, 1.0), size=n)
        if init == "zero":
            params = MlpParams.from_arrays([np.zeros((o, i)) for i, o in zip(cls.dims[:-1], cls.dims[1:])])
        else:
            params = init_mlp(cls.dims, rng)
        project_spectral(params, cls.budget)
        for b in params.biases:
            b.requires_grad = False

        def score() -> Tensor:
            if cls.offsets is None:
                return _objective(params, x, eps)
            u = cls.offsets.offsets
            shifted = (x[None] - u[:, None, :]).reshape(-1, x.shape[1])
            out = forward(params, shifted).reshape(len(u), n).mean(axis=0)
            return (out * Tensor(eps)).mean()

        obj = score()
        top = obj.item()
        for _ in range(steps):
            for w in params.weights:
                w.grad = None
            obj.backward()
            for w in params.weights:
                if w.grad is not None:
                    w.data += lr * w.grad
            project_spectral(params, cls.budget)
            obj = score()
            top = max(top, obj.item())
        best[m] = top
    return _estimate(best, "ascent-lower-bound", n, exhaustive=False)


def kcm_scale(h: float, cK1: float, B_x: float) -> float:
    """Ratio ``B_* / B_x`` with ``B_* = 3 h c_K + B_x``, the factor by which
    kernel convolution inflates the spectral complexity bound."""
    if h < 0 or cK1 < 0:
        raise ContractError("h and c_K must be non-negative")
    if not B_x > 0:
        raise ContractError(f"B_x must be positive, got {B_x}")
    return (3.0 * h * cK1 + B_x) / B_x
