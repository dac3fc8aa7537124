"""ReLU multilayer perceptrons and the spectral quantities used to bound them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import Tensor, ensure_tensor, matmul, relu


@dataclass
class MlpParams:
    """Weights ``W_s`` (shape ``d_s x d_{s-1}``) and biases ``b_s`` (``d_s``).

    A single layer is a linear model. Tensors are leaves that require grad, so
    the same object is evaluated and trained in place by the optimizer.
    """

    weights: list[Tensor]
    biases: list[Tensor]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for s, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {s}: weight {w.shape} and bias {b.shape} disagree")
            if s and w.shape[1] != self.weights[s - 1].shape[0]:
                raise ShapeError(
                    f"layer {s} expects {w.shape[1]} inputs but layer {s - 1} emits "
                    f"{self.weights[s - 1].shape[0]}")
            if not (np.all(np.isfinite(w.data)) and np.all(np.isfinite(b.data))):
                raise ContractError(f"layer {s} has non-finite entries")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def depth(self) -> int:
        """Number of hidden layers ``L``."""
        return len(self.weights) - 1

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> MlpParams:
        return MlpParams(
            [Tensor(w.data.copy(), requires_grad=True) for w in self.weights],
            [Tensor(b.data.copy(), requires_grad=True) for b in self.biases],
        )

    @classmethod
    def from_arrays(cls, weights: Sequence, biases: Sequence | None = None) -> MlpParams:
        weights = [np.atleast_2d(np.asarray(w, dtype=np.float64)) for w in weights]
        if biases is None:
            biases = [np.zeros(w.shape[0]) for w in weights]
        return cls(
            [Tensor(w, requires_grad=True) for w in weights],
            [Tensor(np.asarray(b, dtype=np.float64).reshape(-1), requires_grad=True) for b in biases],
        )


def init_mlp(dims: Sequence[int], rng: np.random.Generator, bias: float = 0.0) -> MlpParams:
    """He-initialised MLP with layer widths ``dims = (d_0, ..., d_{L+1})``."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ContractError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.full(fan_out, float(bias)))
    return MlpParams.from_arrays(weights, biases)


def forward(params: MlpParams, x) -> Tensor:
    """Evaluate ``W_{L+1} relu(... relu(W_1 x + b_1) ...) + b_{L+1}`` row-wise."""
    h = ensure_tensor(x)
    if h.ndim == 1:
        h = h.reshape(1, -1)
    if h.ndim != 2 or h.shape[1] != params.dims[0]:
        raise ShapeError(f"input shape {h.shape} does not match input dim {params.dims[0]}")
    last = len(params.weights) - 1
    for s, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = matmul(h, w.T) + b
        if s < last:
            h = relu(h)
    return h


def forward_array(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Tape-free numpy evaluation of :func:`forward`."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    last = len(params.weights) - 1
    for s, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.data.T + b.data
        if s < last:
            h = np.maximum(h, 0.0)
    return h


_START_SEED = 20210205


def spectral_norm(w, iters: int = 1000, tol: float = 1e-15) -> float:
    """Largest singular value of ``w`` by power iteration on ``w^T w``.

    Stops once the relative change of the estimate falls below ``tol``.
    The start vector is a fixed pseudo-random draw so results are reproducible.
    """
    a = np.atleast_2d(np.asarray(w.data if isinstance(w, Tensor) else w, dtype=np.float64))
    if a.size == 0:
        raise ContractError("spectral_norm of an empty matrix")
    if not np.any(a):
        return 0.0
    v = np.random.default_rng(_START_SEED).standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = a @ v
        v_new = a.T @ u
        nv = np.linalg.norm(v_new)
        if nv == 0.0:
            # start vector fell in the null space; restart along the largest column
            v = np.zeros(a.shape[1])
            v[np.argmax(np.linalg.norm(a, axis=0))] = 1.0
            continue
        v = v_new / nv
        new_sigma = float(np.linalg.norm(a @ v))
        if sigma > 0.0 and abs(new_sigma - sigma) <= tol * new_sigma:
            return new_sigma
        sigma = new_sigma
    return sigma


def lipschitz_upper_bound(params: MlpParams) -> float:
    """Product of layer spectral norms, an l2 Lipschitz constant of the network."""
    return float(np.prod([spectral_norm(w) for w in params.weights]))


def numerical_rank(w, rank_tol: float = 1e-10) -> int:
    a = np.asarray(w.data if isinstance(w, Tensor) else w, dtype=np.float64)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


@dataclass(frozen=True)
class SpectralBudget:
    radii: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.radii or any(not r > 0 for r in self.radii):
            raise ContractError(f"spectral radii must be positive, got {self.radii}")

    @classmethod
    def measured(cls, params: MlpParams) -> SpectralBudget:
        return cls(tuple(spectral_norm(w) for w in params.weights))


def complexity_proxy_G(params: MlpParams, budget: SpectralBudget, B_x: float, n: int,
                       rank_tol: float = 1e-10) -> float:
    """Spectral complexity proxy for the MLP class with radii ``budget``:

        G = B_x prod(r_s) / sqrt(n) * sqrt(d_w log((L+1) sqrt(n) max(r_s m_s) / (sqrt(d_w) min r_s)))

    with ``d_w = sum d_{s-1} d_s`` and ``m_s = sqrt(rank W_s)``. When the log
    argument is at most 1 the log is clamped to 0 and a warning is emitted.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    radii = np.asarray(budget.radii, dtype=np.float64)
    if len(radii) != len(params.weights):
        raise ContractError(f"{len(radii)} radii for {len(params.weights)} layers")
    dims = params.dims
    d_w = sum(a * b for a, b in zip(dims[:-1], dims[1:]))
    m = np.sqrt([numerical_rank(w, rank_tol) for w in params.weights])
    n_layers = len(params.weights)
    arg = n_layers * math.sqrt(n) * float(np.max(radii * m)) / (math.sqrt(d_w) * float(radii.min()))
    log_term = math.log(arg) if arg > 0 else -math.inf
    if log_term <= 0.0:
        warnings.warn(f"log argument {arg:.4g} <= 1; clamping the log term to 0", RuntimeWarning)
        log_term = 0.0
    return B_x * float(np.prod(radii)) / math.sqrt(n) * math.sqrt(d_w * log_term)
