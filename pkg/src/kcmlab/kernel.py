"""Kernel-convoluted models: offset sampling and Monte Carlo local averaging.

A kernel-convoluted model replaces ``f`` by ``f^K(x) = E_{u~K} f(x - u)``.
With a product-Gaussian kernel of bandwidth ``h`` the offsets are draws from
``N(0, h^2 I_d)`` and ``f^K`` is approximated by ``N^-1 sum_i f(x - u_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import Tensor, ensure_tensor

FAMILIES = ("gaussian-product",)


@dataclass(frozen=True)
class KernelSpec:
    h: float
    dim: int
    antithetic: bool = False
    family: str = "gaussian-product"

    def __post_init__(self):
        if not self.h > 0:
            raise ContractError(f"bandwidth must be positive, got {self.h}")
        if self.dim < 1:
            raise ContractError(f"kernel dimension must be >= 1, got {self.dim}")
        if self.family not in FAMILIES:
            raise ContractError(f"unknown kernel family {self.family!r}")


@dataclass(frozen=True)
class OffsetBatch:
    offsets: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.offsets.shape[0]

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    def scaled(self, factor: float) -> OffsetBatch:
        return OffsetBatch(self.offsets * factor, dict(self.provenance, scale=factor))

    @classmethod
    def zeros(cls, n: int, dim: int) -> OffsetBatch:
        return cls(np.zeros((n, dim)), {"kind": "zeros"})


def sample_offsets(spec: KernelSpec, n: int, rng: np.random.Generator) -> OffsetBatch:
    """Draw ``n`` offsets from the kernel.

    With ``spec.antithetic`` only ``n/2`` draws are made and the batch is
    ``[u_1, -u_1, u_2, -u_2, ...]``. For a fixed generator state the offsets
    are exactly ``h`` times the unit-bandwidth draws.
    """
    if n < 1:
        raise ContractError(f"need at least one offset, got {n}")
    if spec.antithetic:
        if n % 2:
            raise ContractError(f"antithetic sampling needs an even count, got {n}")
        half = rng.standard_normal((n // 2, spec.dim))
        unit = np.empty((n, spec.dim))
        unit[0::2] = half
        unit[1::2] = -half
    else:
        unit = rng.standard_normal((n, spec.dim))
    return OffsetBatch(spec.h * unit, {"h": spec.h, "n": n, "antithetic": spec.antithetic})


def kernel_mean_norm(spec: KernelSpec | None = None, *, h: float | None = None,
                     dim: int | None = None) -> float:
    """Closed-form ``E||u||_2`` for ``u ~ N(0, h^2 I_d)``:
    ``h sqrt(2) Gamma((d+1)/2) / Gamma(d/2)`` (the chi-distribution mean).

    Accepts ``h=0`` through the keyword form, which returns 0.
    """
    if spec is not None:
        h, dim = spec.h, spec.dim
    if h is None or dim is None:
        raise ContractError("need a KernelSpec or both h and dim")
    if h < 0 or dim < 1:
        raise ContractError(f"invalid kernel h={h}, dim={dim}")
    if h == 0:
        return 0.0
    return h * math.sqrt(2.0) * math.exp(math.lgamma((dim + 1) / 2) - math.lgamma(dim / 2))


def kcm_forward(f: Callable[[Tensor], Tensor], x, offsets: OffsetBatch | np.ndarray) -> Tensor:
    """Monte Carlo kernel-convoluted output ``N^-1 sum_i f(x - u_i)``.

    ``offsets`` is either a shared ``N x d`` batch applied to every row of
    ``x`` or a per-example ``N x batch x d`` array. All shifted copies are
    evaluated in one call to ``f``; gradients flow to ``x`` and to whatever
    parameters ``f`` closes over.
    """
    x = ensure_tensor(x)
    u = offsets.offsets if isinstance(offsets, OffsetBatch) else np.asarray(offsets, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"kcm_forward expects a batch x d input, got shape {x.shape}")
    batch, d = x.shape
    if u.ndim == 2:
        if u.shape[1] != d:
            raise ShapeError(f"offset dim {u.shape[1]} does not match input dim {d}")
        u = u[:, None, :]
    elif u.ndim != 3 or u.shape[1:] != (batch, d):
        raise ShapeError(f"per-example offsets of shape {u.shape} do not match input {x.shape}")
    n = u.shape[0]
    shifted = (x.reshape(1, batch, d) - u).reshape(n * batch, d)
    out = f(shifted)
    return out.reshape(n, batch, out.shape[1]).mean(axis=0)


def kcm_forward_array(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                      offsets: OffsetBatch | np.ndarray) -> np.ndarray:
    """Tape-free counterpart of :func:`kcm_forward` on numpy arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    u = offsets.offsets if isinstance(offsets, OffsetBatch) else np.asarray(offsets, dtype=np.float64)
    batch, d = x.shape
    if u.ndim == 2:
        if u.shape[1] != d:
            raise ShapeError(f"offset dim {u.shape[1]} does not match input dim {d}")
        u = u[:, None, :]
    n = u.shape[0]
    out = f((x[None] - u).reshape(n * batch, d))
    return out.reshape(n, batch, -1).mean(axis=0)


def predict_labels(values: np.ndarray) -> np.ndarray:
    """Sign (+1 at zero) for a single output column, argmax otherwise."""
    values = np.atleast_2d(values)
    if values.shape[1] == 1:
        return np.where(values[:, 0] >= 0, 1, -1)
    return np.argmax(values, axis=1)


def kcm_predict(f: Callable[[np.ndarray], np.ndarray], spec: KernelSpec | None, n_eval: int,
                x: np.ndarray, rng: np.random.Generator, chunk: int = 4096) -> np.ndarray:
    """Labels of ``sign(f^K)`` (binary) or ``argmax f^K`` with fresh eval offsets.

    ``spec=None`` predicts from the raw model. One offset batch is drawn and
    shared by all rows.
    """
    if n_eval < 1:
        raise ContractError(f"n_eval must be >= 1, got {n_eval}")
    return predict_labels(kcm_values(f, spec, n_eval, x, rng, chunk))


def kcm_values(f: Callable[[np.ndarray], np.ndarray], spec: KernelSpec | None, n_eval: int,
               x: np.ndarray, rng: np.random.Generator, chunk: int = 4096) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if spec is None:
        return f(x)
    offsets = sample_offsets(spec, n_eval, rng)
    rows = max(1, chunk // n_eval)
    parts = [kcm_forward_array(f, x[i:i + rows], offsets) for i in range(0, len(x), rows)]
    return np.concatenate(parts, axis=0)
