"""Mixup: Beta-distributed interpolation weights and mixed minibatches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 1.0
    per_example: bool = True
    min_trick: bool = True
    forced_lambda: float | None = None  # constant weight, used by sweeps

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractError(f"mixup alpha must be positive, got {self.alpha}")
        if self.forced_lambda is not None and not 0.0 <= self.forced_lambda <= 1.0:
            raise ContractError(f"forced lambda must lie in [0, 1], got {self.forced_lambda}")


@dataclass(frozen=True)
class MixedBatch:
    inputs: np.ndarray
    targets: np.ndarray
    partner: np.ndarray
    lambdas: np.ndarray


def sample_lambdas(cfg: MixupConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` weights from Beta(alpha, alpha), folded to ``min(l, 1 - l)``
    under the min trick. A batch-level config repeats one draw ``n`` times."""
    if n < 1:
        raise ContractError(f"need at least one lambda, got {n}")
    if cfg.forced_lambda is not None:
        lam = np.full(n, float(cfg.forced_lambda))
    elif cfg.per_example:
        lam = rng.beta(cfg.alpha, cfg.alpha, size=n)
    else:
        lam = np.full(n, rng.beta(cfg.alpha, cfg.alpha))
    if cfg.min_trick:
        lam = np.minimum(lam, 1.0 - lam)
    return lam


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def mix_batch(inputs: np.ndarray, targets: np.ndarray, lambdas: np.ndarray,
              rng: np.random.Generator, partner: np.ndarray | None = None) -> MixedBatch:
    """Interpolate each row ``j`` with row ``partner[j]``:
    ``x~_j = (1 - l_j) x_j + l_j x_partner``, and likewise for the targets.

    ``targets`` is a vector of +-1 labels (binary) or a ``batch x C`` matrix of
    one-hot / soft targets. The partner map is a uniform random permutation
    drawn from ``rng`` unless given.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(inputs)
    if n == 0:
        raise ContractError("cannot mix an empty batch")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.shape != (n,) or len(targets) != n:
        raise ContractError(f"batch of {n} rows needs {n} lambdas and targets, "
                            f"got {lambdas.shape} and {len(targets)}")
    if partner is None:
        partner = rng.permutation(n)
    lam_x = lambdas.reshape((n,) + (1,) * (inputs.ndim - 1))
    lam_y = lambdas.reshape((n,) + (1,) * (targets.ndim - 1))
    mixed_x = (1.0 - lam_x) * inputs + lam_x * inputs[partner]
    mixed_y = (1.0 - lam_y) * targets + lam_y * targets[partner]
    return MixedBatch(mixed_x, mixed_y, partner, lambdas)
