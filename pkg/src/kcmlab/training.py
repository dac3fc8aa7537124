"""The ERM / MIXUP / KCM / MIXUP+KCM training loop and its evaluation.

All four learning rules share one loop; a mode only switches the optional
stages of each step: draw interpolation weights and mix the minibatch, draw
kernel offsets and average the shifted outputs, then descend on the mean
surrogate loss.
"""

from __future__ import annotations

import enum
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ContractError, TrainingDivergedError
from .kernel import KernelSpec, kcm_forward, kcm_values, predict_labels, sample_offsets
from .mixup import MixupConfig, mix_batch, sample_lambdas
from .models import MlpParams, forward, forward_array, init_mlp
from .tensor import Tensor, log_softmax, minimum, relu, softplus

logger = logging.getLogger(__name__)

METRICS_HEADER = "epoch,mode,train_loss,train_acc,test_acc,wall_ms"


class Mode(str, enum.Enum):
    ERM = "ERM"
    MIXUP = "MIXUP"
    KCM = "KCM"
    MIXUP_KCM = "MIXUP_KCM"

    @property
    def uses_mixup(self) -> bool:
        return self in (Mode.MIXUP, Mode.MIXUP_KCM)

    @property
    def uses_kernel(self) -> bool:
        return self in (Mode.KCM, Mode.MIXUP_KCM)

    @classmethod
    def parse(cls, text: str) -> Mode:
        key = text.strip().upper().replace("+", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ContractError(f"unknown mode {text!r}; expected one of "
                                f"{', '.join(m.value for m in cls)}") from None

    @classmethod
    def from_parts(cls, mixup: bool, kernel: bool) -> Mode:
        return {(False, False): cls.ERM, (True, False): cls.MIXUP,
                (False, True): cls.KCM, (True, True): cls.MIXUP_KCM}[(mixup, kernel)]


@dataclass(frozen=True)
class SeedBundle:
    init: int = 0
    shuffle: int = 1
    mixup: int = 2
    kernel: int = 3
    eval: int = 4

    def as_tuple(self) -> tuple[int, ...]:
        return (self.init, self.shuffle, self.mixup, self.kernel, self.eval)


@dataclass(frozen=True)
class KernelSettings:
    """Kernel used by a run. ``h = 0`` is the degenerate kernel: every offset
    is exactly zero and ``f^K = f``."""

    h: float = 0.01
    n_train: int = 1
    n_eval: int | None = None
    antithetic: bool = False
    per_example: bool = False

    def __post_init__(self):
        if self.h < 0:
            raise ContractError(f"bandwidth must be non-negative, got {self.h}")
        if self.n_train < 1 or (self.n_eval is not None and self.n_eval < 1):
            raise ContractError("Monte Carlo sample sizes must be >= 1")

    @property
    def eval_count(self) -> int:
        return self.n_eval if self.n_eval is not None else self.n_train

    def spec(self, dim: int) -> KernelSpec | None:
        return KernelSpec(self.h, dim, self.antithetic) if self.h > 0 else None

    def draw(self, n: int, dim: int, rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
        """``n x dim`` shared offsets, or ``n x batch x dim`` when per-example."""
        if self.h == 0:
            return np.zeros((n, dim) if batch is None else (n, batch, dim))
        spec = self.spec(dim)
        if batch is None:
            return sample_offsets(spec, n, rng).offsets
        draws = [sample_offsets(spec, n, rng).offsets for _ in range(batch)]
        return np.stack(draws, axis=1)


@dataclass(frozen=True)
class TrainConfig:
    mode: Mode = Mode.ERM
    epochs: int = 10
    batch_size: int = 100
    lr: float = 0.1
    milestones: tuple[int, ...] = ()
    gamma: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    loss: str = "logistic"
    loss_bound: float = 10.0
    hidden: tuple[int, ...] = (64, 64)
    seeds: SeedBundle = field(default_factory=SeedBundle)
    mixup: MixupConfig | None = None
    kernel: KernelSettings | None = None
    max_steps: int | None = None
    eval_every: int = 1

    def __post_init__(self):
        if not self.lr > 0 or self.epochs < 1 or self.batch_size < 1:
            raise ContractError("need lr > 0, epochs >= 1 and batch_size >= 1")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ContractError("momentum and weight decay must be non-negative")
        if self.mode.uses_mixup and self.mixup is None:
            raise ContractError(f"mode {self.mode.value} needs a mixup config")
        if self.mode.uses_kernel and self.kernel is None:
            raise ContractError(f"mode {self.mode.value} needs a kernel config")
        if self.loss not in LOSSES:
            raise ContractError(f"unknown loss {self.loss!r}; expected one of {sorted(LOSSES)}")

    def eval_kernel(self) -> KernelSettings | None:
        return self.kernel if self.mode.uses_kernel else None


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    wall_ms: float

    def csv_row(self, mode: Mode, record_time: bool = True) -> str:
        wall = f"{self.wall_ms:.3f}" if record_time else "0"
        return (f"{self.epoch},{mode.value},{self.train_loss:.17g},{self.train_acc:.17g},"
                f"{self.test_acc:.17g},{wall}")


@dataclass
class TrainResult:
    params: MlpParams
    history: list[EpochMetrics]
    step_losses: list[float]
    config: TrainConfig
    trajectory: list[list[np.ndarray]] | None = None

    @property
    def summary_accuracy(self) -> float:
        return median_last(self.history)


# -- losses ------------------------------------------------------------------

def _logistic(z: Tensor, bound: float) -> Tensor:
    return softplus(-z)


def _hinge(z: Tensor, bound: float) -> Tensor:
    return relu(1.0 - z)


def _clipped_logistic(z: Tensor, bound: float) -> Tensor:
    return minimum(softplus(-z), bound)


LOSSES = {"logistic": _logistic, "hinge": _hinge, "clipped_logistic": _clipped_logistic}


def surrogate_loss_binary(margins, kind: str = "logistic", bound: float = 10.0) -> Tensor:
    """Mean of ``phi(margin)`` where each margin is ``y~ * f``."""
    z = margins if isinstance(margins, Tensor) else Tensor(margins)
    return LOSSES[kind](z, bound).mean()


def surrogate_loss_multiclass(logits, targets) -> Tensor:
    """Mean cross-entropy against soft targets (rows summing to one)."""
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    per_row = (log_softmax(logits) * Tensor(targets)).sum(axis=1)
    return -per_row.mean()


def _batch_loss(out: Tensor, targets: np.ndarray, cfg: TrainConfig) -> Tensor:
    if out.shape[1] == 1:
        return surrogate_loss_binary(out.reshape(-1) * Tensor(targets), cfg.loss, cfg.loss_bound)
    return surrogate_loss_multiclass(out, targets)


def risk_from_values(values: np.ndarray, data: Dataset, kind: str = "logistic",
                     bound: float = 10.0) -> float:
    if values.shape[1] == 1:
        return float(surrogate_loss_binary(values[:, 0] * data.labels, kind, bound).item())
    return float(surrogate_loss_multiclass(values, data.targets()).item())


# -- optimizer ---------------------------------------------------------------

class SGD:
    """SGD with heavy-ball momentum and L2 weight decay:
    ``v <- mu v + (g + wd w)``, ``w <- w - lr v``."""

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            if self.momentum:
                v *= self.momentum
                v += g
                g = v
            p.data -= self.lr * g


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Step decay: multiply by ``gamma`` at every milestone reached."""
    return cfg.lr * cfg.gamma ** sum(1 for m in cfg.milestones if epoch >= m)


# -- evaluation --------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    risk: float


def model_values(params: MlpParams, x: np.ndarray, kernel: KernelSettings | None,
                 eval_seed: int) -> np.ndarray:
    """Outputs of ``f^K`` on ``x`` with offsets from a fresh ``eval_seed`` stream,
    or of ``f`` itself when ``kernel`` is None."""
    f = lambda z: forward_array(params, z)  # noqa: E731
    if kernel is None:
        return f(x)
    rng = np.random.default_rng(eval_seed)
    if kernel.h == 0:
        return f(x)
    return kcm_values(f, kernel.spec(x.shape[1]), kernel.eval_count, x, rng)


def evaluate(params: MlpParams, data: Dataset, kernel: KernelSettings | None = None,
             eval_seed: int = 4, loss: str = "logistic", bound: float = 10.0) -> EvalResult:
    """0-1 accuracy of the sign / argmax classifier and mean surrogate risk."""
    values = model_values(params, data.inputs, kernel, eval_seed)
    pred = predict_labels(values)
    return EvalResult(float(np.mean(pred == data.labels)), risk_from_values(values, data, loss, bound))


def median_last(history: Sequence[EpochMetrics], k: int = 10) -> float:
    """Median test accuracy over the trailing ``k`` epochs."""
    if not history:
        raise ContractError("empty metrics history")
    return float(statistics.median(m.test_acc for m in history[-k:]))


# -- training ----------------------------------------------------------------

def _snapshot(params: MlpParams) -> list[np.ndarray]:
    return [p.data.copy() for p in params.parameters()]


def train(cfg: TrainConfig, train_data: Dataset, test_data: Dataset | None = None,
          params: MlpParams | None = None, record_trajectory: bool = False) -> TrainResult:
    """Run ``cfg.epochs`` epochs of minibatch SGD under ``cfg.mode``.

    Randomness comes from independent streams: ``init`` (weights), ``shuffle``
    (batch order), ``mixup`` (weights and pairing), ``kernel`` (offsets) and
    ``eval`` (offsets for accuracy). Metrics are recorded every epoch.
    """
    if train_data.n == 0:
        raise ContractError("empty training set")
    seeds = cfg.seeds
    if params is None:
        dims = (train_data.dim,) + tuple(cfg.hidden) + (train_data.output_dim,)
        params = init_mlp(dims, np.random.default_rng(seeds.init))
    shuffle_rng = np.random.default_rng(seeds.shuffle)
    mixup_rng = np.random.default_rng(seeds.mixup)
    kernel_rng = np.random.default_rng(seeds.kernel)
    opt = SGD(params.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay)
    targets = train_data.targets()
    kernel = cfg.kernel if cfg.mode.uses_kernel else None
    f = lambda z: forward(params, z)  # noqa: E731

    history: list[EpochMetrics] = []
    step_losses: list[float] = []
    trajectory = [_snapshot(params)] if record_trajectory else None
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        opt.lr = learning_rate(cfg, epoch)
        order = shuffle_rng.permutation(train_data.n)
        epoch_loss, epoch_rows = 0.0, 0
        for lo in range(0, train_data.n, cfg.batch_size):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            idx = order[lo:lo + cfg.batch_size]
            xb, yb = train_data.inputs[idx], targets[idx]
            if cfg.mode.uses_mixup:
                lam = sample_lambdas(cfg.mixup, len(idx), mixup_rng)
                mixed = mix_batch(xb, yb, lam, mixup_rng)
                xb, yb = mixed.inputs, mixed.targets
            if kernel is not None:
                batch = len(idx) if kernel.per_example else None
                offsets = kernel.draw(kernel.n_train, train_data.dim, kernel_rng, batch)
                out = kcm_forward(f, xb, offsets)
            else:
                out = f(Tensor(xb))
            loss = _batch_loss(out, yb, cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(step, {
                    "epoch": epoch, "loss": value, "lr": opt.lr,
                    "max_abs_weight": max(float(np.max(np.abs(p.data))) for p in params.parameters()),
                })
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            step_losses.append(value)
            epoch_loss += value * len(idx)
            epoch_rows += len(idx)
            if trajectory is not None:
                trajectory.append(_snapshot(params))

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            ekernel = cfg.eval_kernel()
            train_acc = evaluate(params, train_data, ekernel, seeds.eval, cfg.loss, cfg.loss_bound).accuracy
            test_acc = (evaluate(params, test_data, ekernel, seeds.eval, cfg.loss, cfg.loss_bound).accuracy
                        if test_data is not None else float("nan"))
        else:
            train_acc = test_acc = float("nan")
        wall_ms = (time.perf_counter() - start) * 1e3
        history.append(EpochMetrics(epoch, epoch_loss / max(epoch_rows, 1), train_acc, test_acc, wall_ms))
        logger.debug("epoch %d loss %.4f train %.4f test %.4f", epoch,
                     history[-1].train_loss, train_acc, test_acc)
    return TrainResult(params, history, step_losses, cfg, trajectory)


def metrics_csv(history: Sequence[EpochMetrics], mode: Mode, record_time: bool = True) -> str:
    lines = [METRICS_HEADER] + [m.csv_row(mode, record_time) for m in history]
    return "\n".join(lines) + "\n"


# -- sweeps --------------------------------------------------------------------

SWEEP_HEADER = ("h,lambda,mode,epochs,batch_size,lr,n_train_mc,seed_init,seed_shuffle,"
                "seed_mixup,seed_kernel,seed_eval,train_risk,test_risk,test_acc")


def sweep_config(base: TrainConfig, h: float, lam: float) -> TrainConfig:
    """Config of one sweep cell: the kernel is on iff ``h > 0`` and Mixup,
    with the constant weight ``lam``, is on iff ``lam > 0``."""
    kernel = replace(base.kernel or KernelSettings(), h=h) if h > 0 else base.kernel
    mixup = replace(base.mixup or MixupConfig(), forced_lambda=lam) if lam > 0 else base.mixup
    mode = Mode.from_parts(lam > 0, h > 0)
    return replace(base, mode=mode, kernel=kernel, mixup=mixup)


def sweep(base: TrainConfig, hs: Sequence[float], lambdas: Sequence[float], train_data: Dataset,
          test_data: Dataset) -> list[dict]:
    """Train one model per ``(h, lambda)`` cell with shared seeds."""
    if not hs or not lambdas:
        raise ContractError("sweep grid is empty")
    rows = []
    for h in hs:
        for lam in lambdas:
            cfg = sweep_config(base, float(h), float(lam))
            result = train(cfg, train_data, test_data)
            ekernel = cfg.eval_kernel()
            tr = evaluate(result.params, train_data, ekernel, cfg.seeds.eval, cfg.loss, cfg.loss_bound)
            te = evaluate(result.params, test_data, ekernel, cfg.seeds.eval, cfg.loss, cfg.loss_bound)
            s = cfg.seeds
            rows.append({
                "h": float(h), "lambda": float(lam), "mode": cfg.mode.value, "epochs": cfg.epochs,
                "batch_size": cfg.batch_size, "lr": cfg.lr,
                "n_train_mc": cfg.kernel.n_train if cfg.mode.uses_kernel else 0,
                "seed_init": s.init, "seed_shuffle": s.shuffle, "seed_mixup": s.mixup,
                "seed_kernel": s.kernel, "seed_eval": s.eval,
                "train_risk": tr.risk, "test_risk": te.risk, "test_acc": te.accuracy,
                "params": result.params,
            })
    return rows


def sweep_csv(rows: Sequence[dict]) -> str:
    cols = SWEEP_HEADER.split(",")
    out = [SWEEP_HEADER]
    for row in rows:
        out.append(",".join(f"{row[c]:.17g}" if isinstance(row[c], float) else str(row[c]) for c in cols))
    return "\n".join(out) + "\n"


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["mode"] = cfg.mode.value
    return d
