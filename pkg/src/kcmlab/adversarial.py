"""FGSM / I-FGSM attacks and white- or black-box robustness evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import ConfigError, ContractError
from .kernel import kcm_forward, predict_labels
from .models import MlpParams, forward
from .tensor import Tensor
from .training import KernelSettings, model_values, surrogate_loss_binary, surrogate_loss_multiclass

REPORT_HEADER = "threat,kind,epsilon,iters,clean_acc,adv_acc,max_linf"


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "FGSM"
    epsilon: float = 0.031
    iterations: int = 10
    step_size: float | None = None  # defaults to epsilon / iterations
    box_lo: float | np.ndarray = -np.inf
    box_hi: float | np.ndarray = np.inf
    threat: str = "white-box"
    target: str = "fk"  # attack f^K (MC average) or the raw f
    resample_offsets: bool = False

    def __post_init__(self):
        if self.kind not in ("FGSM", "IFGSM"):
            raise ContractError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ContractError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ContractError("step size must be positive")
        if self.threat not in ("white-box", "black-box"):
            raise ContractError(f"unknown threat model {self.threat!r}")
        if self.target not in ("fk", "f"):
            raise ContractError(f"attack target must be 'fk' or 'f', got {self.target!r}")

    @property
    def step(self) -> float:
        return self.step_size if self.step_size is not None else self.epsilon / self.iterations


@dataclass
class AttackReport:
    clean_acc: float
    adv_acc: float
    max_linf: float
    success: np.ndarray = field(repr=False)
    threat: str = "white-box"
    kind: str = "FGSM"
    epsilon: float = 0.0
    iterations: int = 1

    def csv_row(self) -> str:
        return (f"{self.threat},{self.kind},{self.epsilon:.17g},{self.iterations},"
                f"{self.clean_acc:.17g},{self.adv_acc:.17g},{self.max_linf:.17g}")


LossGrad = Callable[[np.ndarray, np.ndarray], np.ndarray]


def loss_gradient(params: MlpParams, offsets: np.ndarray | None = None, loss: str = "logistic") -> LossGrad:
    """``(x, y) -> d loss / d x`` for the raw model or, given frozen offsets,
    for its Monte Carlo kernel-convoluted version. ``y`` holds +-1 labels
    for a single-output model and class indices otherwise."""

    def grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        xt = Tensor(x, requires_grad=True)
        f = lambda z: forward(params, z)  # noqa: E731
        out = kcm_forward(f, xt, offsets) if offsets is not None else f(xt)
        if out.shape[1] == 1:
            # sum, not mean: the sign of the gradient is unaffected and tiny
            # per-example gradients are not scaled toward zero
            value = surrogate_loss_binary(out.reshape(-1) * Tensor(y.astype(np.float64)), loss) * len(x)
        else:
            targets = np.zeros(out.shape)
            targets[np.arange(len(y)), y] = 1.0
            value = surrogate_loss_multiclass(out, targets) * len(x)
        value.backward()
        return xt.grad

    return grad


def _clip_box(x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    return np.clip(x, cfg.box_lo, cfg.box_hi)


def fgsm(grad_fn: LossGrad, x: np.ndarray, y: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """``clip_box(x + eps * sign(grad_x loss))`` with ``sign(0) = 0``."""
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return x.copy()
    return _clip_box(x + cfg.epsilon * np.sign(grad_fn(x, y)), cfg)


def ifgsm(grad_fn: LossGrad, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
          grad_schedule: Callable[[int], LossGrad] | None = None) -> np.ndarray:
    """Iterated sign-gradient ascent; every iterate is projected onto the
    l-inf ball of radius eps around ``x`` and then onto the box."""
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return x.copy()
    lo, hi = x - cfg.epsilon, x + cfg.epsilon
    adv = x.copy()
    for k in range(cfg.iterations):
        g = (grad_schedule(k) if grad_schedule is not None else grad_fn)(adv, y)
        adv = adv + cfg.step * np.sign(g)
        adv = _clip_box(np.clip(adv, lo, hi), cfg)
    return adv


@dataclass
class TargetRun:
    """A trained model plus the kernel it predicts with (None for ERM/MIXUP)."""

    params: MlpParams
    kernel: KernelSettings | None = None
    eval_seed: int = 4
    loss: str = "logistic"


def _attack_offsets(run: TargetRun, dim: int, seed: int) -> np.ndarray | None:
    if run.kernel is None or run.kernel.h == 0:
        return None
    return run.kernel.draw(run.kernel.eval_count, dim, np.random.default_rng(seed))


def evaluate_robustness(target: TargetRun, cfg: AttackConfig, data: Dataset,
                        source: MlpParams | None = None, attack_seed: int = 7,
                        batch_size: int = 500) -> AttackReport:
    """Craft adversarial examples from the threat model's gradient source and
    measure the target's top-1 accuracy on them.

    White-box attacks differentiate the target itself (through ``f^K`` with a
    frozen offset batch unless ``cfg.target == 'f'``); black-box attacks
    differentiate the independently trained ``source`` model.
    """
    if cfg.threat == "black-box":
        if source is None:
            raise ConfigError("black-box attack needs a source checkpoint")
        gsrc = TargetRun(source, None, loss=target.loss)
    else:
        gsrc = target
    rng = np.random.default_rng(attack_seed)
    use_kernel = cfg.target == "fk" and gsrc.kernel is not None
    offsets = _attack_offsets(gsrc, data.dim, attack_seed) if use_kernel else None
    grad_fn = loss_gradient(gsrc.params, offsets, gsrc.loss)
    schedule = None
    if use_kernel and cfg.resample_offsets and cfg.kind == "IFGSM":
        # fresh offsets for every iteration
        schedule = lambda k: loss_gradient(  # noqa: E731
            gsrc.params, gsrc.kernel.draw(gsrc.kernel.eval_count, data.dim, rng), gsrc.loss)

    parts = []
    for lo in range(0, data.n, batch_size):
        xb, yb = data.inputs[lo:lo + batch_size], data.labels[lo:lo + batch_size]
        if cfg.kind == "FGSM":
            parts.append(fgsm(grad_fn, xb, yb, cfg))
        else:
            parts.append(ifgsm(grad_fn, xb, yb, cfg, schedule))
    x_adv = np.concatenate(parts) if parts else data.inputs.copy()

    clean = predict_labels(model_values(target.params, data.inputs, target.kernel, target.eval_seed))
    adv = predict_labels(model_values(target.params, x_adv, target.kernel, target.eval_seed))
    clean_ok, adv_ok = clean == data.labels, adv == data.labels
    max_linf = float(np.max(np.abs(x_adv - data.inputs))) if data.n else 0.0
    return AttackReport(float(clean_ok.mean()), float(adv_ok.mean()), max_linf, clean_ok & ~adv_ok,
                        cfg.threat, cfg.kind, cfg.epsilon, cfg.iterations if cfg.kind == "IFGSM" else 1)
