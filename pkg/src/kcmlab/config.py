"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, keys are dotted
(``kernel.h``, ``mixup.alpha``). Unknown keys are errors. Every key, its
type and default is listed in :data:`SCHEMA`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .adversarial import AttackConfig
from .errors import ConfigError, ContractError
from .mixup import MixupConfig
from .training import KernelSettings, Mode, SeedBundle, TrainConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _opt(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    return lambda text: None if text.strip() in ("", "none") else parse(text)


def _mode(text: str) -> Mode:
    return Mode.parse(text)


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "mode": (_mode, Mode.ERM),
    "dataset": (str, "twomoons"),
    "data.n_train": (int, 1000),
    "data.n_test": (int, 1000),
    "data.noise": (float, 0.2),
    "data.seed": (int, 0),
    "data.path": (str, ""),
    "data.limit_train": (_opt(int), None),
    "data.limit_test": (_opt(int), None),
    "data.normalize": (_opt(_bool), None),
    "model.hidden": (_ints, (64, 64)),
    "train.epochs": (int, 100),
    "train.batch_size": (int, 100),
    "train.lr": (float, 0.1),
    "train.momentum": (float, 0.9),
    "train.weight_decay": (float, 1e-4),
    "train.milestones": (_ints, ()),
    "train.gamma": (float, 0.1),
    "train.loss": (str, "logistic"),
    "train.loss_bound": (float, 10.0),
    "seed.init": (int, 0),
    "seed.shuffle": (int, 1),
    "seed.mixup": (int, 2),
    "seed.kernel": (int, 3),
    "seed.eval": (int, 4),
    "mixup.enabled": (_opt(_bool), None),
    "mixup.alpha": (float, 1.0),
    "mixup.min_trick": (_bool, True),
    "mixup.per_example": (_bool, True),
    "mixup.lambda": (_opt(float), None),
    "kernel.h": (float, 0.01),
    "kernel.n_train": (int, 1),
    "kernel.n_eval": (_opt(int), None),
    "kernel.antithetic": (_bool, False),
    "kernel.per_example": (_bool, False),
    "attack.kind": (str, "FGSM"),
    "attack.epsilon": (float, 0.031),
    "attack.iters": (int, 10),
    "attack.step": (_opt(float), None),
    "attack.threat": (str, "white-box"),
    "attack.target": (str, "fk"),
    "attack.box_lo": (_opt(float), None),
    "attack.box_hi": (_opt(float), None),
    "attack.seed": (int, 7),
    "attack.resample": (_bool, False),
    "attack.checkpoint": (str, ""),
    "attack.source": (str, ""),
    "eval.checkpoint": (str, ""),
    "contour.resolution": (int, 100),
    "contour.margin": (float, 0.5),
    "rademacher.class": (str, "linear"),
    "rademacher.n": (int, 8),
    "rademacher.dim": (int, 2),
    "rademacher.M": (int, 100_000),
    "rademacher.method": (str, "auto"),
    "rademacher.radius": (float, 1.0),
    "rademacher.seed": (int, 0),
    "rademacher.steps": (int, 50),
    "rademacher.hidden": (_ints, (16,)),
    "sweep.h": (_floats, (0.005, 0.05, 0.5)),
    "sweep.lambda": (_floats, (0.0,)),
    "output.dir": (str, ""),
    "output.record_time": (_bool, True),
}


@dataclass
class ExperimentConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    source: str | None = None

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def set(self, key: str, text: str) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parse = SCHEMA[key][0]
        try:
            self.values[key] = parse(text)
        except (ValueError, ContractError) as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None

    def update(self, overrides: Mapping[str, str]) -> None:
        for key, text in overrides.items():
            self.set(key, text)

    # -- derived views ------------------------------------------------------
    @property
    def mode(self) -> Mode:
        mode = self["mode"]
        enabled = self["mixup.enabled"]
        if enabled is None:
            return mode
        return Mode.from_parts(enabled, mode.uses_kernel)

    @property
    def output_dir(self) -> Path:
        return Path(self["output.dir"] or os.environ.get("KCM_OUT") or "runs")

    def seeds(self) -> SeedBundle:
        return SeedBundle(self["seed.init"], self["seed.shuffle"], self["seed.mixup"],
                          self["seed.kernel"], self["seed.eval"])

    def mixup(self) -> MixupConfig:
        return MixupConfig(self["mixup.alpha"], self["mixup.per_example"], self["mixup.min_trick"],
                           self["mixup.lambda"])

    def kernel(self) -> KernelSettings:
        return KernelSettings(self["kernel.h"], self["kernel.n_train"], self["kernel.n_eval"],
                              self["kernel.antithetic"], self["kernel.per_example"])

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                mode=self.mode, epochs=self["train.epochs"], batch_size=self["train.batch_size"],
                lr=self["train.lr"], milestones=self["train.milestones"], gamma=self["train.gamma"],
                momentum=self["train.momentum"], weight_decay=self["train.weight_decay"],
                loss=self["train.loss"], loss_bound=self["train.loss_bound"],
                hidden=self["model.hidden"], seeds=self.seeds(), mixup=self.mixup(), kernel=self.kernel(),
            )
        except ContractError as exc:
            raise ConfigError(str(exc)) from None

    def attack_config(self, box: tuple | None = None) -> AttackConfig:
        lo = self["attack.box_lo"] if self["attack.box_lo"] is not None else (box[0] if box else -np.inf)
        hi = self["attack.box_hi"] if self["attack.box_hi"] is not None else (box[1] if box else np.inf)
        try:
            return AttackConfig(self["attack.kind"].upper().replace("-", ""), self["attack.epsilon"],
                                self["attack.iters"], self["attack.step"], lo, hi,
                                self["attack.threat"], self["attack.target"], self["attack.resample"])
        except ContractError as exc:
            raise ConfigError(str(exc)) from None


def parse_config_text(text: str, source: str = "<text>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str | os.PathLike | None = None, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig(source=str(path) if path else None)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    if overrides:
        cfg.update(overrides)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    def fmt(v: Any) -> str:
        if v is None:
            return ""
        if isinstance(v, Mode):
            return v.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in SCHEMA)
