"""Datasets: two-moons generation, CIFAR binary parsing and normalisation."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, FormatError

CIFAR_PIXELS = 3072
CIFAR_SIDE = 32


@dataclass(frozen=True)
class Normalization:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


@dataclass(frozen=True)
class Dataset:
    """Inputs ``n x d`` and integer labels (+-1 for binary, 0..C-1 otherwise)."""

    inputs: np.ndarray
    labels: np.ndarray
    split: str = "train"
    n_classes: int = 2
    normalization: Normalization | None = None

    def __post_init__(self):
        if self.inputs.ndim != 2 or len(self.labels) != len(self.inputs):
            raise ContractError(f"inputs {self.inputs.shape} and labels {self.labels.shape} disagree")
        if self.split not in ("train", "test"):
            raise ContractError(f"unknown split {self.split!r}")
        if self.binary and not np.all(np.isin(self.labels, (-1, 1))):
            raise ContractError("binary labels must be -1 or +1")

    @property
    def binary(self) -> bool:
        return self.n_classes == 2

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return 1 if self.binary else self.n_classes

    def targets(self) -> np.ndarray:
        """+-1 floats for binary data, one-hot rows otherwise."""
        if self.binary:
            return self.labels.astype(np.float64)
        out = np.zeros((self.n, self.n_classes))
        out[np.arange(self.n), self.labels] = 1.0
        return out

    def subset(self, index) -> Dataset:
        return replace(self, inputs=self.inputs[index], labels=self.labels[index])

    def normalized(self, norm: Normalization | None = None) -> Dataset:
        """Standardise inputs with ``norm`` (fitted per coordinate if omitted).
        Normalising an already-normalised dataset is rejected."""
        if self.normalization is not None:
            raise ContractError("dataset is already normalized")
        if norm is None:
            norm = fit_normalization(self.inputs)
        return replace(self, inputs=norm.apply(self.inputs), normalization=norm)


def fit_normalization(x: np.ndarray, channels: int | None = None) -> Normalization:
    """Per-coordinate statistics, or per-channel statistics broadcast over
    channel-major coordinates when ``channels`` is given."""
    if channels is None:
        mean, scale = x.mean(axis=0), x.std(axis=0)
    else:
        per = x.reshape(len(x), channels, -1)
        mean = np.repeat(per.mean(axis=(0, 2)), per.shape[2])
        scale = np.repeat(per.std(axis=(0, 2)), per.shape[2])
    scale = np.where(scale > 0, scale, 1.0)
    return Normalization(mean, scale)


def two_moons(n: int, noise: float = 0.0, seed: int = 0, split: str = "train") -> Dataset:
    """Interleaved half circles.

    ``ceil(n/2)`` points on ``(cos t, sin t)`` get label -1 and ``floor(n/2)``
    points on ``(1 - cos t, 0.5 - sin t)`` get label +1, ``t`` equispaced on
    ``[0, pi]``, plus isotropic Gaussian noise of std ``noise``.
    """
    if n < 2:
        raise ContractError(f"two_moons needs n >= 2, got {n}")
    if noise < 0:
        raise ContractError(f"noise must be non-negative, got {noise}")
    n_out, n_in = (n + 1) // 2, n // 2
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    x = np.concatenate([
        np.stack([np.cos(t_out), np.sin(t_out)], axis=1),
        np.stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1),
    ])
    y = np.concatenate([-np.ones(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    if noise > 0:
        x = x + np.random.default_rng(seed).normal(0.0, noise, size=x.shape)
    return Dataset(x, y, split=split, n_classes=2)


# -- CIFAR binary format ----------------------------------------------------

def parse_cifar_records(raw: bytes, label_bytes: int = 1, n_classes: int = 10,
                        source: str = "<bytes>") -> tuple[np.ndarray, np.ndarray]:
    """Split raw CIFAR bytes into ``(labels, pixels)``; pixels stay uint8
    with shape ``records x 3072`` in channel-major order. For the CIFAR-100
    layout (``label_bytes=2``) the last label byte (fine label) is used."""
    record = label_bytes + CIFAR_PIXELS
    if len(raw) % record:
        offset = len(raw) - len(raw) % record
        raise FormatError(f"{source}: length {len(raw)} is not a multiple of {record}; "
                          f"partial record at offset {offset}")
    table = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = table[:, label_bytes - 1].astype(np.int64)
    bad = np.flatnonzero(labels >= n_classes)
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"{source}: label {labels[i]} >= {n_classes} in record {i} "
                          f"at offset {i * record}")
    return labels, table[:, label_bytes:].copy()


def serialize_cifar_records(labels: Sequence[int], pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(-1, CIFAR_PIXELS)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    if len(labels) != len(pixels):
        raise ContractError("labels and pixel rows disagree in count")
    return np.concatenate([labels, pixels], axis=1).tobytes()


def cifar10_files(path: str | os.PathLike, split: str) -> list[Path]:
    path = Path(path)
    if path.is_file():
        return [path]
    names = ["test_batch.bin"] if split == "test" else [f"data_batch_{i}.bin" for i in range(1, 6)]
    files = [path / name for name in names if (path / name).exists()]
    if not files:
        raise FileNotFoundError(f"no CIFAR-10 {split} batches under {path}")
    return files


def cifar10_read(path: str | os.PathLike, split: str = "train", normalize: bool = True,
                 norm: Normalization | None = None, limit: int | None = None) -> Dataset:
    """Load CIFAR-10 binary batches.

    Pixels are scaled to [0, 1]; with ``normalize`` they are then standardised
    per channel using ``norm`` or statistics of the loaded data.
    """
    labels, pixels = [], []
    for f in cifar10_files(path, split):
        lab, pix = parse_cifar_records(f.read_bytes(), source=str(f))
        labels.append(lab)
        pixels.append(pix)
    y = np.concatenate(labels)
    x = np.concatenate(pixels).astype(np.float64) / 255.0
    if limit is not None:
        x, y = x[:limit], y[:limit]
    data = Dataset(x, y, split=split, n_classes=10)
    if normalize:
        data = data.normalized(norm or fit_normalization(x, channels=3))
    return data


def synthetic_cifar_bytes(n: int, seed: int = 0, n_classes: int = 10) -> bytes:
    """Class-structured random images in CIFAR binary layout: each class has
    its own smooth colour template, images are template plus pixel noise."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(40, 215, size=(n_classes, 3, 4, 4))
    templates = np.repeat(np.repeat(coarse, 8, axis=2), 8, axis=3).reshape(n_classes, -1)
    labels = rng.integers(0, n_classes, size=n)
    pixels = templates[labels] + rng.normal(0, 40, size=(n, CIFAR_PIXELS))
    return serialize_cifar_records(labels, np.clip(np.rint(pixels), 0, 255).astype(np.uint8))
