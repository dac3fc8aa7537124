"""Kernel-convoluted models, Mixup and their evaluation apparatus."""

from .data import Dataset, cifar10_read, two_moons
from .kernel import KernelSpec, OffsetBatch, kcm_forward, kcm_predict, kernel_mean_norm, sample_offsets
from .mixup import MixupConfig, mix_batch, sample_lambdas
from .models import MlpParams, SpectralBudget, complexity_proxy_G, forward, init_mlp, lipschitz_upper_bound, spectral_norm
from .tensor import Tensor, matmul, no_grad, relu
from .training import KernelSettings, Mode, SeedBundle, TrainConfig, evaluate, sweep, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "cifar10_read", "two_moons",
    "KernelSpec", "OffsetBatch", "kcm_forward", "kcm_predict", "kernel_mean_norm", "sample_offsets",
    "MixupConfig", "mix_batch", "sample_lambdas",
    "MlpParams", "SpectralBudget", "complexity_proxy_G", "forward", "init_mlp", "lipschitz_upper_bound",
    "spectral_norm",
    "Tensor", "matmul", "no_grad", "relu",
    "KernelSettings", "Mode", "SeedBundle", "TrainConfig", "evaluate", "sweep", "train",
]
