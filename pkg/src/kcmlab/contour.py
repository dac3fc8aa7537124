"""Decision-function grids for two-dimensional inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .kernel import predict_labels
from .models import MlpParams
from .training import KernelSettings, model_values

CSV_HEADER = "x1,x2,value,label"


@dataclass(frozen=True)
class ContourGrid:
    bounds: tuple[float, float, float, float]  # x1_min, x1_max, x2_min, x2_max
    resolution: int
    points: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def to_csv(self) -> str:
        rows = [CSV_HEADER]
        for (a, b), v, y in zip(self.points, self.values, self.labels):
            rows.append(f"{a:.17g},{b:.17g},{v:.17g},{int(y)}")
        return "\n".join(rows) + "\n"


def export_contour(params: MlpParams, kernel: KernelSettings | None,
                   bounds: tuple[float, float, float, float], resolution: int = 100,
                   eval_seed: int = 4) -> ContourGrid:
    """Evaluate ``f^K`` (or ``f`` when ``kernel`` is None) on a
    ``resolution x resolution`` grid. Rows are ordered by ``x2`` then ``x1``,
    so each block of ``resolution`` consecutive rows shares one ``x2``."""
    if resolution < 2:
        raise ContractError(f"resolution must be >= 2, got {resolution}")
    if params.dims[0] != 2:
        raise ContractError(f"contours need a 2-d input model, got d={params.dims[0]}")
    if params.dims[-1] != 1:
        raise ContractError("contours need a single-output (binary) model")
    x1 = np.linspace(bounds[0], bounds[1], resolution)
    x2 = np.linspace(bounds[2], bounds[3], resolution)
    g1, g2 = np.meshgrid(x1, x2)
    points = np.stack([g1.ravel(), g2.ravel()], axis=1)
    values = model_values(params, points, kernel, eval_seed)[:, 0]
    if not np.all(np.isfinite(values)):
        raise ContractError("non-finite model values on the contour grid")
    return ContourGrid(tuple(float(b) for b in bounds), resolution, points, values,
                       predict_labels(values[:, None]))


def data_bounds(x: np.ndarray, margin: float = 0.5) -> tuple[float, float, float, float]:
    lo, hi = x.min(axis=0) - margin, x.max(axis=0) + margin
    return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))
