import numpy as np
import pytest

from kcmlab.contour import CSV_HEADER, data_bounds, export_contour
from kcmlab.errors import ContractError
from kcmlab.models import MlpParams, init_mlp
from kcmlab.training import KernelSettings


def test_linear_boundary_at_zero():
    p = MlpParams.from_arrays([[[1.0, 0.0]]], [[0.0]])
    grid = export_contour(p, None, (-1.0, 1.0, -1.0, 1.0), resolution=3)
    on_axis = grid.points[:, 0] == 0.0
    assert np.all(grid.values[on_axis] == 0.0)
    np.testing.assert_array_equal(grid.labels, np.where(grid.points[:, 0] >= 0, 1, -1))


def test_resolution_row_count():
    p = init_mlp((2, 8, 1), np.random.default_rng(0))
    grid = export_contour(p, KernelSettings(0.05, 1, n_eval=4), (-1, 2, -1, 1.5))
    lines = grid.to_csv().strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 100 * 100


def test_monotone_model_flips_once_per_row():
    p = MlpParams.from_arrays([[[2.0, 0.3]]], [[-0.4]])
    grid = export_contour(p, None, (-2, 2, -2, 2), resolution=50)
    rows = grid.labels.reshape(50, 50)
    assert all(np.count_nonzero(np.diff(r)) <= 1 for r in rows)


def test_rejects_bad_inputs():
    with pytest.raises(ContractError):
        export_contour(init_mlp((3, 4, 1), np.random.default_rng(0)), None, (0, 1, 0, 1))
    with pytest.raises(ContractError):
        export_contour(init_mlp((2, 4, 1), np.random.default_rng(0)), None, (0, 1, 0, 1), resolution=1)


def test_data_bounds():
    assert data_bounds(np.array([[0.0, 1.0], [2.0, -1.0]]), 0.5) == (-0.5, 2.5, -1.5, 1.5)
