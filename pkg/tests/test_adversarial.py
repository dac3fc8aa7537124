import numpy as np
import pytest

from kcmlab.adversarial import (REPORT_HEADER, AttackConfig, TargetRun, evaluate_robustness, fgsm,
                                ifgsm, loss_gradient)
from kcmlab.data import two_moons
from kcmlab.errors import ConfigError, ContractError
from kcmlab.models import MlpParams, forward_array, init_mlp
from kcmlab.training import KernelSettings, Mode, TrainConfig, surrogate_loss_binary, train


def linear(w=(2.0, -3.0), b=0.0):
    return MlpParams.from_arrays([[list(w)]], [[b]])


def loss_at(p, x, y):
    return surrogate_loss_binary(forward_array(p, x)[:, 0] * y).item()


def test_zero_epsilon_is_identity(rng):
    x = rng.standard_normal((5, 2))
    y = np.array([1, -1, 1, 1, -1])
    g = loss_gradient(linear())
    for kind in ("FGSM", "IFGSM"):
        cfg = AttackConfig(kind, epsilon=0.0)
        out = (fgsm if kind == "FGSM" else ifgsm)(g, x, y, cfg)
        np.testing.assert_array_equal(out, x)


def test_fgsm_linear_direction():
    x = np.array([[0.5, 0.5]])
    adv = fgsm(loss_gradient(linear()), x, np.array([1]), AttackConfig(epsilon=0.1))
    np.testing.assert_allclose(adv - x, [[-0.1, 0.1]], rtol=0, atol=1e-15)


def test_sign_of_zero_gradient_is_zero():
    x = np.array([[0.5, 0.5]])
    adv = fgsm(loss_gradient(linear((1.0, 0.0))), x, np.array([1]), AttackConfig(epsilon=0.1))
    np.testing.assert_allclose(adv - x, [[-0.1, 0.0]], rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", ["FGSM", "IFGSM"])
def test_budget_and_box(kind):
    rng = np.random.default_rng(0)
    p = init_mlp((2, 16, 1), rng)
    x = rng.uniform(0, 1, size=(1000, 2))
    y = rng.choice([-1, 1], size=1000)
    cfg = AttackConfig(kind, epsilon=0.05, iterations=7, step_size=0.02, box_lo=0.0, box_hi=1.0)
    adv = (fgsm if kind == "FGSM" else ifgsm)(loss_gradient(p), x, y, cfg)
    assert np.max(np.abs(adv - x)) <= 0.05 + 1e-15
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_single_iteration_matches_fgsm(rng):
    p = init_mlp((2, 8, 1), rng)
    x = rng.standard_normal((20, 2))
    y = rng.choice([-1, 1], size=20)
    g = loss_gradient(p)
    a = fgsm(g, x, y, AttackConfig("FGSM", epsilon=0.07))
    b = ifgsm(g, x, y, AttackConfig("IFGSM", epsilon=0.07, iterations=1, step_size=0.07))
    np.testing.assert_array_equal(a, b)


def test_ifgsm_at_least_fgsm_on_linear():
    p = linear()
    x = np.array([[0.3, -0.2], [1.0, 1.0]])
    y = np.array([1, -1])
    g = loss_gradient(p)
    a = fgsm(g, x, y, AttackConfig("FGSM", epsilon=0.2))
    b = ifgsm(g, x, y, AttackConfig("IFGSM", epsilon=0.2, iterations=10))
    assert loss_at(p, b, y) >= loss_at(p, a, y) - 1e-12


def test_config_validation():
    with pytest.raises(ContractError):
        AttackConfig("PGD")
    with pytest.raises(ContractError):
        AttackConfig(epsilon=-1.0)
    assert AttackConfig("IFGSM", epsilon=0.1, iterations=4).step == pytest.approx(0.025)


def test_black_box_needs_source():
    data = two_moons(20, 0.1)
    with pytest.raises(ConfigError):
        evaluate_robustness(TargetRun(linear()), AttackConfig(threat="black-box"), data)


@pytest.fixture(scope="module")
def trained_kcm():
    tr = two_moons(300, 0.15, 0)
    te = two_moons(200, 0.15, 1, split="test")
    k = KernelSettings(0.05, 1, n_eval=8)
    res = train(TrainConfig(mode=Mode.KCM, epochs=40, batch_size=50, hidden=(16, 16), kernel=k), tr)
    return TargetRun(res.params, k), te, res.params


def test_white_box_does_not_help(trained_kcm):
    target, te, _ = trained_kcm
    for kind in ("FGSM", "IFGSM"):
        rep = evaluate_robustness(target, AttackConfig(kind, epsilon=0.1), te)
        assert rep.adv_acc <= rep.clean_acc + 0.005
        assert rep.max_linf <= 0.1 + 1e-12
        assert len(rep.csv_row().split(",")) == len(REPORT_HEADER.split(","))


def test_black_box_runs_with_source(trained_kcm):
    target, te, params = trained_kcm
    src = train(TrainConfig(epochs=20, batch_size=50, hidden=(8,)), two_moons(300, 0.15, 5)).params
    rep = evaluate_robustness(target, AttackConfig(threat="black-box", epsilon=0.1), te, source=src)
    assert rep.threat == "black-box"
    assert 0.0 <= rep.adv_acc <= 1.0
