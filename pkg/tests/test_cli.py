import csv
import io
import subprocess
import sys

import pytest

from kcmlab.cli import main
from kcmlab.config import ExperimentConfig, dump_config, load_config, parse_config_text
from kcmlab.data import synthetic_cifar_bytes
from kcmlab.errors import ConfigError
from kcmlab.training import Mode

SMALL = """\
# tiny two-moon run
dataset = twomoons
data.n_train = 120
data.n_test = 80
model.hidden = 8
train.epochs = 12
train.batch_size = 40
kernel.h = 0.05
kernel.n_eval = 4
mixup.alpha = 0.2
output.record_time = false
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def run(cfg_file, out, *extra):
    return main([extra[0], "--config", str(cfg_file), "--out", str(out), *extra[1:]])


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_parse_config_rejects_unknown_and_duplicate():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config_text("bogus = 1")
    with pytest.raises(ConfigError):
        parse_config_text("kernel.h = 1\nkernel.h = 2")
    with pytest.raises(ConfigError):
        ExperimentConfig().set("kernel.h", "wide")


def test_config_round_trip(cfg_file):
    cfg = load_config(cfg_file, {"mode": "MIXUP_KCM"})
    again = load_config(None, parse_config_text(dump_config(cfg)))
    assert dump_config(again) == dump_config(cfg)
    assert cfg.mode is Mode.MIXUP_KCM


def test_mixup_flag_toggles_mode():
    cfg = ExperimentConfig()
    cfg.update({"mode": "KCM", "mixup.enabled": "true"})
    assert cfg.mode is Mode.MIXUP_KCM


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("KCM_OUT", str(tmp_path / "env"))
    assert ExperimentConfig().output_dir == tmp_path / "env"


@pytest.mark.parametrize("mode", ["ERM", "MIXUP", "KCM", "MIXUP_KCM"])
def test_train_writes_artifacts(cfg_file, tmp_path, mode):
    out = tmp_path / "out"
    assert run(cfg_file, out, "train", "--mode", mode) == 0
    metrics = rows(out / f"metrics_{mode}.csv")
    assert len(metrics) == 12 and metrics[0]["mode"] == mode
    assert (out / f"model_{mode}.ckpt").stat().st_size > 0
    assert (out / f"summary_{mode}.json").exists()


def test_train_then_eval_attack_contour(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert run(cfg_file, out, "train", "--mode", "KCM") == 0
    assert run(cfg_file, out, "eval", "--mode", "KCM") == 0
    assert run(cfg_file, out, "attack", "--mode", "KCM", "--set", "attack.kind=IFGSM") == 0
    assert run(cfg_file, out, "contour", "--mode", "KCM", "--set", "contour.resolution=20") == 0
    assert len(rows(out / "contour_KCM.csv")) == 400
    assert rows(out / "attack_KCM.csv")[0]["kind"] == "IFGSM"


def test_black_box_without_source_is_usage_error(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert run(cfg_file, out, "train") == 0
    assert run(cfg_file, out, "attack", "--set", "attack.threat=black-box") == 2


def test_rerun_is_deterministic(cfg_file, tmp_path):
    for sub in ("a", "b"):
        assert run(cfg_file, tmp_path / sub, "train", "--mode", "MIXUP_KCM") == 0
    for name in ("metrics_MIXUP_KCM.csv", "model_MIXUP_KCM.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_grid(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert run(cfg_file, out, "sweep", "--h", "0.005,0.05,0.5", "--lambda", "0,0.1") == 0
    table = rows(out / "sweep.csv")
    assert len(table) == 6
    assert {(float(r["h"]), float(r["lambda"])) for r in table} == {
        (h, lam) for h in (0.005, 0.05, 0.5) for lam in (0.0, 0.1)}


def test_rademacher_command(tmp_path):
    out = tmp_path / "r"
    assert main(["rademacher", "--out", str(out), "--set", "rademacher.n=8", "--set", "rademacher.M=2000"]) == 0
    methods = [r["method"] for r in rows(out / "rademacher.csv")]
    assert methods == ["exhaustive", "monte-carlo"]


def test_cifar_dataset(tmp_path):
    data = tmp_path / "cifar"
    data.mkdir()
    (data / "data_batch_1.bin").write_bytes(synthetic_cifar_bytes(60, 0))
    (data / "test_batch.bin").write_bytes(synthetic_cifar_bytes(30, 1))
    args = ["train", "--out", str(tmp_path / "o"), "--set", "dataset=cifar10", "--set", f"data.path={data}",
            "--set", "model.hidden=16", "--set", "train.epochs=2", "--set", "train.batch_size=20"]
    assert main(args) == 0


def test_missing_config_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert main(["train", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_unknown_key_and_flag_exit_2(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--set", "kernel.width=1"]) == 2
    assert main(["train", "--no-such-flag"]) == 2
    assert main(["frobnicate"]) == 2


def test_runtime_error_exits_1(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--out", str(tmp_path), "--checkpoint", str(bad)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kcmlab", "train", "--config", str(tmp_path / "x.cfg")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "x.cfg" in proc.stderr
