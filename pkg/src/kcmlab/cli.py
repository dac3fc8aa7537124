"""Command-line entry point: ``kcmlab {train,eval,attack,contour,rademacher,sweep}``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
failures at run time.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .adversarial import REPORT_HEADER, TargetRun, evaluate_robustness
from .config import ExperimentConfig, dump_config, load_config
from .contour import data_bounds, export_contour
from .data import Dataset, cifar10_read, fit_normalization, two_moons
from .errors import ConfigError, KcmError
from .models import SpectralBudget, complexity_proxy_G, init_mlp
from .rademacher import CSV_HEADER as RADEMACHER_HEADER
from .rademacher import FunctionClassSpec, rademacher_linear_l2, rademacher_mlp_lower_bound
from .training import evaluate, median_last, metrics_csv, sweep, sweep_csv, train

logger = logging.getLogger("kcmlab")

COMMANDS = ("train", "eval", "attack", "contour", "rademacher", "sweep")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kcmlab", description="Kernel-convoluted model and Mixup experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--mode", help="ERM, MIXUP, KCM or MIXUP_KCM")
        p.add_argument("--out", help="output directory (default $KCM_OUT or ./runs)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("eval", "attack", "contour"):
            p.add_argument("--checkpoint", help="trained model checkpoint")
        if name == "attack":
            p.add_argument("--source", help="source checkpoint for black-box attacks")
        if name == "sweep":
            p.add_argument("--h", help="comma-separated bandwidths")
            p.add_argument("--lambda", dest="lam", help="comma-separated constant mixup weights")
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    if args.mode:
        out["mode"] = args.mode
    if args.out:
        out["output.dir"] = args.out
    if getattr(args, "h", None):
        out["sweep.h"] = args.h
    if getattr(args, "lam", None):
        out["sweep.lambda"] = args.lam
    return out


def load_data(cfg: ExperimentConfig, norm=None) -> tuple[Dataset, Dataset]:
    """Train and test splits; the test split reuses the train normalisation."""
    name = cfg["dataset"]
    if name == "twomoons":
        tr = two_moons(cfg["data.n_train"], cfg["data.noise"], cfg["data.seed"])
        te = two_moons(cfg["data.n_test"], cfg["data.noise"], cfg["data.seed"] + 1, split="test")
        if norm is not None or cfg["data.normalize"]:
            tr = tr.normalized(norm)
            te = te.normalized(tr.normalization)
        return tr, te
    if name == "cifar10":
        if not cfg["data.path"]:
            raise ConfigError("dataset cifar10 needs data.path")
        normalize = cfg["data.normalize"] is not False
        tr = cifar10_read(cfg["data.path"], "train", normalize=False, limit=cfg["data.limit_train"])
        te = cifar10_read(cfg["data.path"], "test", normalize=False, limit=cfg["data.limit_test"])
        if normalize:
            tr = tr.normalized(norm or fit_normalization(tr.inputs, channels=3))
            te = te.normalized(tr.normalization)
        return tr, te
    raise ConfigError(f"unknown dataset {name!r}")


def _pixel_box(data: Dataset):
    if data.normalization is None or data.dim != 3072:
        return None
    n = data.normalization
    return ((0.0 - n.mean) / n.scale, (1.0 - n.mean) / n.scale)


def _checkpoint_path(cfg: ExperimentConfig, given: str | None, key: str) -> Path:
    if given:
        return Path(given)
    if cfg[key]:
        return Path(cfg[key])
    return cfg.output_dir / f"model_{cfg.mode.value}.ckpt"


def _load_model(cfg: ExperimentConfig, path: Path):
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    return ckpt_io.checkpoint_load(path)


def cmd_train(cfg: ExperimentConfig, args) -> int:
    tcfg = cfg.train_config()
    tr, te = load_data(cfg)
    result = train(tcfg, tr, te)
    out = cfg.output_dir
    mode = tcfg.mode.value
    ckpt_io.atomic_write(out / f"metrics_{mode}.csv",
                         metrics_csv(result.history, tcfg.mode, cfg["output.record_time"]))
    ckpt_io.checkpoint_save(ckpt_io.Checkpoint(result.params, tcfg.seeds, tr.normalization),
                            out / f"model_{mode}.ckpt")
    summary = {"mode": mode, "epochs": tcfg.epochs, "median_last10_test_acc": median_last(result.history),
               "final_test_acc": result.history[-1].test_acc}
    ckpt_io.atomic_write(out / f"summary_{mode}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    ckpt_io.atomic_write(out / f"config_{mode}.cfg", dump_config(cfg))
    print(f"{mode}: median test accuracy of last 10 epochs {summary['median_last10_test_acc']:.4f}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    ck = _load_model(cfg, _checkpoint_path(cfg, args.checkpoint, "eval.checkpoint"))
    _, te = load_data(cfg, ck.normalization)
    tcfg = cfg.train_config()
    res = evaluate(ck.params, te, tcfg.eval_kernel(), tcfg.seeds.eval, tcfg.loss, tcfg.loss_bound)
    ckpt_io.atomic_write(cfg.output_dir / f"eval_{tcfg.mode.value}.csv",
                         f"mode,accuracy,risk\n{tcfg.mode.value},{res.accuracy:.17g},{res.risk:.17g}\n")
    print(f"accuracy {res.accuracy:.4f} risk {res.risk:.4f}")
    return 0


def cmd_attack(cfg: ExperimentConfig, args) -> int:
    ck = _load_model(cfg, _checkpoint_path(cfg, args.checkpoint, "attack.checkpoint"))
    _, te = load_data(cfg, ck.normalization)
    acfg = cfg.attack_config(_pixel_box(te))
    source = None
    if acfg.threat == "black-box":
        src_path = args.source or cfg["attack.source"]
        if not src_path:
            raise ConfigError("black-box attack needs a source checkpoint (--source or attack.source)")
        source = _load_model(cfg, Path(src_path)).params
    tcfg = cfg.train_config()
    target = TargetRun(ck.params, tcfg.eval_kernel(), tcfg.seeds.eval, tcfg.loss)
    report = evaluate_robustness(target, acfg, te, source, cfg["attack.seed"])
    ckpt_io.atomic_write(cfg.output_dir / f"attack_{tcfg.mode.value}.csv",
                         f"{REPORT_HEADER}\n{report.csv_row()}\n")
    print(f"{acfg.threat} {acfg.kind} eps={acfg.epsilon}: clean {report.clean_acc:.4f} "
          f"adversarial {report.adv_acc:.4f}")
    return 0


def cmd_contour(cfg: ExperimentConfig, args) -> int:
    ck = _load_model(cfg, _checkpoint_path(cfg, args.checkpoint, "eval.checkpoint"))
    tr, _ = load_data(cfg, ck.normalization)
    tcfg = cfg.train_config()
    grid = export_contour(ck.params, tcfg.eval_kernel(), data_bounds(tr.inputs, cfg["contour.margin"]),
                          cfg["contour.resolution"], tcfg.seeds.eval)
    path = ckpt_io.atomic_write(cfg.output_dir / f"contour_{tcfg.mode.value}.csv", grid.to_csv())
    print(f"wrote {path}")
    return 0


def cmd_rademacher(cfg: ExperimentConfig, args) -> int:
    rng = np.random.default_rng(cfg["rademacher.seed"])
    n, dim = cfg["rademacher.n"], cfg["rademacher.dim"]
    sample = rng.standard_normal((n, dim))
    rows = []
    if cfg["rademacher.class"] == "linear":
        method = cfg["rademacher.method"]
        methods = ["exhaustive", "monte-carlo"] if method == "auto" and n <= 20 else [method]
        for m in methods:
            rows.append(rademacher_linear_l2(sample, cfg["rademacher.radius"], m, cfg["rademacher.M"], rng))
    elif cfg["rademacher.class"] == "mlp":
        dims = (dim,) + cfg["rademacher.hidden"] + (1,)
        budget = SpectralBudget(tuple([cfg["rademacher.radius"]] * (len(dims) - 1)))
        cls = FunctionClassSpec("mlp-spectral", budget=budget, dims=dims)
        est = rademacher_mlp_lower_bound(cls, sample, min(cfg["rademacher.M"], 1000),
                                         cfg["rademacher.steps"], rng=rng)
        rows.append(est)
        probe = init_mlp(dims, np.random.default_rng(cfg["rademacher.seed"]))
        b_x = float(np.max(np.linalg.norm(sample, axis=1)))
        g = complexity_proxy_G(probe, budget, b_x, n)
        print(f"lower bound {est.value:.6g}, complexity proxy G {g:.6g}, ratio {est.value / g:.4g}")
    else:
        raise ConfigError(f"unknown rademacher.class {cfg['rademacher.class']!r}")
    text = RADEMACHER_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in rows)
    path = ckpt_io.atomic_write(cfg.output_dir / "rademacher.csv", text)
    print(f"wrote {path}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    tr, te = load_data(cfg)
    rows = sweep(cfg.train_config(), cfg["sweep.h"], cfg["sweep.lambda"], tr, te)
    path = ckpt_io.atomic_write(cfg.output_dir / "sweep.csv", sweep_csv(rows))
    print(f"wrote {len(rows)} rows to {path}")
    return 0


HANDLERS = {"train": cmd_train, "eval": cmd_eval, "attack": cmd_attack, "contour": cmd_contour,
            "rademacher": cmd_rademacher, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"kcmlab: error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"kcmlab: error: {exc}", file=sys.stderr)
        return 2
    except (KcmError, OSError, ValueError) as exc:
        print(f"kcmlab: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
