"""Command-line driver for the train / attack / evaluate / report pipeline.

One JSON config (all keys optional) plus flag overrides steer every
subcommand; flag > config > default. A single top-level seed is fanned out
into purpose-named sub-seeds so a whole experiment reproduces from the
config alone. Logs go to stderr; machine-readable results only to files.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import attacks, data, models, reporting
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    FormatError,
    ParseError,
    RulAttackError,
    TrainingDivergedError,
    UsageError,
)

log = logging.getLogger("rulattack")

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs",
    "jobs": 1,
    "figures": True,
    "data": {
        "train": None,
        "test": None,
        "rul": None,
        "sensors": 21,
        "synthetic": None,
        "window": 80,
        "rul_cap": None,
    },
    "model": {
        "arch": "lstm",
        "hidden_dim": 32,
        "epochs": 30,
        "learning_rate": 1e-3,
        "batch_size": 64,
    },
    "attack": {
        "epsilon": 0.01,
        "alpha": 0.1,
        "r_fool": 0.99,
        "e_fool": 3,
        "inner_step": None,
        "inner_max_iters": 20,
        "clamp_inputs": False,
        "max_windows": 2000,
    },
    "sweep": {"epsilons": [1e-4, 1e-3, 1e-2, 1e-1]},
    "report": {"trajectory_engines": 2},
}

SYNTH_DEFAULTS = {
    "n_train": 100,
    "n_test": 100,
    "n_features": 21,
    "n_constant": 7,
    "noise": 0.01,
    "keep_lo": 0.85,
    "keep_hi": 0.98,
    "seed": None,  # defaults to the fanned-out top-level seed
}

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def subseed(seed: int, purpose: str) -> int:
    """Stable per-purpose sub-seed derived from the top-level seed."""
    digest = hashlib.blake2s(f"{seed}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base: dict, override: dict, crumb: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{crumb}.{key}" if crumb else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            merged[key] = _merge(base[key], value, where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file does not exist: {path}")
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: config root must be a JSON object")
        synth = user.get("data", {}).get("synthetic") if isinstance(user.get("data"), dict) else None
        cfg = _merge(cfg, user)
        if synth is not None:
            if not isinstance(synth, dict):
                raise ConfigError("data.synthetic must be a JSON object")
            cfg["data"]["synthetic"] = _merge(SYNTH_DEFAULTS, synth, "data.synthetic")
    return cfg


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    paths = {
        "seed": ("seed",),
        "out": ("out",),
        "jobs": ("jobs",),
        "epsilon": ("attack", "epsilon"),
        "alpha": ("attack", "alpha"),
        "rfool": ("attack", "r_fool"),
        "efool": ("attack", "e_fool"),
        "arch": ("model", "arch"),
    }
    for attr, keys in paths.items():
        value = getattr(args, attr, None)
        if value is not None:
            node = cfg
            for key in keys[:-1]:
                node = node[key]
            node[keys[-1]] = value
    if getattr(args, "no_figures", False):
        cfg["figures"] = False
    return cfg


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} does not exist: {p}")
    return p


def _load_series(cfg: dict):
    """Resolve the configured data source into (train, test, final RULs)."""
    dcfg = cfg["data"]
    have_paths = dcfg["train"] is not None or dcfg["test"] is not None or dcfg["rul"] is not None
    if dcfg["synthetic"] is not None and have_paths:
        raise ConfigError("config must name exactly one data source: files or synthetic, not both")
    if dcfg["synthetic"] is not None:
        s = dcfg["synthetic"]
        seed = s["seed"] if s["seed"] is not None else subseed(cfg["seed"], "synth")
        return data.make_synth_split(
            n_train=s["n_train"],
            n_test=s["n_test"],
            n_features=s["n_features"],
            seed=seed,
            n_constant=s["n_constant"],
            noise=s["noise"],
            keep_lo=s["keep_lo"],
            keep_hi=s["keep_hi"],
        )
    if not have_paths:
        raise ConfigError("config names no data source; set data.train/test/rul or data.synthetic")
    for key in ("train", "test", "rul"):
        if dcfg[key] is None:
            raise ConfigError(f"data.{key} is missing from the config")
        _require_file(dcfg[key], f"data.{key}")
    return data.load_cmapss(dcfg["train"], dcfg["test"], dcfg["rul"], n_sensors=dcfg["sensors"])


class Workspace:
    """Loaded data, fitted normalization, and windowed splits for one run."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.train_series, self.test_series, self.final_ruls = _load_series(cfg)
        self.window = int(cfg["data"]["window"])
        self.rul_cap = cfg["data"]["rul_cap"]
        self.stats = data.fit_norm(self.train_series)
        self.train_windows = data.make_windows(
            self.train_series, self.stats, self.window, rul_cap=self.rul_cap
        )
        self.test_windows = data.make_windows(
            self.test_series, self.stats, self.window, rul_cap=self.rul_cap,
            final_ruls=self.final_ruls,
        )
        if not self.train_windows.windows or not self.test_windows.windows:
            raise ConfigError(
                f"no usable windows at window length {self.window}; "
                f"skipped {self.train_windows.skipped_engines} train / "
                f"{self.test_windows.skipped_engines} test engines"
            )
        log.info(
            "data ready: %d train windows, %d test windows, %d features retained",
            len(self.train_windows.windows), len(self.test_windows.windows),
            len(self.stats.retained),
        )

    def attack_windows(self) -> list[data.Window]:
        """Seeded subsample of the train windows used to fit perturbations."""
        pool = self.train_windows.windows
        cap = int(self.cfg["attack"]["max_windows"])
        if len(pool) <= cap:
            return list(pool)
        rng = np.random.default_rng(subseed(self.cfg["seed"], "subsample"))
        idx = np.sort(rng.choice(len(pool), size=cap, replace=False))
        return [pool[i] for i in idx]


def _attack_config(cfg: dict) -> attacks.AttackConfig:
    a = cfg["attack"]
    return attacks.AttackConfig(
        epsilon=a["epsilon"],
        alpha=a["alpha"],
        r_fool=a["r_fool"],
        e_fool=a["e_fool"],
        inner_step=a["inner_step"],
        inner_max_iters=a["inner_max_iters"],
        clamp_inputs=a["clamp_inputs"],
        seed=subseed(cfg["seed"], "shuffle"),
    )


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint_path(cfg: dict, args) -> Path:
    explicit = getattr(args, "checkpoint", None)
    path = Path(explicit) if explicit else Path(cfg["out"]) / f"{cfg['model']['arch']}.json"
    return _require_file(path, "checkpoint")


def _load_predictor(path: Path) -> models.RulPredictor:
    return models.RulPredictor(models.load(path), model_id=path.stem)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict, args) -> int:
    if cfg["data"]["synthetic"] is None:
        cfg["data"]["synthetic"] = copy.deepcopy(SYNTH_DEFAULTS)
    train_series, test_series, ruls = _load_series(cfg)
    out = _out_dir(cfg)
    data.write_series_file(train_series, out / "train.txt")
    data.write_series_file(test_series, out / "test.txt")
    data.write_rul_file(ruls, out / "rul.txt")
    log.info("synthetic dataset: %d train engines, %d test engines -> %s",
             len(train_series), len(test_series), out)
    return 0


def cmd_train(cfg: dict, args) -> int:
    ws = Workspace(cfg)
    arch = cfg["model"]["arch"]
    params = models.init_params(
        arch=arch,
        input_dim=len(ws.stats.retained),
        hidden_dim=int(cfg["model"]["hidden_dim"]),
        seed=subseed(cfg["seed"], f"init-{arch}"),
    )
    tcfg = models.TrainConfig(
        epochs=int(cfg["model"]["epochs"]),
        learning_rate=float(cfg["model"]["learning_rate"]),
        batch_size=int(cfg["model"]["batch_size"]),
        seed=subseed(cfg["seed"], f"train-{arch}"),
    )
    trained, history = models.train(params, ws.train_windows.windows, tcfg)
    out = _out_dir(cfg)
    ckpt = out / f"{arch}.json"
    models.save(trained, ckpt)
    with open(out / f"loss_history_{arch}.csv", "w", newline="") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(history):
            fh.write(f"{i},{float(loss)}\n")
    log.info("trained %s: %d epochs, final loss %s -> %s",
             arch, len(history), history[-1] if history else "n/a", ckpt)
    return 0


def cmd_attack(cfg: dict, args) -> int:
    ws = Workspace(cfg)
    ckpt = _checkpoint_path(cfg, args)
    predictor = _load_predictor(ckpt)
    acfg = _attack_config(cfg)
    pool = ws.attack_windows()
    pert = attacks.uap_compute(predictor, pool, acfg, model_id=predictor.model_id)
    out = _out_dir(cfg)
    path = out / f"uap_{predictor.model_id}.json"
    attacks.save_perturbation(pert, path)
    log.info(
        "perturbation for %s: eps=%g achieved fooling %.2f%% on %d fit windows "
        "after %d epoch(s) -> %s",
        predictor.model_id, pert.epsilon, 100.0 * pert.achieved_fooling,
        len(pool), pert.epochs_run, path,
    )
    return 0


def _render(cfg: dict, fn, *fargs) -> None:
    if cfg["figures"]:
        from . import figures

        fn_obj = getattr(figures, fn)
        fn_obj(*fargs)


def cmd_eval(cfg: dict, args) -> int:
    ws = Workspace(cfg)
    ckpt = _checkpoint_path(cfg, args)
    predictor = _load_predictor(ckpt)
    pert = None
    pert_path = getattr(args, "perturbation", None)
    if pert_path is not None:
        pert = attacks.load_perturbation(_require_file(pert_path, "perturbation"))
    alpha = cfg["attack"]["alpha"]
    clamp = cfg["attack"]["clamp_inputs"]
    out = _out_dir(cfg)

    report = reporting.evaluate(
        predictor, ws.test_windows.windows, pert, alpha,
        model_id=predictor.model_id, clamp_inputs=clamp,
    )
    reporting.write_report_csv([report], out / "report.csv")
    reporting.write_report_json([report], out / "report.json")
    log.info("report: model=%s attack=%s fooling=%.2f%% mape=%.2f n=%d excluded=%d",
             report.model_id, report.attack_id, report.fooling_pct, report.mape,
             report.n_samples, report.n_excluded)

    usable = [
        (i, s) for i, s in enumerate(ws.test_series) if len(s) >= ws.window
    ]
    traj_rows = []
    for i, series in usable[: int(cfg["report"]["trajectory_engines"])]:
        traj_rows += reporting.trajectory_report(
            predictor, series, ws.stats, ws.window, pert,
            rul_cap=ws.rul_cap, final_rul=float(ws.final_ruls[i]), clamp_inputs=clamp,
        )
    reporting.write_trajectory_csv(traj_rows, out / "trajectory.csv")

    fleet_rows = reporting.fleet_last_window(
        predictor, ws.test_series, ws.stats, ws.window, pert,
        rul_cap=ws.rul_cap, final_ruls=ws.final_ruls, clamp_inputs=clamp,
    )
    reporting.write_fleet_csv(fleet_rows, out / "fleet.csv")

    trace_rows = reporting.input_trace(usable[0][1], ws.stats, ws.window, pert, clamp)
    reporting.write_trace_csv(trace_rows, out / "trace.csv")

    _render(cfg, "report_figure", [report], out / "report.png")
    if traj_rows:
        _render(cfg, "trajectory_figure", traj_rows, out / "trajectory.png")
    _render(cfg, "fleet_figure", fleet_rows, out / "fleet.png")
    _render(cfg, "trace_figure", trace_rows, out / "trace.png")
    return 0


def cmd_sweep(cfg: dict, args) -> int:
    ws = Workspace(cfg)
    ckpt = _checkpoint_path(cfg, args)
    predictor = _load_predictor(ckpt)
    acfg = _attack_config(cfg)
    result = reporting.epsilon_sweep(
        predictor, ws.test_windows.windows, cfg["sweep"]["epsilons"], acfg,
        attack_dataset=ws.attack_windows(), jobs=int(cfg["jobs"]),
    )
    out = _out_dir(cfg)
    reporting.write_sweep_csv(result, out / "sweep.csv")
    with open(out / "sweep.json", "w") as fh:
        json.dump(
            [{"epsilon": p.epsilon, "fooling_pct": p.fooling_pct, "mape": p.mape}
             for p in result.points],
            fh, indent=2,
        )
        fh.write("\n")
    _render(cfg, "sweep_figure", result, out / "sweep.png")
    log.info("sweep over %d strengths -> %s", len(result.points), out / "sweep.csv")
    return 0


def cmd_transfer(cfg: dict, args) -> int:
    ws = Workspace(cfg)
    out = Path(cfg["out"])
    ckpt_paths = args.checkpoints or [out / "lstm.json", out / "gru.json"]
    pert_paths = args.perturbations or [out / "uap_lstm.json", out / "uap_gru.json"]
    predictors = [_load_predictor(_require_file(p, "checkpoint")) for p in ckpt_paths]
    perts = [attacks.load_perturbation(_require_file(p, "perturbation")) for p in pert_paths]

    model_map = {p.model_id: p for p in predictors}
    pert_map = {p.source_model: p for p in perts}
    if set(pert_map) != set(model_map):
        raise ConfigError(
            f"perturbation sources {sorted(pert_map)} do not match models {sorted(model_map)}"
        )
    reports = reporting.transfer_matrix(model_map, pert_map, ws.test_windows.windows,
                                        alpha=cfg["attack"]["alpha"])
    out = _out_dir(cfg)
    reporting.write_report_csv(reports, out / "transfer.csv")
    reporting.write_report_json(reports, out / "transfer.json")
    _render(cfg, "report_figure", reports, out / "transfer.png")
    for r in reports:
        log.info("transfer: model=%s attack=%s fooling=%.2f%% mape=%.2f",
                 r.model_id, r.attack_id, r.fooling_pct, r.mape)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON run configuration")
    parser.add_argument("--out", metavar="DIR", help="output directory (default: runs)")
    parser.add_argument("--seed", type=int, help="top-level seed fanned out per purpose")
    parser.add_argument("--jobs", type=int, help="parallel workers for sweep points")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulattack",
        description="Universal adversarial perturbations against RUL regressors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset in C-MAPSS file format")
    _add_common(p)

    p = sub.add_parser("train", help="train a model and write its checkpoint")
    _add_common(p)
    p.add_argument("--arch", choices=models.ARCHS, help="model architecture")

    p = sub.add_parser("attack", help="fit a universal perturbation for a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint (default: OUT/ARCH.json)")
    p.add_argument("--epsilon", type=float, help="L-inf bound of the perturbation")
    p.add_argument("--alpha", type=float, help="overprediction factor")
    p.add_argument("--rfool", type=float, help="target fooled fraction")
    p.add_argument("--efool", type=int, help="epoch budget")
    p.add_argument("--arch", choices=models.ARCHS, help="architecture for default checkpoint path")

    p = sub.add_parser("eval", help="evaluate a checkpoint, optionally under a perturbation")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint (default: OUT/ARCH.json)")
    p.add_argument("--perturbation", metavar="PATH", help="perturbation file; omit for baseline")
    p.add_argument("--alpha", type=float, help="overprediction factor")
    p.add_argument("--arch", choices=models.ARCHS, help="architecture for default checkpoint path")

    p = sub.add_parser("sweep", help="sweep perturbation strength and report metrics")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint (default: OUT/ARCH.json)")
    p.add_argument("--alpha", type=float, help="overprediction factor")
    p.add_argument("--rfool", type=float, help="target fooled fraction")
    p.add_argument("--efool", type=int, help="epoch budget")
    p.add_argument("--arch", choices=models.ARCHS, help="architecture for default checkpoint path")

    p = sub.add_parser("transfer", help="cross-model attack table for two checkpoints")
    _add_common(p)
    p.add_argument("--checkpoints", nargs=2, metavar="PATH",
                   help="two model checkpoints (default: OUT/lstm.json OUT/gru.json)")
    p.add_argument("--perturbations", nargs=2, metavar="PATH",
                   help="two perturbation files (default: OUT/uap_lstm.json OUT/uap_gru.json)")
    p.add_argument("--alpha", type=float, help="overprediction factor")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "attack": cmd_attack,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "transfer": cmd_transfer,
}


def _setup_logging() -> None:
    level_name = os.environ.get("UAP_LOG", "info").lower()
    if level_name not in _LOG_LEVELS:
        raise ConfigError(f"UAP_LOG must be one of {sorted(_LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(
        stream=sys.stderr,
        level=_LOG_LEVELS[level_name],
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        return _COMMANDS[args.command](cfg, args)
    except TrainingDivergedError as exc:
        log.error("%s", exc)
        return 3
    except (ConfigError, ParseError, FormatError, DomainError, DimensionError, UsageError) as exc:
        log.error("%s", exc)
        return 2
    except RulAttackError as exc:  # any stragglers are usage-class failures
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
