"""Command-line interface: train, attack, eval, sweep, gradcheck.

Configuration comes from three layers with increasing precedence:
schema defaults, a YAML config file (``--config``), and command-line
flags. Every config key is validated against the schema; unknown keys
are rejected with the list of accepted ones.

Budgets are entered on familiar scales: ``--eps-pixel`` counts 0-255
intensity levels (so the canonical test-time budget is 8) and
``--eps-spatial`` is in pixels. Internally pixel budgets become
[-1, 1]-range units via eps * pixel_scale with pixel_scale = 2/255 by
default (configurable under ``attack:`` in case a different byte scale
is ever needed); both units appear in the logs.

``ADVFLOW_LOG={error,info,debug}`` controls verbosity. All command
outputs (checkpoints, CSVs) are byte-reproducible under a fixed seed;
wall-time measurement is opt-in via ``--timing`` because it would break
that guarantee.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import rng
from .attacks import ATTACKS, AttackConfig
from .classifier import ConvNet
from .constraints import Budget
from .data import Dataset, load_dataset, normalize
from .evaluation import (
    blackbox_eval,
    budget_sweep,
    default_suite,
    dump_attack_tensors,
    evaluate_suite,
    export_report,
)
from .exceptions import AdvflowError, ConfigError
from .gradcheck import CHECKS, run_gradcheck
from .training import train_variant, variant_config
from . import plotting

log = logging.getLogger("advflow.cli")

MODES = (
    "natural",
    "pixel-one",
    "pixel-multi",
    "spatial",
    "joint-sp",
    "joint-ps",
    "cascade",
    "one-pass",
)

# attack-generator command view of the training modes
_MODE_TO_ATTACK = {
    "natural": None,
    "pixel-one": "fgsm",
    "pixel-multi": "pgd",
    "spatial": "spatial",
    "joint-sp": "joint-sp",
    "joint-ps": "joint-ps",
    "cascade": "cascade",
    "one-pass": "one-pass",
}

_UNSET = object()

# section -> key -> (type, default). "float?"/"str?" admit null.
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "": {
        "seed": ("int", 0),
        "out": ("str?", None),
        "workers": ("int?", None),
        "mode": ("str", "joint-sp"),
    },
    "model": {
        "checkpoint": ("str?", None),
        "source_checkpoint": ("str?", None),
        "dtype": ("str", "float32"),
    },
    "data": {
        "train": ("str?", None),
        "test": ("str?", None),
        "limit": ("int?", None),
        "augment_crop": ("bool", True),
        "augment_flip": ("bool", False),
    },
    "attack": {
        "steps": ("int", 20),
        "eps_pixel": ("float", 8.0),
        "eps_spatial": ("float?", None),
        "pixel_step": ("float?", None),
        "spatial_step": ("float?", None),
        "pixel_scale": ("float", 2.0 / 255.0),
        "random_start": ("bool", True),
    },
    "train": {
        "epochs": ("int", 30),
        "batch_size": ("int", 128),
        "lr": ("float", 0.02),
        "momentum": ("float", 0.9),
        "decay": ("float", 0.1),
        "transitions": ("intlist", [20, 25]),
        "smoothing": ("float?", None),
        "steps": ("int?", None),
        "probe_size": ("int", 256),
        "probe_steps": ("int", 5),
    },
    "eval": {
        "axis": ("str", "pixel"),
        "values": ("floatlist?", None),
        "fixed_budget": ("float", 0.0),
        "monotone_tol": ("float", 2.0),
        "timing": ("bool", False),
        "chunk": ("int", 256),
    },
}


def _type_ok(kind: str, value) -> bool:
    if kind.endswith("?"):
        if value is None:
            return True
        kind = kind[:-1]
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "intlist":
        return isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        )
    if kind == "floatlist":
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
    raise AssertionError(kind)


def _defaults() -> dict:
    cfg = {}
    for section, keys in SCHEMA.items():
        scope = cfg if section == "" else cfg.setdefault(section, {})
        for key, (_, default) in keys.items():
            scope[key] = default
    return cfg


def _merge_file(cfg: dict, path: str) -> None:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}") from e
    if raw is None:
        return
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for key, value in raw.items():
        if key in SCHEMA and key != "":
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: section {key!r} must be a mapping")
            for sub, sval in value.items():
                if sub not in SCHEMA[key]:
                    raise ConfigError(
                        f"{path}: unknown key {key}.{sub}; allowed: {sorted(SCHEMA[key])}"
                    )
                kind = SCHEMA[key][sub][0]
                if kind.startswith("float") and isinstance(sval, int) and not isinstance(sval, bool):
                    sval = float(sval)
                if kind == "floatlist" or kind == "floatlist?":
                    if isinstance(sval, list):
                        sval = [float(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in sval]
                if not _type_ok(kind, sval):
                    raise ConfigError(f"{path}: {key}.{sub} must be {kind}, got {sval!r}")
                cfg[key][sub] = sval
        elif key in SCHEMA[""]:
            kind = SCHEMA[""][key][0]
            if not _type_ok(kind, value):
                raise ConfigError(f"{path}: {key} must be {kind}, got {value!r}")
            cfg[key] = value
        else:
            allowed = sorted(SCHEMA[""]) + sorted(k for k in SCHEMA if k)
            raise ConfigError(f"{path}: unknown key {key!r}; allowed: {allowed}")


def _apply_flags(cfg: dict, args: argparse.Namespace) -> None:
    mapping = {
        "seed": ("", "seed"),
        "out": ("", "out"),
        "workers": ("", "workers"),
        "mode": ("", "mode"),
        "limit": ("data", "limit"),
        "train_data": ("data", "train"),
        "test_data": ("data", "test"),
        "checkpoint": ("model", "checkpoint"),
        "source_checkpoint": ("model", "source_checkpoint"),
        "eps_pixel": ("attack", "eps_pixel"),
        "eps_spatial": ("attack", "eps_spatial"),
        "pixel_step": ("attack", "pixel_step"),
        "spatial_step": ("attack", "spatial_step"),
        "epochs": ("train", "epochs"),
        "batch_size": ("train", "batch_size"),
        "lr": ("train", "lr"),
        "axis": ("eval", "axis"),
        "timing": ("eval", "timing"),
    }
    for flag, (section, key) in mapping.items():
        value = getattr(args, flag, _UNSET)
        if value is not _UNSET and value is not None:
            scope = cfg if section == "" else cfg[section]
            scope[key] = value
    steps = getattr(args, "steps", None)
    if steps is not None:
        if args.command == "train":
            cfg["train"]["steps"] = steps
        else:
            cfg["attack"]["steps"] = steps
    values = getattr(args, "values", None)
    if values is not None:
        try:
            cfg["eval"]["values"] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError as e:
            raise ConfigError(f"--values must be comma-separated numbers: {e}") from e


def _resolve_budget(cfg: dict, width: int) -> Budget:
    """Internal-unit budget from CLI-unit config values."""
    scale = cfg["attack"]["pixel_scale"]
    eps_pixel = cfg["attack"]["eps_pixel"] * scale
    eps_spatial = cfg["attack"]["eps_spatial"]
    if eps_spatial is None:
        eps_spatial = 0.01 * width
    budget = Budget(eps_pixel=eps_pixel, eps_spatial=float(eps_spatial))
    log.info(
        "budgets: eps_pixel = %g (0-255 scale) = %g ([-1,1] units); eps_spatial = %g px",
        cfg["attack"]["eps_pixel"], eps_pixel, eps_spatial,
    )
    return budget


def _resolve_steps(cfg: dict) -> tuple[float, float]:
    """Attack-time step sizes in internal units.

    Unset values fall back to the standard evaluation steps (2 intensity
    levels per iteration, 0.15 px); cmd_train instead leaves unset steps
    to the training preset.
    """
    a = cfg["attack"]
    levels = a["pixel_step"] if a["pixel_step"] is not None else 2.0
    spatial = a["spatial_step"] if a["spatial_step"] is not None else 0.15
    return levels * a["pixel_scale"], spatial


def _out_dir(cfg: dict, command: str) -> Path:
    out = Path(cfg["out"] if cfg["out"] else Path("runs") / command)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_split(cfg: dict, which: str, *, required: bool) -> Dataset | None:
    path = cfg["data"][which]
    if path is None:
        if required:
            raise ConfigError(f"data.{which} (or --{which}-data) is required for this command")
        return None
    ds = load_dataset(path, split=which)
    log.info("loaded %s split: %d examples of %s", which, len(ds), ds.images.shape[1:])
    return ds


def _model_dtype(cfg: dict):
    name = cfg["model"]["dtype"]
    if name not in ("float32", "float64"):
        raise ConfigError(f"model.dtype must be float32 or float64, got {name!r}")
    return np.dtype(name)


def _load_net(cfg: dict, key: str = "checkpoint") -> ConvNet:
    path = cfg["model"][key]
    if path is None:
        raise ConfigError(f"model.{key} (or --{key.replace('_', '-')}) is required")
    net = ConvNet.load(path, dtype=_model_dtype(cfg))
    log.info("loaded checkpoint %s (%d parameters)", path, net.num_params)
    return net


def cmd_train(cfg: dict) -> int:
    train_ds = _load_split(cfg, "train", required=True)
    probe_ds = _load_split(cfg, "test", required=False)
    if cfg["data"]["limit"] is not None:
        train_ds = train_ds.subset(cfg["data"]["limit"])
    budget = _resolve_budget(cfg, train_ds.images.shape[2])
    t = cfg["train"]
    overrides = dict(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr=t["lr"],
        momentum=t["momentum"],
        decay=t["decay"],
        transitions=tuple(v for v in t["transitions"] if v < t["epochs"]),
        budget=budget,
        augment_crop=cfg["data"]["augment_crop"],
        augment_flip=cfg["data"]["augment_flip"],
        probe_size=t["probe_size"],
        probe_steps=t["probe_steps"],
        seed=cfg["seed"],
    )
    # explicit step settings beat the variant preset; unset ones defer to it
    if t["steps"] is not None:
        overrides["steps"] = t["steps"]
    if t["smoothing"] is not None:
        overrides["smoothing"] = t["smoothing"]
    if cfg["attack"]["pixel_step"] is not None:
        overrides["pixel_step"] = cfg["attack"]["pixel_step"] * cfg["attack"]["pixel_scale"]
    if cfg["attack"]["spatial_step"] is not None:
        overrides["spatial_step"] = cfg["attack"]["spatial_step"]
    mode = cfg["mode"]
    tcfg = variant_config(mode, **overrides)
    net, tlog = train_variant(tcfg, train_ds, probe_ds, dtype=_model_dtype(cfg))
    out = _out_dir(cfg, "train")
    ckpt = out / "model.ckpt"
    net.save(ckpt)
    tlog.to_csv(out / "train_log.csv")
    plotting.save_training_curves(tlog, out / "train_curves.png")
    print(f"trained {mode} model: clean {tlog.clean_accs[-1]:.1f}%, "
          f"adversarial probe {tlog.adv_accs[-1]:.1f}%")
    print(f"wrote {ckpt}, {out / 'train_log.csv'}, {out / 'train_curves.png'}")
    return 0


def cmd_attack(cfg: dict) -> int:
    net = _load_net(cfg)
    ds = _load_split(cfg, "test", required=True).subset(cfg["data"]["limit"])
    budget = _resolve_budget(cfg, ds.images.shape[2])
    kind = _MODE_TO_ATTACK[cfg["mode"]]
    pixel_step, spatial_step = _resolve_steps(cfg)
    acfg = AttackConfig(
        budget=budget,
        steps=cfg["attack"]["steps"],
        pixel_step=pixel_step,
        spatial_step=spatial_step,
        random_start=cfg["attack"]["random_start"],
        targeted=False,
        seed=cfg["seed"],
    )
    labels = ds.labels.astype(np.int64)
    x = normalize(ds.images, net.dtype)
    chunk = cfg["eval"]["chunk"]
    adv_parts, flow_parts, delta_parts = [], [], []
    for start in range(0, len(ds), chunk):
        stop = min(start + chunk, len(ds))
        if kind is None:
            xb = x[start:stop]
            res_images = xb
            flow_parts.append(np.zeros(xb.shape[:3] + (2,)))
            delta_parts.append(np.zeros(xb.shape))
        else:
            res = ATTACKS[kind](
                net, x[start:stop], labels[start:stop], acfg,
                example_indices=np.arange(start, stop),
            )
            res_images = res.images
            flow_parts.append(res.flow)
            delta_parts.append(res.delta)
        adv_parts.append(res_images)
    adv = np.concatenate(adv_parts)
    flow = np.concatenate(flow_parts)
    delta = np.concatenate(delta_parts)
    preds = np.concatenate(
        [net.predict(adv[i : i + chunk]) for i in range(0, len(adv), chunk)]
    )
    success = preds != labels
    out = _out_dir(cfg, "attack")
    dump_attack_tensors(out / "attack_tensors.bin", x, adv, flow, delta, labels, preds)
    lines = ["index,label,prediction,success"]
    lines += [
        f"{i},{labels[i]},{preds[i]},{int(success[i])}" for i in range(len(ds))
    ]
    (out / "attack_flags.csv").write_text("\n".join(lines) + "\n")
    plotting.save_example_grid(x, adv, out / "attack_examples.png")
    rate = 100.0 * success.mean()
    print(f"attack {cfg['mode']}: success on {int(success.sum())}/{len(ds)} "
          f"examples ({rate:.1f}%)")
    print(f"wrote {out / 'attack_tensors.bin'}, {out / 'attack_flags.csv'}, "
          f"{out / 'attack_examples.png'}")
    return 0


def _suite_for(cfg: dict, budget: Budget) -> list:
    pixel_step, spatial_step = _resolve_steps(cfg)
    return default_suite(
        budget,
        steps=cfg["attack"]["steps"],
        pixel_step=pixel_step,
        spatial_step=spatial_step,
        seed=cfg["seed"],
    )


def cmd_eval(cfg: dict) -> int:
    net = _load_net(cfg)
    ds = _load_split(cfg, "test", required=True)
    budget = _resolve_budget(cfg, ds.images.shape[2])
    suite = _suite_for(cfg, budget)
    kwargs = dict(
        limit=cfg["data"]["limit"],
        workers=cfg["workers"] or os.cpu_count() or 1,
        timing=cfg["eval"]["timing"],
        chunk=cfg["eval"]["chunk"],
    )
    if cfg["model"]["source_checkpoint"] is not None:
        source = _load_net(cfg, "source_checkpoint")
        report = blackbox_eval(net, source, ds, suite, **kwargs)
    else:
        report = evaluate_suite(net, ds, suite, **kwargs)
    out = _out_dir(cfg, "eval")
    export_report(report, out / "eval.csv")
    plotting.save_report_bars(report, out / "eval_accuracy.png")
    for r in report.rows:
        print(f"{r.attack:>10}: {r.accuracy:5.1f}%  ({r.examples} examples)")
    print(f"wrote {out / 'eval.csv'}, {out / 'eval_accuracy.png'}")
    return 0


def cmd_sweep(cfg: dict) -> int:
    net = _load_net(cfg)
    ds = _load_split(cfg, "test", required=True)
    axis = cfg["eval"]["axis"]
    if axis not in ("pixel", "spatial"):
        raise ConfigError(f"eval.axis must be pixel or spatial, got {axis!r}")
    width = ds.images.shape[2]
    values = cfg["eval"]["values"]
    if values is None:
        values = (
            [0.0, 2.0, 4.0, 6.0, 8.0]
            if axis == "pixel"
            else [0.0] + [round(0.01 * width * f, 6) for f in (0.25, 0.5, 0.75, 1.0)]
        )
    scale = cfg["attack"]["pixel_scale"]
    internal = [v * scale for v in values] if axis == "pixel" else values
    fixed = cfg["eval"]["fixed_budget"] * (scale if axis == "spatial" else 1.0)
    log.info("sweep %s axis over %s (CLI units)", axis, values)
    pixel_step, spatial_step = _resolve_steps(cfg)
    report = budget_sweep(
        net,
        ds,
        axis,
        internal,
        steps=cfg["attack"]["steps"],
        pixel_step=pixel_step,
        spatial_step=spatial_step,
        fixed_budget=fixed,
        seed=cfg["seed"],
        monotone_tol=cfg["eval"]["monotone_tol"],
        limit=cfg["data"]["limit"],
        workers=cfg["workers"] or os.cpu_count() or 1,
        timing=cfg["eval"]["timing"],
        chunk=cfg["eval"]["chunk"],
    )
    out = _out_dir(cfg, "sweep")
    export_report(report, out / "sweep.csv")
    plotting.save_sweep_curve(report, out / "sweep_curve.png", axis)
    for v, r in zip(values, report.rows):
        print(f"{axis} budget {v:g}: {r.accuracy:5.1f}%")
    print(f"wrote {out / 'sweep.csv'}, {out / 'sweep_curve.png'}")
    return 0


def cmd_gradcheck(cfg: dict, instances: int, tol: float, fault: str | None) -> int:
    results = run_gradcheck(seed=cfg["seed"], instances=instances, tol=tol, fault=fault)
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:>16}: max rel err {r.max_rel_err:.3e} (tol {r.tol:g})  {status}")
        failed = failed or not r.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advflow",
        description="Spatial/pixel adversarial attacks, joint adversarial training, "
        "and robustness evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--out", help="output directory (default runs/<command>)")
        p.add_argument("--workers", type=int, help="parallel attack workers (default: cores)")
        p.add_argument("--limit", type=int, help="cap the number of examples used")
        p.add_argument("--eps-pixel", type=float, dest="eps_pixel",
                       help="pixel budget on the 0-255 scale (default 8)")
        p.add_argument("--eps-spatial", type=float, dest="eps_spatial",
                       help="spatial budget in pixels (default: 1%% of image width)")
        p.add_argument("--steps", type=int, help="attack steps")
        p.add_argument("--mode", choices=MODES, help="training variant / attack kind")
        p.add_argument("--pixel-step", type=float, dest="pixel_step",
                       help="attack pixel step on the 0-255 scale "
                            "(default 2; train: the variant preset)")
        p.add_argument("--spatial-step", type=float, dest="spatial_step",
                       help="attack spatial step in pixels "
                            "(default 0.15; train: the variant preset)")
        p.add_argument("--test-data", dest="test_data", help="test split path")

    p_train = sub.add_parser("train", help="train a model variant")
    shared(p_train)
    p_train.add_argument("--train-data", dest="train_data", help="training split path")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lr", type=float)

    p_attack = sub.add_parser("attack", help="generate adversarial examples")
    shared(p_attack)
    p_attack.add_argument("--checkpoint", help="model checkpoint to attack")

    p_eval = sub.add_parser("eval", help="run the attack suite")
    shared(p_eval)
    p_eval.add_argument("--checkpoint", help="model checkpoint to evaluate")
    p_eval.add_argument("--source-checkpoint", dest="source_checkpoint",
                        help="generate attacks on this model instead (black-box transfer)")
    p_eval.add_argument("--timing", action="store_true", default=None,
                        help="record wall time in the CSV (breaks byte reproducibility)")

    p_sweep = sub.add_parser("sweep", help="accuracy along a budget axis")
    shared(p_sweep)
    p_sweep.add_argument("--checkpoint", help="model checkpoint to evaluate")
    p_sweep.add_argument("--axis", choices=("pixel", "spatial"))
    p_sweep.add_argument("--values", help="comma-separated budgets (CLI units)")

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    shared(p_gc)
    p_gc.add_argument("--instances", type=int, default=20)
    p_gc.add_argument("--tol", type=float, default=1e-4)
    p_gc.add_argument("--inject-fault", dest="inject_fault", choices=CHECKS,
                      help="corrupt one gradient path (harness self-test)")

    return parser


def main(argv=None) -> int:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("ADVFLOW_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _defaults()
        if args.config:
            _merge_file(cfg, args.config)
        _apply_flags(cfg, args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "attack":
            return cmd_attack(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.instances, args.tol, args.inject_fault)
        raise AssertionError(args.command)
    except (AdvflowError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
