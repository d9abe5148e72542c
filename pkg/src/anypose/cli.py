"""Command-line entry point: gen-data, train, forecast, eval, bench.

Every subcommand accepts ``--config <json>``, ``--seed`` and ``--out``. Values
come from built-in defaults, then the config file, then explicit flags, and
the merged result is echoed into every report written.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bn
from . import forecaster as fc
from . import motion as md
from . import training as tr
from ._io import atomic_write_text
from .pose import DEFAULT_FRAME_INTERVAL_SEC, DEFAULT_M_JOINTS, TABLE_GRID_SEC, PoseSequence, canonicalize

log = logging.getLogger("anypose")

U64 = 2**64


class CliError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return v


def _times(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated seconds, got {text!r}") from None


DEFAULTS: dict[str, dict] = {
    "gen-data": {
        "seed": md.DEFAULT_DATA_SEED,
        "out": "data",
        "m_joints": DEFAULT_M_JOINTS,
        "n": md.DEFAULT_N_SEQUENCES,
        "duration_sec": 3.0,
        "frame_interval_sec": DEFAULT_FRAME_INTERVAL_SEC,
    },
    "train": {
        "seed": 0,
        "out": "checkpoint.json",
        "data": "data",
        "order": 1,
        "history": None,
        "epochs": 500,
        "lr": 1e-3,
        "batch_size": 32,
        "hidden": [128, 128],
        "window_stride": 10,
        "patience": 500,
        "report": None,
    },
    "forecast": {
        "seed": 0,
        "out": None,
        "checkpoint": "checkpoint.json",
        "observed": None,
        "at": list(TABLE_GRID_SEC),
    },
    "eval": {
        "seed": 0,
        "out": None,
        "checkpoint": None,
        "data": "data",
        "horizons": list(TABLE_GRID_SEC),
        "stride": 1,
    },
    "bench": {
        "seed": 0,
        "out": None,
        "checkpoint": None,
        "data": None,
        "n_queries": 1000,
        "horizon_sec": 1.0,
        "warmup": 50,
        "dense_step_sec": 0.04,
        "strategies": list(bn.STRATEGIES),
    },
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anypose", description="Anytime pose forecasting with neural ODEs.")
    sub = p.add_subparsers(dest="command", metavar="{gen-data,train,forecast,eval,bench}")
    sub.required = True
    S = argparse.SUPPRESS  # only explicitly given flags land in the namespace

    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file of option values (flags win)")
    common.add_argument("--seed", type=_u64)
    common.add_argument("--out")

    g = sub.add_parser("gen-data", parents=[common], argument_default=S, help="write a synthetic dataset")
    g.add_argument("--m-joints", type=int)
    g.add_argument("--n", type=int, help="number of sequences (80/10/10 split)")
    g.add_argument("--duration-sec", type=float)
    g.add_argument("--frame-interval-sec", type=float)

    t = sub.add_parser("train", parents=[common], argument_default=S, help="train a model")
    t.add_argument("--data")
    t.add_argument("--order", type=int, choices=(1, 2))
    t.add_argument("--history", type=int, help="observed poses per window (defaults to the order)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--hidden", type=lambda s: [int(x) for x in s.split(",")])
    t.add_argument("--window-stride", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--report", help="training report path (default: <out>.report.json)")

    f = sub.add_parser("forecast", parents=[common], argument_default=S, help="forecast poses at given times")
    f.add_argument("--checkpoint")
    f.add_argument("--observed", help="pose CSV; the last poses are the history")
    f.add_argument("--at", type=_times, help="comma-separated seconds after the last observed pose")

    e = sub.add_parser("eval", parents=[common], argument_default=S, help="per-horizon MPJPE table")
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.add_argument("--horizons", type=_times)
    e.add_argument("--stride", type=int)

    b = sub.add_parser("bench", parents=[common], argument_default=S, help="anytime latency benchmark")
    b.add_argument("--checkpoint")
    b.add_argument("--data", help="dataset dir whose test split supplies observed windows")
    b.add_argument("--n-queries", type=int)
    b.add_argument("--horizon-sec", type=float)
    b.add_argument("--warmup", type=int)
    b.add_argument("--dense-step-sec", type=float)
    b.add_argument("--strategies", type=lambda s: s.split(","))
    return p


def merged_config(command: str, given: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    path = given.pop("config", None)
    if path is not None:
        try:
            from_file = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise CliError(f"cannot read config {path}: {e}") from None
        if not isinstance(from_file, dict):
            raise CliError(f"config {path} must hold a JSON object")
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = sorted(set(from_file) - set(cfg))
        if unknown:
            raise CliError(f"config {path}: unknown keys for {command}: {', '.join(unknown)}")
        cfg.update(from_file)
    cfg.update(given)
    return cfg


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise CliError(f"{what} directory not found: {p}")
    return p


def _require_file(path, what: str) -> Path:
    if path is None:
        raise CliError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {p}")
    return p


def _writable_parent(path) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise CliError(f"output directory does not exist: {parent}")
    if not os.access(parent, os.W_OK):
        raise CliError(f"output directory is not writable: {parent}")
    return p


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(_writable_parent(out), text)


# -- subcommands --------------------------------------------------------------


def cmd_gen_data(cfg: dict) -> int:
    family = md.MotionFamily(
        m_joints=int(cfg["m_joints"]),
        duration_sec=float(cfg["duration_sec"]),
        frame_interval_sec=float(cfg["frame_interval_sec"]),
    )
    family.validate()
    out = Path(cfg["out"])
    if out.exists() and not out.is_dir():
        raise CliError(f"--out exists and is not a directory: {out}")
    split = md.generate_dataset(family, int(cfg["n"]), int(cfg["seed"]))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory is not writable: {out}")
    md.write_dataset(split, out, extra={"run_config": cfg})
    print(f"wrote {int(cfg['n'])} sequences to {out}")
    return 0


def cmd_train(cfg: dict) -> int:
    data = _require_dir(cfg["data"], "data")
    out = _writable_parent(cfg["out"])
    report_path = _writable_parent(cfg["report"] or str(out.with_suffix("")) + ".report.json")
    order = int(cfg["order"])
    history = order if cfg["history"] is None else int(cfg["history"])
    if history < order:
        raise CliError(f"order {order} needs {order} observed poses per window, got history {history}")
    split = md.read_dataset(data)
    seed = int(cfg["seed"])
    model = fc.AnyPoseModel.create(
        order, split.m_joints, hidden=tuple(cfg["hidden"]), seed=seed,
        frame_interval_sec=split.train[0].frame_interval_sec,
    )
    tr.fit_normalization(model, split.train)
    tcfg = tr.TrainConfig(
        epochs=int(cfg["epochs"]), learning_rate=float(cfg["lr"]), batch_size=int(cfg["batch_size"]),
        seed=seed, window_stride=int(cfg["window_stride"]), patience=int(cfg["patience"]),
    )
    try:
        report = tr.train(model, split, tcfg, checkpoint_path=out)
    except tr.TrainingDiverged as e:
        e.report.config["run_config"] = cfg
        e.report.save(report_path)
        raise
    report.config["run_config"] = cfg
    report.save(report_path)
    timing = report_path.with_name(report_path.stem + ".timing.json")
    atomic_write_text(timing, json.dumps({"epoch_seconds": report.epoch_seconds}) + "\n")
    print(f"best epoch {report.best_epoch}: val MPJPE {report.best_val_mpjpe:.3f} mm; checkpoint {out}; report {report_path}")
    return 0


def cmd_forecast(cfg: dict) -> int:
    ck = _require_file(cfg["checkpoint"], "checkpoint")
    obs_path = _require_file(cfg["observed"], "observed")
    times = np.asarray(cfg["at"], dtype=np.float64)
    if times.size == 0 or np.any(~np.isfinite(times)) or np.any(times <= 0):
        raise CliError(f"--at times must be finite and > 0, got {cfg['at']}")
    model = fc.load(ck)
    seqs = md.load_sequences(obs_path)
    if len(seqs) != 1:
        raise CliError(f"expected one observed sequence, got {len(seqs)}")
    (obs,) = seqs
    h = model.history
    if len(obs) < h:
        raise CliError(f"order-{model.order} model needs {h} observed poses, file has {len(obs)}")
    window = PoseSequence(obs.poses[-h:], obs.frame_interval_sec, obs.timestamps()[-h])
    res = fc.forecast(model, window, times)
    t_abs = obs.timestamps()[-1] + times
    _emit(md.format_sequence_csv(t_abs, res.poses, obs.frame_interval_sec), cfg["out"])
    return 0


def _eval_model(cfg: dict):
    if cfg["checkpoint"] is None:
        return None
    return fc.load(_require_file(cfg["checkpoint"], "checkpoint"))


def cmd_eval(cfg: dict) -> int:
    split = md.read_dataset(_require_dir(cfg["data"], "data"))
    model = _eval_model(cfg)
    grid, _ = canonicalize(cfg["horizons"])
    preds = {"zero_velocity": md.ZeroVelocity(), "constant_velocity": md.ConstantVelocity()}
    if model is not None:
        preds[f"anypose_{model.order}"] = fc.ModelPredictor(model)
    report = md.evaluate(preds, split, grid, stride=int(cfg["stride"]))
    print(report.table())
    if cfg["out"] is not None:
        atomic_write_text(_writable_parent(cfg["out"]), json.dumps({**report.to_dict(), "run_config": cfg}, indent=1) + "\n")
    return 0


def cmd_bench(cfg: dict) -> int:
    model = _eval_model(cfg)
    bcfg = bn.BenchConfig(
        n_queries=int(cfg["n_queries"]), horizon_sec=float(cfg["horizon_sec"]), warmup=int(cfg["warmup"]),
        model_path=cfg["checkpoint"], strategies=tuple(cfg["strategies"]),
        dense_step_sec=float(cfg["dense_step_sec"]), seed=int(cfg["seed"]),
    )
    pool = None
    if cfg["data"] is not None:
        split = md.read_dataset(_require_dir(cfg["data"], "data"))
        h = max(2, model.history if model else 1)
        pool = [s.window(len(s) // 2, h) for s in split.test]
    if cfg["out"] is not None:
        _writable_parent(cfg["out"])
    report = bn.run_bench(bcfg, model, pool)
    report.config["run_config"] = cfg
    print(report.table())
    if cfg["out"] is not None:
        report.save(cfg["out"])
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "eval": cmd_eval,
    "bench": cmd_bench,
}

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("ANYPOSE_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)  # exits 2 with usage on bad input
    given = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        cfg = merged_config(args.command, given)
        return COMMANDS[args.command](cfg)
    except (CliError, ValueError, OSError, RuntimeError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"anypose {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
