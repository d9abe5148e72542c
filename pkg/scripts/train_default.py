"""Train a model on the default synthetic dataset and print the horizon table.

    python3 scripts/train_default.py --order 1 --epochs 500 --out runs/default
"""

import argparse
import json
import logging
import time
from pathlib import Path

from anypose import forecaster as fc
from anypose import training as tr
from anypose.motion import ConstantVelocity, MotionFamily, ZeroVelocity, evaluate, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--order", type=int, choices=(1, 2), default=1)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="runs/default")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(MotionFamily(), seed=args.seed)
    model = fc.AnyPoseModel.create(args.order, data.m_joints, seed=args.seed)
    tr.fit_normalization(model, data.train)
    t0 = time.perf_counter()
    report = tr.train(model, data, tr.TrainConfig(epochs=args.epochs, seed=args.seed), out / "checkpoint.json")
    print(f"trained {len(report.train_mpjpe)} epochs in {time.perf_counter() - t0:.0f} s; best epoch {report.best_epoch}")
    report.save(out / "train_report.json")

    rep = evaluate(
        {"zero_velocity": ZeroVelocity(), "constant_velocity": ConstantVelocity(),
         f"anypose_{args.order}": fc.ModelPredictor(model)},
        data,
    )
    print(rep.table())
    (out / "eval.json").write_text(json.dumps(rep.to_dict(), indent=1) + "\n")


if __name__ == "__main__":
    main()
