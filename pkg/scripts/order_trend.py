"""Compare first- and second-order models at the 80 ms horizon over several seeds.

    python3 scripts/order_trend.py --seeds 0 1 2 3 4 --epochs 20
"""

import argparse

from anypose import forecaster as fc
from anypose import training as tr
from anypose.motion import MotionFamily, evaluate, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--horizons", type=float, nargs="+", default=[0.08, 0.4, 1.0])
    args = ap.parse_args()

    wins = 0
    print("seed | " + " ".join(f"o1@{t * 1000:g}ms o2@{t * 1000:g}ms" for t in args.horizons))
    for seed in args.seeds:
        data = generate_dataset(MotionFamily(), seed=seed)
        res = {}
        for order in (1, 2):
            model = fc.AnyPoseModel.create(order, data.m_joints, seed=seed)
            tr.fit_normalization(model, data.train)
            tr.train(model, data, tr.TrainConfig(epochs=args.epochs, seed=seed))
            res[order] = evaluate(fc.ModelPredictor(model), data, args.horizons).mpjpe_mm["model"]
        wins += res[2][0] < res[1][0]
        cells = " ".join(f"{a:8.2f} {b:8.2f}" for a, b in zip(res[1], res[2]))
        print(f"{seed:4d} | {cells}")
    print(f"order 2 better at {args.horizons[0] * 1000:g} ms on {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
