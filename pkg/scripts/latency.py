"""Anytime vs dense-grid-then-interpolate latency for a trained checkpoint.

    python3 scripts/latency.py runs/default/checkpoint.json --out runs/default/bench.json
"""

import argparse

from anypose import bench as bn
from anypose import forecaster as fc


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("checkpoint")
    ap.add_argument("--n-queries", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    model = fc.load(args.checkpoint)
    pool = bn.default_observed_pool(model.m_joints, max(2, model.history), seed=7)
    rep = bn.run_bench(bn.BenchConfig(n_queries=args.n_queries, seed=args.seed), model, pool)
    print(rep.table())
    s = rep.strategies
    print(f"speedup of anytime over dense: {s['dense_interpolate']['mean_sec'] / s['anytime_ode']['mean_sec']:.1f}x")
    dense = s["dense_interpolate"]
    print(f"dense components: forecast {dense['forecast_mean_sec']:.3e} s, interpolation {dense['interpolate_mean_sec']:.3e} s")
    c = rep.eval_count_checks
    print(f"anytime evals non-decreasing in t: {c['anytime_non_decreasing']}; dense evals constant: {c['dense_constant']}")
    if args.out:
        rep.save(args.out)


if __name__ == "__main__":
    main()
