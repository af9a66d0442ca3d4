"""Compare every method on the synthetic four-class task under either loss table.

    python3 scripts/medical_sweep.py --loss builtin:lambda1 --splits 20 --out results/lambda1
"""

import argparse
import logging

from riskcp.experiment import METHODS, ExperimentConfig, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--loss", default="builtin:lambda1")
    p.add_argument("--alphas", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.15, 0.2])
    p.add_argument("--methods", nargs="+", default=list(METHODS))
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--n-cal", type=int, default=200)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--temperature", type=float, default=1.0, help="miscalibrate predictions (1 = exact)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/medical")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ExperimentConfig(
        alphas=args.alphas, methods=args.methods, loss=args.loss, splits=args.splits,
        n_cal=args.n_cal, n_test=args.n_test, seed=args.seed, out=args.out,
        synth={"temperature": args.temperature},
    )
    res = run_experiment(cfg)
    print(f"{'method':<14} {'alpha':>6} {'worst-case':>11} {'realized':>9} {'miscov':>7}")
    for agg in res.aggregates:
        wc = agg.avg_worst_case_risk.mean
        mc = agg.miscoverage.mean
        print(f"{agg.method_name:<14} {agg.alpha:>6.2f} {wc if wc is not None else float('nan'):>11.3f} "
              f"{agg.avg_realized_loss.mean:>9.3f} {mc if mc is not None else float('nan'):>7.3f}")
    print("wrote", *res.paths)


if __name__ == "__main__":
    main()
