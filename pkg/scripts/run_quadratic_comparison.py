#!/usr/bin/env python3
"""Compare plain error feedback against the momentum variant on generated
heterogeneous quadratics, with per-method step-size tuning.

Desk-scaled (n=20, d=100) version of the synthetic quadratic study; see
results/quad/ for traces and the manifest with the tuned step sizes.

Usage: python scripts/run_quadratic_comparison.py [--rounds N] [--out DIR]
"""

import argparse

from efsim.experiments import run_experiment
from efsim.presets import preset_experiments


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--out", default="results/quad")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    for exp in preset_experiments("quad3", rounds=args.rounds):
        print(f"== {exp['name']} (tuning step sizes on a power-of-two grid) ==")
        summary = run_experiment(exp, args.out, workers=args.workers)
        for algo, stats in summary.items():
            if not algo.startswith("_"):
                print(
                    f"  {algo:10s} gamma={stats['gamma']:.4g}  "
                    f"median final objective gap = {stats['final_obj_gap_median']:.6g}"
                )


if __name__ == "__main__":
    main()
