"""Stage timings of the affinity computation as the ensemble grows.

Stage 1 (one state per series) should scale linearly in N, stage 2
(N(N-1) cheap evaluations) quadratically.

    python3 scripts/timing_decoupling.py --sizes 50,100,200,400 --runs 5
"""

import argparse
import statistics

import numpy as np

from mca.affinity import PredictorConfig, compute_affinity
from mca.ensemble import Ensemble


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="50,100,200,400")
    ap.add_argument("--length", type=int, default=488)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--predictor", choices=("glm", "grbf"), default="glm")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    cfg = PredictorConfig(kind=args.predictor)
    print("N,expensive,cheap,stage1_s,stage2_s")
    for N in (int(v) for v in args.sizes.split(",")):
        x = np.random.default_rng(N).standard_normal((N, args.length))
        runs = [compute_affinity(Ensemble(x), cfg, args.threads) for _ in range(args.runs)]
        s1 = statistics.median(r.timings["stage1_s"] for r in runs)
        s2 = statistics.median(r.timings["stage2_s"] for r in runs)
        c = runs[0].stage_counts
        print(f"{N},{c['expensive']},{c['cheap']},{s1:.4f},{s2:.4f}")


if __name__ == "__main__":
    main()
