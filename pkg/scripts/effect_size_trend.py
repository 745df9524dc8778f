"""Pooled face AP as a function of the planted effect size.

    python3 scripts/effect_size_trend.py --sizes 0,0.5,1,1.5 --corpora 5 --members 100

Shorter sessions and smaller ensembles keep a full sweep to a few minutes; the
trend, not the absolute level, is what this measures.
"""
import argparse
import os

import numpy as np

from lowrapport.evaluation import run_experiment
from lowrapport.features.sets import FeatureCache
from lowrapport.svm import LearnerConfig
from lowrapport.synth import GenConfig, PlantedEffect, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", default="0,0.5,1,1.5")
    ap.add_argument("--corpora", type=int, default=5)
    ap.add_argument("--members", type=int, default=100)
    ap.add_argument("--duration", type=float, default=400.0)
    ap.add_argument("--frame-rate", type=float, default=5.0)
    ap.add_argument("--feature-set", default="face")
    ap.add_argument("--jobs", type=int, default=os.cpu_count())
    args = ap.parse_args()

    learner = LearnerConfig(members=args.members, seed=0)
    rows = []
    for d in (float(x) for x in args.sizes.split(",")):
        aps = []
        for c in range(args.corpora):
            effects = (PlantedEffect("face", 1, d),) if d > 0 else ()
            corpus, _ = generate(GenConfig(planted_effects=effects, seed=100 + c,
                                           duration=args.duration, frame_rate=args.frame_rate))
            r = run_experiment(corpus, args.feature_set, "full", learner,
                               features=FeatureCache(corpus, jobs=args.jobs), jobs=args.jobs)
            aps.append(r.pooled_ap)
        rows.append((d, np.mean(aps), np.std(aps, ddof=1) if len(aps) > 1 else 0.0))
        print(f"d={d:<4g} mean AP {rows[-1][1]:.3f}  sd {rows[-1][2]:.3f}  ({', '.join(f'{a:.2f}' for a in aps)})",
              flush=True)
    means = [m for _, m, _ in rows]
    print("monotone" if all(b >= a for a, b in zip(means, means[1:])) else "not monotone")


if __name__ == "__main__":
    main()
