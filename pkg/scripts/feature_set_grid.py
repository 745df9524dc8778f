"""AP grid over feature sets x temporal segments on a synthetic or on-disk corpus.

    python3 scripts/feature_set_grid.py --effect 1.5 --members 200 -o grid.json
    python3 scripts/feature_set_grid.py --manifest data/manifest.json --members 1000
"""
import argparse
import os
import tempfile
import time

from lowrapport.evaluation import format_table, run_experiment, write_reports
from lowrapport.features.sets import FeatureCache
from lowrapport.io import load_corpus
from lowrapport.model import SEGMENTS
from lowrapport.svm import LearnerConfig
from lowrapport.synth import GenConfig, PlantedEffect, generate_corpus

DEFAULT_SETS = ("speech_act", "prosody", "hand", "personality", "face", "face+speech_act",
                "face+personality", "face+speech_act+hand+prosody")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--manifest", help="existing corpus; a synthetic one is generated otherwise")
    ap.add_argument("--effect", type=float, default=1.5)
    ap.add_argument("--corpus-seed", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--members", type=int, default=200)
    ap.add_argument("--sets", default=",".join(DEFAULT_SETS))
    ap.add_argument("--jobs", type=int, default=os.cpu_count())
    ap.add_argument("-o", "--output", default="feature_grid.json")
    args = ap.parse_args()

    manifest = args.manifest
    if manifest is None:
        effects = (PlantedEffect("face", 1, args.effect),) if args.effect > 0 else ()
        manifest = generate_corpus(GenConfig(planted_effects=effects, seed=args.corpus_seed),
                                   tempfile.mkdtemp(prefix="grid_"))
    corpus = load_corpus(manifest)
    cache = FeatureCache(corpus, jobs=args.jobs)
    learner = LearnerConfig(members=args.members, seed=args.seed)
    reports = []
    for fs in args.sets.split(","):
        for seg in SEGMENTS:
            t0 = time.perf_counter()
            r = run_experiment(corpus, fs, seg, learner, features=cache, jobs=args.jobs)
            print(f"{fs:<32} {seg:<7} AP {r.pooled_ap:.3f}  ({time.perf_counter() - t0:.1f}s)", flush=True)
            reports.append(r)
    write_reports(args.output, reports)
    print()
    print(format_table(reports), end="")


if __name__ == "__main__":
    main()
