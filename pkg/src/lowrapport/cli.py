"""Command-line entry point.

Exit status: 0 on success, 1 when input data are invalid or incomplete, 2 on
usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CorpusError, InvalidConfig, UnknownFeatureSet
from .evaluation import (
    attribute_correlations,
    face_ablation,
    feature_tscores,
    format_table,
    permuted_labels,
    run_experiment,
    top_tscores,
    write_reports,
)
from .features.sets import FeatureCache, FeatureConfig, required_modalities, resolve_blocks, write_feature_csv
from .io import load_corpus
from .labels import corpus_labels
from .model import SEGMENTS
from .svm import DEFAULT_C_GRID, LearnerConfig, save_ensemble, train_ensemble
from .synth import GenConfig, PlantedEffect, generate_corpus

JOBS_ENV = "LOWRAPPORT_JOBS"


class UsageError(Exception):
    pass


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _split(value: str, allowed=None) -> list[str]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    if allowed is not None:
        if items == ["all"]:
            return list(allowed)
        bad = [v for v in items if v not in allowed]
        if bad:
            raise UsageError(f"unknown value(s) {bad}; expected {list(allowed)} or 'all'")
    return items


def _check_sets(sets, segments):
    for fs in sets:
        for seg in segments:
            try:
                resolve_blocks(fs, seg)
            except UnknownFeatureSet as exc:
                raise UsageError(str(exc)) from None


def _require(corpus, sets, segments):
    """Fail with the list of missing per-session stream files for the requested sets."""
    need = set()
    for fs in sets:
        for seg in segments:
            need |= required_modalities(fs, seg)
    missing = []
    for s, _ in corpus:
        for m in sorted(need):
            if not s.has_modality(m):
                missing.append(f"{s.session_id}: {m}_csv")
    if missing:
        raise CorpusError("missing stream files: " + ", ".join(missing))


def _learner(args) -> LearnerConfig:
    grid = tuple(float(c) for c in args.c_grid.split(",")) if args.c_grid else DEFAULT_C_GRID
    return LearnerConfig(members=args.members, c_grid=grid, cost=args.cost, gamma=args.gamma,
                         seed=args.seed, balanced=args.balanced)


def _add_learner_args(p):
    p.add_argument("--seed", type=int, required=True, help="master seed (all randomness)")
    p.add_argument("--members", type=int, default=1000, help="ensemble size")
    p.add_argument("--c-grid", default=None, help="comma-separated cost grid")
    p.add_argument("--cost", type=float, default=None, help="fixed cost; disables tuning")
    p.add_argument("--gamma", type=float, default=None, help="RBF gamma (default 1/(d*var))")
    p.add_argument("--balanced", action="store_true", help="inverse-frequency class weights")
    p.add_argument("--jobs", type=int, default=None, help=f"worker threads (env {JOBS_ENV})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowrapport", description="Low-rapport detection in small groups")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check a corpus manifest")
    p.add_argument("manifest")

    p = sub.add_parser("features", help="export a feature matrix as CSV")
    p.add_argument("manifest")
    p.add_argument("--set", dest="feature_set", required=True)
    p.add_argument("--segment", default="full", choices=SEGMENTS)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("eval", help="leave-one-interaction-out evaluation")
    p.add_argument("manifest")
    p.add_argument("--set", dest="feature_set", required=True, help="comma-separated feature sets")
    p.add_argument("--segment", default="full", help="comma-separated segments or 'all'")
    p.add_argument("--table", action="store_true", help="also print an aligned AP table")
    p.add_argument("--permute-labels", type=int, default=None, metavar="SEED",
                   help="evaluate against randomly permuted labels (control)")
    p.add_argument("-o", "--output", default="eval_report.json")
    _add_learner_args(p)

    p = sub.add_parser("ablate-face", help="evaluate the five facial feature subsets")
    p.add_argument("manifest")
    p.add_argument("--table", action="store_true")
    p.add_argument("-o", "--output", default="face_ablation.json")
    _add_learner_args(p)

    p = sub.add_parser("train", help="fit one ensemble on the whole corpus and save it")
    p.add_argument("manifest")
    p.add_argument("--set", dest="feature_set", required=True)
    p.add_argument("--segment", default="full", choices=SEGMENTS)
    p.add_argument("-o", "--output", default="model.json")
    _add_learner_args(p)

    p = sub.add_parser("analyze", help="t-scores or attribute correlations")
    p.add_argument("analysis", choices=("tscores", "correlations"))
    p.add_argument("manifest")
    p.add_argument("--set", dest="feature_set", default="face_nosync")
    p.add_argument("--segment", default="full", choices=SEGMENTS)
    p.add_argument("--welch", action="store_true", help="unpooled variance t-test")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--effect", type=float, default=0.0, help="planted effect size d")
    p.add_argument("--family", default="face", help="comma-separated effect families")
    p.add_argument("--sessions", type=int, default=22)
    p.add_argument("--four-person", type=int, default=12)
    p.add_argument("--duration", type=float, default=1200.0)
    p.add_argument("--frame-rate", type=float, default=10.0)
    return ap


def _jobs(args) -> int:
    return args.jobs if getattr(args, "jobs", None) else _default_jobs()


def _write_table(reports, output, show: bool) -> None:
    if show:
        table = format_table(reports)
        Path(output).with_suffix(".txt").write_text(table)
        sys.stdout.write(table)


def cmd_validate(args) -> int:
    corpus = load_corpus(args.manifest)
    n = sum(len(s.participants) for s, _ in corpus)
    print(f"ok: {len(corpus)} sessions, {n} participants, {corpus_labels(corpus).n_low} low-rapport")
    return 0


def cmd_features(args) -> int:
    _check_sets([args.feature_set], [args.segment])
    corpus = load_corpus(args.manifest)
    _require(corpus, [args.feature_set], [args.segment])
    rows, names, X = FeatureCache(corpus, FeatureConfig(), _jobs(args)).matrix(args.feature_set, args.segment)
    write_feature_csv(args.output, rows, names, X, args.segment)
    print(f"wrote {len(rows)} rows x {len(names)} features to {args.output}")
    return 0


def cmd_eval(args) -> int:
    sets = _split(args.feature_set)
    segments = _split(args.segment, SEGMENTS)
    _check_sets(sets, segments)
    corpus = load_corpus(args.manifest)
    _require(corpus, sets, segments)
    jobs = _jobs(args)
    learner = _learner(args)
    cache = FeatureCache(corpus, FeatureConfig(), jobs)
    labels = corpus_labels(corpus)
    if args.permute_labels is not None:
        labels = permuted_labels(labels, args.permute_labels)
    reports = [run_experiment(corpus, fs, seg, learner, features=cache, labels=labels, jobs=jobs)
               for fs in sets for seg in segments]
    write_reports(args.output, reports)
    for r in reports:
        print(f"{r.feature_set:<24} {r.segment:<7} AP {r.pooled_ap:.3f} (chance {r.chance_ap:.3f})")
    _write_table(reports, args.output, args.table)
    return 0


def cmd_ablate(args) -> int:
    corpus = load_corpus(args.manifest)
    _require(corpus, ["face"], ["full"])
    jobs = _jobs(args)
    reports = face_ablation(corpus, _learner(args), features=FeatureCache(corpus, FeatureConfig(), jobs), jobs=jobs)
    write_reports(args.output, list(reports.values()))
    for name, r in reports.items():
        print(f"{name:<16} AP {r.pooled_ap:.3f}")
    _write_table(list(reports.values()), args.output, args.table)
    return 0


def cmd_train(args) -> int:
    _check_sets([args.feature_set], [args.segment])
    corpus = load_corpus(args.manifest)
    _require(corpus, [args.feature_set], [args.segment])
    rows, names, X = FeatureCache(corpus, FeatureConfig(), _jobs(args)).matrix(args.feature_set, args.segment)
    labels = corpus_labels(corpus)
    y = np.array([1 if labels.low[p] else -1 for _, p in rows])
    groups = [sid for sid, _ in rows]
    ens = train_ensemble(X, y, groups, _learner(args), feature_names=names)
    save_ensemble(ens, args.output)
    print(f"saved {len(ens.seeds)}-member ensemble (C={ens.cost:g}, gamma={ens.gamma:.4g}) to {args.output}")
    return 0


def cmd_analyze(args) -> int:
    corpus = load_corpus(args.manifest)
    if args.analysis == "correlations":
        result = attribute_correlations(corpus)
        names = result["variables"]
        print(" " * 11 + "".join(f"{n[:6]:>8}" for n in names))
        for i, n in enumerate(names):
            cells = "".join(f"{result['r'][i][j]:7.2f}{'*' if result['significant'][i][j] and i != j else ' '}"
                            for j in range(len(names)))
            print(f"{n[:10]:<11}{cells}")
    else:
        _check_sets([args.feature_set], [args.segment])
        _require(corpus, [args.feature_set], [args.segment])
        rows, names, X = FeatureCache(corpus).matrix(args.feature_set, args.segment)
        labels = corpus_labels(corpus)
        lab = np.array([labels.low[p] for _, p in rows])
        t = feature_tscores(X, lab, names, equal_var=not args.welch)
        result = {"feature_set": args.feature_set, "segment": args.segment, "t": t,
                  "top": top_tscores(t, args.top)}
        for name, v in result["top"]:
            print(f"{name:<32} {v:7.2f}")
    if args.output:
        Path(args.output).write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_synth(args) -> int:
    families = _split(args.family)
    effects = tuple(PlantedEffect(f, 1, args.effect) for f in families) if args.effect > 0 else ()
    cfg = GenConfig(sessions=args.sessions, four_person_sessions=args.four_person,
                    duration=args.duration, frame_rate=args.frame_rate,
                    planted_effects=effects, seed=args.seed)
    manifest = generate_corpus(cfg, args.output)
    print(f"wrote {cfg.n_participants} participants in {cfg.sessions} sessions to {manifest}")
    return 0


COMMANDS = {"validate": cmd_validate, "features": cmd_features, "eval": cmd_eval,
            "ablate-face": cmd_ablate, "train": cmd_train, "analyze": cmd_analyze, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
