"""Batch command line: segment a corpus, generate synthetic data, evaluate.

Exit codes: 0 success, 1 input error (bad files or arguments), 2 internal
invariant breach.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as corpus_io
from .errors import InputError, StateError
from .inference import RunConfig, run_inference
from .metrics import evaluate_segmentation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepseg",
        description="Unsupervised segmentation of multi-step activity sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment a feature corpus")
    seg.add_argument("--features", required=True, help="directory of <id>.feat.csv files")
    seg.add_argument("--labels", help="optional directory of <id>.labels.csv ground truth")
    seg.add_argument("--k", type=int, required=True, help="number of sub-activities")
    seg.add_argument("--q", type=int, default=3, help="mixture components per label")
    seg.add_argument(
        "--background",
        action=argparse.BooleanOptionalAction,
        default=False,
        help="model background frames",
    )
    seg.add_argument("--iterations", type=int, default=5)
    seg.add_argument("--epochs", type=int, default=12)
    seg.add_argument("--embed-dim", type=int, default=200)
    seg.add_argument("--margin", type=float, default=1.0)
    seg.add_argument("--lr", type=float, default=0.01)
    seg.add_argument("--l2", type=float, default=1e-4)
    seg.add_argument("--theta0", type=float, default=0.1)
    seg.add_argument("--rho0", type=float, default=1.0)
    seg.add_argument("--nu0", type=float, default=0.1)
    seg.add_argument("--alpha", type=float, default=0.2)
    seg.add_argument("--beta", type=float, default=0.2)
    seg.add_argument("--seed", type=int, required=True)
    seg.add_argument("--out", required=True, help="output directory")

    gen = sub.add_parser("generate", help="emit a synthetic corpus")
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--q", type=int, default=3)
    gen.add_argument("--videos", type=int, required=True)
    gen.add_argument("--frames", type=int, required=True, help="mean frames per video")
    gen.add_argument("--dim", type=int, required=True, help="raw feature dimension")
    gen.add_argument("--lambda", dest="background_rate", type=float, default=0.0)
    gen.add_argument("--separation", type=float, default=4.0)
    gen.add_argument("--rho", required=True, help="comma-separated dispersions (K-1 values)")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("--gt", required=True, help="directory of ground-truth labels")
    ev.add_argument("--pred", required=True, help="directory of predicted labels")
    return parser


def _cmd_segment(args) -> int:
    config = RunConfig(
        k=args.k,
        q=args.q,
        embed_dim=args.embed_dim,
        margin=args.margin,
        l2=args.l2,
        learning_rate=args.lr,
        epochs=args.epochs,
        outer_iterations=args.iterations,
        theta0=args.theta0,
        rho0=args.rho0,
        nu0=args.nu0,
        alpha=args.alpha,
        beta=args.beta,
        background_enabled=args.background,
        seed=args.seed,
    )
    corpus = corpus_io.read_features(args.features)
    gt = None
    if args.labels:
        gt = corpus_io.match_labels(corpus, corpus_io.read_labels(args.labels))
    rng = np.random.default_rng(config.seed)
    result = run_inference(corpus, config, rng)
    metrics = None
    metrics_trace = None
    if gt is not None:
        metrics = evaluate_segmentation(gt, [st.z for st in result.states])
        metrics_trace = [
            evaluate_segmentation(gt, zs) for zs in result.diagnostics.z_trace
        ]
    summary = corpus_io.build_summary(result, corpus.ids, config, metrics, metrics_trace)
    corpus_io.write_outputs(result, corpus.ids, summary, args.out, rng)
    if metrics is not None:
        for name in ("mof", "jaccard", "f1"):
            print(f"{name}={metrics[name]:.6f}")
    print(f"wrote {len(corpus.ids)} segmentations to {args.out}")
    return 0


def _cmd_generate(args) -> int:
    try:
        rho = [float(x) for x in args.rho.split(",")] if args.rho else []
    except ValueError:
        raise InputError(f"cannot parse --rho {args.rho!r}") from None
    gen = corpus_io.GeneratorConfig(
        k=args.k,
        q=args.q,
        videos=args.videos,
        mean_frames=args.frames,
        dim=args.dim,
        rho=rho,
        background_rate=args.background_rate,
        separation=args.separation,
        seed=args.seed,
    )
    rng = np.random.default_rng(gen.seed)
    corpus, labels, truth = corpus_io.generate_synthetic(gen, rng)
    corpus_io.write_corpus(corpus, labels, args.out, truth)
    print(f"wrote {len(corpus.ids)} videos to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    gt = corpus_io.read_labels(args.gt)
    pred = corpus_io.read_labels(args.pred)
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise InputError(f"predictions missing for: {', '.join(missing)}")
    ids = sorted(gt)
    metrics = evaluate_segmentation([gt[i] for i in ids], [pred[i] for i in ids])
    for name in ("mof", "jaccard", "f1"):
        print(f"{name}={metrics[name]:.6f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "segment":
            return _cmd_segment(args)
        if args.command == "generate":
            return _cmd_generate(args)
        return _cmd_evaluate(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StateError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
