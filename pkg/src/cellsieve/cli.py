"""Command line entry point: ``cellsieve <subcommand> ...``.

Exit codes: 0 success, 2 input error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .data_io import (
    SynthConfig,
    atomic_write_text,
    generate_synthetic,
    load_expression,
    load_labels,
    write_synthetic,
)
from .errors import ConvergenceError, InputError
from .evaluation import POLARITIES, evaluate
from .noise_filter import FilterConfig, compute_degrees, select_samples
from .pipeline import (
    ALGORITHMS,
    RunConfig,
    _fmt,
    degrees_csv,
    dump_json,
    run_pipeline,
    run_shrinkage,
    write_shrinkage,
)

EXIT_INPUT = 2
EXIT_CONVERGENCE = 3


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _lambda(text):
    if text == "auto":
        return text
    return float(text)


def _add_filter_args(p):
    g = p.add_argument_group("filtering")
    g.add_argument("--eigenvectors", type=int, default=1, help="number t of eigenvectors (default 1)")
    keep = g.add_mutually_exclusive_group()
    keep.add_argument("--keep-frac", type=float, help="fraction of training samples to keep (default 0.75)")
    keep.add_argument("--keep-count", type=int, help="absolute number q of samples to keep")
    keep.add_argument("--keep-max-degree", type=float, help="keep samples with angle <= this many degrees")


def _add_run_args(p, multi=False):
    io = p.add_argument_group("inputs")
    io.add_argument("--train-x", required=True)
    io.add_argument("--train-y", required=True)
    io.add_argument("--test-x", required=True)
    io.add_argument("--test-labels", required=True)
    if multi:
        p.add_argument("--algorithms", default=",".join(ALGORITHMS),
                       help="comma-separated algorithm abbreviations (default: all six)")
    else:
        p.add_argument("--algorithm", choices=list(ALGORITHMS), default="PA+RR")
    _add_filter_args(p)
    lr = p.add_argument_group("learners")
    lr.add_argument("--ridge-lambda", type=_lambda, default="auto")
    lr.add_argument("--svr-c", type=float, default=1.0)
    lr.add_argument("--svr-epsilon", type=float, default=0.1)
    lr.add_argument("--svr-tol", type=float, default=1e-3)
    lr.add_argument("--sigmoid-gamma", type=float, default=None, help="default 1/n")
    lr.add_argument("--sigmoid-coef0", type=float, default=None, help="default 0")
    ev = p.add_argument_group("evaluation")
    ev.add_argument("--polarity", choices=POLARITIES, default="lower-sensitive")
    ev.add_argument("--pooled-t-test", action="store_true", help="Student pooled-variance t-test instead of Welch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock timing from reports")
    p.add_argument("--save-model", action="store_true", help="also write model.txt")


def _filter_config(args) -> FilterConfig:
    return FilterConfig(
        t=args.eigenvectors,
        count=args.keep_count,
        fraction=args.keep_frac,
        max_degree=args.keep_max_degree,
    )


def _run_config(args, algorithm) -> RunConfig:
    return RunConfig(
        algorithm=algorithm,
        train_x=args.train_x,
        train_y=args.train_y,
        test_x=args.test_x,
        test_labels=args.test_labels,
        filter=_filter_config(args),
        ridge_lambda=args.ridge_lambda,
        svr_c=args.svr_c,
        svr_epsilon=args.svr_epsilon,
        svr_tol=args.svr_tol,
        sigmoid_gamma=args.sigmoid_gamma,
        sigmoid_coef0=args.sigmoid_coef0,
        polarity=args.polarity,
        equal_var=args.pooled_t_test,
        seed=args.seed,
        output_dir=args.output_dir,
        timing=not args.no_timing,
        save_model=args.save_model,
    )


def cmd_pipeline(args):
    report = run_pipeline(_run_config(args, args.algorithm))
    print(f"{args.algorithm}: m={report.m} n={report.n} q={report.q} "
          f"AUC={report.auc:.4f} p={report.evaluation.p_value:.3g}")


def cmd_shrinkage(args):
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    config = _run_config(args, algorithms[0] if algorithms[0] in ALGORITHMS else "PA+RR")
    result = run_shrinkage(config, args.sizes, args.seed, algorithms)
    write_shrinkage(result, args.output_dir, per_run=not args.table_only)
    sys.stdout.write(result.table_csv())


def cmd_filter(args):
    train = load_expression(args.train_x)
    config = _filter_config(args)
    degrees, lam = compute_degrees(train.values, config.t)
    report = select_samples(degrees, config, lam)
    rank = np.empty(train.values.shape[0], dtype=int)
    rank[report.order] = np.arange(1, report.order.shape[0] + 1)
    chosen = set(report.selected.tolist())
    rows = [
        {"sample_id": sid, "degree": float(degrees[i]), "rank": int(rank[i]), "selected": i in chosen}
        for i, sid in enumerate(train.sample_ids)
    ]
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "degrees.csv", degrees_csv(rows))
    print(f"kept {report.q} of {len(rows)} samples")


def cmd_synth(args):
    config = SynthConfig(
        m=args.m, n=args.n, p=args.p,
        noise_fraction=args.noise_fraction,
        clean_sigma=args.clean_sigma,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    paths = write_synthetic(generate_synthetic(config), args.output_dir)
    for path in paths.values():
        print(path)


def cmd_evaluate(args):
    preds = load_scores(args.predictions)
    labels = load_labels(args.test_labels)
    pos = {sid: k for k, sid in enumerate(labels.sample_ids)}
    missing = [sid for sid in preds if sid not in pos]
    if missing:
        raise InputError(f"no label for sample {missing[0]!r}")
    ids = list(preds)
    scores = np.array([preds[s] for s in ids])
    sensitive = labels.sensitive[[pos[s] for s in ids]]
    report = evaluate(scores, sensitive, args.polarity, equal_var=args.pooled_t_test)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.json", dump_json(report.summary()))
    roc = ["threshold,fpr,tpr"]
    roc += [f"{_fmt(t)},{_fmt(f)},{_fmt(p)}" for t, (f, p) in zip(report.roc_thresholds, report.roc_points)]
    atomic_write_text(out / "roc.csv", "\n".join(roc) + "\n")
    print(f"AUC={report.auc:.4f} t={report.t_statistic:.4f} p={report.p_value:.3g}")


def load_scores(path):
    """Read ``sample_id,score[,...]`` (e.g. a predictions.csv) into an ordered dict."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: file is empty")
    start = 1 if rows[0] and rows[0][0].strip().lower() == "sample_id" else 0
    out = {}
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        if len(row) < 2:
            raise InputError(f"{path}:{lineno}: expected sample_id,score")
        sid = row[0].strip()
        if sid in out:
            raise InputError(f"{path}:{lineno}: duplicate sample id {sid!r}")
        try:
            out[sid] = float(row[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}:2: non-numeric score {row[1]!r}") from None
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="cellsieve", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run one algorithm end to end")
    _add_run_args(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("shrinkage", help="repeat runs on nested shrinking training sets")
    _add_run_args(p, multi=True)
    p.add_argument("--sizes", type=_csv_ints, required=True, help="e.g. 482,478,473,468,463")
    p.add_argument("--table-only", action="store_true", help="skip per-run output directories")
    p.set_defaults(func=cmd_shrinkage)

    p = sub.add_parser("filter", help="compute per-sample angles and the kept set")
    p.add_argument("--train-x", required=True)
    _add_filter_args(p)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--noise-fraction", type=float, default=0.2)
    p.add_argument("--clean-sigma", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="AUC, ROC and t-test for a score file")
    p.add_argument("--predictions", required=True, help="CSV sample_id,score")
    p.add_argument("--test-labels", required=True)
    p.add_argument("--polarity", choices=POLARITIES, default="lower-sensitive")
    p.add_argument("--pooled-t-test", action="store_true")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return 0


if __name__ == "__main__":
    sys.exit(main())
