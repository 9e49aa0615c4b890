"""End-to-end runs: load, align, filter, train, predict, evaluate, report."""

from __future__ import annotations

import json
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (
    ExpressionMatrix,
    ResponseVector,
    SplitMix64,
    align_genes,
    atomic_write_text,
    load_expression,
    load_labels,
    load_responses,
    reorder_by_ids,
)
from .errors import InputError
from .evaluation import ClinicalLabels, EvalReport, evaluate, mauc
from .learners import KernelSpec, predict, save_model, train_ridge, train_svr
from .noise_filter import FilterConfig, FilterReport, filter_training_set

# abbreviation -> (filter first?, learner, kernel)
ALGORITHMS = {
    "PA+SVR+L": (True, "svr", "linear"),
    "PA+SVR+S": (True, "svr", "sigmoid"),
    "PA+RR": (True, "ridge", None),
    "B+SVR+L": (False, "svr", "linear"),
    "B+SVR+S": (False, "svr", "sigmoid"),
    "B+RR": (False, "ridge", None),
}


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "PA+RR"
    train_x: str | None = None
    train_y: str | None = None
    test_x: str | None = None
    test_labels: str | None = None
    filter: FilterConfig = field(default_factory=FilterConfig)
    ridge_lambda: float | str = "auto"
    svr_c: float = 1.0
    svr_epsilon: float = 0.1
    svr_tol: float = 1e-3
    sigmoid_gamma: float | None = None
    sigmoid_coef0: float | None = None
    polarity: str = "lower-sensitive"
    equal_var: bool = False
    seed: int = 0
    output_dir: str | None = None
    timing: bool = True
    save_model: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InputError(
                f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}"
            )

    @property
    def filtered(self) -> bool:
        return ALGORITHMS[self.algorithm][0]

    def kernel(self) -> KernelSpec:
        kind = ALGORITHMS[self.algorithm][2]
        if kind == "sigmoid":
            return KernelSpec("sigmoid", self.sigmoid_gamma, self.sigmoid_coef0)
        return KernelSpec("linear")

    def echo(self) -> dict:
        keep = {k: getattr(self.filter, k) for k in ("count", "fraction", "max_degree")}
        out = {
            "algorithm": self.algorithm,
            "train_x": self.train_x,
            "train_y": self.train_y,
            "test_x": self.test_x,
            "test_labels": self.test_labels,
            "polarity": self.polarity,
            "t_test": "student" if self.equal_var else "welch",
            "seed": self.seed,
        }
        if self.filtered:
            out["filter"] = {"t": self.filter.t, **{k: v for k, v in keep.items() if v is not None}}
        if ALGORITHMS[self.algorithm][1] == "ridge":
            out["ridge_lambda"] = self.ridge_lambda
        else:
            out["svr"] = {"C": self.svr_c, "epsilon": self.svr_epsilon, "tol": self.svr_tol}
            kernel = self.kernel()
            if kernel.kind == "sigmoid":
                out["svr"]["gamma"] = self.sigmoid_gamma
                out["svr"]["coef0"] = self.sigmoid_coef0
        return out


@dataclass
class RunReport:
    config: RunConfig
    m: int
    n: int
    q: int
    train_ids: tuple
    filter_report: FilterReport | None
    test_ids: tuple
    scores: np.ndarray
    labels: ClinicalLabels
    evaluation: EvalReport
    model: object = None
    hyperparameters: dict = field(default_factory=dict)
    seconds: float | None = None

    @property
    def auc(self) -> float:
        return self.evaluation.auc

    def degree_rows(self):
        if self.filter_report is None:
            return None
        rep = self.filter_report
        rank = np.empty(rep.order.shape[0], dtype=int)
        rank[rep.order] = np.arange(1, rep.order.shape[0] + 1)
        chosen = set(rep.selected.tolist())
        return [
            {
                "sample_id": sid,
                "degree": float(rep.degrees[i]),
                "rank": int(rank[i]),
                "selected": i in chosen,
            }
            for i, sid in enumerate(self.train_ids)
        ]

    def to_dict(self) -> dict:
        out = {
            "version": __version__,
            "config": self.config.echo(),
            "m": self.m,
            "n": self.n,
            "q": self.q,
            "hyperparameters": self.hyperparameters,
            "evaluation": self.evaluation.summary(),
            "predictions": [
                {"sample_id": sid, "score": float(s), "label": lab}
                for sid, s, lab in zip(self.test_ids, self.scores, self.labels.tokens())
            ],
        }
        degrees = self.degree_rows()
        if degrees is not None:
            out["degrees"] = degrees
            out["eigenvalues_used"] = [float(v) for v in self.filter_report.eigenvalues_used]
        if self.seconds is not None:
            out["timing_seconds"] = self.seconds
        return out


def run_on_data(
    train: ExpressionMatrix,
    responses: ResponseVector,
    test: ExpressionMatrix,
    labels: ClinicalLabels,
    config: RunConfig,
) -> RunReport:
    started = time.perf_counter()
    train, test = align_genes(train, test)
    y = reorder_by_ids(train.sample_ids, responses.sample_ids, responses.values, "response")
    sensitive = reorder_by_ids(test.sample_ids, labels.sample_ids, labels.sensitive, "label")
    labels = ClinicalLabels(test.sample_ids, np.asarray(sensitive, dtype=bool))

    x = train.values
    filter_report = None
    if config.filtered:
        x, y, filter_report = filter_training_set(x, y, config.filter)

    _, learner, _ = ALGORITHMS[config.algorithm]
    if learner == "ridge":
        model = train_ridge(x, y, config.ridge_lambda)
        hyper = {"lambda": model.lam}
    else:
        model = train_svr(
            x, y, config.kernel(), C=config.svr_c, epsilon=config.svr_epsilon, tol=config.svr_tol
        )
        hyper = {
            "C": model.C,
            "epsilon": model.epsilon,
            "kernel": model.kernel.kind,
            "support_vectors": int(model.beta.shape[0]),
            "kkt_violation": model.kkt_violation,
        }
        if model.kernel.kind == "sigmoid":
            hyper["gamma"] = model.kernel.gamma
            hyper["coef0"] = model.kernel.coef0
    scores = predict(model, test.values)
    evaluation = evaluate(scores, labels, config.polarity, equal_var=config.equal_var)
    return RunReport(
        config=config,
        m=train.values.shape[0],
        n=train.values.shape[1],
        q=x.shape[0],
        train_ids=train.sample_ids,
        filter_report=filter_report,
        test_ids=test.sample_ids,
        scores=scores,
        labels=labels,
        evaluation=evaluation,
        model=model,
        hyperparameters=hyper,
        seconds=time.perf_counter() - started if config.timing else None,
    )


def _fmt(v) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(float(v), ".17g")


def _json_float(v: float) -> str:
    if not math.isfinite(v):
        raise InputError(f"cannot write non-finite value {v} to JSON")
    text = format(v, ".17g")
    return text if any(c in text for c in ".e") else text + ".0"


def _mark_floats(obj, found):
    # floats become placeholder strings so their text can be fixed at 17 digits
    if isinstance(obj, float):
        found.append(_json_float(obj))
        return f"\x00{len(found) - 1}\x00"
    if isinstance(obj, dict):
        return {k: _mark_floats(v, found) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_mark_floats(v, found) for v in obj]
    return obj


def dump_json(obj) -> str:
    """Indented JSON with every float written to 17 significant digits."""
    found = []
    text = json.dumps(_mark_floats(obj, found), indent=2)
    text = re.sub(r'"\\u0000(\d+)\\u0000"', lambda m: found[int(m.group(1))], text)
    return text + "\n"


def write_outputs(report: RunReport, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "report.json", dump_json(report.to_dict()))

    ev = report.evaluation
    roc = ["threshold,fpr,tpr"]
    roc += [f"{_fmt(t)},{_fmt(f)},{_fmt(p)}" for t, (f, p) in zip(ev.roc_thresholds, ev.roc_points)]
    atomic_write_text(out_dir / "roc.csv", "\n".join(roc) + "\n")

    preds = ["sample_id,score,label"]
    preds += [
        f"{sid},{_fmt(s)},{lab}"
        for sid, s, lab in zip(report.test_ids, report.scores, report.labels.tokens())
    ]
    atomic_write_text(out_dir / "predictions.csv", "\n".join(preds) + "\n")

    rows = report.degree_rows()
    if rows is not None:
        atomic_write_text(out_dir / "degrees.csv", degrees_csv(rows))
    if report.config.save_model:
        save_model(report.model, out_dir / "model.txt")


def degrees_csv(rows) -> str:
    lines = ["sample_id,degree,rank,selected"]
    lines += [
        f"{r['sample_id']},{_fmt(r['degree'])},{r['rank']},{int(r['selected'])}" for r in rows
    ]
    return "\n".join(lines) + "\n"


def load_inputs(config: RunConfig):
    missing = [k for k in ("train_x", "train_y", "test_x", "test_labels") if getattr(config, k) is None]
    if missing:
        raise InputError(f"missing input path(s): {', '.join(missing)}")
    return (
        load_expression(config.train_x),
        load_responses(config.train_y),
        load_expression(config.test_x),
        load_labels(config.test_labels),
    )


def run_pipeline(config: RunConfig) -> RunReport:
    """Run one algorithm from input files; write outputs when ``output_dir`` is set."""
    report = run_on_data(*load_inputs(config), config)
    if config.output_dir is not None:
        write_outputs(report, config.output_dir)
    return report


# ---------------------------------------------------------------------------
# shrinkage protocol


@dataclass
class ShrinkageResult:
    sizes: tuple
    algorithms: tuple
    reports: dict  # algorithm -> list of RunReport, one per size
    kept_ids: list  # training ids used at each size

    def mauc(self, algorithm) -> float:
        return mauc(r.auc for r in self.reports[algorithm])

    def q_column(self):
        filtered = [a for a in self.algorithms if ALGORITHMS[a][0]]
        if not filtered:
            return None
        return [self.reports[filtered[0]][k].q for k in range(len(self.sizes))]

    def table_csv(self) -> str:
        qs = self.q_column()
        header = ["m"] + (["q"] if qs is not None else []) + list(self.algorithms)
        lines = [",".join(header)]
        for k, size in enumerate(self.sizes):
            row = [str(size)] + ([str(qs[k])] if qs is not None else [])
            row += [_fmt(self.reports[a][k].auc) for a in self.algorithms]
            lines.append(",".join(row))
        row = ["MAUC"] + ([""] if qs is not None else [])
        row += [_fmt(self.mauc(a)) for a in self.algorithms]
        lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "algorithms": {
                a: {
                    "runs": [
                        {
                            "m": r.m,
                            "q": r.q,
                            "auc": r.auc,
                            "t_statistic": r.evaluation.t_statistic,
                            "p_value": r.evaluation.p_value,
                        }
                        for r in self.reports[a]
                    ],
                    "mauc": self.mauc(a),
                }
                for a in self.algorithms
            },
        }


def nested_subsets(ids, sizes, seed):
    """Training ids retained at each size; each set is drawn from the previous one."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InputError("at least one training size is required")
    if any(b > a for a, b in zip(sizes, sizes[1:])):
        raise InputError(f"sizes must be non-increasing, got {sizes}")
    if sizes[0] > len(ids):
        raise InputError(f"size {sizes[0]} exceeds the {len(ids)} available training samples")
    if sizes[-1] < 2:
        raise InputError("sizes must be at least 2")
    rng = SplitMix64(seed)
    current = list(ids)
    out = []
    for size in sizes:
        drop = set(rng.sample(len(current), len(current) - size))
        current = [sid for k, sid in enumerate(current) if k not in drop]
        out.append(tuple(current))
    return out


def _threads():
    raw = os.environ.get("CELLSIEVE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"CELLSIEVE_THREADS must be an integer, got {raw!r}") from None


def run_shrinkage(config: RunConfig, sizes, seed=None, algorithms=None, data=None) -> ShrinkageResult:
    """Repeat the pipeline on nested, randomly shrunk training sets.

    Every algorithm sees the same training subset at each size.  ``data`` may
    supply already-loaded ``(train, responses, test, labels)``.
    """
    seed = config.seed if seed is None else seed
    algorithms = tuple(algorithms or (config.algorithm,))
    for a in algorithms:
        if a not in ALGORITHMS:
            raise InputError(f"unknown algorithm {a!r}")
    train, responses, test, labels = data or load_inputs(config)
    subsets = nested_subsets(train.sample_ids, sizes, seed)
    pos = {sid: k for k, sid in enumerate(train.sample_ids)}

    tasks = [(a, k) for k in range(len(subsets)) for a in algorithms]

    def work(task):
        alg, k = task
        sub = train.take(pos[s] for s in subsets[k])
        cfg = replace(config, algorithm=alg, output_dir=None)
        return run_on_data(sub, responses, test, labels, cfg)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        done = list(pool.map(work, tasks))
    reports = {a: [None] * len(subsets) for a in algorithms}
    for (a, k), rep in zip(tasks, done):
        reports[a][k] = rep
    return ShrinkageResult(tuple(int(s) for s in sizes), algorithms, reports, subsets)


def write_shrinkage(result: ShrinkageResult, out_dir, per_run=True):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "shrinkage.csv", result.table_csv())
    atomic_write_text(out_dir / "summary.json", dump_json(result.summary()))
    if per_run:
        for a in result.algorithms:
            for size, rep in zip(result.sizes, result.reports[a]):
                slug = a.replace("+", "_")
                write_outputs(rep, out_dir / f"m{size}" / slug)
