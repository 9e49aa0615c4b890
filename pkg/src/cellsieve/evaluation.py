"""ROC/AUC against binary clinical outcomes, t-tests, and mean AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InputError

SENSITIVE = "sensitive"
RESISTANT = "resistant"
POLARITIES = ("lower-sensitive", "higher-sensitive")


@dataclass(frozen=True)
class ClinicalLabels:
    sample_ids: tuple
    sensitive: np.ndarray  # bool per sample

    def __post_init__(self):
        if len(self.sample_ids) != self.sensitive.shape[0]:
            raise InputError("sample_ids and labels differ in length")

    def tokens(self):
        return [SENSITIVE if s else RESISTANT for s in self.sensitive]


def _positive_mask(labels, n):
    if isinstance(labels, ClinicalLabels):
        pos = labels.sensitive
    else:
        labels = list(labels)
        if labels and isinstance(labels[0], str):
            lowered = [s.lower() for s in labels]
            unknown = sorted(set(lowered) - {SENSITIVE, RESISTANT})
            if unknown:
                raise InputError(f"unknown label token {unknown[0]!r}")
            pos = np.array([s == SENSITIVE for s in lowered])
        else:
            pos = np.asarray(labels, dtype=bool)
    pos = np.asarray(pos, dtype=bool)
    if pos.shape != (n,):
        raise InputError(f"{pos.shape[0] if pos.ndim else 0} labels for {n} scores")
    if pos.all() or not pos.any():
        raise InputError("labels must contain both sensitive and resistant samples")
    return pos


def _effective(scores, labels, polarity):
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1:
        raise InputError("scores must be 1-D")
    if not np.all(np.isfinite(scores)):
        raise InputError("scores contain non-finite values")
    if polarity not in POLARITIES:
        raise InputError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
    pos = _positive_mask(labels, scores.shape[0])
    eff = -scores if polarity == "lower-sensitive" else scores
    return eff, pos


def midranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their ranks."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.shape[0])
    start = 0
    n = values.shape[0]
    while start < n:
        stop = start + 1
        while stop < n and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + 1 + stop)
        start = stop
    return ranks


def auc_midrank(scores, labels, polarity="lower-sensitive") -> float:
    """Mann-Whitney AUC: P(sensitive outranks resistant), ties counting one half."""
    eff, pos = _effective(scores, labels, polarity)
    n_pos = int(pos.sum())
    n_neg = pos.shape[0] - n_pos
    rank_sum = float(np.sum(midranks(eff)[pos]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, labels, polarity="lower-sensitive"):
    """Thresholds (raw score units), FPR and TPR, one point per distinct score.

    The first point is (0, 0) at an infinite threshold.  Under
    ``lower-sensitive`` a sample is called sensitive when its score is at or
    below the threshold.
    """
    eff, pos = _effective(scores, labels, polarity)
    n_pos = int(pos.sum())
    n_neg = pos.shape[0] - n_pos
    order = np.argsort(-eff, kind="stable")
    eff_sorted = eff[order]
    tp = np.cumsum(pos[order])
    fp = np.cumsum(~pos[order])
    last = np.flatnonzero(np.r_[eff_sorted[1:] != eff_sorted[:-1], True])
    thresholds = eff_sorted[last]
    if polarity == "lower-sensitive":
        thresholds = -thresholds
        start = -np.inf
    else:
        start = np.inf
    thresholds = np.r_[start, thresholds]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    return thresholds, fpr, tpr


def roc_points(scores, labels, polarity="lower-sensitive") -> np.ndarray:
    _, fpr, tpr = roc_curve(scores, labels, polarity)
    return np.column_stack([fpr, tpr])


def trapezoid_area(points) -> float:
    points = np.asarray(points, dtype=float)
    x, y = points[:, 0], points[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def incomplete_beta_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) via Lentz's continued fraction."""
    if not (a > 0 and b > 0):
        raise InputError(f"a and b must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise InputError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    # the fraction converges fast for x < (a + 1) / (a + b + 2); otherwise use symmetry
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a, b, x, max_iter=10_000, eps=1e-16):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided Student-t tail probability P(|T| >= |t|)."""
    if not df > 0:
        raise InputError(f"degrees of freedom must be positive, got {df}")
    return incomplete_beta_reg(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    df: float
    p_value: float


def welch_t_test(group_a, group_b, equal_var: bool = False) -> TTestResult:
    """Two-sided two-sample t-test; Welch-Satterthwaite df unless ``equal_var``."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    na, nb = a.shape[0], b.shape[0]
    if na < 2 or nb < 2:
        raise InputError(f"each group needs at least 2 values, got {na} and {nb}")
    va, vb = float(np.var(a, ddof=1)), float(np.var(b, ddof=1))
    diff = float(np.mean(a) - np.mean(b))
    if va == 0.0 and vb == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, float(na + nb - 2), 1.0)
        raise InputError("both groups are constant with different means; t is infinite")
    if equal_var:
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se2 = pooled * (1.0 / na + 1.0 / nb)
    else:
        sa, sb = va / na, vb / nb
        se2 = sa + sb
        df = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    t = diff / math.sqrt(se2)
    return TTestResult(t, df, t_two_sided_p(t, df))


def mauc(aucs) -> float:
    aucs = [float(v) for v in aucs]
    if not aucs:
        raise InputError("mauc needs at least one AUC")
    return math.fsum(aucs) / len(aucs)


@dataclass(frozen=True)
class EvalReport:
    auc: float
    roc_thresholds: np.ndarray
    roc_points: np.ndarray
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    n_sensitive: int
    n_resistant: int
    polarity: str

    def summary(self) -> dict:
        return {
            "auc": self.auc,
            "t_statistic": self.t_statistic,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_value": self.p_value,
            "n_sensitive": self.n_sensitive,
            "n_resistant": self.n_resistant,
            "polarity": self.polarity,
        }


def evaluate(scores, labels, polarity="lower-sensitive", equal_var=False) -> EvalReport:
    """AUC, ROC curve and a sensitive-vs-resistant t-test on predicted scores."""
    scores = np.asarray(scores, dtype=float)
    _, pos = _effective(scores, labels, polarity)
    thresholds, fpr, tpr = roc_curve(scores, pos, polarity)
    test = welch_t_test(scores[pos], scores[~pos], equal_var=equal_var)
    return EvalReport(
        auc=auc_midrank(scores, pos, polarity),
        roc_thresholds=thresholds,
        roc_points=np.column_stack([fpr, tpr]),
        t_statistic=test.statistic,
        degrees_of_freedom=test.df,
        p_value=test.p_value,
        n_sensitive=int(pos.sum()),
        n_resistant=int((~pos).sum()),
        polarity=polarity,
    )
