"""Dual ridge regression and epsilon-SVR (linear and sigmoid kernels)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, InputError
from .linalg import as_matrix, eigh_symmetric, matmul

RIDGE_LAMBDA_GRID = tuple(10.0 ** e for e in np.arange(-3.0, 3.0 + 1e-9, 0.5))
TAU = 1e-12
FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    """``linear`` (u.v) or ``sigmoid`` (tanh(gamma u.v + coef0)).

    Sigmoid parameters left as ``None`` resolve to gamma = 1/n and coef0 = 0
    once the feature count is known.
    """

    kind: str = "linear"
    gamma: float | None = None
    coef0: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "sigmoid"):
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "linear" and (self.gamma is not None or self.coef0 is not None):
            raise InputError("gamma/coef0 only apply to the sigmoid kernel")
        for name in ("gamma", "coef0"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise InputError(f"{name} must be finite")

    def resolved(self, n_features: int) -> "KernelSpec":
        if self.kind == "linear":
            return self
        return replace(
            self,
            gamma=1.0 / n_features if self.gamma is None else float(self.gamma),
            coef0=0.0 if self.coef0 is None else float(self.coef0),
        )


def kernel_eval(k: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise InputError(f"kernel arguments must be equal-length vectors, got {u.shape}, {v.shape}")
    dot = 0.0
    for a, b in zip(u, v):
        dot += a * b
    if k.kind == "linear":
        return float(dot)
    k = k.resolved(u.shape[0])
    return float(np.tanh(k.gamma * dot + k.coef0))


def kernel_matrix(k: KernelSpec, a, b) -> np.ndarray:
    """Kernel values between every row of ``a`` and every row of ``b``."""
    gram = matmul(a, np.asarray(b, dtype=float).T)
    if k.kind == "sigmoid":
        gram = np.tanh(k.gamma * gram + k.coef0)
    if not np.all(np.isfinite(gram)):
        raise InputError("kernel matrix has non-finite values")
    return gram


def _check_xy(x, y, min_rows=2):
    x = as_matrix(x, "X")
    y = np.asarray(y, dtype=float)
    if y.shape != (x.shape[0],):
        raise InputError(f"y has shape {y.shape}, expected ({x.shape[0]},)")
    if not np.all(np.isfinite(y)):
        raise InputError("y has non-finite values")
    if x.shape[0] < min_rows:
        raise InputError(f"need at least {min_rows} training rows, got {x.shape[0]}")
    return x, y


# ---------------------------------------------------------------------------
# ridge regression


@dataclass(frozen=True)
class RidgeModel:
    dual_coefficients: np.ndarray
    training_rows: np.ndarray
    lam: float
    y_mean: float
    column_means: np.ndarray

    @property
    def n_features(self):
        return self.training_rows.shape[1]


def ridge_loo_errors(x, y, lambdas=RIDGE_LAMBDA_GRID) -> np.ndarray:
    """Exact leave-one-out mean squared error for each penalty in ``lambdas``.

    Centering is redone inside every held-out fold (an unpenalized
    intercept), which makes the hat matrix ``11^T/q + K (K + lam I)^-1`` with
    ``K`` the centered Gram matrix.
    """
    x, y = _check_xy(x, y, min_rows=3)
    q = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    eig = eigh_symmetric(matmul(xc, xc.T))
    s = np.clip(eig.values, 0.0, None)
    u = eig.vectors
    uty = u.T @ yc
    u2 = u * u
    out = []
    for lam in lambdas:
        shrink = s / (s + lam)
        resid = yc - u @ (shrink * uty)
        h = 1.0 / q + u2 @ shrink
        out.append(float(np.mean((resid / (1.0 - h)) ** 2)))
    return np.array(out)


def train_ridge(x, y, lam="auto", lambdas=RIDGE_LAMBDA_GRID) -> RidgeModel:
    """Fit ridge regression in its dual form on column-centered data.

    ``lam="auto"`` picks the grid value with the smallest exact LOOCV error
    (first one on ties).
    """
    x, y = _check_xy(x, y)
    if isinstance(lam, str):
        if lam != "auto":
            raise InputError(f"lambda must be a positive number or 'auto', got {lam!r}")
        if x.shape[0] < 3:
            raise InputError("automatic lambda needs at least 3 training rows")
        errs = ridge_loo_errors(x, y, lambdas)
        lam = float(lambdas[int(np.argmin(errs))])
    lam = float(lam)
    if not lam > 0 or not np.isfinite(lam):
        raise InputError(f"lambda must be positive and finite, got {lam}")

    means = x.mean(axis=0)
    xc = x - means
    y_mean = float(y.mean())
    gram = matmul(xc, xc.T)
    system = gram + lam * np.eye(x.shape[0])
    alpha = cho_solve(cho_factor(system, lower=True), y - y_mean)
    return RidgeModel(alpha, x.copy(), lam, y_mean, means)


# ---------------------------------------------------------------------------
# epsilon-SVR


@dataclass(frozen=True)
class SvrModel:
    beta: np.ndarray
    bias: float
    kernel: KernelSpec
    support_rows: np.ndarray
    C: float
    epsilon: float
    kkt_violation: float = 0.0
    iterations: int = 0

    @property
    def n_features(self):
        return self.support_rows.shape[1]


def svr_dual_objective(gram, y, beta, epsilon) -> float:
    """``0.5 b^T K b + eps * sum|b| - y^T b``."""
    beta = np.asarray(beta, dtype=float)
    return float(0.5 * beta @ gram @ beta + epsilon * np.sum(np.abs(beta)) - np.asarray(y) @ beta)


@njit(cache=True, nogil=True)
def _smo_loop(gram, sign, idx, a, grad, C, tol, max_iter):
    """Run SMO updates in place.  Returns (violation, iterations, converged)."""
    n2 = a.shape[0]
    kdiag = np.empty(n2)
    for t in range(n2):
        kdiag[t] = gram[idx[t], idx[t]]
    qi = np.empty(n2)
    qj = np.empty(n2)
    it = 0
    while True:
        # maximal violating first index, and the smallest value on the other side
        gmax = -np.inf
        gmax2 = -np.inf
        i = -1
        for t in range(n2):
            myg = -sign[t] * grad[t]
            up = a[t] < C if sign[t] > 0 else a[t] > 0
            low = a[t] > 0 if sign[t] > 0 else a[t] < C
            if up and myg > gmax:
                gmax = myg
                i = t
            if low and -myg > gmax2:
                gmax2 = -myg
        if i < 0 or gmax2 == -np.inf:
            return 0.0, it, True
        violation = gmax + gmax2
        if violation < tol:
            return violation, it, True
        if it >= max_iter:
            return violation, it, False

        for t in range(n2):
            qi[t] = sign[i] * sign[t] * gram[idx[i], idx[t]]
        # second index by largest second-order decrease
        j = -1
        best = np.inf
        for t in range(n2):
            low = a[t] > 0 if sign[t] > 0 else a[t] < C
            if not low:
                continue
            b = gmax + sign[t] * grad[t]
            if b > 0:
                quad = kdiag[i] + kdiag[t] - 2.0 * sign[i] * sign[t] * qi[t]
                if quad <= 0:
                    quad = TAU
                gain = -(b * b) / quad
                if gain < best:
                    best = gain
                    j = t
        if j < 0:
            return violation, it, True
        for t in range(n2):
            qj[t] = sign[j] * sign[t] * gram[idx[j], idx[t]]

        ai = a[i]
        aj = a[j]
        if sign[i] != sign[j]:
            quad_ij = kdiag[i] + kdiag[j] + 2.0 * qi[j]
            if quad_ij <= 0:
                quad_ij = TAU
            delta = (-grad[i] - grad[j]) / quad_ij
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            elif ai < 0:
                ai = 0.0
                aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            elif aj > C:
                aj = C
                ai = C + diff
        else:
            quad_ij = kdiag[i] + kdiag[j] - 2.0 * qi[j]
            if quad_ij <= 0:
                quad_ij = TAU
            delta = (grad[i] - grad[j]) / quad_ij
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            elif aj < 0:
                aj = 0.0
                ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            elif ai < 0:
                ai = 0.0
                aj = total

        d_i = ai - a[i]
        d_j = aj - a[j]
        a[i] = ai
        a[j] = aj
        for t in range(n2):
            grad[t] += qi[t] * d_i + qj[t] * d_j
        it += 1


def _solve_svr_dual(gram, y, C, epsilon, tol, max_iter):
    """SMO over the 2q-variable dual (alpha, alpha*) with second-order pair choice.

    Returns (beta, bias, final violation, iterations).
    """
    q = y.shape[0]
    sign = np.concatenate([np.ones(q), -np.ones(q)])
    idx = np.concatenate([np.arange(q), np.arange(q)])
    a = np.zeros(2 * q)
    grad = np.concatenate([epsilon - y, epsilon + y])
    violation, it, converged = _smo_loop(
        np.ascontiguousarray(gram, dtype=np.float64), sign, idx, a, grad, float(C), float(tol), int(max_iter)
    )
    if not converged:
        raise ConvergenceError(f"SVR solver exceeded {max_iter} updates (violation {violation:.3g})")

    yg = sign * grad
    at_upper = a >= C
    at_lower = a <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        ub_mask = (at_upper & (sign < 0)) | (at_lower & (sign > 0))
        lb_mask = (at_upper & (sign > 0)) | (at_lower & (sign < 0))
        ub = np.min(yg[ub_mask], initial=np.inf)
        lb = np.max(yg[lb_mask], initial=-np.inf)
        rho = float((ub + lb) / 2.0)
    beta = a[:q] - a[q:]
    return beta, -rho, max(violation, 0.0), it


def train_svr(
    x,
    y,
    kernel: KernelSpec | None = None,
    C: float = 1.0,
    epsilon: float = 0.1,
    tol: float = 1e-3,
    max_iter: int = 10_000_000,
) -> SvrModel:
    """Fit epsilon-SVR by sequential minimal optimization.

    Stops when the maximal KKT violation (the gap between the most violating
    up/down pair) falls below ``tol``.  Non-positive pair curvature, which the
    sigmoid kernel can produce, is floored at 1e-12.

    The solver's stopping point depends on the order it visits samples, so
    rows are first put in a canonical order (lexicographic by features, then
    response).  The fitted model is therefore identical for any permutation
    of the training set.
    """
    x, y = _check_xy(x, y)
    canon = np.lexsort(np.vstack([y[None, :], x.T[::-1]]))
    x, y = x[canon], y[canon]
    if not C > 0:
        raise InputError(f"C must be positive, got {C}")
    if not epsilon >= 0:
        raise InputError(f"epsilon must be non-negative, got {epsilon}")
    kernel = (kernel or KernelSpec()).resolved(x.shape[1])
    gram = kernel_matrix(kernel, x, x)
    beta, bias, violation, iters = _solve_svr_dual(gram, y, float(C), float(epsilon), tol, max_iter)
    keep = np.flatnonzero(beta != 0.0)
    return SvrModel(
        beta=beta[keep],
        bias=bias,
        kernel=kernel,
        support_rows=x[keep].copy(),
        C=float(C),
        epsilon=float(epsilon),
        kkt_violation=violation,
        iterations=iters,
    )


def predict(model, t) -> np.ndarray:
    t = as_matrix(t, "T")
    if t.shape[1] != model.n_features:
        raise InputError(f"test matrix has {t.shape[1]} columns, model expects {model.n_features}")
    if isinstance(model, RidgeModel):
        xc = model.training_rows - model.column_means
        cross = matmul(t - model.column_means, xc.T)
        return matmul(cross, model.dual_coefficients[:, None])[:, 0] + model.y_mean
    if isinstance(model, SvrModel):
        cross = kernel_matrix(model.kernel, t, model.support_rows)
        return matmul(cross, model.beta[:, None])[:, 0] + model.bias
    raise InputError(f"unsupported model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# plain-text model files


def _fmt(v):
    return format(float(v), ".17g")


def _row(values):
    return ",".join(_fmt(v) for v in values)


def save_model(model, path):
    if isinstance(model, RidgeModel):
        header = {
            "kind": "ridge",
            "lambda": _fmt(model.lam),
            "y_mean": _fmt(model.y_mean),
            "q": str(model.training_rows.shape[0]),
            "n": str(model.n_features),
        }
        coef, rows = model.dual_coefficients, model.training_rows
        extra = ["column_means", _row(model.column_means)]
    elif isinstance(model, SvrModel):
        header = {
            "kind": "svr",
            "kernel": model.kernel.kind,
            "C": _fmt(model.C),
            "epsilon": _fmt(model.epsilon),
            "bias": _fmt(model.bias),
            "q": str(model.support_rows.shape[0]),
            "n": str(model.n_features),
        }
        if model.kernel.kind == "sigmoid":
            header["gamma"] = _fmt(model.kernel.gamma)
            header["coef0"] = _fmt(model.kernel.coef0)
        coef, rows = model.beta, model.support_rows
        extra = []
    else:
        raise InputError(f"unsupported model type {type(model).__name__}")
    lines = [f"cellsieve-model {FORMAT_VERSION}"]
    lines += [f"{k}={v}" for k, v in header.items()]
    lines += extra
    lines.append("coefficients")
    lines += [_fmt(c) for c in coef]
    lines.append("rows")
    lines += [_row(r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"cellsieve-model {FORMAT_VERSION}":
        raise InputError(f"{path}: not a version {FORMAT_VERSION} model file")
    header = {}
    pos = 1
    while pos < len(lines) and "=" in lines[pos]:
        key, _, value = lines[pos].partition("=")
        header[key] = value
        pos += 1
    try:
        q, n = int(header["q"]), int(header["n"])
        column_means = None
        if header["kind"] == "ridge":
            if lines[pos] != "column_means":
                raise InputError(f"{path}: expected column_means at line {pos + 1}")
            column_means = np.array([float(v) for v in lines[pos + 1].split(",")]) if n else np.empty(0)
            pos += 2
        if lines[pos] != "coefficients":
            raise InputError(f"{path}: expected coefficients at line {pos + 1}")
        coef = np.array([float(v) for v in lines[pos + 1: pos + 1 + q]])
        pos += 1 + q
        if lines[pos] != "rows":
            raise InputError(f"{path}: expected rows at line {pos + 1}")
        rows = np.array([[float(v) for v in r.split(",")] for r in lines[pos + 1: pos + 1 + q]])
        rows = rows.reshape(q, n)
    except (KeyError, IndexError, ValueError) as exc:
        raise InputError(f"{path}: malformed model file ({exc})") from exc

    if header["kind"] == "ridge":
        return RidgeModel(coef, rows, float(header["lambda"]), float(header["y_mean"]), column_means)
    if header.get("kernel") == "sigmoid":
        kernel = KernelSpec("sigmoid", float(header["gamma"]), float(header["coef0"]))
    else:
        kernel = KernelSpec("linear")
    return SvrModel(coef, float(header["bias"]), kernel, rows, float(header["C"]), float(header["epsilon"]))
