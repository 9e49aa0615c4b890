"""CSV ingestion of expression matrices, responses and clinical labels, plus a
seeded synthetic dataset generator.

Every number is written with 17 significant digits so that a write/load
round trip reproduces the float64 values exactly.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .evaluation import RESISTANT, SENSITIVE, ClinicalLabels

MASK64 = 0xFFFFFFFFFFFFFFFF
ALIGN_WARN_FRACTION = 0.9


class GeneAlignmentWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExpressionMatrix:
    sample_ids: tuple
    gene_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.sample_ids), len(self.gene_ids)):
            raise InputError(
                f"values shape {values.shape} does not match "
                f"{len(self.sample_ids)} samples x {len(self.gene_ids)} genes"
            )
        _check_unique(self.sample_ids, "sample")
        _check_unique(self.gene_ids, "gene")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise InputError(
                f"non-finite value for sample {self.sample_ids[i]!r}, gene {self.gene_ids[j]!r}"
            )
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def take(self, rows) -> "ExpressionMatrix":
        rows = list(rows)
        return ExpressionMatrix(
            tuple(self.sample_ids[i] for i in rows), self.gene_ids, self.values[rows]
        )


@dataclass(frozen=True)
class ResponseVector:
    sample_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.sample_ids),):
            raise InputError("response ids and values differ in length")
        _check_unique(self.sample_ids, "sample")
        if not np.all(np.isfinite(values)):
            raise InputError("responses contain non-finite values")
        object.__setattr__(self, "values", values)


def _check_unique(ids, kind):
    seen = set()
    for ident in ids:
        if ident in seen:
            raise InputError(f"duplicate {kind} id {ident!r}")
        seen.add(ident)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{where}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise InputError(f"{where}: non-finite value {text!r}")
    return value


def _read_rows(path):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            # keep the physical line number so errors point at the right place
            rows = [(reader.line_num, r) for r in reader if any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except csv.Error as exc:
        raise InputError(f"{path}: malformed CSV: {exc}") from None
    if not rows:
        raise InputError(f"{path}: file is empty")
    return path, rows


def atomic_write_text(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_expression(path) -> ExpressionMatrix:
    """Load ``sample_id,<gene1>,<gene2>,...`` with one row per sample."""
    path, rows = _read_rows(path)
    head_line, header = rows[0]
    header = [c.strip() for c in header]
    genes = header[1:]
    if not genes:
        raise InputError(f"{path}:{head_line}: header has no gene columns")
    seen = set()
    for col, g in enumerate(genes, start=2):
        if not g:
            raise InputError(f"{path}:{head_line}:{col}: empty gene id")
        if g in seen:
            raise InputError(f"{path}:{head_line}:{col}: duplicate gene id {g!r}")
        seen.add(g)
    if len(rows) < 2:
        raise InputError(f"{path}: no sample rows")
    ids, values, seen = [], [], set()
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise InputError(
                f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
            )
        ident = row[0].strip()
        if not ident:
            raise InputError(f"{path}:{lineno}:1: missing sample id")
        if ident in seen:
            raise InputError(f"{path}:{lineno}: duplicate sample id {ident!r}")
        seen.add(ident)
        ids.append(ident)
        values.append([
            _parse_float(cell, f"{path}:{lineno}:{col}")
            for col, cell in enumerate(row[1:], start=2)
        ])
    return ExpressionMatrix(tuple(ids), tuple(genes), np.array(values))


def write_expression(matrix: ExpressionMatrix, path):
    lines = [",".join(("sample_id",) + tuple(matrix.gene_ids))]
    for ident, row in zip(matrix.sample_ids, matrix.values):
        lines.append(",".join([ident] + [_fmt(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _two_column(path, value_name):
    path, rows = _read_rows(path)
    first = [c.strip().lower() for c in rows[0][1]]
    if first[:1] == ["sample_id"] and first[1:2] == [value_name]:
        rows = rows[1:]
    out, seen = [], set()
    for lineno, row in rows:
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 fields, found {len(row)}")
        ident, value = row[0].strip(), row[1].strip()
        if not ident:
            raise InputError(f"{path}:{lineno}: missing sample id")
        if ident in seen:
            raise InputError(f"{path}:{lineno}: duplicate sample id {ident!r}")
        seen.add(ident)
        out.append((lineno, ident, value))
    if not out:
        raise InputError(f"{path}: no data rows")
    return path, out


def load_responses(path) -> ResponseVector:
    """Load ``sample_id,value`` rows (header optional)."""
    path, rows = _two_column(path, "value")
    ids = tuple(r[1] for r in rows)
    vals = [_parse_float(v, f"{path}:{ln}:2") for ln, _, v in rows]
    return ResponseVector(ids, np.array(vals))


def write_responses(responses: ResponseVector, path):
    lines = ["sample_id,value"]
    lines += [f"{i},{_fmt(v)}" for i, v in zip(responses.sample_ids, responses.values)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_labels(path) -> ClinicalLabels:
    """Load ``sample_id,label`` rows with labels sensitive/resistant (any case)."""
    path, rows = _two_column(path, "label")
    flags = []
    for lineno, _, token in rows:
        low = token.lower()
        if low not in (SENSITIVE, RESISTANT):
            raise InputError(f"{path}:{lineno}:2: unknown label {token!r}")
        flags.append(low == SENSITIVE)
    return ClinicalLabels(tuple(r[1] for r in rows), np.array(flags, dtype=bool))


def write_labels(labels: ClinicalLabels, path):
    lines = ["sample_id,label"]
    lines += [f"{i},{t}" for i, t in zip(labels.sample_ids, labels.tokens())]
    atomic_write_text(path, "\n".join(lines) + "\n")


def align_genes(train: ExpressionMatrix, test: ExpressionMatrix):
    """Restrict both matrices to their shared genes, in training column order."""
    test_pos = {g: j for j, g in enumerate(test.gene_ids)}
    shared = [g for g in train.gene_ids if g in test_pos]
    if not shared:
        raise InputError("training and test matrices share no gene ids")
    for side, total in (("training", len(train.gene_ids)), ("test", len(test.gene_ids))):
        if len(shared) < ALIGN_WARN_FRACTION * total:
            warnings.warn(
                f"only {len(shared)} of {total} {side} genes are shared",
                GeneAlignmentWarning,
                stacklevel=2,
            )
    train_pos = {g: j for j, g in enumerate(train.gene_ids)}
    tr = ExpressionMatrix(train.sample_ids, tuple(shared), train.values[:, [train_pos[g] for g in shared]])
    te = ExpressionMatrix(test.sample_ids, tuple(shared), test.values[:, [test_pos[g] for g in shared]])
    return tr, te


def reorder_by_ids(ids, source_ids, values, what):
    """Values of ``source_ids`` rearranged to follow ``ids``; every id must exist."""
    pos = {s: k for k, s in enumerate(source_ids)}
    missing = [i for i in ids if i not in pos]
    if missing:
        raise InputError(f"no {what} for sample {missing[0]!r}")
    return np.asarray(values)[[pos[i] for i in ids]]


# ---------------------------------------------------------------------------
# synthetic data


class SplitMix64:
    """splitmix64 generator with Box-Muller normals (spare value cached)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64
        self._spare = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform on [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, count, sigma=1.0) -> np.ndarray:
        return np.array([self.normal() for _ in range(count)]) * sigma

    def below(self, n: int) -> int:
        """Integer in [0, n) via floor(u * n)."""
        return min(int(self.uniform() * n), n - 1)

    def sample(self, population: int, k: int) -> list:
        """``k`` distinct indices from range(population), partial Fisher-Yates order."""
        pool = list(range(population))
        for i in range(k):
            j = i + self.below(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


@dataclass(frozen=True)
class SynthConfig:
    m: int = 200
    n: int = 50
    p: int = 100
    noise_fraction: float = 0.2
    clean_sigma: float = 1.0
    noise_sigma: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("m", "n", "p"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        if self.m < 2 or self.p < 2:
            raise InputError("m and p must be at least 2")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise InputError("noise_fraction must lie in [0, 1)")
        if not (self.clean_sigma > 0 and self.noise_sigma > 0):
            raise InputError("sigmas must be positive")
        if not self.noise_sigma > self.clean_sigma:
            raise InputError("noise_sigma must exceed clean_sigma")
        if not 0 <= self.seed <= MASK64:
            raise InputError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SyntheticData:
    train: ExpressionMatrix
    responses: ResponseVector
    test: ExpressionMatrix
    labels: ClinicalLabels
    corrupted: np.ndarray  # bool per training sample
    clean_train: np.ndarray


def generate_synthetic(config: SynthConfig) -> SyntheticData:
    """Linear-response data with a corrupted fraction of training rows.

    Draw order from a single splitmix64 stream: weights, clean training rows,
    response noise, the corrupted subset, corruption noise (per corrupted
    row, ascending), then test rows.
    """
    rng = SplitMix64(config.seed)
    m, n, p = config.m, config.n, config.p
    w = rng.normals(n) / math.sqrt(n)
    clean = rng.normals(m * n, config.clean_sigma).reshape(m, n)
    y = clean @ w + rng.normals(m, 0.1)
    k = math.ceil(config.noise_fraction * m)
    corrupted = np.zeros(m, dtype=bool)
    corrupted[sorted(rng.sample(m, k))] = True
    x = clean.copy()
    for i in np.flatnonzero(corrupted):
        x[i] += rng.normals(n, config.noise_sigma)
    test = rng.normals(p * n, config.clean_sigma).reshape(p, n)
    test_score = test @ w
    sensitive = test_score < np.median(test_score)

    genes = tuple(f"g{j + 1:04d}" for j in range(n))
    train_ids = tuple(f"c{i + 1:04d}" for i in range(m))
    test_ids = tuple(f"p{i + 1:04d}" for i in range(p))
    return SyntheticData(
        train=ExpressionMatrix(train_ids, genes, x),
        responses=ResponseVector(train_ids, y),
        test=ExpressionMatrix(test_ids, genes, test),
        labels=ClinicalLabels(test_ids, sensitive),
        corrupted=corrupted,
        clean_train=clean,
    )


SYNTH_FILES = {
    "train_x": "train_x.csv",
    "train_y": "train_y.csv",
    "test_x": "test_x.csv",
    "test_labels": "test_labels.csv",
    "noise_flags": "noise_flags.csv",
}


def write_synthetic(data: SyntheticData, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: out_dir / name for key, name in SYNTH_FILES.items()}
    write_expression(data.train, paths["train_x"])
    write_responses(data.responses, paths["train_y"])
    write_expression(data.test, paths["test_x"])
    write_labels(data.labels, paths["test_labels"])
    flags = ["sample_id,corrupted"]
    flags += [f"{i},{int(c)}" for i, c in zip(data.train.sample_ids, data.corrupted)]
    atomic_write_text(paths["noise_flags"], "\n".join(flags) + "\n")
    return paths
