import math
import warnings

import numpy as np
import pytest

from cellsieve.data_io import (
    ExpressionMatrix,
    GeneAlignmentWarning,
    ResponseVector,
    SplitMix64,
    SynthConfig,
    align_genes,
    generate_synthetic,
    load_expression,
    load_labels,
    load_responses,
    reorder_by_ids,
    write_expression,
    write_labels,
    write_responses,
    write_synthetic,
)
from cellsieve.errors import InputError
from cellsieve.evaluation import ClinicalLabels


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- expression matrices -----------------------------------------------------

def test_load_expression(tmp_path):
    path = _write(tmp_path, "x.csv", "sample_id,g1,g2\ns1,1.5,2\ns2,-3,4e-1\n")
    m = load_expression(path)
    assert m.sample_ids == ("s1", "s2") and m.gene_ids == ("g1", "g2")
    np.testing.assert_array_equal(m.values, [[1.5, 2.0], [-3.0, 0.4]])


@pytest.mark.parametrize(
    "text, where",
    [
        ("sample_id,g1,g2\ns1,1,abc\n", ":2:3"),
        ("sample_id,g1,g2\ns1,1,2\ns2,1\n", ":3"),
        ("sample_id,g1,g1\ns1,1,2\n", ":1:3"),
        ("sample_id,g1\ns1,1\ns1,2\n", ":3"),
        ("sample_id,g1\ns1,nan\n", ":2:2"),
        ("sample_id,g1\n\ns1,1\ns2,x\n", ":4:2"),
        ("sample_id\ns1\n", ":1"),
    ],
)
def test_expression_errors_are_located(tmp_path, text, where):
    path = _write(tmp_path, "x.csv", text)
    with pytest.raises(InputError, match=str(path) + where):
        load_expression(path)


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(InputError):
        load_expression(tmp_path / "absent.csv")
    with pytest.raises(InputError):
        load_expression(_write(tmp_path, "e.csv", ""))
    with pytest.raises(InputError):
        load_expression(_write(tmp_path, "h.csv", "sample_id,g1\n"))


def test_expression_round_trip_is_exact(tmp_path, rng):
    m = ExpressionMatrix(("a", "b", "c"), ("g1", "g2"), rng.standard_normal((3, 2)) * 1e-7)
    path = tmp_path / "x.csv"
    write_expression(m, path)
    back = load_expression(path)
    assert back.sample_ids == m.sample_ids and back.gene_ids == m.gene_ids
    np.testing.assert_array_equal(back.values, m.values)
    assert not list(tmp_path.glob(".x.csv.*"))


def test_expression_matrix_validation():
    with pytest.raises(InputError):
        ExpressionMatrix(("a",), ("g1", "g2"), np.ones((1, 3)))
    with pytest.raises(InputError):
        ExpressionMatrix(("a", "a"), ("g1",), np.ones((2, 1)))


def test_take():
    m = ExpressionMatrix(("a", "b", "c"), ("g",), np.array([[1.0], [2.0], [3.0]]))
    t = m.take([2, 0])
    assert t.sample_ids == ("c", "a")
    np.testing.assert_array_equal(t.values, [[3.0], [1.0]])


# -- responses and labels ----------------------------------------------------

@pytest.mark.parametrize("header", ["sample_id,value\n", ""])
def test_responses_with_or_without_header(tmp_path, header):
    r = load_responses(_write(tmp_path, "y.csv", header + "s1,0.5\ns2,-2\n"))
    assert r.sample_ids == ("s1", "s2")
    np.testing.assert_array_equal(r.values, [0.5, -2.0])


def test_responses_round_trip(tmp_path, rng):
    r = ResponseVector(("a", "b"), rng.standard_normal(2))
    write_responses(r, tmp_path / "y.csv")
    np.testing.assert_array_equal(load_responses(tmp_path / "y.csv").values, r.values)


def test_response_errors(tmp_path):
    with pytest.raises(InputError, match=":3:2"):
        load_responses(_write(tmp_path, "y.csv", "sample_id,value\ns1,1\ns2,oops\n"))
    with pytest.raises(InputError, match=":2"):
        load_responses(_write(tmp_path, "z.csv", "s1,1\ns2,1,3\n"))


def test_labels_case_insensitive(tmp_path):
    labels = load_labels(_write(tmp_path, "l.csv", "sample_id,label\np1,Sensitive\np2,RESISTANT\n"))
    assert labels.sample_ids == ("p1", "p2")
    np.testing.assert_array_equal(labels.sensitive, [True, False])


def test_labels_reject_unknown_token(tmp_path):
    with pytest.raises(InputError, match=r"l\.csv:3:2"):
        load_labels(_write(tmp_path, "l.csv", "sample_id,label\np1,sensitive\np2,partial\n"))


def test_labels_round_trip(tmp_path):
    labels = ClinicalLabels(("p1", "p2", "p3"), np.array([False, True, True]))
    write_labels(labels, tmp_path / "l.csv")
    back = load_labels(tmp_path / "l.csv")
    assert back.sample_ids == labels.sample_ids
    np.testing.assert_array_equal(back.sensitive, labels.sensitive)


# -- gene alignment ----------------------------------------------------------

def _matrix(genes, rows=2):
    return ExpressionMatrix(
        tuple(f"s{i}" for i in range(rows)), tuple(genes), np.arange(rows * len(genes), dtype=float).reshape(rows, -1)
    )


def test_align_identical_genes_is_noop():
    a = _matrix(["g1", "g2", "g3"])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tr, te = align_genes(a, a)
    np.testing.assert_array_equal(tr.values, a.values)


def test_align_reorders_test_to_training_order():
    train = _matrix(["g1", "g2", "g3"])
    test = _matrix(["g3", "g1", "g2"])
    _, te = align_genes(train, test)
    assert te.gene_ids == ("g1", "g2", "g3")
    np.testing.assert_array_equal(te.values[:, 0], test.values[:, 1])


def test_align_warns_on_small_overlap():
    with pytest.warns(GeneAlignmentWarning):
        tr, te = align_genes(_matrix(["g1", "g2", "g3"]), _matrix(["g2", "g9"]))
    assert tr.gene_ids == te.gene_ids == ("g2",)


def test_align_no_overlap():
    with pytest.raises(InputError):
        align_genes(_matrix(["a"]), _matrix(["b"]))


def test_reorder_by_ids():
    np.testing.assert_array_equal(reorder_by_ids(["b", "a"], ["a", "b"], [1.0, 2.0], "response"), [2.0, 1.0])
    with pytest.raises(InputError, match="response"):
        reorder_by_ids(["c"], ["a", "b"], [1.0, 2.0], "response")


# -- generator ---------------------------------------------------------------

def test_splitmix_reference_values():
    # first outputs for seed 0 of the reference splitmix64
    g = SplitMix64(0)
    assert [g.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F,
    ]


def test_splitmix_uniform_and_normals():
    g = SplitMix64(42)
    u = [g.uniform() for _ in range(2000)]
    assert 0.0 <= min(u) and max(u) < 1.0
    z = SplitMix64(7).normals(20000)
    assert abs(z.mean()) < 5 / math.sqrt(20000)
    assert abs(z.std() - 1.0) < 0.03


def test_splitmix_sample_distinct():
    s = SplitMix64(3).sample(50, 20)
    assert len(set(s)) == 20 and all(0 <= v < 50 for v in s)


def test_synthetic_is_deterministic():
    a = generate_synthetic(SynthConfig(m=20, n=5, p=10, seed=9))
    b = generate_synthetic(SynthConfig(m=20, n=5, p=10, seed=9))
    np.testing.assert_array_equal(a.train.values, b.train.values)
    np.testing.assert_array_equal(a.test.values, b.test.values)
    np.testing.assert_array_equal(a.corrupted, b.corrupted)
    c = generate_synthetic(SynthConfig(m=20, n=5, p=10, seed=10))
    assert not np.array_equal(a.train.values, c.train.values)


def test_synthetic_shapes_and_flags():
    d = generate_synthetic(SynthConfig(m=40, n=6, p=12, noise_fraction=0.25, seed=1))
    assert d.train.shape == (40, 6) and d.test.shape == (12, 6)
    assert d.corrupted.sum() == 10
    assert d.labels.sensitive.sum() == 6
    assert d.train.sample_ids[0] == "c0001" and d.test.sample_ids[-1] == "p0012"
    assert d.train.gene_ids[0] == "g0001"
    np.testing.assert_array_equal(d.train.values[~d.corrupted], d.clean_train[~d.corrupted])
    assert np.all(np.any(d.train.values[d.corrupted] != d.clean_train[d.corrupted], axis=1))


def test_synthetic_zero_noise_fraction():
    d = generate_synthetic(SynthConfig(m=30, n=4, p=8, noise_fraction=0.0))
    assert not d.corrupted.any()


def test_synthetic_clean_mean():
    cfg = SynthConfig(m=200, n=50, seed=4)
    d = generate_synthetic(cfg)
    assert abs(d.clean_train.mean()) <= 5 * cfg.clean_sigma / math.sqrt(cfg.m * cfg.n)


@pytest.mark.parametrize(
    "kw",
    [dict(m=1), dict(noise_fraction=1.0), dict(noise_sigma=0.5), dict(clean_sigma=0.0), dict(seed=-1)],
)
def test_synth_config_validation(kw):
    with pytest.raises(InputError):
        SynthConfig(**kw)


def test_write_synthetic_round_trip(tmp_path):
    d = generate_synthetic(SynthConfig(m=12, n=3, p=6, seed=2))
    paths = write_synthetic(d, tmp_path)
    np.testing.assert_array_equal(load_expression(paths["train_x"]).values, d.train.values)
    np.testing.assert_array_equal(load_responses(paths["train_y"]).values, d.responses.values)
    np.testing.assert_array_equal(load_labels(paths["test_labels"]).sensitive, d.labels.sensitive)
    flags = paths["noise_flags"].read_text().splitlines()
    assert flags[0] == "sample_id,corrupted" and len(flags) == 13
