import json

import numpy as np
import pytest

from cellsieve.data_io import SynthConfig, generate_synthetic, write_synthetic
from cellsieve.errors import InputError
from cellsieve.evaluation import auc_midrank
from cellsieve.noise_filter import FilterConfig
from cellsieve.pipeline import (
    ALGORITHMS,
    RunConfig,
    nested_subsets,
    run_on_data,
    run_pipeline,
    run_shrinkage,
    write_shrinkage,
)


@pytest.fixture(scope="module")
def synth():
    d = generate_synthetic(SynthConfig(m=40, n=8, p=20, seed=5))
    return d.train, d.responses, d.test, d.labels


@pytest.fixture()
def synth_files(tmp_path):
    d = generate_synthetic(SynthConfig(m=40, n=8, p=20, seed=5))
    paths = write_synthetic(d, tmp_path / "data")
    return {k: str(v) for k, v in paths.items() if k != "noise_flags"}


@pytest.mark.parametrize("learner", ["RR", "SVR+L", "SVR+S"])
def test_keep_all_matches_baseline(synth, learner):
    pa = run_on_data(*synth, RunConfig(f"PA+{learner}", filter=FilterConfig(count=40)))
    b = run_on_data(*synth, RunConfig(f"B+{learner}"))
    np.testing.assert_allclose(pa.scores, b.scores, rtol=0, atol=1e-10)


@pytest.mark.parametrize("algorithm", list(ALGORITHMS))
def test_report_auc_matches_scores(synth, algorithm):
    rep = run_on_data(*synth, RunConfig(algorithm, filter=FilterConfig(fraction=0.8)))
    assert rep.auc == auc_midrank(rep.scores, rep.labels)
    assert rep.q == (32 if algorithm.startswith("PA") else 40)


def test_outputs_written(synth_files, tmp_path):
    out = tmp_path / "out"
    run_pipeline(RunConfig("PA+RR", **synth_files, output_dir=str(out), save_model=True))
    assert {p.name for p in out.iterdir()} == {"report.json", "roc.csv", "predictions.csv", "degrees.csv", "model.txt"}
    report = json.loads((out / "report.json").read_text())
    assert report["q"] == 30 and report["m"] == 40
    lines = (out / "degrees.csv").read_text().splitlines()
    assert lines[0] == "sample_id,degree,rank,selected" and len(lines) == 41
    assert sum(int(l.rsplit(",", 1)[1]) for l in lines[1:]) == 30
    assert (out / "roc.csv").read_text().splitlines()[1].startswith("-inf,0,0")


def test_baseline_has_no_degrees_file(synth_files, tmp_path):
    out = tmp_path / "out"
    run_pipeline(RunConfig("B+RR", **synth_files, output_dir=str(out)))
    assert not (out / "degrees.csv").exists()
    assert "degrees" not in json.loads((out / "report.json").read_text())


def test_no_timing_report_is_reproducible(synth_files, tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        run_pipeline(RunConfig("PA+SVR+L", **synth_files, output_dir=str(out), timing=False))
        texts.append((out / "report.json").read_bytes())
    assert texts[0] == texts[1]
    assert b"timing_seconds" not in texts[0]


def test_missing_response_is_input_error(synth):
    train, responses, test, labels = synth
    from cellsieve.data_io import ResponseVector
    short = ResponseVector(responses.sample_ids[1:], responses.values[1:])
    with pytest.raises(InputError, match="c0001"):
        run_on_data(train, short, test, labels, RunConfig("B+RR"))


def test_unknown_algorithm():
    with pytest.raises(InputError):
        RunConfig("PA+LASSO")


# -- shrinkage ---------------------------------------------------------------

def test_nested_subsets_are_nested():
    ids = [f"s{i}" for i in range(30)]
    subsets = nested_subsets(ids, [30, 27, 27, 20], seed=1)
    assert [len(s) for s in subsets] == [30, 27, 27, 20]
    for a, b in zip(subsets, subsets[1:]):
        assert set(b) <= set(a)
    assert subsets == nested_subsets(ids, [30, 27, 27, 20], seed=1)


@pytest.mark.parametrize("sizes", [[], [20, 25], [41], [10, 1]])
def test_nested_subsets_validation(sizes):
    with pytest.raises(InputError):
        nested_subsets([f"s{i}" for i in range(40)], sizes, seed=0)


def test_single_size_shrinkage_equals_single_run(synth):
    cfg = RunConfig("PA+RR", filter=FilterConfig(fraction=0.8))
    res = run_shrinkage(cfg, [40], data=synth)
    assert res.mauc("PA+RR") == run_on_data(*synth, cfg).auc


def test_shrinkage_table(synth, tmp_path, monkeypatch):
    cfg = RunConfig(filter=FilterConfig(fraction=0.9), timing=False)
    algs = ["PA+RR", "B+RR"]
    res = run_shrinkage(cfg, [40, 38, 36], seed=3, algorithms=algs, data=synth)
    rows = res.table_csv().splitlines()
    assert rows[0] == "m,q,PA+RR,B+RR"
    assert [r.split(",")[:2] for r in rows[1:]] == [["40", "36"], ["38", "34"], ["36", "32"], ["MAUC", ""]]
    for a in algs:
        assert abs(res.mauc(a) - np.mean([r.auc for r in res.reports[a]])) <= 1e-12
    monkeypatch.setenv("CELLSIEVE_THREADS", "4")
    again = run_shrinkage(cfg, [40, 38, 36], seed=3, algorithms=algs, data=synth)
    assert again.table_csv() == res.table_csv()
    write_shrinkage(res, tmp_path)
    assert (tmp_path / "m38" / "PA_RR" / "report.json").exists()
    assert json.loads((tmp_path / "summary.json").read_text())["sizes"] == [40, 38, 36]


def test_bad_thread_setting(synth, monkeypatch):
    monkeypatch.setenv("CELLSIEVE_THREADS", "many")
    with pytest.raises(InputError):
        run_shrinkage(RunConfig("B+RR"), [40], data=synth)


def test_json_floats_use_17_digits():
    from cellsieve.pipeline import dump_json
    text = dump_json({"a": 0.1, "b": [2.0, 3], "c": "x"})
    assert '"a": 0.10000000000000001' in text
    assert json.loads(text) == {"a": 0.1, "b": [2.0, 3], "c": "x"}
    with pytest.raises(InputError):
        dump_json({"a": float("nan")})
