import json

import numpy as np
import pytest

from covtest import hypothesis as hyp
from covtest.cli import EXIT_DATA, EXIT_DIMENSION, ingest, main, write_groups
from covtest.engine import ParametricBootstrap, ResamplingPlan, run_test
from covtest.errors import DimensionMismatch, GroupTooSmall, ParseError
from covtest.simulate import SimConfig, simulated_dataset


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(3)
    groups = [rng.standard_normal((30, 3)), 1.3 * rng.standard_normal((25, 3))]
    path = tmp_path / "data.csv"
    write_groups(path, groups)
    return path, groups


def test_ingest_roundtrip_is_exact(data_csv):
    path, groups = data_csv
    back = ingest(path)
    assert [g.group_id for g in back] == ["g1", "g2"]
    for g, X in zip(back, groups):
        np.testing.assert_array_equal(g.observations, X)


def test_simulated_dataset_roundtrip(tmp_path):
    cfg = SimConfig(scenario="A", d=3, distribution="skewnormal")
    groups, _ = simulated_dataset(cfg, (18, 12), 4)
    path = tmp_path / "sim.csv"
    write_groups(path, groups)
    spec = hyp.equal_covariances(2, 3, "reduced")
    plan = ResamplingPlan(8)
    a = run_test(groups, spec, "WTS", ParametricBootstrap(100), plan)
    b = run_test(ingest(path), spec, "WTS", ParametricBootstrap(100), plan)
    assert a.statistic == b.statistic and a.p_value == b.p_value


def test_ingest_group_order_and_column(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,lab,b\n1,z,2\n3,y,4\n5,z,6.5\n7,y,8\n")
    gs = ingest(path, "lab")
    assert [g.group_id for g in gs] == ["z", "y"]
    np.testing.assert_array_equal(gs[0].observations, [[1, 2], [5, 6.5]])


@pytest.mark.parametrize("text,exc", [
    ("group,x\na,1\na,oops\n", ParseError),
    ("grp,x\na,1\na,2\n", ParseError),
    ("group,x\na,1\na,nan\n", ParseError),
    ("group,x\na,1\na,2\nb,3\n", GroupTooSmall),
    ("group,x,y\na,1,2\na,2\n", DimensionMismatch),
    ("", ParseError),
])
def test_ingest_errors(tmp_path, text, exc):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(exc):
        ingest(path)


def test_parse_error_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("group,x,y\na,1,2\na,2,?\n")
    with pytest.raises(ParseError) as info:
        ingest(path)
    assert info.value.row == 3 and info.value.col == "y"


def test_test_command_formats(data_csv, tmp_path, capsys):
    path, groups = data_csv
    assert main(["test", "--data", str(path), "--statistic", "ats,wts", "--B", "99",
                 "--seed", "5", "--format", "jsonl"]) == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [r["statistic"] for r in recs] == ["ATS", "WTS"]
    spec = hyp.equal_covariances(2, 3, "quadratic")
    ref = run_test(groups, spec, "WTS", ParametricBootstrap(99), ResamplingPlan(5))
    assert recs[1]["value"] == ref.statistic and recs[1]["p"] == ref.p_value
    assert recs[1]["B"] == 99 and recs[1]["seed"] == 5

    out = tmp_path / "res.csv"
    assert main(["test", "--data", str(path), "--method", "chisq", "--statistic", "wts",
                 "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "statistic,value,p,method,B,seed,warnings"
    assert lines[1].startswith("WTS,")

    assert main(["test", "--data", str(path), "--hypothesis", "equal_traces",
                 "--method", "wild", "--B", "50"]) == 0
    assert "ATS-Wild" in capsys.readouterr().out


def test_hypothesis_file(data_csv, tmp_path, capsys):
    path, groups = data_csv
    spec = hyp.equal_traces(2, 3, "reduced")
    hfile = tmp_path / "h.json"
    hfile.write_text(spec.to_json())
    assert main(["test", "--data", str(path), "--hypothesis", str(hfile), "--format", "jsonl",
                 "--B", "50"]) == 0
    rec = json.loads(capsys.readouterr().out)
    ref = run_test(groups, spec, "ATS", ParametricBootstrap(50), ResamplingPlan(0))
    assert rec["value"] == ref.statistic


def test_given_trace_from_cli(tmp_path, capsys):
    path = tmp_path / "one.csv"
    write_groups(path, [np.random.default_rng(1).standard_normal((40, 2))])
    assert main(["test", "--data", str(path), "--hypothesis", "given_trace", "--gamma", "2",
                 "--B", "50"]) == 0
    assert main(["test", "--data", str(path), "--hypothesis", "given_trace"]) == 1


def test_error_exit_codes(tmp_path, data_csv, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("group,x\na,1\na,zz\n")
    assert main(["test", "--data", str(bad)]) == EXIT_DATA
    assert "row 3" in capsys.readouterr().err
    small = tmp_path / "small.csv"
    small.write_text("group,x\na,1\na,2\nb,3\n")
    assert main(["test", "--data", str(small)]) == EXIT_DATA
    path, _ = data_csv
    hfile = tmp_path / "h.json"
    hfile.write_text(hyp.equal_traces(2, 2, "reduced").to_json())
    assert main(["test", "--data", str(path), "--hypothesis", str(hfile)]) == EXIT_DIMENSION
    assert main(["test", "--data", str(tmp_path / "missing.csv")]) != 0
    with pytest.raises(SystemExit):
        main(["test", "--data", str(path), "--statistic", "xts"])


def test_ci_command(tmp_path, capsys):
    path = tmp_path / "one.csv"
    X = np.random.default_rng(2).standard_normal((60, 3))
    write_groups(path, [X])
    assert main(["ci", "--data", str(path), "--B", "200", "--format", "jsonl"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["lower"] < rec["estimate"] < rec["upper"]
    assert rec["estimate"] == pytest.approx(np.trace(np.cov(X, rowvar=False)))
    two = tmp_path / "two.csv"
    write_groups(two, [X, X])
    assert main(["ci", "--data", str(two)]) == EXIT_DIMENSION


def test_simulate_command(tmp_path, capsys):
    cfg = tmp_path / "study.yaml"
    cfg.write_text("study: type1\nscenario: A\nd: 2\nsizes: [40, 60]\nn_sim: 20\nB: 40\n"
                   "tests: ['ATS:param', 'WTS:chisq']\n")
    out = tmp_path / "out"
    assert main(["simulate", str(cfg), "--out", str(out), "--seed", "1"]) == 0
    text = capsys.readouterr().out
    assert "ATS-Para" in text and "WTS-chi2" in text
    rows = (out / "study.csv").read_text().splitlines()
    assert rows[0].startswith("test,kind,method,cell") and len(rows) == 5
    assert (out / "study.txt").read_text() == text

    timing = tmp_path / "timing.json"
    timing.write_text(json.dumps({"study": "timing", "scenario": "D", "sizes": [30],
                                  "dims": [2], "reps": 1, "B": 20, "tests": ["ATS:param"]}))
    assert main(["simulate", str(timing), "--format", "csv"]) == 0
    assert "ratio" in capsys.readouterr().out

    bad = tmp_path / "bad.yaml"
    bad.write_text("study: type1\nbogus: 1\n")
    assert main(["simulate", str(bad)]) == 1
