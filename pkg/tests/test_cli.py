import csv
import json
import subprocess
import sys

import pytest

from linkreg.cli import main


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def exp2(tmp_path_factory):
    d = tmp_path_factory.mktemp("exp2")
    assert main(["generate", "--experiment", "ExpII", "--seed", "7", "--out", str(d)]) == 0
    return d


def _run(data, out, *extra):
    return main(["run", "--corpus", str(data / "corpus.csv"), "--schema", str(data / "schema.json"),
                 "--out", str(out), "--iterations", "30", "--seed", "1", *extra])


def test_generate_writes_three_files(exp2):
    assert sorted(p.name for p in exp2.iterdir()) == ["corpus.csv", "schema.json", "truth.csv"]
    assert len(rows(exp2 / "corpus.csv")) == 500 and len(rows(exp2 / "truth.csv")) == 500
    schema = json.loads((exp2 / "schema.json").read_text())
    assert len(schema["features"]) == 4


def test_bipartite_truth_has_no_within_db_pairs(tmp_path):
    assert main(["generate", "--experiment", "RL500-bipartite", "--seed", "1", "--out", str(tmp_path)]) == 0
    seen = set()
    for r in rows(tmp_path / "truth.csv"):
        key = (r["entity_id"], r["db_id"])
        assert key not in seen
        seen.add(key)


def test_usage_errors(tmp_path, exp2, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--experiment", "ExpII"])
    assert exc.value.code == 2
    assert main(["generate", "--experiment", "Nope", "--out", str(tmp_path / "g")]) == 2
    assert _run(exp2, tmp_path / "r", "--prior", "pyp:2,1.5") == 2
    assert _run(exp2, tmp_path / "r", "--chains", "0") == 2
    assert _run(exp2, tmp_path / "r", "--mode", "plugin") == 2
    assert main(["run", "--schema", str(exp2 / "schema.json"), "--out", str(tmp_path / "r")]) == 2
    assert "error" in capsys.readouterr().err


def test_joint_run_outputs(tmp_path, exp2):
    out = tmp_path / "run"
    assert _run(exp2, out, "--truth", str(exp2 / "truth.csv"), "--burn-in", "10") == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "joint" and isinstance(summary["k_mode"], int)
    assert summary["posterior"]["n_kept"] == 20 and "fnr" in summary["posterior"]
    trace = rows(out / "trace.csv")
    assert len(trace) == 20 and {"k", "alpha1", "beta1", "var_y"} <= set(trace[0])
    for r in rows(out / "pairs.csv"):
        assert 0 < float(r["probability"]) <= 1


def test_linkage_only_warns(tmp_path, exp2, caplog):
    assert _run(exp2, tmp_path / "lo", "--mode", "linkage-only") == 0
    assert any("ignored" in r.message for r in caplog.records)
    assert "beta1" not in rows(tmp_path / "lo" / "trace.csv")[0]


def test_config_file_and_flag_precedence(tmp_path, exp2):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"corpus": str(exp2 / "corpus.csv"), "schema": str(exp2 / "schema.json"),
                               "iterations": 12, "burn_in": 2, "mode": "linkage-only"}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c"), "--iterations", "8"]) == 0
    assert len(rows(tmp_path / "c" / "trace.csv")) == 6


def test_plugin_and_eval(tmp_path, exp2):
    joint, plug, ev = tmp_path / "joint", tmp_path / "plug", tmp_path / "ev"
    assert _run(exp2, joint, "--chains", "2") == 0
    assert _run(exp2, plug, "--mode", "plugin", "--linkage-from", str(joint)) == 0
    trace = rows(plug / "trace.csv")
    assert len({r["k"] for r in trace}) == 1

    assert main(["eval", "--run", str(joint), "--truth", str(exp2 / "truth.csv"), "--out", str(ev)]) == 0
    assert json.loads((ev / "comparison.json").read_text()) == {"available": False}
    hist = rows(ev / "histograms.csv")
    kept = len(rows(joint / "labels.csv"))
    assert sum(int(r["count"]) for r in hist if r["quantity"] == "k") == kept == 2 * 23

    assert main(["eval", "--run", str(joint), "--truth", str(exp2 / "truth.csv"), "--out", str(ev),
                 "--plugin", str(plug)]) == 0
    comp = json.loads((ev / "comparison.json").read_text())
    assert comp["available"] and "beta1" in comp["parameters"]


def test_eval_against_own_labels_is_perfect(tmp_path, exp2):
    out = tmp_path / "run"
    assert _run(exp2, out) == 0
    labels = rows(out / "labels.csv")
    truth = tmp_path / "self.csv"
    with open(truth, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["db_id", "rec_id", "entity_id"])
        for key, v in labels[-1].items():
            if ":" in key:
                w.writerow([*key.split(":"), v])
    assert main(["eval", "--run", str(out), "--truth", str(truth), "--out", str(tmp_path / "e")]) == 0
    last = rows(tmp_path / "e" / "metrics.csv")[-1]
    assert float(last["fnr"]) == 0.0 and float(last["fdr"]) == 0.0


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "linkreg.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("linkreg")
