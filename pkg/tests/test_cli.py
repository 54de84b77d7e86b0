import csv
import json
from pathlib import Path

import pytest

from tsinject.cli import main, make_run_dir, parse_override, resolve_config
from tsinject.evaluation.harness import ConfigError

SMALL = ["--set", "n_series=12", "--set", "length=128"]


def only_run(root: Path) -> Path:
    runs = sorted(root.iterdir())
    assert len(runs) == 1
    return runs[0]


@pytest.fixture
def dataset_path(tmp_path):
    assert main(["gen-bench", "--output-dir", str(tmp_path / "bench"), "--seed", "4", *SMALL]) == 0
    return only_run(tmp_path / "bench") / "dataset.jsonl"


@pytest.fixture
def mock_path(tmp_path):
    path = tmp_path / "mock.json"
    path.write_text(json.dumps({
        "specialist": [{"reply": "Observation 1: a burst is visible near the end."}],
        "reasoner": [
            {"contains": "(confidence: x.xx)", "reply": "<think>Steady start. (confidence: 0.9) Odd end. (confidence: 0.2)</think>"},
            {"contains": "Reason step by step", "reply": "<think>Steady start. Odd end.</think>"},
            {"reply": " So it is the first.</think><answer>A</answer>"},
        ],
    }))
    return path


def test_parse_override():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("x=true") == (["x"], True)
    assert parse_override("x=hello") == (["x"], "hello")
    assert parse_override("x=[1, 2]") == (["x"], [1, 2])
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_resolve_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"arm": "few_shot", "grlm": {"model_name": "m"}}))
    cfg = resolve_config(str(path), ["grlm.timeout=5", "n_runs=2"], seed=9)
    assert cfg == {"arm": "few_shot", "grlm": {"model_name": "m", "timeout": 5}, "n_runs": 2, "seed": 9}
    with pytest.raises(ConfigError):
        resolve_config(str(tmp_path / "missing.json"), [], None)


def test_run_dirs_are_unique(tmp_path):
    a, b = make_run_dir(tmp_path), make_run_dir(tmp_path)
    assert a != b and a.is_dir() and b.is_dir()


def test_gen_bench_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["gen-bench", "--output-dir", str(tmp_path / name), "--seed", "1", *SMALL]) == 0
    out = capsys.readouterr().out
    assert "gen-bench config:" in out and '"seed": 1' in out
    a, b = only_run(tmp_path / "a"), only_run(tmp_path / "b")
    assert (a / "dataset.jsonl").read_bytes() == (b / "dataset.jsonl").read_bytes()
    assert json.loads((a / "config.json").read_text())["n_series"] == 12


def test_unknown_subcommand_exits_2(capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_bad_config_exits_2(tmp_path, capsys):
    assert main(["gen-bench", "--output-dir", str(tmp_path), "--set", "colour=blue"]) == 2
    assert "config error" in capsys.readouterr().err


def test_eval_with_mock(tmp_path, dataset_path, mock_path, capsys):
    out = tmp_path / "runs"
    argv = ["eval", "--output-dir", str(out), "--mock", str(mock_path), "--set", f"dataset={dataset_path}",
            "--set", "arm=inject_early", "--set", "n_runs=2", "--seed", "3"]
    assert main(argv) == 0
    text = capsys.readouterr().out
    assert '"seeds": [3, 4]' in text
    run = only_run(out)
    assert {p.name for p in run.iterdir()} == {"config.json", "records.jsonl", "report.md", "report.jsonl"}
    rows = [json.loads(l) for l in (run / "records.jsonl").read_text().splitlines()]
    assert len(rows) == 2 * 36
    assert all(r["snippet"].startswith("Observation 1") for r in rows)


def test_eval_unreachable_exits_1(tmp_path, dataset_path, capsys):
    argv = ["eval", "--output-dir", str(tmp_path / "runs"), "--set", f"dataset={dataset_path}",
            "--set", "n_runs=1", "--set", "grlm.base_url=http://127.0.0.1:9/v1",
            "--set", "grlm.retry_budget=0", "--set", "grlm.timeout=2"]
    assert main(argv) == 1
    assert "[generate]" in capsys.readouterr().err


def test_inject_one(tmp_path, dataset_path, mock_path):
    out = tmp_path / "runs"
    argv = ["inject-one", "--output-dir", str(out), "--mock", str(mock_path), "--set", f"dataset={dataset_path}",
            "--set", "strategy=intermediate"]
    assert main(argv) == 0
    art = json.loads((only_run(out) / "artifacts.json").read_text())
    assert art["strategy"] == "intermediate"
    assert art["weak_index"] == 1
    assert art["answer_index"] == 0


def test_inject_one_failure_is_stage_tagged(tmp_path, dataset_path, capsys):
    mock = tmp_path / "bad.json"
    mock.write_text(json.dumps([{"reply": "no tags and no letters here"}]))
    argv = ["inject-one", "--output-dir", str(tmp_path / "runs"), "--mock", str(mock),
            "--set", f"dataset={dataset_path}"]
    assert main(argv) == 1
    assert "[extract]" in capsys.readouterr().err
    art = json.loads((only_run(tmp_path / "runs") / "artifacts.json").read_text())
    assert art["error"].startswith("[extract]")


def test_train_toy(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["train-toy", "--output-dir", str(out), "--set", "iterations=20", "--seed", "2"]) == 0
    assert "final estimated reward" in capsys.readouterr().out
    rows = list(csv.reader(open(only_run(out) / "curve.csv")))
    assert rows[0] == ["iteration", "mean_reward", "kl_to_ref"] and len(rows) == 21


def test_report_command(tmp_path, dataset_path, mock_path, capsys):
    runs = tmp_path / "runs"
    base = ["eval", "--mock", str(mock_path), "--set", f"dataset={dataset_path}", "--set", "n_runs=1"]
    assert main([*base, "--output-dir", str(runs / "zs"), "--set", "arm=zero_shot"]) == 0
    assert main([*base, "--output-dir", str(runs / "inj"), "--set", "arm=inject_late"]) == 0
    dirs = [str(only_run(runs / "zs")), str(only_run(runs / "inj"))]
    assert main(["report", *dirs, "--grlm", "zero_shot", "--output-dir", str(tmp_path / "rep")]) == 0
    md = (only_run(tmp_path / "rep") / "report.md").read_text()
    assert "| zero_shot |" in md and "| inject_late |" in md
    assert main(["report", *dirs, "--grlm", "nobody", "--output-dir", str(tmp_path / "rep2")]) == 2


def test_missing_endpoint_env_is_config_error(tmp_path, dataset_path, monkeypatch, capsys):
    monkeypatch.delenv("TSINJECT_GRLM_URL", raising=False)
    argv = ["eval", "--output-dir", str(tmp_path / "runs"), "--set", f"dataset={dataset_path}"]
    assert main(argv) == 2
    assert "GRLM" in capsys.readouterr().err
