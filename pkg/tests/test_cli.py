import json

from docsig.cli import main


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-synthetic", "--classes", "2", "--count", "4", "--seed", "3", "--out", str(data)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["items"] == 8

    common = ["--manifest", str(data / "manifest.jsonl"), "--out", str(tmp_path / "out"), "--rl-L", "1"]
    assert main(["splits", *common, "--n-splits", "2"]) == 0
    splits = json.loads((tmp_path / "out" / "splits.json").read_text())
    assert len(splits) == 2 and len(splits[0]["train"]) == 4
    capsys.readouterr()

    assert main(["extract", *common]) == 0
    assert not json.loads(capsys.readouterr().out)["RL"]["failures"]

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"splits": {"n_splits": 1}, "clf": {"svm_passes": 5, "ml_batches": 5}}))
    assert main(["eval", *common, "--config", str(cfg)]) == 0
    summary = json.loads(capsys.readouterr().out)["summary"]["RL"]
    assert summary["KNN"]["mean"] == 1.0
    resolved = json.loads((tmp_path / "out" / "config.resolved.json").read_text())
    assert resolved["rl"]["L"] == 1 and resolved["clf"]["svm_passes"] == 5


def test_cli_errors(tmp_path, capsys):
    assert main(["eval", "--manifest", str(tmp_path / "none.jsonl")]) == 2
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"rl": {"Q": 99}}')
    assert main(["eval", "--config", str(bad)]) == 2
    assert main(["patent", "--config", str(bad)]) == 2
