import json

import pytest

from conftest import tiny_train_config
from finemanip.cli import dispatch
from finemanip.evaluation import corpus_text_metrics


def run(capsys, *argv):
    code = dispatch(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_and_usage(capsys, tmp_path):
    assert run(capsys, "--help")[0] == 0
    assert run(capsys, "train", "--help")[0] == 0
    assert run(capsys, "juggle")[0] == 1
    assert run(capsys, "gen-data", "--bogus-flag", "1")[0] == 1
    assert run(capsys, "gen-data", "--episodes-per-task", "1", "--out", str(tmp_path / "x"), "--tasks", "nope")[0] == 1
    assert not (tmp_path / "x").exists()
    assert run(capsys)[0] == 1


def test_unwritable_output(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "gen-data", "--tasks", "reach-target", "--episodes-per-task", "1",
                       "--out", str(blocker / "sub"), "--n-points", "64", "--no-split")
    assert code == 2 and err


def test_missing_checkpoint(capsys, tmp_path):
    code, _, err = run(capsys, "plot", "--ckpt", str(tmp_path / "none"), "--episode", str(tmp_path),
                       "--out", str(tmp_path / "x.png"))
    assert code == 2 and "checkpoint" in err


def test_metrics_text(capsys, tmp_path):
    (tmp_path / "c.txt").write_text("a b c d\na b c\n")
    (tmp_path / "r.txt").write_text("a b c d f\na c d\n")
    code, out, _ = run(capsys, "metrics-text", "--candidates", str(tmp_path / "c.txt"),
                       "--references", str(tmp_path / "r.txt"))
    summary = json.loads(out)
    assert code == 0 and summary["n"] == 2
    want = corpus_text_metrics(["a b c d", "a b c"], ["a b c d f", "a c d"])
    assert summary["bleu"] == pytest.approx(want["bleu"]) and summary["rouge_l"] == pytest.approx(want["rouge_l"])


def test_pipeline(capsys, tmp_path):
    data, evald = tmp_path / "data", tmp_path / "eval"
    tasks = "press-button,reach-target"
    code, out, err = run(capsys, "gen-data", "--tasks", tasks, "--episodes-per-task", "12", "--out", str(data),
                         "--n-points", "64")
    assert code == 0, err
    assert json.loads(out)["episodes"] == 24 and (data / "split.json").exists()
    assert run(capsys, "gen-data", "--tasks", tasks, "--episodes-per-task", "1", "--out", str(evald),
               "--n-points", "64", "--no-split", "--seed", "1")[0] == 0

    code, out, err = run(capsys, "build-prompts", "--data", str(data), "--out", str(tmp_path / "prompts.json"))
    assert code == 0, err
    cfg = tmp_path / "cfg.json"
    tiny_train_config(batch_size=8).save(cfg)
    for arm, extra in (("full", ["--prompts", str(tmp_path / "prompts.json")]), ("noprompt", ["--no-prompt"])):
        code, out, err = run(capsys, "train", "--data", str(data), "--out", str(tmp_path / arm / "seed-0"),
                             "--config", str(cfg), "--epochs", "1", *extra)
        assert code == 0, err
        assert json.loads(out)["prompt_enabled"] == (arm == "full")

    report = tmp_path / "report.json"
    code, out, err = run(capsys, "eval", "--ckpt", str(tmp_path / "full"), "--data", str(evald), "--seeds", "1",
                         "--compare", str(tmp_path / "noprompt"), "--out", str(report))
    assert code == 0, err
    rep = json.loads(report.read_text())
    assert set(rep["deltas"]) == {"press-button", "reach-target"}
    assert "press-button" in err  # table on stderr

    png = tmp_path / "a.png"
    ep_dir = next(p for p in data.iterdir() if p.is_dir())
    args = ("plot", "--ckpt", str(tmp_path / "full" / "seed-0"), "--episode", str(ep_dir), "--out", str(png))
    code, out, err = run(capsys, *args)
    assert code == 0, err
    first = png.read_bytes()
    assert run(capsys, *args)[0] == 0 and png.read_bytes() == first
