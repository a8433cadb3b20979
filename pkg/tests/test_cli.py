import json
from pathlib import Path

import pytest

from gazeattn.cli import main
from gazeattn.evaluation import aggregate_louo

SYNTH_FLAGS = [
    "--seed", "11", "--num-users", "8", "--trials-per-user", "1",
    "--height", "32", "--width", "32",
    "--min-segments", "2", "--max-segments", "3",
    "--min-segment-frames", "20", "--max-segment-frames", "24",
]

TRAIN_FLAGS = [
    "--fold", "U1", "--window", "4", "--iters", "3", "--batch-size", "2",
    "--seed", "1",
]


def _tree_bytes(root):
    root = Path(root)
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    """One synth + train + eval pipeline shared by the assertions below."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run = root / "run"
    out = root / "eval"
    assert main(["synth", "--out", str(data), *SYNTH_FLAGS]) == 0
    assert main(["train", "--data", str(data), "--out", str(run),
                 *TRAIN_FLAGS]) == 0
    assert main([
        "eval", "--data", str(data), "--out", str(out),
        "--run-dir", str(run), "--plot-timeline", "--plot-attn",
    ]) == 0
    return {"data": data, "run": run, "out": out}


def test_synth_deterministic_trees(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--out", str(a), *SYNTH_FLAGS]) == 0
    assert main(["synth", "--out", str(b), *SYNTH_FLAGS]) == 0
    ta, tb = _tree_bytes(a), _tree_bytes(b)
    # run_config records its own --out path; everything else is identical
    ta.pop("run_config.txt"), tb.pop("run_config.txt")
    assert ta == tb


def test_synth_requires_out():
    with pytest.raises(SystemExit) as exc:
        main(["synth"])
    assert exc.value.code == 2


def test_synth_unwritable_output_is_runtime_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    code = main(["synth", "--out", str(blocker / "ds"), *SYNTH_FLAGS])
    assert code == 4


def test_synth_summary_matches_recount(tmp_path, capsys):
    out = tmp_path / "ds"
    assert main(["synth", "--out", str(out), *SYNTH_FLAGS]) == 0
    summary = json.loads(capsys.readouterr().out)
    recount = {}
    for txt in sorted((out / "trials").rglob("transcription.txt")):
        for line in txt.read_text().splitlines():
            start, end, label = line.split()
            recount[label] = recount.get(label, 0) + int(end) - int(start) + 1
    assert summary["class_frames"] == recount
    assert summary["num_trials"] == 8


def test_train_outputs(cli_run):
    fold = cli_run["run"] / "fold_U1"
    log = (fold / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 3
    rows = [json.loads(line) for line in log]
    assert [r["iter"] for r in rows] == [0, 1, 2]
    assert (fold / "checkpoint.ckpt").exists()
    resolved = (cli_run["run"] / "run_config.txt").read_text()
    assert "total_iters = 3" in resolved
    assert "# backend = " in resolved


def test_rerun_from_run_config_reproduces(cli_run, tmp_path):
    """The resolved run_config.txt reproduces the run, byte for byte."""
    rerun = tmp_path / "rerun"
    assert main([
        "train", "--data", str(cli_run["data"]), "--out", str(rerun),
        "--config", str(cli_run["run"] / "run_config.txt"),
    ]) == 0
    original = (cli_run["run"] / "fold_U1" / "checkpoint.ckpt").read_bytes()
    reproduced = (rerun / "fold_U1" / "checkpoint.ckpt").read_bytes()
    assert original == reproduced


def test_train_no_attention_zero_column(tmp_path, cli_run):
    run = tmp_path / "run0"
    assert main([
        "train", "--data", str(cli_run["data"]), "--out", str(run),
        *TRAIN_FLAGS, "--no-attention",
    ]) == 0
    rows = [
        json.loads(line)
        for line in (run / "fold_U1" / "train_log.jsonl").read_text().splitlines()
    ]
    assert all(r["attn_loss"] == 0.0 for r in rows)


def test_train_divergence_exit_code(tmp_path, cli_run):
    run = tmp_path / "boom"
    code = main([
        "train", "--data", str(cli_run["data"]), "--out", str(run),
        *TRAIN_FLAGS, "--iters", "40", "--weight-decay", "1e12",
        "--lr0", "10.0",
    ])
    assert code == 4


def test_train_validation_exit_code(tmp_path):
    code = main([
        "train", "--data", str(tmp_path / "missing"), "--out",
        str(tmp_path / "run"),
    ])
    assert code == 3


def test_eval_results_structure(cli_run):
    report = json.loads((cli_run["out"] / "results.json").read_text())
    assert len(report["folds"]) == 1
    fold = report["folds"][0]
    assert fold["fold"] == "U1"
    for metric in ("accuracy", "f1", "edit"):
        assert 0.0 <= fold[metric] <= 100.0
    assert len(fold["trials"]) == 1  # one trial per user in the tiny dataset
    recomputed = aggregate_louo(
        [{k: f[k] for k in ("accuracy", "f1", "edit")} for f in report["folds"]]
    )
    assert report["aggregate"] == json.loads(json.dumps(recomputed))


def test_eval_writes_timelines_and_plots(cli_run):
    timelines = list((cli_run["out"] / "timelines").glob("*.csv"))
    assert timelines
    header = timelines[0].read_text().splitlines()[0]
    assert header == "frame,gt,pred"
    plots = list((cli_run["out"] / "plots").glob("timeline_*.png"))
    assert plots and all(p.stat().st_size > 0 for p in plots)
    attn_plots = list((cli_run["out"] / "plots").glob("attention_*.png"))
    assert attn_plots and all(p.stat().st_size > 0 for p in attn_plots)


def test_eval_requires_checkpoint_or_run_dir(cli_run, tmp_path):
    code = main([
        "eval", "--data", str(cli_run["data"]), "--out", str(tmp_path / "x"),
    ])
    assert code == 3


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(
        "seed = 5\nnum_users = 8\ntrials_per_user = 1\n"
        "height = 32\nwidth = 32\nmin_segments = 2\nmax_segments = 2\n"
        "min_segment_frames = 20\nmax_segment_frames = 21\n"
    )
    out = tmp_path / "ds"
    assert main(["synth", "--out", str(out), "--config", str(cfg),
                 "--seed", "6"]) == 0
    resolved = (out / "run_config.txt").read_text()
    assert "seed = 6" in resolved          # flag wins
    assert "max_segments = 2" in resolved  # file beats default
    summary = json.loads(capsys.readouterr().out)
    assert summary["config"]["seed"] == 6


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("definitely_not_a_key = 1\n")
    code = main(["synth", "--out", str(tmp_path / "ds"), "--config", str(cfg)])
    assert code == 3
