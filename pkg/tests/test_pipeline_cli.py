import json
import logging
import os
import shutil

import pytest

from stanceflip.cli import main
from stanceflip.influence import FEATURE_NAMES
from stanceflip.pipeline import STAGE_DIRS, STAGES


def tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def _config(tmp, text):
    p = tmp / "cfg.yaml"
    p.write_text(text)
    return str(p)


SMALL = "variant: 4\nsynth:\n  n_agents: 1000\n"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = _config(tmp, SMALL)
    assert main(["all", "--with-synth", "--config", cfg, "--out", str(tmp / "out"), "--log-level", "ERROR"]) == 0
    return tmp / "out", cfg


def test_every_stage_writes_a_manifest(run_dir):
    out, _ = run_dir
    for stage in STAGES:
        with open(out / STAGE_DIRS[stage] / "manifest.json") as fh:
            m = json.load(fh)
        assert m["stage"] == stage and "seconds" not in m
        assert "manifest.json" not in m["outputs"]
    assert not [p for p in os.listdir(out) if p.startswith(".")]


def test_evaluate_emits_one_confusion_file_per_partition(run_dir):
    out, _ = run_dir
    files = sorted(p for p in os.listdir(out / "evaluate") if p.startswith("confusion_"))
    assert len(files) == 5
    assert "macro-F1" in (out / "report" / "report.md").read_text()


def test_missing_upstream_stage_exits_2(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        assert main(["predict", "--out", str(tmp_path / "empty")]) == 2
    assert "'features'" in caplog.text


@pytest.mark.parametrize(
    "text",
    ["variant: 9\n", "no_such_key: 1\n", "importance:\n  folds: [\n", "synth:\n  bot_fraction: 2\n", "- a list\n"],
)
def test_config_errors_exit_1(tmp_path, text):
    assert main(["ingest", "--config", _config(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


def test_missing_config_file_exits_1(tmp_path):
    assert main(["ingest", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 1


def test_rerunning_a_stage_is_byte_identical(run_dir, tmp_path):
    out, cfg = run_dir
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    for stage in ("predict", "collective", "evaluate"):
        assert main([stage, "--config", cfg, "--out", str(copy), "--log-level", "ERROR"]) == 0
    assert tree_bytes(copy) == tree_bytes(out)


def test_two_runs_are_byte_identical(run_dir, tmp_path):
    out, cfg = run_dir
    other = tmp_path / "again"
    assert main(["all", "--with-synth", "--config", cfg, "--out", str(other), "--log-level", "ERROR"]) == 0
    assert tree_bytes(other) == tree_bytes(out)


def test_manifest_digest_tracks_input_bytes(run_dir, tmp_path):
    out, _ = run_dir
    tweets = tmp_path / "tweets.jsonl"
    agents = tmp_path / "agents.csv"
    shutil.copy(out / "input" / "tweets.jsonl", tweets)
    shutil.copy(out / "input" / "agents.csv", agents)
    cfg = _config(tmp_path, f"inputs:\n  tweets: {tweets}\n  agents: {agents}\n")

    def digests():
        assert main(["ingest", "--config", cfg, "--out", str(tmp_path / "o"), "--log-level", "ERROR"]) == 0
        with open(tmp_path / "o" / "ingest" / "manifest.json") as fh:
            return json.load(fh)["inputs"]

    first = digests()
    assert digests() == first
    with open(agents, "a") as fh:
        fh.write("zz999,late,1,0.1\n")
    changed = digests()
    assert changed[str(agents)] != first[str(agents)]
    assert changed[str(tweets)] == first[str(tweets)]


def test_zeroed_importance_degrades_recovery(run_dir, tmp_path):
    out, _ = run_dir
    zero = tmp_path / "zero.csv"
    zero.write_text("feature,importance\n" + "".join(f"{n},0.0\n" for n in FEATURE_NAMES))
    copy = tmp_path / "zeroed"
    shutil.copytree(out, copy)
    cfg = _config(tmp_path, SMALL + f"importance:\n  file: {zero}\n")
    for stage in ("train-importance", "predict", "evaluate"):
        assert main([stage, "--config", cfg, "--out", str(copy), "--log-level", "ERROR"]) == 0
    base = json.loads((out / "evaluate" / "recovery.json").read_text())
    worse = json.loads((copy / "evaluate" / "recovery.json").read_text())
    assert worse["flip_prediction_recall"] < base["flip_prediction_recall"]
    for k in ("stance_recovery", "flip_label_recovery", "coordination_recovery", "flip_prediction_recall"):
        assert 0.0 <= base[k] <= 1.0
    assert base["coordination_recovery"] == 1.0 and base["stance_recovery"] == 1.0


def test_published_importance_column_runs(run_dir, tmp_path):
    out, _ = run_dir
    copy = tmp_path / "published"
    shutil.copytree(out, copy)
    cfg = _config(tmp_path, SMALL + "importance:\n  file: published\n")
    for stage in ("train-importance", "predict"):
        assert main([stage, "--config", cfg, "--out", str(copy), "--log-level", "ERROR"]) == 0
    assert "tweet_count,0.224" in (copy / "importance" / "bstar.csv").read_text()
