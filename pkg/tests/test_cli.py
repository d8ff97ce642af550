"""End-to-end CLI coverage: each subcommand against real files."""

import json

import numpy as np
import pytest

from polyvox.cli import main
from polyvox.corpus import load_manifest, read_mel
from polyvox.mushra import load_design
from polyvox.service import ExperimentStore, RatingService
from polyvox.synthetic import make_utterances, synthetic_phoneset, write_corpus


@pytest.fixture
def demo_dir(tmp_path):
    assert main(["demo", "--out", str(tmp_path / "demo"), "--with-corpus"]) == 0
    return tmp_path / "demo"


def test_weights_prints_both_tables(tmp_path, capsys):
    ps_en = synthetic_phoneset("en", 5)
    ps_nl = synthetic_phoneset("nl", 5)
    utts = make_utterances("target", "en", ps_en, 4, seed=1, mel_bins=8)
    utts += make_utterances("aux", "nl", ps_nl, 12, seed=2, mel_bins=8)
    manifest = write_corpus(tmp_path, utts, {"en": ps_en, "nl": ps_nl})
    assert main(["weights", "--manifest", str(manifest), "--factor", "both"]) == 0
    out = capsys.readouterr().out
    assert "factor\tclass\tcount\traw_weight\tnormalized_weight" in out
    assert "speaker\ttarget\t4" in out
    assert "language\tnl\t12" in out


def test_plan_materializes_builtin(tmp_path, capsys):
    ps = synthetic_phoneset("en", 5)
    utts = make_utterances("target", "en", ps, 30, seed=3, mel_bins=8)
    pool = write_corpus(tmp_path / "pool", utts, {"en": ps})
    out_path = tmp_path / "plan.tsv"
    spec_file = tmp_path / "custom.txt"
    spec_file.write_text("name: CUSTOM\ntarget: target en 25\n", encoding="utf-8")
    assert main(["plan", "--spec-file", str(spec_file), "--pool", str(pool),
                 "--seed", "4", "--out", str(out_path)]) == 0
    manifest = load_manifest(out_path)
    assert manifest.counts() == {("target", "en"): 25}
    assert "wrote 25 utterances" in capsys.readouterr().out


def test_train_and_synth_roundtrip(demo_dir, tmp_path, capsys):
    config = demo_dir / "model" / "config.json"
    manifest = demo_dir / "corpus" / "manifest.tsv"
    ckpt = tmp_path / "model.ckpt"
    log = tmp_path / "train.jsonl"
    assert main(["train", "--config", str(config), "--manifest", str(manifest),
                 "--stage", "both", "--seed", "5", "--out", str(ckpt),
                 "--log", str(log), "--steps1", "3", "--steps2", "3"]) == 0
    assert ckpt.exists()
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    metas = [l for l in lines if l.get("meta")]
    assert {m["stage"] for m in metas} == {"pretrain", "finetune"}
    assert len([l for l in lines if not l.get("meta")]) == 6

    mel_out = tmp_path / "synth.mel"
    assert main(["synth", "--config", str(config), "--checkpoint", str(ckpt),
                 "--language", "en", "--speaker", "target",
                 "--phonemes", "en00 en01 en02", "--max-frames", "40",
                 "--out", str(mel_out)]) == 0
    mel = read_mel(mel_out)
    assert mel.shape[1] == 20
    assert "synthesized" in capsys.readouterr().out


def test_report_renders_files(demo_dir, tmp_path, monkeypatch, capsys):
    experiment = demo_dir / "experiment" / "experiment.json"
    design = load_design(experiment)
    store_dir = tmp_path / "store"
    service = RatingService(design, ExperimentStore(store_dir / f"{design.name}.jsonl"))
    rng = np.random.default_rng(0)
    for p in ("p1", "p2", "p3"):
        state = service.start(p)
        while not state["done"]:
            stims = state["panel"]["stimuli"]
            state = service.submit(
                token=state["token"], panel_id=state["panel"]["panel_id"],
                scores={s["id"]: int(rng.integers(0, 101)) for s in stims},
                listened={s["id"]: True for s in stims},
                moved={s["id"]: True for s in stims})
    out_dir = tmp_path / "report"
    assert main(["report", "--experiment", str(experiment), "--store", str(store_dir),
                 "--out", str(out_dir), "--alpha", "0.05", "--margin", "10"]) == 0
    for name in ("report.tsv", "pairwise.tsv", "boxplot_data.tsv", "boxplot.png"):
        assert (out_dir / name).exists(), name
    report_lines = (out_dir / "report.tsv").read_text().splitlines()
    assert report_lines[0] == "system\tn\tmean\tmedian\taverage_rank"
    assert len(report_lines) == 1 + len(design.all_systems())
    out = capsys.readouterr().out
    assert "records" in out and "boxplot" in out


def test_report_empty_store_fails_cleanly(demo_dir, tmp_path, capsys):
    experiment = demo_dir / "experiment" / "experiment.json"
    assert main(["report", "--experiment", str(experiment),
                 "--store", str(tmp_path / "nostore"),
                 "--out", str(tmp_path / "r")]) == 1
    assert "no rating records" in capsys.readouterr().err
