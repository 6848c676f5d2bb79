import json

import pytest

from kpex import gen_synthetic, save_jsonl, split_dataset
from kpex.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = gen_synthetic(9, 220, vocab_size=60, keyword_fraction=0.25)
    train, dev, unlabeled = split_dataset(ds, [120, 40, 60])
    save_jsonl(train, root / "train.jsonl")
    save_jsonl(dev, root / "dev.jsonl")
    save_jsonl([d.doc for d in unlabeled], root / "unlabeled.jsonl")
    return root


TRAIN_FLAGS = [
    "--batch-size", "8", "--t", "150", "--eval-every", "50",
    "--embed-dim", "16", "--hidden-dim", "16",
    "--lr-lower", "1e-2", "--lr-upper", "1e-2",
]


def test_synth_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["synth", "--seed", "7", "--docs", "100", "--out", str(a)]) == 0
    assert main(["synth", "--seed", "7", "--docs", "100", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(capsys.readouterr().out.splitlines()[0])["n_docs"] == 100


def test_train_then_eval_reaches_high_f1(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main([
        "train", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(out), "--seed", "1",
        *TRAIN_FLAGS,
    ])
    assert rc == 0
    assert (out / "model.ckpt").exists()
    assert (out / "config.json").exists()
    assert (out / "events.jsonl").exists()
    assert not (out / ".lock").exists()
    capsys.readouterr()

    rc = main([
        "eval", "--ckpt", str(out / "model.ckpt"),
        "--test", str(data_dir / "train.jsonl"), "--k", "5",
    ])
    assert rc == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    by_metric = {l["metric"]: l for l in lines}
    assert set(by_metric) == {"f1", "f1_macro", "f1@5"}
    assert by_metric["f1"]["f1"] >= 0.95
    assert by_metric["f1"]["n_docs"] == 120


def test_jlsd_requires_unlabeled_flag(data_dir, tmp_path, capsys):
    rc = main([
        "jlsd", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(tmp_path / "x"),
    ])
    assert rc == 2
    assert "--unlabeled" in capsys.readouterr().err


def test_jlsd_run_writes_swap_events(data_dir, tmp_path):
    out = tmp_path / "run"
    rc = main([
        "jlsd", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"),
        "--unlabeled", str(data_dir / "unlabeled.jsonl"),
        "--out", str(out), "--seed", "2", "--teacher-t", "100",
        *TRAIN_FLAGS,
    ])
    assert rc == 0
    events = [json.loads(l) for l in (out / "events.jsonl").read_text().splitlines()]
    kinds = {e["event"] for e in events}
    assert {"eval", "iteration", "final"} <= kinds
    assert any(e.get("phase") == "pretraining" for e in events)


def test_flags_override_config_file(data_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"batch_size": 4, "T": 30, "eval_every": 15,
                               "embed_dim": 8, "hidden_dim": 8}))
    out = tmp_path / "run"
    rc = main([
        "train", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(out),
        "--config", str(cfg), "--batch-size", "6",
    ])
    assert rc == 0
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["config"]["batch_size"] == 6  # flag wins
    assert resolved["config"]["T"] == 30  # file beats default
    assert resolved["mode"] == "train"


def test_unknown_config_key_is_rejected(data_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"batch_syze": 4}))
    rc = main([
        "train", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(tmp_path / "x"),
        "--config", str(cfg),
    ])
    assert rc == 2
    assert "batch_syze" in capsys.readouterr().err


def test_missing_dataset_file_is_a_data_error(tmp_path, capsys):
    rc = main([
        "train", "--train", str(tmp_path / "nope.jsonl"),
        "--dev", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "x"),
    ])
    assert rc == 3
    assert "error: data" in capsys.readouterr().err


def test_locked_output_directory_is_rejected(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    out.mkdir()
    (out / ".lock").touch()
    rc = main([
        "train", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(out),
    ])
    assert rc == 2
    assert "locked" in capsys.readouterr().err


def test_extract_and_rank_write_jsonl(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    main([
        "train", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(out), "--seed", "1",
        *TRAIN_FLAGS,
    ])
    extracted = tmp_path / "phrases.jsonl"
    rc = main([
        "extract", "--ckpt", str(out / "model.ckpt"),
        "--test", str(data_dir / "unlabeled.jsonl"), "--out", str(extracted),
    ])
    assert rc == 0
    recs = [json.loads(l) for l in extracted.read_text().splitlines()]
    assert len(recs) == 60 and all("phrases" in r for r in recs)

    ranked = tmp_path / "ranked.jsonl"
    rc = main([
        "rank", "--ckpt", str(out / "model.ckpt"),
        "--test", str(data_dir / "unlabeled.jsonl"), "--out", str(ranked),
    ])
    assert rc == 0
    recs = [json.loads(l) for l in ranked.read_text().splitlines()]
    assert len(recs) == 60
    for r in recs:
        confs = [p["confidence"] for p in r["ranked"]]
        assert confs == sorted(confs, reverse=True)


def test_input_datasets_are_never_mutated(data_dir, tmp_path):
    before = (data_dir / "train.jsonl").read_bytes()
    out = tmp_path / "run"
    main([
        "train", "--train", str(data_dir / "train.jsonl"),
        "--dev", str(data_dir / "dev.jsonl"), "--out", str(out), "--seed", "3",
        "--t", "20", "--eval-every", "10", "--embed-dim", "8", "--hidden-dim", "8",
    ])
    assert (data_dir / "train.jsonl").read_bytes() == before
