"""CLI surface: subcommands, exit codes, artifact round trips."""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np
import pytest

from turnloc.cli import main
from turnloc.model import ModelConfig, build_model, save_checkpoint
from turnloc.worldgen import build_vocabulary, generate_dialog, generate_world

VOCAB = build_vocabulary()


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """Small dataset + untrained checkpoint shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run_cli("gen-data", "--seed", "13", "--out", str(data), "--counts", "8,3,3") == 0
    cfg = ModelConfig(
        embed_dim=16, heads=2, map_layers=1, text_layers=1, head_spec=[8, 8, 8, 8], vocab_size=len(VOCAB)
    )
    model = build_model(cfg, seed=3)
    ckpt = root / "model.dlc"
    save_checkpoint(ckpt, model, step=0, seed=3)
    return {"root": root, "data": data, "checkpoint": ckpt}


def _dir_digest(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(path.rglob("*")):
        if f.is_file():
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def test_gen_data_minimal_counts(tmp_path):
    out = tmp_path / "mini"
    assert run_cli("gen-data", "--seed", "5", "--out", str(out), "--counts", "1,1,1") == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counts"] == {"train": 1, "valSeen": 1, "valUnseen": 1}
    assert (out / "train.jsonl").exists()


def test_gen_data_rerun_is_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("gen-data", "--seed", "9", "--out", str(a), "--counts", "4,2,2") == 0
    assert run_cli("gen-data", "--seed", "9", "--out", str(b), "--counts", "4,2,2") == 0
    assert _dir_digest(a) == _dir_digest(b)


def test_train_alpha_out_of_range_fails_before_work(cli_env, tmp_path, capsys):
    code = run_cli(
        "train", "--data", str(cli_env["data"]), "--out", str(tmp_path / "x"), "--alpha", "2"
    )
    assert code == 2
    assert not (tmp_path / "x").exists()


def test_train_print_config_emits_resolved_json(cli_env, tmp_path, capsys):
    code = run_cli(
        "train",
        "--data",
        str(cli_env["data"]),
        "--out",
        str(tmp_path / "run"),
        "--variant",
        "explicit",
        "--depth",
        "3",
        "--alpha",
        "0",
        "--beta",
        "1",
        "--print-config",
    )
    assert code == 0
    out = capsys.readouterr().out
    assert re.search(r"config [0-9a-f]{12}", out)
    cfg = json.loads(out[out.index("{") :])
    assert cfg["model"]["fusion_depth"] == 3
    assert cfg["loss"]["alpha"] == 0.0 and cfg["loss"]["beta"] == 1.0


def test_train_eval_analyze_round_trip(cli_env, tmp_path, capsys):
    run_dir = tmp_path / "run"
    config = {
        "epochs": 1,
        "batchSize": 4,
        "seed": 2,
        "augmentEnabled": False,
        "model": {
            "embed_dim": 16,
            "heads": 2,
            "map_layers": 1,
            "text_layers": 1,
            "head_spec": [8, 8, 8, 8],
            "vocab_size": len(VOCAB),
        },
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    assert run_cli("train", "--config", str(cfg_path), "--data", str(cli_env["data"]), "--out", str(run_dir)) == 0
    assert (run_dir / "best.dlc").exists()

    reports = tmp_path / "reports"
    assert (
        run_cli(
            "eval",
            "--checkpoint",
            str(run_dir / "best.dlc"),
            "--data",
            str(cli_env["data"]),
            "--split",
            "valUnseen",
            "--mode",
            "multiShot",
            "--out",
            str(reports),
        )
        == 0
    )
    report_files = list(reports.glob("*.json"))
    assert len(report_files) == 1
    assert (reports / report_files[0].stem).with_suffix(".csv").exists()

    analysis = tmp_path / "analysis"
    assert run_cli("analyze", "--reports", str(reports), "--out", str(analysis)) == 0
    series = json.loads((analysis / "cmc_series.json").read_text())
    assert len(series) == 1 and len(series[0]["series"]) == 21
    assert (analysis / "per_turn_series.json").exists()
    assert (analysis / "summary.csv").read_text().startswith("method,mode,split")


def test_eval_missing_checkpoint_is_data_error(cli_env, tmp_path):
    code = run_cli(
        "eval", "--checkpoint", str(tmp_path / "none.dlc"), "--data", str(cli_env["data"]), "--out", str(tmp_path)
    )
    assert code == 3


def test_bench_reports_runtime_memory_and_kernels(cli_env, tmp_path, capsys):
    out_file = tmp_path / "bench.json"
    assert run_cli("bench", "--checkpoint", str(cli_env["checkpoint"]), "--reps", "1", "--out", str(out_file)) == 0
    body = json.loads(out_file.read_text())
    assert body["runtimeSecondsPerTurn"] > 0
    assert body["peakBytes"] > 0
    assert "kernels" in body and "backend" in body["kernels"]


def test_infer_dumps_per_turn_heatmaps(cli_env, tmp_path, capsys):
    world = generate_world(77)
    gen = generate_dialog(world, 2, 3, VOCAB)
    world_file = tmp_path / "world.json"
    world_file.write_text(world.to_json())
    dialog_file = tmp_path / "dialog.json"
    dialog_file.write_text(json.dumps(gen.sample.to_json_dict()))
    dumps = tmp_path / "heat"
    code = run_cli(
        "infer",
        "--checkpoint",
        str(cli_env["checkpoint"]),
        "--world",
        str(world_file),
        "--dialog",
        str(dialog_file),
        "--mode",
        "multiShot",
        "--dump-heatmaps",
        str(dumps),
    )
    assert code == 0
    assert len(list(dumps.glob("*.png"))) == 3
    out = capsys.readouterr().out
    les = [float(m) for m in re.findall(r"LE ([0-9.]+) m", out)]
    assert len(les) == 3

    # single-shot mode emits exactly one heatmap
    dumps2 = tmp_path / "heat1"
    assert (
        run_cli(
            "infer",
            "--checkpoint",
            str(cli_env["checkpoint"]),
            "--world",
            str(world_file),
            "--dialog",
            str(dialog_file),
            "--mode",
            "singleShot",
            "--dump-heatmaps",
            str(dumps2),
        )
        == 0
    )
    assert len(list(dumps2.glob("*.png"))) == 1


def test_infer_les_match_eval_metrics(cli_env, tmp_path, capsys):
    from turnloc.eval_metrics import evaluate_samples
    from turnloc.model import load_model

    world = generate_world(88)
    gen = generate_dialog(world, 4, 2, VOCAB)
    world_file = tmp_path / "world.json"
    world_file.write_text(world.to_json())
    dialog_file = tmp_path / "dialog.json"
    dialog_file.write_text(json.dumps(gen.sample.to_json_dict()))
    assert (
        run_cli(
            "infer",
            "--checkpoint",
            str(cli_env["checkpoint"]),
            "--world",
            str(world_file),
            "--dialog",
            str(dialog_file),
            "--mode",
            "multiShot",
        )
        == 0
    )
    out = capsys.readouterr().out
    les = [float(m) for m in re.findall(r"LE ([0-9.]+) m", out)]

    model, _ = load_model(cli_env["checkpoint"])
    report = evaluate_samples(model, {world.world_id: world}, [gen.sample], mode="multiShot", vocab=VOCAB)
    expected = [t.le_m for t in report.samples[0].turns]
    assert les == pytest.approx(expected, abs=0.01)


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
