"""Configuration sweeps: one training run per value on a chosen axis."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .loop import TrainConfig, TrainResult, train

AXES = ("depth", "alpha", "beta", "augmentation")


@dataclass
class SweepRow:
    axis: str
    value: float | int | bool
    config_hash: str
    val_seen_acc5: float
    val_seen_mean_le: float
    val_unseen_acc5: float
    val_unseen_mean_le: float


def _apply_axis(config: TrainConfig, axis: str, value) -> TrainConfig:
    cfg = copy.deepcopy(config)
    if axis == "depth":
        cfg.model.fusion_depth = int(value)
    elif axis == "alpha":
        cfg.loss.alpha = float(value)
    elif axis == "beta":
        cfg.loss.beta = float(value)
    elif axis == "augmentation":
        cfg.dialog_augmentation.enabled = bool(value)
    else:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return cfg


def _final_metrics(log_path: Path) -> dict[str, dict]:
    last: dict[str, dict] = {}
    with log_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "split" in rec:
                last[rec["split"]] = rec
    return last


def sweep(axis: str, values, base_config: TrainConfig, data_dir: str | Path, out_dir: str | Path) -> list[SweepRow]:
    """Train one model per value; emit a JSON table plus an aligned text table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[SweepRow] = []
    for value in values:
        cfg = _apply_axis(base_config, axis, value)
        run_dir = out / f"{axis}_{value}"
        result: TrainResult = train(cfg, data_dir, run_dir)
        metrics = _final_metrics(result.log_path)
        rows.append(
            SweepRow(
                axis=axis,
                value=value,
                config_hash=result.config_hash,
                val_seen_acc5=metrics["valSeen"]["acc5"],
                val_seen_mean_le=metrics["valSeen"]["meanLE"],
                val_unseen_acc5=metrics["valUnseen"]["acc5"],
                val_unseen_mean_le=metrics["valUnseen"]["meanLE"],
            )
        )

    table = {
        "axis": axis,
        "rows": [
            {
                "value": r.value,
                "configHash": r.config_hash,
                "valSeen": {"LE": r.val_seen_mean_le, "Acc5": r.val_seen_acc5},
                "valUnseen": {"LE": r.val_unseen_mean_le, "Acc5": r.val_unseen_acc5},
            }
            for r in rows
        ],
    }
    (out / f"sweep_{axis}.json").write_text(json.dumps(table, indent=2), encoding="utf-8")
    (out / f"sweep_{axis}.txt").write_text(sweep_text(rows), encoding="utf-8")
    return rows


def sweep_text(rows: list[SweepRow]) -> str:
    head = (
        f"{'value':<10}{'hash':<14}{'seen LE':>9}{'seen Acc5':>11}"
        f"{'unseen LE':>11}{'unseen Acc5':>13}"
    )
    lines = [head]
    for r in rows:
        lines.append(
            f"{str(r.value):<10}{r.config_hash:<14}{r.val_seen_mean_le:>9.2f}"
            f"{r.val_seen_acc5 * 100:>11.2f}{r.val_unseen_mean_le:>11.2f}{r.val_unseen_acc5 * 100:>13.2f}"
        )
    return "\n".join(lines) + "\n"
