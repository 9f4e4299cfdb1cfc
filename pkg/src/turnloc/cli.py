"""Single entry point for data generation, training, evaluation, analysis,
benchmarking, serving, and offline inference.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import resource
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import NumericError
from .eval_metrics import CSV_HEADER, LocalizationReport, evaluate_samples, write_report
from .losses import LossConfig
from .model import ModelConfig, load_model
from .train import TrainConfig, sweep, train
from .worldgen import (
    DialogSample,
    GenerationError,
    SplitCounts,
    WorldMap,
    WorldParams,
    build_splits,
    build_vocabulary,
    load_manifest,
    load_samples,
    load_world,
    rasterize,
    single_shot_tokens,
)

USAGE_ERROR, DATA_ERROR, NUMERIC_ERROR = 2, 3, 4


def _parse_counts(text: str) -> SplitCounts:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("counts must be train,valSeen,valUnseen")
    return SplitCounts(train=parts[0], val_seen=parts[1], val_unseen=parts[2])


def _load_train_config(args) -> TrainConfig:
    if args.config:
        cfg = TrainConfig.from_json_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        cfg = TrainConfig()
    # flags win over file values
    if getattr(args, "variant", None):
        cfg.model.variant = args.variant
    if getattr(args, "depth", None) is not None:
        cfg.model.fusion_depth = args.depth
    if getattr(args, "alpha", None) is not None:
        if not 0.0 <= args.alpha <= 1.0:
            raise argparse.ArgumentTypeError(f"--alpha must be in [0,1], got {args.alpha}")
        cfg.loss.alpha = args.alpha
    if getattr(args, "beta", None) is not None:
        if args.beta < 0:
            raise argparse.ArgumentTypeError(f"--beta must be >= 0, got {args.beta}")
        cfg.loss.beta = args.beta
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "lr", None) is not None:
        cfg.learning_rate = args.lr
    if getattr(args, "freeze_text", False):
        cfg.model.freeze_text = True
    if getattr(args, "max_steps", None) is not None:
        cfg.max_steps = args.max_steps
    if getattr(args, "no_augment", False):
        cfg.augment_enabled = False
    cfg.model = ModelConfig.from_json_dict(cfg.model.to_json_dict())  # re-validate
    LossConfig(alpha=cfg.loss.alpha, beta=cfg.loss.beta)
    return cfg


def cmd_gen_data(args) -> int:
    params = WorldParams(
        grid_rooms=tuple(int(x) for x in args.grid.split(",")),
        meters_per_pixel=args.meters_per_pixel,
        size_px=args.size_px,
    )
    manifest = build_splits(args.seed, args.counts, args.out, params=params, n_tokens=args.n_tokens)
    print(f"config {manifest.config_hash()}")
    print(f"wrote {sum(manifest.counts.values())} samples across {len(manifest.counts)} splits to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_train_config(args)
    print(f"config {cfg.config_hash()}")
    if args.print_config:
        print(json.dumps(cfg.to_json_dict(), indent=2))
        return 0
    result = train(cfg, args.data, args.out)
    print(f"steps {result.steps}; best valUnseen Acc5 {result.best_val_unseen_acc5:.4f}")
    print(f"checkpoints: {result.best_checkpoint} {result.last_checkpoint}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_train_config(args)
    values: list = []
    for raw in args.values.split(","):
        if args.axis == "depth":
            values.append(int(raw))
        elif args.axis == "augmentation":
            values.append(raw.lower() in ("1", "true", "yes"))
        else:
            values.append(float(raw))
    print(f"config {cfg.config_hash()}")
    rows = sweep(args.axis, values, cfg, args.data, args.out)
    from .train import sweep_text

    print(sweep_text(rows))
    return 0


def cmd_eval(args) -> int:
    model, meta = load_model(args.checkpoint)
    vocab = build_vocabulary()
    samples = load_samples(args.data, args.split)
    worlds: dict[str, WorldMap] = {}
    for s in samples:
        if s.world_id not in worlds:
            worlds[s.world_id] = load_world(args.data, s.world_id)
    config_hash = meta.get("extra", {}).get("config_hash", "-")
    print(f"config {config_hash}")
    report = evaluate_samples(
        model,
        worlds,
        samples,
        mode=args.mode,
        method=args.method or model.config.variant,
        split=args.split,
        config_hash=config_hash,
        vocab=vocab,
    )
    stem = f"report_{report.method}_{args.mode}_{args.split}"
    json_path, csv_path = write_report(report, args.out, stem)
    print(report.summary_text())
    print(f"report: {json_path}")
    return 0


def cmd_analyze(args) -> int:
    reports_dir = Path(args.reports)
    reports = []
    for path in sorted(reports_dir.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("report_version") == 1:
            reports.append(LocalizationReport.from_json_dict(data))
    if not reports:
        print(f"no report JSON files under {reports_dir}", file=sys.stderr)
        return DATA_ERROR
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cmc_series = [
        {
            "method": r.method,
            "mode": r.mode,
            "split": r.split,
            "series": [[k, rate] for k, rate in r.cmc()],
        }
        for r in reports
    ]
    per_turn = [
        {
            "method": r.method,
            "mode": r.mode,
            "split": r.split,
            "groups": {str(t): g for t, g in r.per_turn_groups().items()},
        }
        for r in reports
    ]
    (out / "cmc_series.json").write_text(json.dumps(cmc_series, indent=2), encoding="utf-8")
    (out / "per_turn_series.json").write_text(json.dumps(per_turn, indent=2), encoding="utf-8")
    lines = [CSV_HEADER] + [r.summary_csv_row() for r in reports]
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"analyzed {len(reports)} reports -> {out}")
    return 0


def cmd_bench(args) -> int:
    model, meta = load_model(args.checkpoint)
    cfg = model.config
    vocab = build_vocabulary()
    world = generate_bench_world(cfg.map_size)
    image = rasterize(world, cfg.map_size)
    from .worldgen import tokenize_turn

    ids = tokenize_turn(("where are you", "i am in the kitchen"), vocab, cfg.text_len)
    # warmup then timed per-turn inference at batch 1
    model.run_dialog(image, [ids])
    reps = args.reps
    t0 = time.perf_counter()
    for _ in range(reps):
        model.run_dialog(image, [ids] * args.turns)
    per_turn = (time.perf_counter() - t0) / (reps * args.turns)
    peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    result = {
        "runtimeSecondsPerTurn": round(per_turn, 6),
        "peakBytes": int(peak_kb) * 1024,
        "turns": args.turns,
        "variant": cfg.variant,
        "kernels": _bench_kernels(),
    }
    print(json.dumps(result, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2), encoding="utf-8")
    return 0


def generate_bench_world(size_px: int) -> WorldMap:
    from .worldgen import generate_world

    return generate_world(99, WorldParams(size_px=64))


def _bench_kernels() -> dict:
    """Compare the compiled kernels against the numpy fallback on hot shapes."""
    from .kernels import reference

    try:
        from .kernels import _native as native
    except ImportError:
        native = None
    rng = np.random.default_rng(0)
    x = rng.standard_normal((48, 18, 18)).astype(np.float32)
    grad = rng.standard_normal((16, 64, 64)).astype(np.float32)
    shapes = {
        "im2col_48x18x18_k4s2": lambda impl: impl.im2col(x, 4, 4, 2),
        "bilinear_16x8x8_to_64": lambda impl: impl.bilinear_resize(x[:16, :8, :8].copy(), 64, 64),
        "bilinear_bwd_64_to_8": lambda impl: impl.bilinear_resize_backward(grad, 8, 8),
    }
    out: dict = {"backend": "native" if native is not None else "reference"}
    for name, fn in shapes.items():
        timings = {}
        for label, impl in (("reference", reference), ("native", native)):
            if impl is None:
                continue
            fn(impl)  # warmup
            t0 = time.perf_counter()
            for _ in range(50):
                fn(impl)
            timings[label] = round((time.perf_counter() - t0) / 50 * 1e6, 2)  # us
        out[name] = timings
    return out


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoint, worlds_dir=args.worlds, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_infer(args) -> int:
    from PIL import Image

    from .eval_metrics import build_geodesic_index, geodesic_le, snap_to_node

    model, meta = load_model(args.checkpoint)
    cfg = model.config
    vocab = build_vocabulary()
    world = WorldMap.from_json(Path(args.world).read_text(encoding="utf-8"))
    raw = Path(args.dialog).read_text(encoding="utf-8").strip().splitlines()[0]
    sample = DialogSample.from_json_dict(json.loads(raw))
    image = rasterize(world, cfg.map_size)
    index = build_geodesic_index(world)

    if args.mode == "multiShot":
        belief = model.run_dialog(image, [np.asarray(t, dtype=np.int64) for t in sample.turn_tokens])
        heatmaps = belief.heatmaps
    else:
        ids = single_shot_tokens(sample.turns, vocab, cfg.text_len, cfg.single_shot_cap)
        heatmaps = [model.single_shot_forward(image, ids)]

    dump = Path(args.dump_heatmaps) if args.dump_heatmaps else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    for t, logits in enumerate(heatmaps, start=1):
        arr = logits.value
        flat = arr.astype(np.float64) - arr.max()
        probs = np.exp(flat)
        probs /= probs.sum()
        r, c = np.unravel_index(int(arr.argmax()), arr.shape)
        h0, w0 = arr.shape
        mr = round(r * (world.height_px - 1) / (h0 - 1)) if h0 > 1 else 0
        mc = round(c * (world.width_px - 1) / (w0 - 1)) if w0 > 1 else 0
        node = snap_to_node((mr, mc), world)
        le = geodesic_le(node, sample.final_node, world, index)
        print(f"turn {t}: pred ({mr},{mc}) node {node} LE {le:.2f} m")
        if dump:
            u8 = np.round(probs / probs.max() * 255.0).astype(np.uint8)
            Image.fromarray(u8).save(dump / f"{sample.sample_id}_t{t}.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turnloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate worlds and dialog splits")
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--out", required=True)
    p.add_argument("--counts", type=_parse_counts, default=SplitCounts())
    p.add_argument("--grid", default="3,3")
    p.add_argument("--meters-per-pixel", type=float, default=0.25)
    p.add_argument("--size-px", type=int, default=64)
    p.add_argument("--n-tokens", type=int, default=32)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a localizer")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["explicit", "implicit", "convBaseline"])
    p.add_argument("--depth", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--freeze-text", action="store_true")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train one model per value on an axis")
    p.add_argument("--axis", required=True, choices=["depth", "alpha", "beta", "augmentation"])
    p.add_argument("--values", required=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="valUnseen", choices=["train", "valSeen", "valUnseen"])
    p.add_argument("--mode", default="multiShot", choices=["singleShot", "multiShot"])
    p.add_argument("--method")
    p.add_argument("--out", default="reports")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="emit CMC/per-turn series from report files")
    p.add_argument("--reports", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="per-turn latency, peak memory, kernel comparison")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--turns", type=int, default=3)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the turn-based inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--worlds", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("infer", help="offline per-turn heatmaps for one dialog")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--dialog", required=True)
    p.add_argument("--mode", default="multiShot", choices=["singleShot", "multiShot"])
    p.add_argument("--dump-heatmaps")
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except argparse.ArgumentTypeError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_ERROR
    except (FileNotFoundError, GenerationError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
