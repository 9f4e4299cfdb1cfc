"""Evaluation protocol: waypoint snapping, geodesic error, Acc@k, CMC, per-turn analysis.

Localization error is the geodesic shortest-path distance in meters between
the ground-truth waypoint and the waypoint nearest the predicted pixel.
Per-turn error is measured against the final ground-truth node, which is
what the turn-by-turn refinement is trying to reach.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .worldgen import WorldMap

REPORT_VERSION = 1


@dataclass
class GeodesicIndex:
    world_id: str
    dist: np.ndarray  # [N,N] float64 meters; inf for disconnected pairs

    def validate_metric_axioms(self, atol: float = 1e-9) -> None:
        d = self.dist
        if not np.allclose(d, d.T, atol=atol):
            raise AssertionError(f"{self.world_id}: geodesic matrix not symmetric")
        if not np.allclose(np.diag(d), 0.0, atol=atol):
            raise AssertionError(f"{self.world_id}: nonzero diagonal")
        n = d.shape[0]
        for k in range(n):
            via = d[:, k, None] + d[None, k, :]
            if (d > via + atol).any():
                raise AssertionError(f"{self.world_id}: triangle inequality violated via {k}")


def dijkstra(world: WorldMap, source: int) -> np.ndarray:
    """Single-source shortest-path lengths in meters over the waypoint graph."""
    n = len(world.nodes)
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist[node]:
            continue
        for other, length in world.neighbors(node):
            nd = d + length
            if nd < dist[other]:
                dist[other] = nd
                heapq.heappush(heap, (nd, other))
    return dist


def build_geodesic_index(world: WorldMap) -> GeodesicIndex:
    n = len(world.nodes)
    dist = np.empty((n, n))
    for src in range(n):
        dist[src] = dijkstra(world, src)
    return GeodesicIndex(world_id=world.world_id, dist=dist)


def snap_to_node(pixel: tuple[float, float], world: WorldMap) -> int:
    """Euclidean-nearest waypoint; ties break to the smallest node id."""
    if not world.nodes:
        raise ValueError("world has no waypoint nodes")
    r, c = pixel
    if not (0 <= r < world.height_px and 0 <= c < world.width_px):
        raise ValueError(f"pixel {pixel} outside {world.height_px}x{world.width_px} map")
    best, best_d = 0, math.inf
    for nid, (nr, nc) in enumerate(world.nodes):
        d = (nr - r) ** 2 + (nc - c) ** 2
        if d < best_d:
            best, best_d = nid, d
    return best


def geodesic_le(node_a: int, node_b: int, world: WorldMap, index: GeodesicIndex | None = None) -> float:
    """Shortest-path length in meters; +inf with a warning for disconnected pairs."""
    if index is not None:
        le = float(index.dist[node_a, node_b])
    else:
        le = float(dijkstra(world, node_a)[node_b])
    if math.isinf(le):
        import warnings

        warnings.warn(f"nodes {node_a} and {node_b} are disconnected in {world.world_id}")
    return le


def acc_at_k(les: list[float], k: float) -> float:
    if not les:
        raise ValueError("acc_at_k over an empty list is undefined")
    if k < 0:
        raise ValueError("threshold must be >= 0")
    return sum(1 for le in les if le <= k) / len(les)


def cmc_curve(les: list[float], max_k: int = 20) -> list[tuple[int, float]]:
    """Success rate at integer thresholds 0..max_k meters; non-decreasing."""
    if not les:
        raise ValueError("cmc_curve over an empty list is undefined")
    return [(k, acc_at_k(les, k)) for k in range(max_k + 1)]


def confidence_at_gt(logits: ad.Tensor | np.ndarray, gt_pixel: tuple[int, int]) -> float:
    arr = logits.value if isinstance(logits, ad.Tensor) else np.asarray(logits)
    r, c = gt_pixel
    if not (0 <= r < arr.shape[0] and 0 <= c < arr.shape[1]):
        raise ValueError(f"gt pixel {gt_pixel} outside heatmap {arr.shape}")
    flat = arr.astype(np.float64).reshape(-1)
    flat = flat - flat.max()
    p = np.exp(flat)
    p /= p.sum()
    return float(p[r * arr.shape[1] + c])


# ----------------------------------------------------------------- the report


@dataclass
class TurnRecord:
    t: int
    pred_pixel: tuple[int, int]
    snapped_node: int
    le_m: float
    conf_at_gt: float


@dataclass
class SampleRecord:
    sample_id: str
    world_id: str
    t_count: int
    turns: list[TurnRecord]
    final_le: float
    acc0: bool
    acc5: bool


@dataclass
class LocalizationReport:
    method: str
    mode: str  # singleShot | multiShot
    split: str
    config_hash: str
    samples: list[SampleRecord]
    report_version: int = REPORT_VERSION

    def final_les(self) -> list[float]:
        return [s.final_le for s in self.samples]

    def aggregates(self) -> dict:
        les = self.final_les()
        return {
            "acc0": sum(1 for s in self.samples if s.acc0) / len(self.samples),
            "acc5": sum(1 for s in self.samples if s.acc5) / len(self.samples),
            "meanLE": sum(les) / len(les),
        }

    def cmc(self, max_k: int = 20) -> list[tuple[int, float]]:
        return cmc_curve(self.final_les(), max_k)

    def per_turn_groups(self) -> dict[int, dict]:
        """Mean LE at every t, grouped by dialog length (the per-length series)."""
        groups: dict[int, dict] = {}
        for t_count in sorted({s.t_count for s in self.samples}):
            members = [s for s in self.samples if s.t_count == t_count]
            means = [
                sum(s.turns[t].le_m for s in members) / len(members) for t in range(t_count)
            ]
            confs = [
                sum(s.turns[t].conf_at_gt for s in members) / len(members) for t in range(t_count)
            ]
            groups[t_count] = {"count": len(members), "mean_le": means, "mean_conf": confs}
        return groups

    def to_json_dict(self) -> dict:
        return {
            "report_version": self.report_version,
            "method": self.method,
            "mode": self.mode,
            "split": self.split,
            "config_hash": self.config_hash,
            "aggregates": self.aggregates(),
            "cmc": [[k, rate] for k, rate in self.cmc()],
            "per_turn": {
                str(t): g for t, g in self.per_turn_groups().items()
            },
            "samples": [
                {
                    "sampleId": s.sample_id,
                    "worldId": s.world_id,
                    "T": s.t_count,
                    "turns": [
                        {
                            "t": tr.t,
                            "predPixel": list(tr.pred_pixel),
                            "snappedNode": tr.snapped_node,
                            "le": tr.le_m,
                            "confAtGt": tr.conf_at_gt,
                        }
                        for tr in s.turns
                    ],
                    "finalLE": s.final_le,
                    "acc0": s.acc0,
                    "acc5": s.acc5,
                }
                for s in self.samples
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "LocalizationReport":
        samples = [
            SampleRecord(
                sample_id=s["sampleId"],
                world_id=s["worldId"],
                t_count=s["T"],
                turns=[
                    TurnRecord(
                        t=tr["t"],
                        pred_pixel=tuple(tr["predPixel"]),
                        snapped_node=tr["snappedNode"],
                        le_m=tr["le"],
                        conf_at_gt=tr["confAtGt"],
                    )
                    for tr in s["turns"]
                ],
                final_le=s["finalLE"],
                acc0=s["acc0"],
                acc5=s["acc5"],
            )
            for s in data["samples"]
        ]
        return cls(
            method=data["method"],
            mode=data["mode"],
            split=data["split"],
            config_hash=data["config_hash"],
            samples=samples,
            report_version=data["report_version"],
        )

    def summary_csv_row(self) -> str:
        agg = self.aggregates()
        return (
            f"{self.method},{self.mode},{self.split},"
            f"{agg['acc0']:.4f},{agg['acc5']:.4f},{agg['meanLE']:.4f}"
        )

    def summary_text(self) -> str:
        agg = self.aggregates()
        head = f"{'method':<14}{'mode':<12}{'split':<11}{'Acc0':>7}{'Acc5':>7}{'LE':>8}"
        row = (
            f"{self.method:<14}{self.mode:<12}{self.split:<11}"
            f"{agg['acc0'] * 100:>7.2f}{agg['acc5'] * 100:>7.2f}{agg['meanLE']:>8.2f}"
        )
        return head + "\n" + row


CSV_HEADER = "method,mode,split,Acc0,Acc5,meanLE"


def write_report(report: LocalizationReport, out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    json_path.write_text(json.dumps(report.to_json_dict(), indent=2), encoding="utf-8")
    csv_path.write_text(CSV_HEADER + "\n" + report.summary_csv_row() + "\n", encoding="utf-8")
    return json_path, csv_path


# ----------------------------------------------------------------- evaluation


def evaluate_samples(
    model,
    worlds: dict[str, WorldMap],
    samples,
    mode: str,
    method: str = "localizer",
    split: str = "-",
    config_hash: str = "-",
    vocab=None,
) -> LocalizationReport:
    """Run the model over samples and fill a LocalizationReport.

    multiShot records one prediction per turn; singleShot one prediction from
    the whole-dialog token sequence.
    """
    from .worldgen import single_shot_tokens

    if mode not in ("singleShot", "multiShot"):
        raise ValueError(f"mode must be singleShot or multiShot, got {mode!r}")
    indexes: dict[str, GeodesicIndex] = {}
    rasters: dict[str, np.ndarray] = {}
    records: list[SampleRecord] = []
    from .worldgen import rasterize

    cfg = model.config
    for sample in sorted(samples, key=lambda s: s.sample_id):
        world = worlds[sample.world_id]
        if sample.world_id not in indexes:
            indexes[sample.world_id] = build_geodesic_index(world)
            rasters[sample.world_id] = rasterize(world, cfg.map_size)
        index = indexes[sample.world_id]
        image = rasters[sample.world_id]
        gt_node = sample.final_node
        gt_pixel = tuple(sample.final_pixel)

        if mode == "multiShot":
            belief = model.run_dialog(image, [np.asarray(t, dtype=np.int64) for t in sample.turn_tokens])
            heatmaps = belief.heatmaps
        else:
            if vocab is None:
                raise ValueError("singleShot evaluation needs the vocabulary to join turns")
            ids = single_shot_tokens(sample.turns, vocab, cfg.text_len, cfg.single_shot_cap)
            heatmaps = [model.single_shot_forward(image, ids)]

        turns: list[TurnRecord] = []
        for t, logits in enumerate(heatmaps, start=1):
            pred = _heatmap_argmax_to_map(logits.value, world)
            node = snap_to_node(pred, world)
            turns.append(
                TurnRecord(
                    t=t,
                    pred_pixel=pred,
                    snapped_node=node,
                    le_m=geodesic_le(node, gt_node, world, index),
                    conf_at_gt=confidence_at_gt(logits, _map_pixel_to_heatmap(gt_pixel, logits.value.shape, world)),
                )
            )
        final = turns[-1]
        records.append(
            SampleRecord(
                sample_id=sample.sample_id,
                world_id=sample.world_id,
                t_count=sample.num_turns if mode == "multiShot" else 1,
                turns=turns,
                final_le=final.le_m,
                acc0=final.snapped_node == gt_node,
                acc5=final.le_m <= 5.0,
            )
        )
    return LocalizationReport(
        method=method, mode=mode, split=split, config_hash=config_hash, samples=records
    )


def _heatmap_argmax_to_map(arr: np.ndarray, world: WorldMap) -> tuple[int, int]:
    """Argmax pixel mapped from heatmap coordinates back to map pixels."""
    r, c = np.unravel_index(int(arr.argmax()), arr.shape)
    h0, w0 = arr.shape
    mr = round(r * (world.height_px - 1) / (h0 - 1)) if h0 > 1 else 0
    mc = round(c * (world.width_px - 1) / (w0 - 1)) if w0 > 1 else 0
    return (int(mr), int(mc))


def _map_pixel_to_heatmap(pixel: tuple[int, int], shape: tuple[int, int], world: WorldMap) -> tuple[int, int]:
    h0, w0 = shape
    r = round(pixel[0] * (h0 - 1) / (world.height_px - 1)) if world.height_px > 1 else 0
    c = round(pixel[1] * (w0 - 1) / (world.width_px - 1)) if world.width_px > 1 else 0
    return (int(r), int(c))


def uniform_argmax_baseline(
    worlds: dict[str, WorldMap], samples, k: float = 5.0, draws: int = 100_000, seed: int = 0
) -> float:
    """Monte Carlo Acc@k of a localizer that guesses uniformly random pixels."""
    rng = np.random.default_rng(seed)
    indexes = {wid: build_geodesic_index(w) for wid, w in worlds.items()}
    sample_list = sorted(samples, key=lambda s: s.sample_id)
    hits = 0
    picks = rng.integers(0, len(sample_list), size=draws)
    for i in range(draws):
        s = sample_list[int(picks[i])]
        world = worlds[s.world_id]
        pixel = (int(rng.integers(0, world.height_px)), int(rng.integers(0, world.width_px)))
        node = snap_to_node(pixel, world)
        if indexes[s.world_id].dist[node, s.final_node] <= k:
            hits += 1
    return hits / draws
