"""Dataset assembly: seeded splits, JSON/JSONL serialization, manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dialogs import DialogSample, generate_dialog
from .vocab import Vocabulary, build_vocabulary
from .worlds import GenerationError, WorldMap, WorldParams, generate_world

SPLITS = ("train", "valSeen", "valUnseen")

# desk-scale defaults; the full-scale dataset this stands in for has
# train 9955 / valSeen 305 / valUnseen 579 annotated dialogs
FULL_SCALE_COUNTS = {"train": 9955, "valSeen": 305, "valUnseen": 579}

# draw shorter dialogs more often; length 1 is rare but present
TURN_WEIGHTS = {1: 0.08, 2: 0.27, 3: 0.27, 4: 0.18, 5: 0.12, 6: 0.08}


@dataclass
class SplitCounts:
    train: int = 400
    val_seen: int = 50
    val_unseen: int = 50

    def __post_init__(self):
        if min(self.train, self.val_seen, self.val_unseen) < 1:
            raise ValueError("every split needs at least one sample")


@dataclass
class DatasetManifest:
    master_seed: int
    counts: dict[str, int]
    worlds: dict[str, list[str]]  # split -> world ids
    samples: dict[str, list[str]]  # split -> sample ids
    n_tokens: int
    params: dict
    full_scale_counts: dict[str, int] = field(default_factory=lambda: dict(FULL_SCALE_COUNTS))

    def config_hash(self) -> str:
        ident = {
            "masterSeed": self.master_seed,
            "counts": self.counts,
            "nTokens": self.n_tokens,
            "params": self.params,
        }
        canon = json.dumps(ident, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]

    def to_json_dict(self) -> dict:
        return {
            "masterSeed": self.master_seed,
            "counts": self.counts,
            "worlds": self.worlds,
            "samples": self.samples,
            "nTokens": self.n_tokens,
            "params": self.params,
            "fullScaleCounts": self.full_scale_counts,
            "configHash": self.config_hash(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DatasetManifest":
        return cls(
            master_seed=data["masterSeed"],
            counts=data["counts"],
            worlds=data["worlds"],
            samples=data["samples"],
            n_tokens=data["nTokens"],
            params=data["params"],
            full_scale_counts=data.get("fullScaleCounts", dict(FULL_SCALE_COUNTS)),
        )


def _sample_turns(rng: np.random.Generator) -> int:
    lengths = sorted(TURN_WEIGHTS)
    weights = np.array([TURN_WEIGHTS[t] for t in lengths])
    return int(rng.choice(lengths, p=weights / weights.sum()))


def _generate_split(
    split: str,
    count: int,
    worlds: list[WorldMap],
    rng: np.random.Generator,
    vocab: Vocabulary,
    n_tokens: int,
) -> list[DialogSample]:
    samples: list[DialogSample] = []
    for i in range(count):
        t_want = _sample_turns(rng)
        sample = None
        # ladder: a few seeds at the drawn length, then nearby lengths, then
        # the next world; worlds where some length is infeasible are rare
        for attempt in range(60):
            world = worlds[(i + attempt // 20) % len(worlds)]
            t_turns = t_want if attempt % 4 < 2 else 2 + (attempt % 4)
            t_turns = min(max(t_turns, 1), 6)
            seed = int(rng.integers(0, 2**31 - 1))
            try:
                gen = generate_dialog(
                    world, seed, t_turns, vocab, n_tokens, sample_id=f"{split}-{i:05d}"
                )
                sample = gen.sample
                break
            except GenerationError:
                continue
        if sample is None:
            raise GenerationError(f"could not draw sample {i} for split {split}")
        samples.append(sample)
    return samples


def build_splits(
    master_seed: int,
    counts: SplitCounts,
    out_dir: str | Path,
    params: WorldParams | None = None,
    n_tokens: int = 32,
    samples_per_world: int = 4,
) -> DatasetManifest:
    """Generate worlds and dialogs for all three splits and write them to disk.

    valSeen reuses the training worlds with fresh dialog seeds; valUnseen uses
    freshly generated worlds disjoint from the training pool.  The whole tree
    is a pure function of (master_seed, counts, params).
    """
    params = params or WorldParams()
    out = Path(out_dir)
    (out / "worlds").mkdir(parents=True, exist_ok=True)
    vocab = build_vocabulary()

    n_train_worlds = max(2, counts.train // samples_per_world)
    n_unseen_worlds = max(2, counts.val_unseen // samples_per_world)

    rng = np.random.default_rng(master_seed)
    train_worlds: list[WorldMap] = []
    seen_seeds: set[int] = set()
    while len(train_worlds) < n_train_worlds:
        seed = int(rng.integers(0, 2**31 - 1))
        if seed in seen_seeds:
            continue
        seen_seeds.add(seed)
        try:
            train_worlds.append(generate_world(seed, params))
        except GenerationError:
            continue
    unseen_worlds: list[WorldMap] = []
    while len(unseen_worlds) < n_unseen_worlds:
        seed = int(rng.integers(0, 2**31 - 1))
        if seed in seen_seeds:
            continue
        seen_seeds.add(seed)
        try:
            unseen_worlds.append(generate_world(seed, params))
        except GenerationError:
            continue

    split_worlds = {"train": train_worlds, "valSeen": train_worlds, "valUnseen": unseen_worlds}
    split_counts = {"train": counts.train, "valSeen": counts.val_seen, "valUnseen": counts.val_unseen}

    manifest_worlds: dict[str, list[str]] = {}
    manifest_samples: dict[str, list[str]] = {}
    for split in SPLITS:
        samples = _generate_split(split, split_counts[split], split_worlds[split], rng, vocab, n_tokens)
        path = out / f"{split}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for sample in samples:
                fh.write(json.dumps(sample.to_json_dict(), separators=(",", ":")) + "\n")
        manifest_worlds[split] = [w.world_id for w in split_worlds[split]]
        manifest_samples[split] = [s.sample_id for s in samples]

    for world in train_worlds + unseen_worlds:
        (out / "worlds" / f"{world.world_id}.json").write_text(world.to_json(), encoding="utf-8")

    manifest = DatasetManifest(
        master_seed=master_seed,
        counts=split_counts,
        worlds=manifest_worlds,
        samples=manifest_samples,
        n_tokens=n_tokens,
        params={
            "gridRooms": list(params.grid_rooms),
            "sizePx": params.size_px,
            "metersPerPixel": params.meters_per_pixel,
            "distinctLabels": params.distinct_labels,
            "landmarksPerRoom": list(params.landmarks_per_room),
        },
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_json_dict(), indent=2, sort_keys=False), encoding="utf-8"
    )
    return manifest


def write_dataset(
    out_dir: str | Path,
    worlds: list[WorldMap],
    samples_by_split: dict[str, list[DialogSample]],
    master_seed: int,
    n_tokens: int = 32,
) -> DatasetManifest:
    """Write an explicit set of worlds/samples in the standard dataset layout."""
    out = Path(out_dir)
    (out / "worlds").mkdir(parents=True, exist_ok=True)
    for world in worlds:
        (out / "worlds" / f"{world.world_id}.json").write_text(world.to_json(), encoding="utf-8")
    world_ids = [w.world_id for w in worlds]
    manifest = DatasetManifest(
        master_seed=master_seed,
        counts={split: len(samples) for split, samples in samples_by_split.items()},
        worlds={split: world_ids for split in samples_by_split},
        samples={split: [s.sample_id for s in samples] for split, samples in samples_by_split.items()},
        n_tokens=n_tokens,
        params={},
    )
    for split, samples in samples_by_split.items():
        with (out / f"{split}.jsonl").open("w", encoding="utf-8") as fh:
            for sample in samples:
                fh.write(json.dumps(sample.to_json_dict(), separators=(",", ":")) + "\n")
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_json_dict(), indent=2, sort_keys=False), encoding="utf-8"
    )
    return manifest


def load_manifest(data_dir: str | Path) -> DatasetManifest:
    return DatasetManifest.from_json_dict(
        json.loads((Path(data_dir) / "manifest.json").read_text(encoding="utf-8"))
    )


def load_world(data_dir: str | Path, world_id: str) -> WorldMap:
    return WorldMap.from_json(
        (Path(data_dir) / "worlds" / f"{world_id}.json").read_text(encoding="utf-8")
    )


def load_samples(data_dir: str | Path, split: str) -> list[DialogSample]:
    path = Path(data_dir) / f"{split}.jsonl"
    samples = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(DialogSample.from_json_dict(json.loads(line)))
    return samples
