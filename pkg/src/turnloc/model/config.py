"""Model configuration: one dataclass shared by all variants and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

VARIANTS = ("explicit", "implicit", "convBaseline")


@dataclass
class ModelConfig:
    embed_dim: int = 64
    heads: int = 4
    patch_size: int = 8
    map_size: int = 64
    text_len: int = 32
    text_layers: int = 2
    map_layers: int = 4
    fusion_depth: int = 1
    variant: str = "explicit"
    freeze_text: bool = False
    head_spec: list[int] = field(default_factory=lambda: [48, 48, 32, 16])
    # "bottleneck": stride-2 conv/deconv hourglass over the state grid;
    # "local": stride-1 convs only (small receptive field keeps the decode
    # per-location and resists world-identity shortcuts)
    head_mode: str = "bottleneck"
    target_size: tuple[int, int] = (64, 64)
    vocab_size: int = 128
    ff_mult: int = 4
    single_shot_cap: int = 192  # max ids for whole-dialog encoding (6 turns)
    baseline_channels: int = 32
    pad_id: int = 0

    def __post_init__(self):
        if self.map_size % self.patch_size != 0:
            raise ValueError(f"map size {self.map_size} not divisible by patch {self.patch_size}")
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed dim {self.embed_dim} not divisible by {self.heads} heads")
        if self.fusion_depth < 1:
            raise ValueError("fusion depth must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        m = self.map_tokens
        if int(math.isqrt(m)) ** 2 != m:
            raise ValueError(f"map token count {m} is not a perfect square")
        if len(self.head_spec) != 4:
            raise ValueError("head spec lists the four conv/deconv channel counts")
        if self.head_mode not in ("bottleneck", "local"):
            raise ValueError(f"head_mode must be bottleneck or local, got {self.head_mode!r}")
        self.target_size = tuple(self.target_size)

    @property
    def map_tokens(self) -> int:
        return (self.map_size // self.patch_size) ** 2

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["target_size"] = list(self.target_size)
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["target_size"] = tuple(data.get("target_size", (64, 64)))
        data["head_spec"] = list(data.get("head_spec", [48, 48, 32, 16]))
        return cls(**data)
