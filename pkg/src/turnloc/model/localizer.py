"""The multi-shot localizer: map encoder, per-turn text encoder, fusion, head.

Two fusion variants share all machinery.  `explicit` multiplies the frozen
map embedding into the carried state before each fusion pass
(state starts at all-ones, acting as a map prior); `implicit` feeds the
carried state straight back in, so the map is only read at the first turn
through the state initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameter, Tensor
from .config import ModelConfig
from .layers import LayerNorm, Linear, Module, MultiHeadAttention, TextMLP, TransformerBlock


@dataclass
class BeliefState:
    state: Tensor  # [M,C] fusion hidden state
    turn_index: int
    heatmaps: list[Tensor] = field(default_factory=list)  # per-turn logits [h0,w0]


def patch_grid(image: np.ndarray, patch: int) -> np.ndarray:
    """[3,S,S] image -> [M, 3*patch*patch] rows of non-overlapping patches.

    Pixels are centered (x - 0.5): raw [0,1] colors share a large common mean
    component that would dominate the patch projection.
    """
    c, s, _ = image.shape
    g = s // patch
    x = image.reshape(c, g, patch, g, patch)
    x = x.transpose(1, 3, 0, 2, 4).reshape(g * g, c * patch * patch)
    return np.ascontiguousarray(x.astype(np.float32) - np.float32(0.5))


class MapEncoder(Module):
    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self._patch = cfg.patch_size
        dim = cfg.embed_dim
        self.patch_proj = Linear(rng, 3 * cfg.patch_size**2, dim)
        self.pos = Parameter((rng.standard_normal((cfg.map_tokens, dim)) * 0.02).astype(np.float32))
        self.block = [
            TransformerBlock(rng, dim, cfg.heads, cfg.ff_mult) for _ in range(cfg.map_layers)
        ]
        self.ln_out = LayerNorm(dim)

    def __call__(self, image: np.ndarray) -> Tensor:
        tokens = ad.constant(patch_grid(image, self._patch))
        x = ad.add(self.patch_proj(tokens), self.pos)
        for block in self.block:
            x = block(x)
        return self.ln_out(x)


class TextEncoder(Module):
    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        dim = cfg.embed_dim
        self._pad_id = cfg.pad_id
        self.tok = Parameter((rng.standard_normal((cfg.vocab_size, dim)) * 0.02).astype(np.float32))
        self.pos = Parameter((rng.standard_normal((cfg.single_shot_cap, dim)) * 0.02).astype(np.float32))
        self.block = [
            TransformerBlock(rng, dim, cfg.heads, cfg.ff_mult) for _ in range(cfg.text_layers)
        ]
        self.ln_out = LayerNorm(dim)

    def token_mask(self, ids: np.ndarray) -> np.ndarray:
        mask = np.asarray(ids) != self._pad_id
        return mask if mask.any() else np.ones_like(mask)  # all-pad turns stay encodable

    def __call__(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        mask = self.token_mask(ids)
        x = ad.add(ad.embedding(self.tok, ids), ad.narrow(self.pos, 0, 0, len(ids)))
        for block in self.block:
            x = block(x, self_mask=mask)
        return self.ln_out(x)


class FusionEncoder(Module):
    """Stack of SA->CA->FF blocks; queries come from the state tokens, keys
    and values from the turn embedding passed through a small projection."""

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self.text_mlp = TextMLP(rng, cfg.embed_dim)
        self.block = [
            TransformerBlock(rng, cfg.embed_dim, cfg.heads, cfg.ff_mult, cross=True)
            for _ in range(cfg.fusion_depth)
        ]

    def __call__(self, state: Tensor, turn_embedding: Tensor, text_mask: np.ndarray | None = None) -> Tensor:
        kv = self.text_mlp(turn_embedding)
        x = state
        for block in self.block:
            x = block(x, kv, context_mask=text_mask)
        return x


class PredictionHead(Module):
    """Conv (de)coder over the state grid, then bilinear resize to target.

    bottleneck mode: stride-2 hourglass (global context, more capacity);
    local mode: stride-1 convs whose receptive field stays a few patches wide,
    so each output location is decoded from nearby state tokens only.
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        c1, c2, c3, c4 = cfg.head_spec
        dim = cfg.embed_dim
        self._grid = int(np.sqrt(cfg.map_tokens))
        self._target = cfg.target_size
        self._mode = cfg.head_mode

        def conv_w(cout, cin, k):
            std = float(np.sqrt(2.0 / (cin * k * k)))
            return Parameter((rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32))

        def deconv_w(cin, cout, k):
            std = float(np.sqrt(2.0 / (cin * k * k)))
            return Parameter((rng.standard_normal((cin, cout, k, k)) * std).astype(np.float32))

        if self._mode == "local":
            self.w_down1 = conv_w(c1, dim, 3)
            self.b_down1 = Parameter(np.zeros(c1, dtype=np.float32))
            self.w_down2 = conv_w(c2, c1, 3)
            self.b_down2 = Parameter(np.zeros(c2, dtype=np.float32))
        else:
            self.w_down1 = conv_w(c1, dim, 4)
            self.b_down1 = Parameter(np.zeros(c1, dtype=np.float32))
            self.w_down2 = conv_w(c2, c1, 4)
            self.b_down2 = Parameter(np.zeros(c2, dtype=np.float32))
            self.w_up1 = deconv_w(c2, c3, 4)
            self.b_up1 = Parameter(np.zeros(c3, dtype=np.float32))
            self.w_up2 = deconv_w(c3, c4, 4)
            self.b_up2 = Parameter(np.zeros(c4, dtype=np.float32))
        out_in = c2 if self._mode == "local" else c4
        # small but nonzero: a zero output projection would block all gradient
        # flow into the trunk on the first steps
        self.w_out = conv_w(1, out_in, 1)
        self.b_out = Parameter(np.zeros(1, dtype=np.float32))

    def __call__(self, state: Tensor) -> Tensor:
        g = self._grid
        x = ad.reshape(ad.transpose(state), (state.shape[1], g, g))
        if self._mode == "local":
            x = ad.relu(ad.conv2d(x, self.w_down1, self.b_down1, stride=1, padding=1))
            x = ad.relu(ad.conv2d(x, self.w_down2, self.b_down2, stride=1, padding=1))
        else:
            x = ad.relu(ad.conv2d(x, self.w_down1, self.b_down1, stride=2, padding=1))
            x = ad.relu(ad.conv2d(x, self.w_down2, self.b_down2, stride=2, padding=1))
            x = ad.relu(ad.conv2d_transpose(x, self.w_up1, self.b_up1, stride=2, padding=1))
            x = ad.relu(ad.conv2d_transpose(x, self.w_up2, self.b_up2, stride=2, padding=1))
        x = ad.conv2d(x, self.w_out, self.b_out)
        h0, w0 = self._target
        return ad.reshape(ad.upsample_bilinear(x, h0, w0), (h0, w0))


class Localizer(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        if cfg.variant not in ("explicit", "implicit"):
            raise ValueError(f"Localizer handles explicit/implicit, got {cfg.variant!r}")
        rng = np.random.default_rng(seed)
        self.config = cfg
        self.map_enc = MapEncoder(rng, cfg)
        self.text_enc = TextEncoder(rng, cfg)
        self.fusion = FusionEncoder(rng, cfg)
        self.head = PredictionHead(rng, cfg)
        self._map_encode_calls = 0
        if cfg.freeze_text:
            for p in self.text_enc.parameters():
                p.requires_grad = False

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for attr in ("map_enc", "text_enc", "fusion", "head"):
            out.extend(getattr(self, attr).named_parameters(f"{prefix}.{attr}" if prefix else attr))
        return out

    def encode_map(self, image: np.ndarray) -> Tensor:
        if image.shape != (3, self.config.map_size, self.config.map_size):
            raise ad.ShapeError(f"map image {image.shape} does not match config {self.config.map_size}")
        self._map_encode_calls += 1
        return self.map_enc(image)

    def encode_dialog_turn(self, ids: np.ndarray) -> Tensor:
        return self.text_enc(ids)

    def init_state(self, v: Tensor) -> Tensor:
        if self.config.variant == "explicit":
            return ad.constant(np.ones(v.shape, dtype=np.float32))
        return v

    def fuse_step(
        self, v: Tensor, state: Tensor, turn_embedding: Tensor, text_mask: np.ndarray | None = None
    ) -> Tensor:
        if self.config.variant == "explicit":
            fused_in = ad.mul(v, state)
        else:
            fused_in = state
        return self.fusion(fused_in, turn_embedding, text_mask)

    def run_dialog(self, image: np.ndarray, turn_ids: list[np.ndarray]) -> BeliefState:
        """Encode the map once, then fold in one turn at a time."""
        if not 1 <= len(turn_ids) <= 6:
            raise ValueError(f"dialog must have 1..6 turns, got {len(turn_ids)}")
        v = self.encode_map(image)
        state = self.init_state(v)
        belief = BeliefState(state=state, turn_index=0)
        for ids in turn_ids:
            turn_emb = self.encode_dialog_turn(ids)
            state = self.fuse_step(v, state, turn_emb, self.text_enc.token_mask(ids))
            belief.state = state
            belief.turn_index += 1
            belief.heatmaps.append(self.head(state))
        return belief

    def single_shot_forward(self, image: np.ndarray, ids: np.ndarray) -> Tensor:
        """One fusion pass over the whole-dialog token sequence."""
        v = self.encode_map(image)
        state = self.init_state(v)
        turn_emb = self.encode_dialog_turn(ids)
        return self.head(self.fuse_step(v, state, turn_emb, self.text_enc.token_mask(ids)))


def predict_location(logits: Tensor | np.ndarray) -> tuple[int, int]:
    """Argmax pixel of the belief map; ties break to the first row-major index."""
    arr = logits.value if isinstance(logits, Tensor) else np.asarray(logits)
    idx = int(arr.argmax())
    return tuple(int(x) for x in np.unravel_index(idx, arr.shape))
