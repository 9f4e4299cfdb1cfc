"""Convolutional multi-shot baseline.

A small conv encoder reads the map once into features F; per turn, the
carried hidden map is multiplied into F and modulated by a 1x1 filter whose
weights are generated from the pooled turn embedding, then decoded to a
heatmap.  Same interface as the transformer localizer so the training and
evaluation paths are shared.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameter, Tensor
from .config import ModelConfig
from .layers import Linear, Module
from .localizer import BeliefState, TextEncoder


class ConvBaseline(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        if cfg.variant != "convBaseline":
            raise ValueError(f"ConvBaseline requires variant convBaseline, got {cfg.variant!r}")
        rng = np.random.default_rng(seed)
        self.config = cfg
        cb = cfg.baseline_channels
        self._grid = cfg.map_size // 4  # two stride-2 convs

        def conv_w(cout, cin, k):
            std = float(np.sqrt(2.0 / (cin * k * k)))
            return Parameter((rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32))

        self.w_enc1 = conv_w(16, 3, 4)
        self.b_enc1 = Parameter(np.zeros(16, dtype=np.float32))
        self.w_enc2 = conv_w(cb, 16, 4)
        self.b_enc2 = Parameter(np.zeros(cb, dtype=np.float32))
        self.text_enc = TextEncoder(rng, cfg)
        self.lang_filter = Linear(rng, cfg.embed_dim, cb * cb)
        self.w_dec1 = conv_w(16, cb, 3)
        self.b_dec1 = Parameter(np.zeros(16, dtype=np.float32))
        self.w_dec2 = conv_w(1, 16, 3)
        self.b_dec2 = Parameter(np.zeros(1, dtype=np.float32))
        self._map_encode_calls = 0
        if cfg.freeze_text:
            for p in self.text_enc.parameters():
                p.requires_grad = False

    def encode_map(self, image: np.ndarray) -> Tensor:
        self._map_encode_calls += 1
        x = ad.constant(image.astype(np.float32))
        x = ad.relu(ad.conv2d(x, self.w_enc1, self.b_enc1, stride=2, padding=1))
        return ad.relu(ad.conv2d(x, self.w_enc2, self.b_enc2, stride=2, padding=1))

    def encode_dialog_turn(self, ids: np.ndarray) -> Tensor:
        return self.text_enc(ids)

    def init_state(self, features: Tensor) -> Tensor:
        return ad.constant(np.ones(features.shape, dtype=np.float32))

    def step(
        self,
        features: Tensor,
        hidden: Tensor,
        turn_embedding: Tensor,
        text_mask: np.ndarray | None = None,
    ) -> tuple[Tensor, Tensor]:
        """One turn: language-conditioned 1x1 modulation of features * hidden."""
        cb = self.config.baseline_channels
        if text_mask is not None:
            n, c = turn_embedding.shape
            keep = ad.constant(np.repeat(text_mask.astype(np.float32)[:, None], c, axis=1))
            pooled = ad.scale(ad.mean_axis0(ad.mul(turn_embedding, keep)), n / float(text_mask.sum()))
        else:
            pooled = ad.mean_axis0(turn_embedding)  # [C]
        kernel = ad.reshape(self.lang_filter(ad.reshape(pooled, (1, pooled.shape[0]))), (cb, cb, 1, 1))
        mixed = ad.mul(features, hidden)
        hidden_next = ad.relu(ad.conv2d(mixed, kernel))
        x = ad.relu(ad.conv2d(hidden_next, self.w_dec1, self.b_dec1, stride=1, padding=1))
        x = ad.conv2d(x, self.w_dec2, self.b_dec2, stride=1, padding=1)
        h0, w0 = self.config.target_size
        heatmap = ad.reshape(ad.upsample_bilinear(x, h0, w0), (h0, w0))
        return hidden_next, heatmap

    def run_dialog(self, image: np.ndarray, turn_ids: list[np.ndarray]) -> BeliefState:
        if not 1 <= len(turn_ids) <= 6:
            raise ValueError(f"dialog must have 1..6 turns, got {len(turn_ids)}")
        features = self.encode_map(image)
        hidden = self.init_state(features)
        belief = BeliefState(state=hidden, turn_index=0)
        for ids in turn_ids:
            mask = self.text_enc.token_mask(ids)
            hidden, heatmap = self.step(features, hidden, self.encode_dialog_turn(ids), mask)
            belief.state = hidden
            belief.turn_index += 1
            belief.heatmaps.append(heatmap)
        return belief

    def single_shot_forward(self, image: np.ndarray, ids: np.ndarray) -> Tensor:
        features = self.encode_map(image)
        hidden = self.init_state(features)
        _, heatmap = self.step(features, hidden, self.encode_dialog_turn(ids), self.text_enc.token_mask(ids))
        return heatmap


def build_model(cfg: ModelConfig, seed: int = 0):
    from .localizer import Localizer

    if cfg.variant == "convBaseline":
        return ConvBaseline(cfg, seed)
    return Localizer(cfg, seed)
