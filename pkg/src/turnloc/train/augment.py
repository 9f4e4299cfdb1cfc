"""Spatial and color augmentation applied jointly to map image and target.

The same crop/rotation is applied to both tensors; color jitter touches the
image only.  A crop is accepted only if the transformed target still peaks
at the mapped ground-truth pixel (resampled up to 10 times, then cropping is
skipped), so label semantics survive every accepted transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..losses import TargetHeatmap


@dataclass
class AugmentConfig:
    color_jitter: float = 0.1
    crop: bool = True
    crop_ratio: tuple[float, float] = (0.9, 1.0)
    crop_scale: tuple[float, float] = (0.75, 1.0)
    rotate180: bool = True

    def __post_init__(self):
        lo, hi = self.crop_scale
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"crop scale must sit inside (0,1], got {self.crop_scale}")

    def to_json_dict(self) -> dict:
        return {
            "colorJitter": self.color_jitter,
            "crop": self.crop,
            "cropRatio": list(self.crop_ratio),
            "cropScale": list(self.crop_scale),
            "rotate180": self.rotate180,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AugmentConfig":
        return cls(
            color_jitter=d.get("colorJitter", 0.1),
            crop=d.get("crop", True),
            crop_ratio=tuple(d.get("cropRatio", (0.9, 1.0))),
            crop_scale=tuple(d.get("cropScale", (0.75, 1.0))),
            rotate180=d.get("rotate180", True),
        )


def _map_pixel(pixel: tuple[int, int], box: tuple[int, int, int, int], out_h: int, out_w: int) -> tuple[int, int]:
    r0, c0, ch, cw = box
    r = (pixel[0] - r0) * (out_h - 1) / (ch - 1) if ch > 1 else 0.0
    c = (pixel[1] - c0) * (out_w - 1) / (cw - 1) if cw > 1 else 0.0
    return (int(round(r)), int(round(c)))


def _crop_resize(arr: np.ndarray, box: tuple[int, int, int, int], out_h: int, out_w: int) -> np.ndarray:
    r0, c0, ch, cw = box
    view = np.ascontiguousarray(arr[:, r0 : r0 + ch, c0 : c0 + cw])
    return kernels.bilinear_resize(view, out_h, out_w)


def _renorm(heat: np.ndarray, gt, sigma_meters: float) -> TargetHeatmap:
    heat = np.maximum(heat, 0.0)
    heat = (heat / heat.sum()).astype(np.float32)
    return TargetHeatmap(
        heat=heat, mask=(heat > 0).astype(np.float32), gt_pixel=gt, sigma_meters=sigma_meters
    )


def augment_joint(
    image: np.ndarray,
    targets: list[TargetHeatmap],
    rng: np.random.Generator,
    cfg: AugmentConfig | None = None,
) -> tuple[np.ndarray, list[TargetHeatmap]]:
    """One sampled spatial transform applied to the image and every target.

    The crop-acceptance rule tracks the last target (the sharpest one): its
    peak must survive at the analytically mapped pixel.
    """
    cfg = cfg or AugmentConfig()
    img = image.astype(np.float32)
    heats = [t.heat.astype(np.float32) for t in targets]
    gt = tuple(targets[-1].gt_pixel)
    _, h, w = img.shape

    if cfg.rotate180 and rng.random() < 0.5:
        img = np.ascontiguousarray(img[:, ::-1, ::-1])
        heats = [np.ascontiguousarray(heat[::-1, ::-1]) for heat in heats]
        gt = (h - 1 - gt[0], w - 1 - gt[1])

    if cfg.crop:
        for _ in range(10):
            scale = float(rng.uniform(*cfg.crop_scale))
            ratio = float(rng.uniform(*cfg.crop_ratio))
            area = scale * h * w
            ch = min(h, max(8, int(round(math.sqrt(area / ratio)))))
            cw = min(w, max(8, int(round(math.sqrt(area * ratio)))))
            r0 = int(rng.integers(0, h - ch + 1))
            c0 = int(rng.integers(0, w - cw + 1))
            if not (r0 <= gt[0] < r0 + ch and c0 <= gt[1] < c0 + cw):
                continue  # crop would lose the target peak
            mapped = _map_pixel(gt, (r0, c0, ch, cw), h, w)
            new_final = _crop_resize(heats[-1][None], (r0, c0, ch, cw), h, w)[0]
            peak = np.unravel_index(int(new_final.argmax()), new_final.shape)
            if tuple(peak) != mapped:
                continue  # resampling blurred the peak off the mapped pixel
            img = _crop_resize(img, (r0, c0, ch, cw), h, w)
            heats = [_crop_resize(heat[None], (r0, c0, ch, cw), h, w)[0] for heat in heats[:-1]]
            heats.append(new_final)
            gt = mapped
            break

    if cfg.color_jitter > 0:
        s = cfg.color_jitter
        gain = (1.0 + rng.uniform(-s, s, size=(3, 1, 1))).astype(np.float32)
        shift = rng.uniform(-s, s, size=(3, 1, 1)).astype(np.float32)
        img = np.clip(img * gain + shift, 0.0, 1.0).astype(np.float32)

    out = [_renorm(heat, gt, t.sigma_meters) for heat, t in zip(heats, targets)]
    return img, out


def augment(
    image: np.ndarray,
    target: TargetHeatmap,
    rng: np.random.Generator,
    cfg: AugmentConfig | None = None,
) -> tuple[np.ndarray, TargetHeatmap]:
    img, targets = augment_joint(image, [target], rng, cfg)
    return img, targets[0]
