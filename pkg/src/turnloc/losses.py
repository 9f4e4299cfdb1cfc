"""Ground-truth heatmap targets and the training loss stack.

The per-turn objective is KL(target || softmax(logits)) over all map pixels
jointly; the multi-turn objective down-weights early turns by alpha^(T-t)
(0**0 := 1, so alpha=0 supervises only the final turn).  The auxiliary term
is a masked-sigmoid MSE that keeps early predictions from collapsing onto a
single peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

TRUNCATION = 1e-6  # fraction of the Gaussian peak below which the target is exactly 0


@dataclass
class TargetHeatmap:
    """Normalized Gaussian bump at the ground-truth pixel, plus its support mask."""

    heat: np.ndarray  # [h0,w0] float32, sums to 1
    mask: np.ndarray  # [h0,w0] float32 in {0,1}, exactly the support of heat
    gt_pixel: tuple[int, int]  # (row, col) in target coordinates
    sigma_meters: float


@dataclass
class LossConfig:
    alpha: float = 0.5
    beta: float = 1.0
    per_turn_targets: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"decay alpha must be in [0,1], got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"aux weight beta must be >= 0, got {self.beta}")


def make_target(
    gt_pixel: tuple[int, int],
    out_shape: tuple[int, int],
    sigma_meters: float,
    meters_per_pixel: float,
    map_shape: tuple[int, int] | None = None,
) -> TargetHeatmap:
    """Build the smoothed target for a ground-truth pixel given in map coordinates.

    Values below TRUNCATION of the peak are cut to exactly 0 (that cut defines
    the mask), then the heatmap is normalized to sum 1.
    """
    h0, w0 = out_shape
    mh, mw = map_shape if map_shape is not None else out_shape
    r, c = gt_pixel
    if not (0 <= r < mh and 0 <= c < mw):
        raise ValueError(f"gt pixel {gt_pixel} outside {mh}x{mw} map")
    # corner-aligned map->target mapping; identity when shapes match
    ry = (h0 - 1) / (mh - 1) if mh > 1 else 0.0
    rx = (w0 - 1) / (mw - 1) if mw > 1 else 0.0
    tr = int(round(r * ry)) if mh > 1 else 0
    tc = int(round(c * rx)) if mw > 1 else 0
    sigma_px = sigma_meters / meters_per_pixel * (ry if mh > 1 else 1.0)

    if sigma_px <= 0.0:
        heat = np.zeros((h0, w0), dtype=np.float32)
        heat[tr, tc] = 1.0
    else:
        ys = (np.arange(h0, dtype=np.float64) - tr) ** 2
        xs = (np.arange(w0, dtype=np.float64) - tc) ** 2
        g = np.exp(-(ys[:, None] + xs[None, :]) / (2.0 * sigma_px**2))
        g[g < TRUNCATION * g.max()] = 0.0
        heat = (g / g.sum()).astype(np.float32)
    mask = (heat > 0).astype(np.float32)
    return TargetHeatmap(heat=heat, mask=mask, gt_pixel=(tr, tc), sigma_meters=sigma_meters)


def make_mixture_target(
    pixels: list[tuple[int, int]],
    out_shape: tuple[int, int],
    sigma_meters: float,
    meters_per_pixel: float,
    map_shape: tuple[int, int] | None = None,
    peak_pixel: tuple[int, int] | None = None,
) -> TargetHeatmap:
    """Equal-weight Gaussian mixture over candidate pixels, normalized to 1.

    Used for belief-style supervision where several locations remain
    consistent with the dialog so far; `peak_pixel` (default: first pixel)
    is recorded as the nominal ground truth.
    """
    if not pixels:
        raise ValueError("mixture target needs at least one pixel")
    acc: np.ndarray | None = None
    for pix in pixels:
        part = make_target(pix, out_shape, sigma_meters, meters_per_pixel, map_shape).heat
        acc = part if acc is None else acc + part
    heat = (acc / acc.sum()).astype(np.float32)
    anchor = peak_pixel if peak_pixel is not None else tuple(pixels[0])
    ref = make_target(anchor, out_shape, sigma_meters, meters_per_pixel, map_shape)
    return TargetHeatmap(
        heat=heat,
        mask=(heat > 0).astype(np.float32),
        gt_pixel=ref.gt_pixel,
        sigma_meters=sigma_meters,
    )


def kl_loss(logits: ad.Tensor, target: TargetHeatmap | np.ndarray) -> ad.Tensor:
    """KL(target || softmax(logits)) with the 0*log(0) := 0 convention."""
    heat = target.heat if isinstance(target, TargetHeatmap) else np.asarray(target, dtype=np.float32)
    if logits.shape != heat.shape:
        raise ad.ShapeError(f"kl_loss: logits {logits.shape} vs target {heat.shape}")
    n = heat.size
    logp = ad.log_softmax(ad.reshape(logits, (n,)), axis=0)
    support = heat > 0
    entropy = float((heat[support].astype(np.float64) * np.log(heat[support].astype(np.float64))).sum())
    cross = ad.reduce_sum(ad.mul(logp, ad.constant(heat.reshape(n))))
    return ad.add_scalar(ad.scale(cross, -1.0), entropy)


def _targets_per_turn(targets, t_count: int) -> list[TargetHeatmap]:
    if isinstance(targets, TargetHeatmap):
        return [targets] * t_count
    targets = list(targets)
    if len(targets) != t_count:
        raise ValueError(f"per-turn targets: got {len(targets)} for {t_count} heatmaps")
    return targets


def multishot_loss(heatmaps: list[ad.Tensor], targets, alpha: float) -> ad.Tensor:
    """(1/T) sum_t alpha^(T-t) * KL_t; alpha=0 keeps only the final turn."""
    t_count = len(heatmaps)
    if t_count < 1:
        raise ValueError("multishot_loss: need at least one heatmap")
    per_turn = _targets_per_turn(targets, t_count)
    acc: ad.Tensor | None = None
    for t, (logits, target) in enumerate(zip(heatmaps, per_turn), start=1):
        weight = float(alpha) ** (t_count - t)  # 0**0 == 1
        if weight == 0.0:
            continue
        term = ad.scale(kl_loss(logits, target), weight)
        acc = term if acc is None else ad.add(acc, term)
    assert acc is not None
    return ad.scale(acc, 1.0 / t_count)


def aux_loss(heatmaps: list[ad.Tensor], targets) -> ad.Tensor:
    """(1/T) sum_t MSE(sigmoid(H_t) * mask, target), mean over all pixels."""
    t_count = len(heatmaps)
    if t_count < 1:
        raise ValueError("aux_loss: need at least one heatmap")
    per_turn = _targets_per_turn(targets, t_count)
    acc: ad.Tensor | None = None
    for logits, target in zip(heatmaps, per_turn):
        if logits.shape != target.heat.shape:
            raise ad.ShapeError(f"aux_loss: logits {logits.shape} vs target {target.heat.shape}")
        masked = ad.mul(ad.sigmoid(logits), ad.constant(target.mask))
        diff = ad.sub(masked, ad.constant(target.heat))
        term = ad.reduce_mean(ad.mul(diff, diff))
        acc = term if acc is None else ad.add(acc, term)
    assert acc is not None
    return ad.scale(acc, 1.0 / t_count)


def total_loss(heatmaps: list[ad.Tensor], targets, alpha: float, beta: float) -> ad.Tensor:
    """Combined objective: decayed multi-shot KL plus beta * auxiliary MSE."""
    lms = multishot_loss(heatmaps, targets, alpha)
    if beta == 0.0:
        return lms
    return ad.add(lms, ad.scale(aux_loss(heatmaps, targets), beta))
