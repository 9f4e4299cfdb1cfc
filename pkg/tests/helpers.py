"""Shared test oracles: finite-difference gradient checking for float32 forwards."""

from __future__ import annotations

import numpy as np

from turnloc import autodiff as ad

STEP = 1e-3


def directional_fd_assert(
    grad: np.ndarray,
    eval_fn,
    base: np.ndarray,
    rng: np.random.Generator,
    tol: float,
    label: str = "",
) -> None:
    """Central-difference check of `grad` for scalar eval_fn(array) at `base`.

    Directional, against the realized float32 perturbation; tolerance is
    relative at the gradient-norm scale plus the float32 differencing floor.
    """
    d = rng.standard_normal(base.shape).astype(np.float32)
    d /= max(float(np.linalg.norm(d)), 1e-12)
    xp = (base + np.float32(STEP) * d).astype(np.float32)
    xm = (base - np.float32(STEP) * d).astype(np.float32)
    fp, fm = eval_fn(xp), eval_fn(xm)
    delta = xp.astype(np.float64) - xm.astype(np.float64)
    step = float(np.linalg.norm(delta))
    fd = (fp - fm) / step
    adv = float((grad.astype(np.float64) * delta).sum()) / step
    scale = max(1.0, float(np.linalg.norm(grad)), abs(adv), abs(fd))
    floor = 8 * np.finfo(np.float32).eps * max(abs(fp), abs(fm), 1.0) / step
    assert abs(adv - fd) <= tol * scale + floor, (
        f"{label}: ad={adv:.6g} fd={fd:.6g} tol={tol * scale + floor:.3g}"
    )


def fd_check(build_loss, arrays: dict[str, np.ndarray], tol: float = 1e-3, n_dirs: int = 3, seed: int = 0):
    """Gradient check for build_loss({name: Tensor}) -> scalar Tensor."""
    rng = np.random.default_rng(seed)
    tensors = {name: ad.Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
    loss = build_loss(tensors)
    ad.backward(loss)
    for name, arr in arrays.items():
        grad = tensors[name].grad
        assert grad is not None and grad.shape == arr.shape

        def eval_at(shifted_arr: np.ndarray, name=name) -> float:
            shifted = {k: v.copy() for k, v in arrays.items()}
            shifted[name] = shifted_arr
            leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in shifted.items()}
            return float(build_loss(leaves).value)

        for _ in range(n_dirs):
            directional_fd_assert(grad, eval_at, arr, rng, tol, label=name)
