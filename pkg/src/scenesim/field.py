"""Dense voxel radiance field over the canonical cube [-1, 1]^3.

Each voxel stores a raw (pre-activation) density scalar and raw RGB triple.
Queries trilinearly interpolate the raw values, then apply softplus to
density and sigmoid to color. Points outside the cube are empty (sigma 0,
black). The backward pass is written by hand and accumulates parameter
gradients into a matching ``GradBuffer``.

Parameters default to float32 (the checkpoint wire format); float64 fields
are supported for finite-difference verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x), stable for large |x|
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def inv_softplus(y: float) -> float:
    """Raw density value whose softplus equals ``y`` (> 0)."""
    if y <= 0:
        raise ValueError("softplus output is strictly positive")
    return float(y + np.log(-np.expm1(-y)))


def logit(y: float) -> float:
    if not 0.0 < y < 1.0:
        raise ValueError("sigmoid output lies in (0, 1)")
    return float(np.log(y / (1.0 - y)))


@dataclass(frozen=True)
class FieldSample:
    sigma: float
    rgb: np.ndarray


class GradBuffer:
    """Per-field gradient accumulator (same shapes as the field parameters)."""

    def __init__(self, field: "VoxelField"):
        self.d_density_raw = np.zeros_like(field.density_raw)
        self.d_color_raw = np.zeros_like(field.color_raw)

    def matches(self, field: "VoxelField") -> bool:
        return (self.d_density_raw.shape == field.density_raw.shape
                and self.d_color_raw.shape == field.color_raw.shape)

    def add(self, other: "GradBuffer") -> None:
        self.d_density_raw += other.d_density_raw
        self.d_color_raw += other.d_color_raw

    def zero(self) -> None:
        self.d_density_raw[:] = 0.0
        self.d_color_raw[:] = 0.0


class VoxelField:
    """Trainable dense grid of raw density/color over [-1, 1]^3."""

    def __init__(self, resolution, density_raw: np.ndarray, color_raw: np.ndarray):
        nx, ny, nz = (int(r) for r in resolution)
        if min(nx, ny, nz) < 2:
            raise ValueError(f"resolution must be >= 2 per axis, got {resolution}")
        n = nx * ny * nz
        if density_raw.shape != (n,):
            raise ValueError(f"density_raw must have shape ({n},)")
        if color_raw.shape != (n, 3):
            raise ValueError(f"color_raw must have shape ({n}, 3)")
        if not (np.all(np.isfinite(density_raw)) and np.all(np.isfinite(color_raw))):
            raise ValueError("non-finite field parameter")
        self.resolution = (nx, ny, nz)
        self.density_raw = density_raw
        self.color_raw = color_raw

    @property
    def dtype(self):
        return self.density_raw.dtype

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    def copy(self) -> "VoxelField":
        return VoxelField(self.resolution, self.density_raw.copy(),
                          self.color_raw.copy())

    def __eq__(self, other) -> bool:
        return (isinstance(other, VoxelField)
                and self.resolution == other.resolution
                and np.array_equal(self.density_raw, other.density_raw)
                and np.array_equal(self.color_raw, other.color_raw))


def field_new(resolution, density_init: float = -2.0, color_init: float = 0.0,
              dtype=np.float32) -> VoxelField:
    nx, ny, nz = (int(r) for r in resolution)
    if min(nx, ny, nz) < 2:
        raise ValueError(f"resolution must be >= 2 per axis, got {resolution}")
    n = nx * ny * nz
    d = np.full(n, density_init, dtype=dtype)
    c = np.full((n, 3), color_init, dtype=dtype)
    return VoxelField((nx, ny, nz), d, c)


def field_constant(resolution, sigma: float, rgb, dtype=np.float64) -> VoxelField:
    """Field whose activated output is ``sigma``/``rgb`` everywhere inside."""
    f = field_new(resolution, inv_softplus(sigma), 0.0, dtype=dtype)
    for ch in range(3):
        f.color_raw[:, ch] = logit(float(rgb[ch]))
    return f


def _interp_corners(field: VoxelField, p: np.ndarray):
    """Trilinear gather setup for canonical points ``p`` (N, 3).

    Returns (inside mask, corner indices (N, 8), corner weights (N, 8)).
    Outside points get zero weights.
    """
    nx, ny, nz = field.resolution
    res = np.array([nx, ny, nz], dtype=np.float64)
    inside = np.all(np.abs(p) <= 1.0, axis=-1)

    g = (p + 1.0) * 0.5 * (res - 1.0)
    i0 = np.floor(g).astype(np.int64)
    i0 = np.clip(i0, 0, (res - 2).astype(np.int64))
    f = g - i0
    f = np.clip(f, 0.0, 1.0)

    wx = np.stack([1.0 - f[:, 0], f[:, 0]], axis=1)
    wy = np.stack([1.0 - f[:, 1], f[:, 1]], axis=1)
    wz = np.stack([1.0 - f[:, 2], f[:, 2]], axis=1)
    # corner order: (dx, dy, dz) in binary 000..111
    w = (wx[:, :, None, None] * wy[:, None, :, None]
         * wz[:, None, None, :]).reshape(-1, 8)
    w *= inside[:, None]

    base = (i0[:, 0] * ny + i0[:, 1]) * nz + i0[:, 2]
    offs = np.array([(dx * ny + dy) * nz + dz
                     for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)],
                    dtype=np.int64)
    idx = base[:, None] + offs[None, :]
    return inside, idx, w


def field_query_batch(field: VoxelField, p: np.ndarray):
    """Query N canonical points; returns (sigma (N,), rgb (N, 3)) in float64.

    Outside-domain points yield sigma 0 and black.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite query point")
    inside, idx, w = _interp_corners(field, p)
    d_raw = (field.density_raw.astype(np.float64)[idx] * w).sum(axis=1)
    c_raw = (field.color_raw.astype(np.float64)[idx] * w[:, :, None]).sum(axis=1)
    sigma = softplus(d_raw)
    rgb = sigmoid(c_raw)
    sigma = np.where(inside, sigma, 0.0)
    rgb = np.where(inside[:, None], rgb, 0.0)
    return sigma, rgb


def field_query(field: VoxelField, p_canonical) -> FieldSample:
    sigma, rgb = field_query_batch(field, np.asarray(p_canonical, dtype=np.float64)[None, :])
    return FieldSample(float(sigma[0]), rgb[0])


def field_query_backward_batch(field: VoxelField, p: np.ndarray,
                               d_sigma: np.ndarray, d_rgb: np.ndarray,
                               grads: GradBuffer) -> None:
    """Accumulate d(sigma, rgb)/d(params) . upstream into ``grads``.

    ``p`` are the same canonical points passed to the forward query; the
    trilinear weights and raw values are recomputed here rather than taped.
    """
    if not grads.matches(field):
        raise ValueError("gradient buffer shape mismatch")
    p = np.asarray(p, dtype=np.float64)
    inside, idx, w = _interp_corners(field, p)
    if not np.any(inside):
        return
    d_raw = (field.density_raw.astype(np.float64)[idx] * w).sum(axis=1)
    c_raw = (field.color_raw.astype(np.float64)[idx] * w[:, :, None]).sum(axis=1)

    # chain through activations; outside points have w == 0 already
    dd = np.asarray(d_sigma, dtype=np.float64) * sigmoid(d_raw)
    s = sigmoid(c_raw)
    dc = np.asarray(d_rgb, dtype=np.float64) * s * (1.0 - s)

    n = field.n_voxels
    flat = idx.ravel()
    gd = np.bincount(flat, weights=(w * dd[:, None]).ravel(), minlength=n)
    grads.d_density_raw += gd.astype(grads.d_density_raw.dtype, copy=False)
    for ch in range(3):
        gc = np.bincount(flat, weights=(w * dc[:, ch][:, None]).ravel(), minlength=n)
        grads.d_color_raw[:, ch] += gc.astype(grads.d_color_raw.dtype, copy=False)


def field_query_backward(field: VoxelField, p_canonical, d_sigma: float,
                         d_rgb, grads: GradBuffer) -> None:
    field_query_backward_batch(
        field,
        np.asarray(p_canonical, dtype=np.float64)[None, :],
        np.array([d_sigma], dtype=np.float64),
        np.asarray(d_rgb, dtype=np.float64)[None, :],
        grads,
    )
