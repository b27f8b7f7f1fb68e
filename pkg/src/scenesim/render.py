"""Compositional volume rendering over scene nodes.

A camera ray is split into parts: one per object box it crosses plus the
background remainder (the stretch of the scene-bounds segment not covered
by any object box). Each part is sampled stratified in its own interval,
samples are merged and depth-sorted, and the composite color is the
transmittance-weighted sum over the merged list, with the running
transmittance crossing node boundaries. Per-node rendering uses only one
node's samples and its own transmittance.

Everything is deterministic: stratum jitter comes from a counter-based hash
of (seed, pixel id, node id, stratum), so the output is independent of how
rays are batched or scheduled.

The vectorized bundle functions at the bottom are the single implementation;
the per-ray API wraps them. They also expose the hand-written backward pass
used by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import VoxelField, field_query_batch, field_query_backward_batch, GradBuffer
from .geometry import Camera, OrientedBox, Ray, pixel_rays, ray_box_intersect_batch
from .scene import BACKGROUND_ID, Scene, SceneNode

HIGHLIGHT_TINT = np.array([0.35, 0.35, 0.0])

DEFAULT_SAMPLES_PER_NODE = 64

CHANNELS = ("rgb", "depth", "opacity", "panoptic", "per_node")

_U64 = np.uint64
_GOLD = _U64(0x9E3779B97F4A7C15)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z + _GOLD)
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


def hash01(seed: int, pixel_ids: np.ndarray, node_id: int, strata: np.ndarray) -> np.ndarray:
    """Deterministic jitter in [0, 1) keyed by (seed, pixel, node, stratum)."""
    h = _mix(np.asarray(pixel_ids, dtype=np.uint64) ^ _U64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    h = _mix(h ^ (_U64(node_id) * _M1))
    h = _mix(h ^ (np.asarray(strata, dtype=np.uint64) * _M2))
    return (h >> _U64(11)).astype(np.float64) * 2.0 ** -53


@dataclass(frozen=True)
class RaySample:
    t: float
    node_id: int
    p_world: np.ndarray
    sigma: float
    rgb: np.ndarray
    delta: float


class RaySampleSet:
    """Depth-sorted merged samples of one ray (struct-of-arrays)."""

    def __init__(self, t, node_id, p_world, sigma, rgb, delta, t_end: float,
                 node_order: list[int] | None = None):
        self.t = np.asarray(t, dtype=np.float64)
        self.node_id = np.asarray(node_id, dtype=np.int64)
        self.p_world = np.asarray(p_world, dtype=np.float64).reshape(-1, 3)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        self.rgb = np.asarray(rgb, dtype=np.float64).reshape(-1, 3)
        self.delta = np.asarray(delta, dtype=np.float64)
        self.t_end = float(t_end)
        if node_order is None:
            ids = sorted(set(self.node_id.tolist()))
            if BACKGROUND_ID in ids:
                ids.remove(BACKGROUND_ID)
            node_order = [BACKGROUND_ID] + ids
        self.node_order = list(node_order)
        if len(self.t) and np.any(np.diff(self.t) < 0):
            raise ValueError("samples must be sorted ascending by t")
        if np.any(self.sigma < 0) or np.any(self.delta < 0):
            raise ValueError("sigma and delta must be nonnegative")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> RaySample:
        return RaySample(float(self.t[i]), int(self.node_id[i]), self.p_world[i],
                         float(self.sigma[i]), self.rgb[i], float(self.delta[i]))


@dataclass(frozen=True)
class PixelResult:
    rgb: np.ndarray
    depth: float
    opacity: float
    instance_id: int
    node_weights: dict[int, float] = dc_field(default_factory=dict)


@dataclass(frozen=True)
class NodeRender:
    rgb: np.ndarray
    depth: float
    opacity: float


# ---------------------------------------------------------------------------
# ray bundles


@dataclass
class RayBundle:
    origins: np.ndarray      # (R, 3)
    dirs: np.ndarray         # (R, 3), unit
    t_near: np.ndarray       # (R,)
    t_far: np.ndarray        # (R,)
    pixel_ids: np.ndarray    # (R,) uint64, drives per-pixel jitter streams

    def __post_init__(self):
        r = len(self.origins)
        self.origins = np.asarray(self.origins, dtype=np.float64).reshape(r, 3)
        self.dirs = np.asarray(self.dirs, dtype=np.float64).reshape(r, 3)
        self.t_near = np.broadcast_to(np.asarray(self.t_near, dtype=np.float64), (r,)).copy()
        self.t_far = np.broadcast_to(np.asarray(self.t_far, dtype=np.float64), (r,)).copy()
        self.pixel_ids = np.asarray(self.pixel_ids, dtype=np.uint64).reshape(r)

    def __len__(self) -> int:
        return len(self.origins)

    @staticmethod
    def from_ray(ray: Ray, pixel_id: int = 0) -> "RayBundle":
        return RayBundle(ray.origin[None, :], ray.direction[None, :],
                         np.array([ray.t_near]), np.array([ray.t_far]),
                         np.array([pixel_id], dtype=np.uint64))

    @staticmethod
    def from_camera(camera: Camera, seed_offset: int = 0) -> "RayBundle":
        h, w = camera.height, camera.width
        py, px = np.mgrid[0:h, 0:w]
        o, d = pixel_rays(camera, px.ravel() + 0.5, py.ravel() + 0.5)
        pids = np.arange(h * w, dtype=np.uint64) + np.uint64(seed_offset)
        return RayBundle(o, d, np.zeros(h * w), np.full(h * w, np.inf), pids)


def _stratum_positions(n: int, jitter: bool, seed: int, pixel_ids: np.ndarray,
                       node_id: int) -> np.ndarray:
    """Per-ray stratified offsets in [0, 1): (R, n)."""
    strata = np.arange(n, dtype=np.uint64)
    if jitter:
        u = hash01(seed, pixel_ids[:, None], node_id, strata[None, :])
    else:
        u = np.full((len(pixel_ids), n), 0.5)
    return (strata.astype(np.float64)[None, :] + u) / n


def _node_intervals(scene: Scene, bundle: RayBundle):
    """Ray spans per node: background span is the scene-bounds intersection,
    object spans are their box intersections. Misses have t_in >= t_out."""
    spans = []
    for node in scene.nodes:
        if node.id == BACKGROUND_ID:
            t0, t1 = ray_box_intersect_batch(bundle.origins, bundle.dirs,
                                             scene.bounds, bundle.t_near, bundle.t_far)
        else:
            t0, t1 = ray_box_intersect_batch(bundle.origins, bundle.dirs,
                                             node.bbox, bundle.t_near, bundle.t_far)
        spans.append((t0, t1))
    return spans


def _background_gaps(bg0, bg1, obj_spans):
    """Per-ray complement of the object-span union inside [bg0, bg1].

    Returns (starts, ends) of shape (R, m+1); empty gaps have start >= end.
    """
    r = len(bg0)
    m = len(obj_spans)
    if m == 0:
        return bg0[:, None].copy(), bg1[:, None].copy()
    t0 = np.stack([np.clip(s[0], bg0, bg1) for s in obj_spans], axis=1)
    t1 = np.stack([np.clip(s[1], bg0, bg1) for s in obj_spans], axis=1)
    t1 = np.maximum(t0, t1)
    order = np.argsort(t0, axis=1)
    rows = np.arange(r)[:, None]
    t0 = t0[rows, order]
    t1 = t1[rows, order]

    starts = np.empty((r, m + 1))
    ends = np.empty((r, m + 1))
    cursor = bg0.copy()
    for j in range(m):
        starts[:, j] = cursor
        ends[:, j] = np.minimum(t0[:, j], bg1)
        cursor = np.maximum(cursor, t1[:, j])
    starts[:, m] = cursor
    ends[:, m] = bg1
    return starts, ends


def _sample_gaps(starts, ends, n: int, jitter: bool, seed: int,
                 pixel_ids: np.ndarray):
    """Stratify n samples over the union of per-ray gap intervals.

    Returns (t (R, n), valid (R,)): rays with zero total gap length yield
    valid = False. Sample count stays n per ray, spread proportionally.
    """
    lengths = np.maximum(ends - starts, 0.0)
    total = lengths.sum(axis=1)
    valid = total > 0
    cum = np.cumsum(lengths, axis=1)
    offsets = cum - lengths  # length before each gap

    frac = _stratum_positions(n, jitter, seed, pixel_ids, BACKGROUND_ID)
    s = frac * np.where(valid, total, 1.0)[:, None]
    # locate the gap each arclength position falls into
    gap_idx = (s[:, :, None] >= cum[:, None, :]).sum(axis=2)
    gap_idx = np.minimum(gap_idx, lengths.shape[1] - 1)
    rows = np.arange(len(starts))[:, None]
    t = starts[rows, gap_idx] + (s - offsets[rows, gap_idx])
    return t, valid


def _query_node(node: SceneNode, p_world: np.ndarray, apply_tint: bool):
    """World points -> (sigma, effective rgb, cache for backward)."""
    pc = node.bbox.world_to_canonical(p_world)
    sigma, rgb0 = field_query_batch(node.field, pc)
    pre = rgb0 * node.gain + node.bias
    if apply_tint and node.selected:
        pre = pre + HIGHLIGHT_TINT
    rgb = np.clip(pre, 0.0, 1.0)
    cache = {"pc": pc, "rgb0": rgb0, "active": (pre > 0.0) & (pre < 1.0)}
    return sigma, rgb, cache


@dataclass
class SampleArrays:
    """Flat merged samples of a bundle, sorted by (ray, t, bg-first)."""

    rix: np.ndarray          # (S,) ray index
    slot: np.ndarray         # (S,) index into node_order
    t: np.ndarray            # (S,)
    delta: np.ndarray        # (S,)
    sigma: np.ndarray        # (S,)
    rgb: np.ndarray          # (S, 3)
    node_order: list[int]
    n_rays: int
    t_end: np.ndarray        # (R,)
    caches: list             # per-slot query cache, aligned pre-merge
    pre_sort: np.ndarray     # permutation applied at merge time
    slot_sizes: list[int]


def build_composite_samples(scene: Scene, bundle: RayBundle, n_per_node: int,
                            jitter: bool, seed: int,
                            apply_tint: bool = True) -> SampleArrays:
    if n_per_node < 1:
        raise ValueError("n_per_node must be >= 1")
    spans = _node_intervals(scene, bundle)
    bg0, bg1 = spans[0]
    obj_spans = spans[1:]
    r = len(bundle)

    parts_rix, parts_slot, parts_t = [], [], []
    caches, slot_sizes = [], []
    node_order = [n.id for n in scene.nodes]

    # background over the gap complement
    gaps_s, gaps_e = _background_gaps(bg0, bg1, [s for s in obj_spans])
    t_bg, bg_valid = _sample_gaps(gaps_s, gaps_e, n_per_node, jitter, seed,
                                  bundle.pixel_ids)
    bg_valid = bg_valid & (bg0 < bg1)
    keep = np.repeat(bg_valid, n_per_node)
    rix = np.repeat(np.arange(r), n_per_node)[keep]
    t_flat = t_bg.ravel()[keep]
    parts_rix.append(rix)
    parts_slot.append(np.zeros(len(rix), dtype=np.int64))
    parts_t.append(t_flat)
    slot_sizes.append(len(rix))

    for j, node in enumerate(scene.objects, start=1):
        t0, t1 = obj_spans[j - 1]
        hit = t0 < t1
        frac = _stratum_positions(n_per_node, jitter, seed, bundle.pixel_ids, node.id)
        t_obj = t0[:, None] + frac * (t1 - t0)[:, None]
        keep = np.repeat(hit, n_per_node)
        rix = np.repeat(np.arange(r), n_per_node)[keep]
        parts_rix.append(rix)
        parts_slot.append(np.full(len(rix), j, dtype=np.int64))
        parts_t.append(t_obj.ravel()[keep])
        slot_sizes.append(len(rix))

    rix = np.concatenate(parts_rix)
    slot = np.concatenate(parts_slot)
    t = np.concatenate(parts_t)

    # query each node at its own samples
    sigma = np.empty(len(t))
    rgb = np.empty((len(t), 3))
    offset = 0
    for j, node in enumerate(scene.nodes):
        size = slot_sizes[j]
        sl = slice(offset, offset + size)
        offset += size
        if size == 0:
            caches.append(None)
            continue
        p_world = bundle.origins[rix[sl]] + t[sl, None] * bundle.dirs[rix[sl]]
        sg, cl, cache = _query_node(node, p_world, apply_tint)
        sigma[sl] = sg
        rgb[sl] = cl
        caches.append(cache)

    order = np.lexsort((slot, t, rix))
    rix_s, slot_s, t_s = rix[order], slot[order], t[order]
    sigma_s, rgb_s = sigma[order], rgb[order]

    # segment end per ray: farthest covered t across all parts
    t_end = np.where(bg0 < bg1, bg1, bundle.t_near)
    for (t0, t1) in obj_spans:
        t_end = np.where(t0 < t1, np.maximum(t_end, t1), t_end)

    delta = np.empty_like(t_s)
    if len(t_s):
        delta[:-1] = t_s[1:] - t_s[:-1]
        last = np.r_[rix_s[1:] != rix_s[:-1], True]
        delta[last] = t_end[rix_s[last]] - t_s[last]
        delta = np.maximum(delta, 0.0)

    return SampleArrays(rix_s, slot_s, t_s, delta, sigma_s, rgb_s, node_order,
                        r, t_end, caches, order, slot_sizes)


def _segmented_transmittance(rix, optical_depth, n_rays):
    """T before each sample and total optical depth per ray."""
    cs = np.cumsum(optical_depth)
    first = np.r_[True, rix[1:] != rix[:-1]] if len(rix) else np.zeros(0, bool)
    base = np.zeros(n_rays)
    if len(rix):
        firsts = np.flatnonzero(first)
        base_vals = np.r_[0.0, cs[firsts[1:] - 1]] if len(firsts) else np.zeros(0)
        base[rix[firsts]] = base_vals
    before = cs - optical_depth - base[rix]
    return np.exp(-before)


def composite_forward(s: SampleArrays):
    """Eq-style weighted sums over merged samples.

    Returns dict with rgb (R,3), depth (R,), opacity (R,), weights (S,),
    trans (S,), node_mass (R, K), instance (R,).
    """
    r, k = s.n_rays, len(s.node_order)
    od = s.sigma * s.delta
    trans = _segmented_transmittance(s.rix, od, r)
    alpha = -np.expm1(-od)
    w = trans * alpha

    rgb = np.stack([np.bincount(s.rix, weights=w * s.rgb[:, c], minlength=r)
                    for c in range(3)], axis=1)
    depth = np.bincount(s.rix, weights=w * s.t, minlength=r)
    opacity = np.bincount(s.rix, weights=w, minlength=r)

    key = s.rix * k + s.slot
    node_mass = np.bincount(key, weights=w, minlength=r * k).reshape(r, k)
    instance = np.array([s.node_order[j] for j in np.argmax(node_mass, axis=1)],
                        dtype=np.int64)
    return {"rgb": rgb, "depth": depth, "opacity": opacity, "weights": w,
            "trans": trans, "alpha": alpha, "node_mass": node_mass,
            "instance": instance}


def composite_backward(s: SampleArrays, fwd: dict, g_rgb=None, g_depth=None,
                       g_opacity=None):
    """Upstream gradients on (rgb, depth, opacity) -> per-sample gradients.

    Returns (d_sigma (S,), d_rgb (S, 3)).
    """
    r = s.n_rays
    g_rgb = np.zeros((r, 3)) if g_rgb is None else np.asarray(g_rgb, dtype=np.float64)
    g_depth = np.zeros(r) if g_depth is None else np.asarray(g_depth, dtype=np.float64)
    g_opacity = np.zeros(r) if g_opacity is None else np.asarray(g_opacity, dtype=np.float64)

    w, trans, alpha = fwd["weights"], fwd["trans"], fwd["alpha"]
    # payload gradient per sample: d(outputs)/d(w_i)
    G = (g_rgb[s.rix] * s.rgb).sum(axis=1) + g_depth[s.rix] * s.t + g_opacity[s.rix]

    d_rgb = w[:, None] * g_rgb[s.rix]

    gw = G * w
    cs = np.cumsum(gw)
    first = np.r_[True, s.rix[1:] != s.rix[:-1]] if len(s.rix) else np.zeros(0, bool)
    base = np.zeros(r)
    if len(s.rix):
        firsts = np.flatnonzero(first)
        base_vals = np.r_[0.0, cs[firsts[1:] - 1]] if len(firsts) else np.zeros(0)
        base[s.rix[firsts]] = base_vals
    inclusive = cs - base[s.rix]
    total = np.bincount(s.rix, weights=gw, minlength=r)
    suffix = total[s.rix] - inclusive

    d_sigma = s.delta * (G * trans * (1.0 - alpha) - suffix)
    return d_sigma, d_rgb


def scatter_sample_grads(scene: Scene, s: SampleArrays, d_sigma, d_rgb,
                         grads: dict[int, GradBuffer],
                         d_appearance: dict[int, np.ndarray] | None = None) -> None:
    """Route per-sample gradients into per-node parameter gradients.

    ``d_rgb`` is w.r.t. the post-appearance color; the appearance chain rule
    happens here. Sample order matches the sorted arrays in ``s``.
    """
    inv = np.empty_like(s.pre_sort)
    inv[s.pre_sort] = np.arange(len(s.pre_sort))
    ds_pre = np.asarray(d_sigma)[inv][np.argsort(inv)] if False else None
    # map sorted-order grads back to pre-merge (per-slot contiguous) order
    ds = np.empty(len(d_sigma))
    dc = np.empty((len(d_sigma), 3))
    ds[s.pre_sort] = d_sigma
    dc[s.pre_sort] = d_rgb

    offset = 0
    for j, node in enumerate(scene.nodes):
        size = s.slot_sizes[j]
        sl = slice(offset, offset + size)
        offset += size
        if size == 0 or s.caches[j] is None:
            continue
        cache = s.caches[j]
        active = cache["active"]
        d_pre = dc[sl] * active
        if d_appearance is not None:
            da = d_appearance.setdefault(node.id, np.zeros(6))
            da[:3] += (d_pre * cache["rgb0"]).sum(axis=0)
            da[3:] += d_pre.sum(axis=0)
        d_rgb0 = d_pre * node.gain
        buf = grads.get(node.id)
        if buf is not None:
            field_query_backward_batch(node.field, cache["pc"], ds[sl], d_rgb0, buf)


# ---------------------------------------------------------------------------
# per-node rendering (object/background channels)


@dataclass
class NodeSampleArrays:
    rix: np.ndarray
    t: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    rgb: np.ndarray
    cache: dict | None
    hit: np.ndarray
    n_rays: int


def build_node_samples(node: SceneNode, bounds: OrientedBox | None,
                       bundle: RayBundle, n: int, jitter: bool, seed: int,
                       apply_tint: bool = True) -> NodeSampleArrays:
    """Stratified samples over the node's own ray span (no other nodes)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    box = bounds if (bounds is not None and node.id == BACKGROUND_ID) else node.bbox
    t0, t1 = ray_box_intersect_batch(bundle.origins, bundle.dirs, box,
                                     bundle.t_near, bundle.t_far)
    hit = t0 < t1
    r = len(bundle)
    frac = _stratum_positions(n, jitter, seed, bundle.pixel_ids, node.id)
    t = t0[:, None] + frac * (t1 - t0)[:, None]
    keep = np.repeat(hit, n)
    rix = np.repeat(np.arange(r), n)[keep]
    t_flat = t.ravel()[keep]

    if len(t_flat):
        p_world = bundle.origins[rix] + t_flat[:, None] * bundle.dirs[rix]
        sigma, rgb, cache = _query_node(node, p_world, apply_tint)
    else:
        sigma = np.zeros(0)
        rgb = np.zeros((0, 3))
        cache = None

    delta = np.empty_like(t_flat)
    if len(t_flat):
        delta[:-1] = t_flat[1:] - t_flat[:-1]
        last = np.r_[rix[1:] != rix[:-1], True]
        delta[last] = t1[rix[last]] - t_flat[last]
        delta = np.maximum(delta, 0.0)
    return NodeSampleArrays(rix, t_flat, delta, sigma, rgb, cache, hit, r)


def node_forward(s: NodeSampleArrays):
    od = s.sigma * s.delta
    trans = _segmented_transmittance(s.rix, od, s.n_rays)
    alpha = -np.expm1(-od)
    w = trans * alpha
    rgb = np.stack([np.bincount(s.rix, weights=w * s.rgb[:, c], minlength=s.n_rays)
                    for c in range(3)], axis=1)
    depth = np.bincount(s.rix, weights=w * s.t, minlength=s.n_rays)
    opacity = np.bincount(s.rix, weights=w, minlength=s.n_rays)
    return {"rgb": rgb, "depth": depth, "opacity": opacity, "weights": w,
            "trans": trans, "alpha": alpha}


def node_backward(s: NodeSampleArrays, fwd: dict, g_rgb=None, g_depth=None,
                  g_opacity=None):
    r = s.n_rays
    g_rgb = np.zeros((r, 3)) if g_rgb is None else np.asarray(g_rgb, dtype=np.float64)
    g_depth = np.zeros(r) if g_depth is None else np.asarray(g_depth, dtype=np.float64)
    g_opacity = np.zeros(r) if g_opacity is None else np.asarray(g_opacity, dtype=np.float64)

    w, trans, alpha = fwd["weights"], fwd["trans"], fwd["alpha"]
    G = (g_rgb[s.rix] * s.rgb).sum(axis=1) + g_depth[s.rix] * s.t + g_opacity[s.rix]
    d_rgb = w[:, None] * g_rgb[s.rix]

    gw = G * w
    cs = np.cumsum(gw)
    first = np.r_[True, s.rix[1:] != s.rix[:-1]] if len(s.rix) else np.zeros(0, bool)
    base = np.zeros(r)
    if len(s.rix):
        firsts = np.flatnonzero(first)
        base_vals = np.r_[0.0, cs[firsts[1:] - 1]] if len(firsts) else np.zeros(0)
        base[s.rix[firsts]] = base_vals
    inclusive = cs - base[s.rix]
    total = np.bincount(s.rix, weights=gw, minlength=r)
    suffix = total[s.rix] - inclusive

    d_sigma = s.delta * (G * trans * (1.0 - alpha) - suffix)
    return d_sigma, d_rgb


def scatter_node_grads(node: SceneNode, s: NodeSampleArrays, d_sigma, d_rgb,
                       grads: dict[int, GradBuffer],
                       d_appearance: dict[int, np.ndarray] | None = None) -> None:
    if s.cache is None:
        return
    active = s.cache["active"]
    d_pre = np.asarray(d_rgb) * active
    if d_appearance is not None:
        da = d_appearance.setdefault(node.id, np.zeros(6))
        da[:3] += (d_pre * s.cache["rgb0"]).sum(axis=0)
        da[3:] += d_pre.sum(axis=0)
    d_rgb0 = d_pre * node.gain
    buf = grads.get(node.id)
    if buf is not None:
        field_query_backward_batch(node.field, s.cache["pc"], np.asarray(d_sigma),
                                   d_rgb0, buf)


# ---------------------------------------------------------------------------
# per-ray API


def sample_ray(scene: Scene, ray: Ray, n_per_node: int = DEFAULT_SAMPLES_PER_NODE,
               jitter: bool = False, seed: int = 0, pixel_id: int = 0) -> RaySampleSet:
    """Merged, depth-sorted samples of one ray across all intersected nodes."""
    bundle = RayBundle.from_ray(ray, pixel_id)
    s = build_composite_samples(scene, bundle, n_per_node, jitter, seed)
    p_world = bundle.origins[s.rix] + s.t[:, None] * bundle.dirs[s.rix]
    return RaySampleSet(s.t, np.array([s.node_order[j] for j in s.slot]),
                        p_world, s.sigma, s.rgb, s.delta, float(s.t_end[0]),
                        node_order=s.node_order)


def composite_ray(samples: RaySampleSet) -> PixelResult:
    """Transmittance-weighted composition of a merged sample list."""
    order = samples.node_order
    slot_of = {nid: j for j, nid in enumerate(order)}
    s = SampleArrays(
        rix=np.zeros(len(samples), dtype=np.int64),
        slot=np.array([slot_of[int(n)] for n in samples.node_id], dtype=np.int64),
        t=samples.t, delta=samples.delta, sigma=samples.sigma, rgb=samples.rgb,
        node_order=order, n_rays=1, t_end=np.array([samples.t_end]),
        caches=[], pre_sort=np.arange(len(samples)), slot_sizes=[],
    )
    fwd = composite_forward(s)
    weights = {nid: float(fwd["node_mass"][0, j]) for j, nid in enumerate(order)}
    return PixelResult(rgb=fwd["rgb"][0], depth=float(fwd["depth"][0]),
                       opacity=float(fwd["opacity"][0]),
                       instance_id=int(fwd["instance"][0]), node_weights=weights)


def render_node_ray(node: SceneNode, ray: Ray, n: int = DEFAULT_SAMPLES_PER_NODE,
                    seed: int = 0, jitter: bool = False, pixel_id: int = 0,
                    bounds: OrientedBox | None = None) -> NodeRender:
    """Volume rendering of a single node along a ray (its own transmittance)."""
    bundle = RayBundle.from_ray(ray, pixel_id)
    s = build_node_samples(node, bounds, bundle, n, jitter, seed)
    fwd = node_forward(s)
    return NodeRender(rgb=fwd["rgb"][0], depth=float(fwd["depth"][0]),
                      opacity=float(fwd["opacity"][0]))


def render_image(scene: Scene, camera: Camera, channels=("rgb",),
                 n_per_node: int = DEFAULT_SAMPLES_PER_NODE, seed: int = 0,
                 jitter: bool = False) -> dict:
    """Full-frame render; returns row-major buffers per requested channel."""
    unknown = set(channels) - set(CHANNELS)
    if unknown:
        raise ValueError(f"unknown channels {sorted(unknown)}")
    if camera.width <= 0 or camera.height <= 0:
        raise ValueError("image must be at least 1x1")
    h, w = camera.height, camera.width
    snap = scene.snapshot()
    bundle = RayBundle.from_camera(camera)
    s = build_composite_samples(snap, bundle, n_per_node, jitter, seed)
    fwd = composite_forward(s)

    out: dict = {}
    if "rgb" in channels:
        out["rgb"] = fwd["rgb"].reshape(h, w, 3)
    if "depth" in channels:
        out["depth"] = fwd["depth"].reshape(h, w)
    if "opacity" in channels:
        out["opacity"] = fwd["opacity"].reshape(h, w)
    if "panoptic" in channels:
        out["panoptic"] = fwd["instance"].reshape(h, w)
    if "per_node" in channels:
        per = {}
        for node in snap.nodes:
            ns = build_node_samples(node, snap.bounds, bundle, n_per_node,
                                    jitter, seed)
            nf = node_forward(ns)
            per[node.id] = {"rgb": nf["rgb"].reshape(h, w, 3),
                            "depth": nf["depth"].reshape(h, w),
                            "opacity": nf["opacity"].reshape(h, w)}
        out["per_node"] = per
    return out
