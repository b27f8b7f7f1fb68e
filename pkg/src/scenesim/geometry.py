"""Geometric primitives: rigid poses, oriented boxes, rays, pinhole cameras.

Conventions (fixed once, used everywhere):
  * world and camera frames are right-handed
  * camera looks down -z in camera space, +x right, +y up; image rows grow
    downward, so pixel y maps to -y in camera space
  * poses are stored as rotation + translation and compose canonical -> world
    (for boxes) or camera -> world (for cameras)
  * canonical box space is [-1, 1]^3
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite vector component")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PoseSE3:
    """Rigid transform: p_world = rotation @ p_local + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = _as_vec3(self.translation)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("non-finite rotation entry")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-7:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-7:
            raise ValueError("improper rotation (det != +1)")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3(np.eye(3), np.zeros(3))

    @staticmethod
    def from_rt(rotation, translation) -> "PoseSE3":
        return PoseSE3(np.asarray(rotation, dtype=np.float64),
                       np.asarray(translation, dtype=np.float64))

    def apply(self, p) -> np.ndarray:
        """Transform point(s): (3,) or (N, 3)."""
        p = np.asarray(p, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_dir(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        return d @ self.rotation.T

    def inverse(self) -> "PoseSE3":
        rt = self.rotation.T
        return PoseSE3(rt, -rt @ self.translation)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self @ other (apply ``other`` first)."""
        return PoseSE3(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def allclose(self, other: "PoseSE3", tol: float = 1e-12) -> bool:
        return (np.max(np.abs(self.rotation - other.rotation)) <= tol
                and np.max(np.abs(self.translation - other.translation)) <= tol)


def rotation_about_axis(axis: int | str, angle_deg: float) -> np.ndarray:
    """Rotation matrix about a coordinate axis (0/'x', 1/'y', 2/'z')."""
    if isinstance(axis, str):
        axis = {"x": 0, "y": 1, "z": 2}[axis.lower()]
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    if axis == 2:
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
    raise ValueError(f"bad axis {axis}")


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Box given by a canonical->world pose and strictly positive half extents."""

    pose: PoseSE3
    half_extents: np.ndarray

    def __post_init__(self):
        h = _as_vec3(self.half_extents)
        if not np.all(h > 0):
            raise ValueError("half_extents must be strictly positive")
        object.__setattr__(self, "half_extents", _frozen(h))

    @staticmethod
    def axis_aligned(center, half_extents) -> "OrientedBox":
        return OrientedBox(PoseSE3(np.eye(3), _as_vec3(center)), half_extents)

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation

    def contains(self, p) -> np.ndarray | bool:
        """Inside-or-on-surface test for point(s) in world space."""
        c = self.world_to_canonical(p)
        return np.all(np.abs(c) <= 1.0, axis=-1)

    def world_to_canonical(self, p) -> np.ndarray:
        """World point(s) -> box-normalized [-1, 1]^3 coordinates."""
        local = self.pose.inverse().apply(p)
        return local / self.half_extents

    def canonical_to_world(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        return self.pose.apply(c * self.half_extents)

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                          for sz in (-1, 1)], dtype=np.float64)
        return self.canonical_to_world(signs)


def world_to_canonical(p, box: OrientedBox) -> np.ndarray:
    return box.world_to_canonical(p)


def canonical_to_world(c, box: OrientedBox) -> np.ndarray:
    return box.canonical_to_world(c)


@dataclass(frozen=True, eq=False)
class Ray:
    """Ray origin + unit direction with a traversable [t_near, t_far] span."""

    origin: np.ndarray
    direction: np.ndarray
    t_near: float = 0.0
    t_far: float = np.inf

    def __post_init__(self):
        o = _as_vec3(self.origin)
        d = np.asarray(self.direction, dtype=np.float64)
        if d.shape != (3,) or not np.all(np.isfinite(d)):
            raise ValueError("bad ray direction")
        n = np.linalg.norm(d)
        if abs(n - 1.0) > ORTHO_TOL:
            raise ValueError(f"ray direction must be unit-norm (|d| = {n})")
        if not self.t_near < self.t_far:
            raise ValueError("require t_near < t_far")
        object.__setattr__(self, "origin", _frozen(o))
        object.__setattr__(self, "direction", _frozen(d))

    @staticmethod
    def through(origin, direction, t_near: float = 0.0, t_far: float = np.inf) -> "Ray":
        d = np.asarray(direction, dtype=np.float64)
        return Ray(origin, d / np.linalg.norm(d), t_near, t_far)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return self.origin + t[..., None] * self.direction if t.ndim else \
            self.origin + float(t) * self.direction


def ray_box_intersect(ray: Ray, box: OrientedBox) -> tuple[float, float] | None:
    """Slab intersection in the box frame, clamped to the ray's [t_near, t_far].

    Returns (t_in, t_out) with t_in < t_out, or None on a miss. A tangential
    graze (t_in == t_out) counts as a miss.
    """
    inv = box.pose.inverse()
    o = (inv.rotation @ ray.origin + inv.translation)
    d = inv.rotation @ ray.direction
    h = box.half_extents

    t0, t1 = ray.t_near, ray.t_far
    for ax in range(3):
        if d[ax] == 0.0:
            if abs(o[ax]) > h[ax]:
                return None
            continue
        ta = (-h[ax] - o[ax]) / d[ax]
        tb = (h[ax] - o[ax]) / d[ax]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 >= t1:
            return None
    return (t0, t1)


def ray_box_intersect_batch(origins: np.ndarray, dirs: np.ndarray,
                            box: OrientedBox, t_near, t_far) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized slab test; returns (t_in, t_out) arrays with t_in >= t_out on miss."""
    inv = box.pose.inverse()
    o = origins @ inv.rotation.T + inv.translation
    d = dirs @ inv.rotation.T
    h = box.half_extents

    t0 = np.broadcast_to(np.asarray(t_near, dtype=np.float64), o.shape[:1]).copy()
    t1 = np.broadcast_to(np.asarray(t_far, dtype=np.float64), o.shape[:1]).copy()
    for ax in range(3):
        da = d[:, ax]
        oa = o[:, ax]
        parallel = da == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-h[ax] - oa) / da
            tb = (h[ax] - oa) / da
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        outside = parallel & (np.abs(oa) > h[ax])
        lo = np.where(parallel, t0, lo)
        hi = np.where(parallel, t1, hi)
        t0 = np.maximum(t0, lo)
        t1 = np.minimum(t1, hi)
        t1 = np.where(outside, t0, t1)  # force miss
    return t0, t1


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera; ``pose`` maps camera space to world space."""

    pose: PoseSE3
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation

    @property
    def forward(self) -> np.ndarray:
        """World-space viewing direction (-z axis of the camera frame)."""
        return -self.pose.rotation[:, 2]

    def with_pose(self, pose: PoseSE3) -> "Camera":
        return Camera(pose, self.fx, self.fy, self.cx, self.cy,
                      self.width, self.height)


def pixel_ray(camera: Camera, px: float, py: float,
              t_near: float = 0.0, t_far: float = np.inf) -> Ray:
    """Back-project a pixel to a world-space ray from the optical center."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) out of bounds "
                         f"{camera.width}x{camera.height}")
    d_cam = np.array([(px - camera.cx) / camera.fx,
                      -(py - camera.cy) / camera.fy,
                      -1.0])
    d = camera.pose.rotation @ d_cam
    return Ray(camera.position, d / np.linalg.norm(d), t_near, t_far)


def pixel_rays(camera: Camera, px: np.ndarray, py: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized back-projection; returns (origins (N,3), unit dirs (N,3))."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    d_cam = np.stack([(px - camera.cx) / camera.fx,
                      -(py - camera.cy) / camera.fy,
                      -np.ones_like(px)], axis=-1)
    d = d_cam @ camera.pose.rotation.T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(camera.position, d.shape)
    return o, d


def project_point(camera: Camera, p_world) -> tuple[float, float] | None:
    """World point -> pixel, or None if behind the camera."""
    p_cam = camera.pose.inverse().apply(p_world)
    if p_cam[2] >= 0:
        return None
    z = -p_cam[2]
    px = camera.cx + camera.fx * (p_cam[0] / z)
    py = camera.cy - camera.fy * (p_cam[1] / z)
    return (px, py)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> PoseSE3:
    """Camera->world pose with the camera at ``eye`` looking at ``target``."""
    eye = _as_vec3(eye)
    f = _as_vec3(target) - eye
    fn = np.linalg.norm(f)
    if fn < 1e-12:
        raise ValueError("eye and target coincide")
    f = f / fn
    zc = -f
    upv = _as_vec3(up)
    yc = upv - np.dot(upv, zc) * zc
    yn = np.linalg.norm(yc)
    if yn < 1e-9:
        # looking straight along up: pick any perpendicular
        alt = np.array([1.0, 0.0, 0.0]) if abs(zc[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        yc = alt - np.dot(alt, zc) * zc
        yn = np.linalg.norm(yc)
    yc = yc / yn
    xc = np.cross(yc, zc)
    r = np.stack([xc, yc, zc], axis=1)
    return PoseSE3(r, eye)
