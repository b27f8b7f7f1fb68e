"""Panoptic scene graph: background node (id 0) plus object nodes.

Nodes own their radiance field, oriented bounding box, a semantic embedding
and a per-channel appearance correction. The scene is mutated only by the
edit engine and the trainer; renders operate on cheap node-shell snapshots
so in-flight edits can never tear a frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import VoxelField
from .geometry import Camera, OrientedBox

EMBED_DIM = 512
BACKGROUND_ID = 0
PICK_MIN_OPACITY = 0.05


class NotFoundError(LookupError):
    """Referenced node/scene does not exist."""


class RejectedError(ValueError):
    """Operation is structurally invalid (e.g. targets the background)."""


def default_appearance() -> np.ndarray:
    """(gain_r, gain_g, gain_b, bias_r, bias_g, bias_b) identity correction."""
    return np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


@dataclass
class SceneNode:
    id: int
    field: VoxelField
    bbox: OrientedBox
    embedding: np.ndarray = dc_field(default_factory=lambda: np.zeros(EMBED_DIM, dtype=np.float32))
    appearance: np.ndarray = dc_field(default_factory=default_appearance)
    selected: bool = False
    name: str = ""

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float32)
        if self.embedding.shape != (EMBED_DIM,):
            raise ValueError(f"embedding must have {EMBED_DIM} entries")
        self.appearance = np.asarray(self.appearance, dtype=np.float64)
        if self.appearance.shape != (6,):
            raise ValueError("appearance is (gain rgb, bias rgb)")
        if not np.all(self.appearance[:3] > 0):
            raise ValueError("appearance gain must be positive")

    @property
    def gain(self) -> np.ndarray:
        return self.appearance[:3]

    @property
    def bias(self) -> np.ndarray:
        return self.appearance[3:]

    def copy(self, *, new_id: int | None = None) -> "SceneNode":
        """Deep copy: field parameters are independent after this."""
        return SceneNode(
            id=self.id if new_id is None else new_id,
            field=self.field.copy(),
            bbox=self.bbox,
            embedding=self.embedding.copy(),
            appearance=self.appearance.copy(),
            selected=self.selected,
            name=self.name,
        )

    def shell_copy(self) -> "SceneNode":
        """Shallow copy sharing the field; used for render snapshots."""
        return SceneNode(self.id, self.field, self.bbox, self.embedding,
                         self.appearance, self.selected, self.name)

    def apply_appearance(self, rgb: np.ndarray) -> np.ndarray:
        return np.clip(rgb * self.gain + self.bias, 0.0, 1.0)


class Scene:
    def __init__(self, name: str, background: SceneNode,
                 objects: list[SceneNode] | None = None,
                 name_table: dict[str, np.ndarray] | None = None):
        if background.id != BACKGROUND_ID:
            raise ValueError("background node must have id 0")
        self.name = name
        self.nodes: list[SceneNode] = [background]
        self.name_table: dict[str, np.ndarray] = dict(name_table or {})
        self.next_id = 1
        for node in objects or []:
            if node.id == BACKGROUND_ID:
                raise RejectedError("scene already has a background node")
            if any(n.id == node.id for n in self.nodes):
                raise ValueError(f"duplicate node id {node.id}")
            self.nodes.append(node)
            self.next_id = max(self.next_id, node.id + 1)

    @property
    def background(self) -> SceneNode:
        return self.nodes[0]

    @property
    def objects(self) -> list[SceneNode]:
        return self.nodes[1:]

    @property
    def bounds(self) -> OrientedBox:
        return self.background.bbox

    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def get(self, node_id: int) -> SceneNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise NotFoundError(f"no node with id {node_id}")

    def has(self, node_id: int) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def snapshot(self) -> "Scene":
        """Immutable-enough copy for rendering: node shells are copied,
        field parameter arrays are shared."""
        s = Scene.__new__(Scene)
        s.name = self.name
        s.nodes = [n.shell_copy() for n in self.nodes]
        s.name_table = self.name_table
        s.next_id = self.next_id
        return s

    @property
    def selection(self) -> int | None:
        for n in self.nodes:
            if n.selected:
                return n.id
        return None


def scene_add_node(scene: Scene, template: SceneNode) -> int:
    """Insert a deep copy of ``template`` under a fresh id; returns the id."""
    if template.id == BACKGROUND_ID and template.bbox is scene.bounds:
        raise RejectedError("scene already has a background node")
    new_id = scene.next_id
    scene.next_id += 1
    scene.nodes.append(template.copy(new_id=new_id))
    return new_id


def scene_remove_node(scene: Scene, node_id: int) -> SceneNode:
    if node_id == BACKGROUND_ID:
        raise RejectedError("background node is not deletable")
    node = scene.get(node_id)
    scene.nodes.remove(node)
    return node


def restore_node(scene: Scene, node: SceneNode) -> None:
    """Re-insert a previously removed node under its original id (undo)."""
    if scene.has(node.id):
        raise RejectedError(f"id {node.id} already present")
    scene.nodes.append(node)
    scene.next_id = max(scene.next_id, node.id + 1)


def semantic_query(scene: Scene, query_embedding) -> int:
    """Object node with the highest cosine similarity; ties -> lowest id."""
    q = np.asarray(query_embedding, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ValueError("query embedding must be nonzero")
    if not scene.objects:
        raise NotFoundError("scene has no object nodes")
    best_id, best_sim = None, -np.inf
    for node in sorted(scene.objects, key=lambda n: n.id):
        e = node.embedding.astype(np.float64)
        en = np.linalg.norm(e)
        sim = -1.0 if en == 0 else float(np.dot(q, e) / (qn * en))
        if sim > best_sim + 1e-12:
            best_id, best_sim = node.id, sim
    return best_id


def node_weight_masses(scene: Scene, camera: Camera, px: float, py: float,
                       n_per_node: int = 64, seed: int = 0) -> dict[int, float]:
    """Per-node composited weight mass along the pixel ray."""
    from .render import composite_ray, sample_ray
    from .geometry import pixel_ray

    ray = pixel_ray(camera, px, py)
    samples = sample_ray(scene, ray, n_per_node, jitter=False, seed=seed)
    result = composite_ray(samples)
    return result.node_weights


def scene_pick(scene: Scene, camera: Camera, px: float, py: float,
               n_per_node: int = 64, seed: int = 0) -> int | None:
    """Node owning the most composited weight along the pixel ray, or None
    when total object opacity falls below the pick threshold."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) out of bounds")
    masses = node_weight_masses(scene, camera, px, py, n_per_node, seed)
    object_mass = sum(m for nid, m in masses.items() if nid != BACKGROUND_ID)
    if object_mass < PICK_MIN_OPACITY:
        return None
    return max(sorted(masses), key=lambda nid: masses[nid])
