from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionIndex, build_collision_index, collision_mask, edge_collides, edge_first_collision, first_collision
from .mesh import TriMesh, merge
from .oracle import brute_force_collision
from .transform import RigidTransform


@dataclass(frozen=True, eq=False)
class Scene:
    """Fixed obstacles plus one moving object.

    Obstacles are baked into a single world-frame mesh at construction, so
    their poses cannot change afterwards.
    """

    obstacles: tuple[tuple[TriMesh, RigidTransform], ...]
    moving: TriMesh
    frame: str = "world"
    world_obstacles: TriMesh | None = field(init=False, repr=False)
    obstacle_index: CollisionIndex | None = field(init=False, repr=False)
    moving_index: CollisionIndex = field(init=False, repr=False)
    obstacle_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        obstacles = tuple((m, p) for m, p in self.obstacles)
        object.__setattr__(self, "obstacles", obstacles)
        object.__setattr__(self, "moving_index", build_collision_index(self.moving))
        if obstacles:
            placed = [m.transformed(p) for m, p in obstacles]
            world = merge(placed)
            object.__setattr__(self, "world_obstacles", world)
            object.__setattr__(self, "obstacle_index", build_collision_index(world))
            object.__setattr__(self, "obstacle_offsets", np.cumsum([0] + [len(m) for m in placed]))
        else:
            object.__setattr__(self, "world_obstacles", None)
            object.__setattr__(self, "obstacle_index", None)
            object.__setattr__(self, "obstacle_offsets", np.zeros(1, dtype=np.int64))

    def bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.world_obstacles is None:
            return None
        return self.world_obstacles.bounds()

    def obstacle_of(self, triangle: int) -> int:
        return int(np.searchsorted(self.obstacle_offsets, triangle, side="right") - 1)


def first_collision_in_scene(scene: Scene, quats: np.ndarray, trans: np.ndarray) -> int:
    """Index of the first of K object poses that hits an obstacle, or -1."""
    if scene.obstacle_index is None:
        return -1
    return int(first_collision(scene.obstacle_index, scene.moving_index, quats, trans)[0])


def collisions_in_scene(scene: Scene, quats: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Boolean verdict for each of K object poses."""
    quats = np.asarray(quats, dtype=float).reshape(-1, 4)
    if scene.obstacle_index is None:
        return np.zeros(len(quats), dtype=bool)
    return collision_mask(scene.obstacle_index, scene.moving_index, quats, trans)


def edge_first_collision_in_scene(scene: Scene, p0, q0, p1, q1, n: int) -> int:
    """Check ``n`` evenly spaced poses along a straight edge, excluding its start."""
    if scene.obstacle_index is None:
        return -1
    return int(edge_first_collision(scene.obstacle_index, scene.moving_index, p0, q0, p1, q1, n))


def edge_collides_in_scene(scene: Scene, p0, q0, p1, q1, n: int) -> bool:
    if scene.obstacle_index is None:
        return False
    return bool(edge_collides(scene.obstacle_index, scene.moving_index, p0, q0, p1, q1, n))


def pose_in_collision(object_pose: RigidTransform, scene: Scene, brute_force: bool = False) -> bool:
    if scene.obstacle_index is None:
        return False
    if brute_force:
        obj = scene.moving.transformed(object_pose).triangle_vertices()
        return brute_force_collision(scene.world_obstacles.triangle_vertices(), obj) is not None
    return first_collision_in_scene(scene, object_pose.rotation[None], object_pose.translation[None]) >= 0
