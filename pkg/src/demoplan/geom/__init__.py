"""Pose algebra, triangle meshes and collision checking."""

from .collision import CollisionIndex, CollisionReport, build_collision_index, check_collision
from .mesh import MeshError, TriMesh, box, boxes, icosphere, load_obj, merge, save_obj
from .oracle import brute_force_check, brute_force_collision
from .scene import (
    Scene,
    collisions_in_scene,
    edge_collides_in_scene,
    edge_first_collision_in_scene,
    first_collision_in_scene,
    pose_in_collision,
)
from .transform import (
    PoseVector,
    RigidTransform,
    compose,
    interpolate,
    interpolate_many,
    invert,
    pose_vector_to_transform,
    random_quaternion,
    rotation_angle_between,
    transform_to_pose_vector,
)

__all__ = [
    "CollisionIndex",
    "CollisionReport",
    "MeshError",
    "PoseVector",
    "RigidTransform",
    "Scene",
    "TriMesh",
    "box",
    "boxes",
    "brute_force_check",
    "brute_force_collision",
    "build_collision_index",
    "check_collision",
    "compose",
    "collisions_in_scene",
    "edge_collides_in_scene",
    "edge_first_collision_in_scene",
    "first_collision_in_scene",
    "icosphere",
    "interpolate",
    "interpolate_many",
    "invert",
    "load_obj",
    "merge",
    "pose_in_collision",
    "pose_vector_to_transform",
    "random_quaternion",
    "rotation_angle_between",
    "save_obj",
    "transform_to_pose_vector",
]
