"""Exhaustive all-pairs triangle intersection in plain numpy.

Independent of the BVH and the compiled kernels; used to cross-check them
and to re-validate persisted paths.
"""

from __future__ import annotations

import numpy as np

from .collision import AXIS_EPS
from .transform import RigidTransform


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def _project(n: np.ndarray, tri: np.ndarray) -> np.ndarray:
    # n: (P, 3), tri: (P, 3, 3) -> (P, 3)
    return n[:, None, 0] * tri[..., 0] + n[:, None, 1] * tri[..., 1] + n[:, None, 2] * tri[..., 2]


def tri_pairs_intersect(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Vectorised separating-axis test for P triangle pairs, A and B of shape (P, 3, 3)."""
    ea = np.roll(A, -1, axis=1) - A
    eb = np.roll(B, -1, axis=1) - B
    na = _cross(ea[:, 0], -ea[:, 2])
    nb = _cross(eb[:, 0], -eb[:, 2])
    axes = [na, nb]
    axes += [_cross(ea[:, i], eb[:, j]) for i in range(3) for j in range(3)]
    axes += [_cross(na, ea[:, i]) for i in range(3)]
    axes += [_cross(nb, eb[:, i]) for i in range(3)]
    hit = np.ones(len(A), dtype=bool)
    for n in axes:
        pa = _project(n, A)
        pb = _project(n, B)
        sep = (pa.max(axis=1) < pb.min(axis=1)) | (pb.max(axis=1) < pa.min(axis=1))
        sep &= (n[:, 0] * n[:, 0] + n[:, 1] * n[:, 1] + n[:, 2] * n[:, 2]) >= AXIS_EPS
        hit &= ~sep
    return hit


def brute_force_collision(tris_a: np.ndarray, tris_b: np.ndarray, chunk: int = 20000) -> tuple[int, int] | None:
    """First intersecting ``(i, j)`` over every pair of world-space triangles, or None.

    Pairs whose closed bounding boxes are disjoint cannot intersect and skip
    the separating-axis test; every other pair is tested.
    """
    lo_a, hi_a = tris_a.min(axis=1), tris_a.max(axis=1)
    lo_b, hi_b = tris_b.min(axis=1), tris_b.max(axis=1)
    overlap = np.all((lo_a[:, None, :] <= hi_b[None, :, :]) & (lo_b[None, :, :] <= hi_a[:, None, :]), axis=2)
    ii, jj = np.nonzero(overlap)
    for s in range(0, len(ii), chunk):
        i, j = ii[s : s + chunk], jj[s : s + chunk]
        hit = tri_pairs_intersect(tris_a[i], tris_b[j])
        if hit.any():
            k = int(np.argmax(hit))
            return int(i[k]), int(j[k])
    return None


def brute_force_check(mesh_a, pose_a: RigidTransform, mesh_b, pose_b: RigidTransform) -> bool:
    return brute_force_collision(mesh_a.transformed(pose_a).triangle_vertices(),
                                 mesh_b.transformed(pose_b).triangle_vertices()) is not None
