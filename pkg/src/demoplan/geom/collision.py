"""Bounding-volume hierarchy and exact triangle-triangle collision queries.

The narrow phase is a separating-axis test over the 17 candidate axes of a
triangle pair (two face normals, nine edge-edge cross products and six
in-plane edge normals for the coplanar case). Intervals that merely touch are
not separating, so contact counts as collision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .mesh import MeshError, TriMesh
from .transform import RigidTransform, compose, invert

# axes shorter than this (squared) carry no direction information
AXIS_EPS = 1e-30
_STACK = 512


@dataclass(frozen=True, eq=False)
class CollisionIndex:
    """AABB tree over the triangles of ``mesh``, stored as flat arrays.

    Nodes are in depth-first preorder, so every child index is larger than
    its parent's; a node is a leaf iff ``left == -1``, and then owns
    ``order[start:start + count]``.
    """

    mesh: TriMesh
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    tri_verts: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def leaves(self) -> list[np.ndarray]:
        return [self.order[s : s + c] for s, c, l in zip(self.start, self.count, self.left) if l < 0]


def build_collision_index(mesh: TriMesh, leaf_size: int = 2) -> CollisionIndex:
    if len(mesh) == 0:
        raise MeshError("cannot index an empty mesh")
    tv = np.ascontiguousarray(mesh.triangle_vertices())
    tlo, thi, cen = tv.min(axis=1), tv.max(axis=1), tv.mean(axis=1)
    order = np.arange(len(mesh))
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def build(begin: int, end: int) -> int:
        idx = len(left)
        ids = order[begin:end]
        lo.append(tlo[ids].min(axis=0))
        hi.append(thi[ids].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(begin)
        count.append(end - begin)
        if end - begin <= leaf_size:
            return idx
        c = cen[ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order[begin:end] = ids[np.argsort(c[:, axis], kind="stable")]
        mid = (begin + end) // 2
        left[idx] = build(begin, mid)
        right[idx] = build(mid, end)
        count[idx] = 0
        return idx

    build(0, len(mesh))
    return CollisionIndex(
        mesh=mesh,
        lo=np.array(lo),
        hi=np.array(hi),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
        order=order.astype(np.int64),
        tri_verts=tv,
    )


@njit(cache=True, inline="always")
def _cross(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True, inline="always")
def _separates(nx, ny, nz, A, B):
    if nx * nx + ny * ny + nz * nz < AXIS_EPS:
        return False
    a0 = nx * A[0, 0] + ny * A[0, 1] + nz * A[0, 2]
    a1 = nx * A[1, 0] + ny * A[1, 1] + nz * A[1, 2]
    a2 = nx * A[2, 0] + ny * A[2, 1] + nz * A[2, 2]
    b0 = nx * B[0, 0] + ny * B[0, 1] + nz * B[0, 2]
    b1 = nx * B[1, 0] + ny * B[1, 1] + nz * B[1, 2]
    b2 = nx * B[2, 0] + ny * B[2, 1] + nz * B[2, 2]
    amin = min(a0, a1, a2)
    amax = max(a0, a1, a2)
    bmin = min(b0, b1, b2)
    bmax = max(b0, b1, b2)
    return amax < bmin or bmax < amin


@njit(cache=True)
def tri_tri_intersect(A, B):
    """Exact-as-floats intersection test of two (3, 3) triangles."""
    ea = np.empty((3, 3))
    eb = np.empty((3, 3))
    for k in range(3):
        for d in range(3):
            ea[k, d] = A[(k + 1) % 3, d] - A[k, d]
            eb[k, d] = B[(k + 1) % 3, d] - B[k, d]
    nax, nay, naz = _cross(ea[0, 0], ea[0, 1], ea[0, 2], -ea[2, 0], -ea[2, 1], -ea[2, 2])
    if _separates(nax, nay, naz, A, B):
        return False
    nbx, nby, nbz = _cross(eb[0, 0], eb[0, 1], eb[0, 2], -eb[2, 0], -eb[2, 1], -eb[2, 2])
    if _separates(nbx, nby, nbz, A, B):
        return False
    for i in range(3):
        for j in range(3):
            cx, cy, cz = _cross(ea[i, 0], ea[i, 1], ea[i, 2], eb[j, 0], eb[j, 1], eb[j, 2])
            if _separates(cx, cy, cz, A, B):
                return False
    for i in range(3):
        cx, cy, cz = _cross(nax, nay, naz, ea[i, 0], ea[i, 1], ea[i, 2])
        if _separates(cx, cy, cz, A, B):
            return False
        cx, cy, cz = _cross(nbx, nby, nbz, eb[i, 0], eb[i, 1], eb[i, 2])
        if _separates(cx, cy, cz, A, B):
            return False
    return True


@njit(cache=True, inline="always")
def _box_overlap(lo_a, hi_a, lo_b, hi_b):
    for d in range(3):
        if hi_a[d] < lo_b[d] or hi_b[d] < lo_a[d]:
            return False
    return True


@njit(cache=True)
def _tri_box(T, lo, hi):
    for d in range(3):
        lo[d] = min(T[0, d], T[1, d], T[2, d])
        hi[d] = max(T[0, d], T[1, d], T[2, d])


@njit(cache=True)
def _refit(tv, left, right, start, count, order, lo, hi):
    tlo = np.empty(3)
    thi = np.empty(3)
    for n in range(len(left) - 1, -1, -1):
        if left[n] < 0:
            for d in range(3):
                lo[n, d] = np.inf
                hi[n, d] = -np.inf
            for k in range(start[n], start[n] + count[n]):
                _tri_box(tv[order[k]], tlo, thi)
                for d in range(3):
                    lo[n, d] = min(lo[n, d], tlo[d])
                    hi[n, d] = max(hi[n, d], thi[d])
        else:
            l, r = left[n], right[n]
            for d in range(3):
                lo[n, d] = min(lo[l, d], lo[r, d])
                hi[n, d] = max(hi[l, d], hi[r, d])


@njit(cache=True)
def _traverse(ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a,
              tb, lo_b, hi_b, left_b, right_b, start_b, count_b, order_b):
    stack = np.empty((_STACK, 2), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    sp = 1
    la = np.empty(3)
    ha = np.empty(3)
    lb = np.empty(3)
    hb = np.empty(3)
    while sp > 0:
        sp -= 1
        i = stack[sp, 0]
        j = stack[sp, 1]
        if not _box_overlap(lo_a[i], hi_a[i], lo_b[j], hi_b[j]):
            continue
        leaf_a = left_a[i] < 0
        leaf_b = left_b[j] < 0
        if leaf_a and leaf_b:
            for p in range(start_a[i], start_a[i] + count_a[i]):
                ti = order_a[p]
                _tri_box(ta[ti], la, ha)
                for q in range(start_b[j], start_b[j] + count_b[j]):
                    tj = order_b[q]
                    _tri_box(tb[tj], lb, hb)
                    if _box_overlap(la, ha, lb, hb) and tri_tri_intersect(ta[ti], tb[tj]):
                        return ti, tj
            continue
        descend_a = not leaf_a
        if descend_a and not leaf_b:
            va = (hi_a[i, 0] - lo_a[i, 0]) * (hi_a[i, 1] - lo_a[i, 1]) * (hi_a[i, 2] - lo_a[i, 2])
            vb = (hi_b[j, 0] - lo_b[j, 0]) * (hi_b[j, 1] - lo_b[j, 1]) * (hi_b[j, 2] - lo_b[j, 2])
            descend_a = va >= vb
        if descend_a:
            stack[sp, 0] = right_a[i]
            stack[sp, 1] = j
            stack[sp + 1, 0] = left_a[i]
            stack[sp + 1, 1] = j
        else:
            stack[sp, 0] = i
            stack[sp, 1] = right_b[j]
            stack[sp + 1, 0] = i
            stack[sp + 1, 1] = left_b[j]
        sp += 2
    return -1, -1


@njit(cache=True)
def _quat_matrix(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def _place(src, R, t, dst):
    for m in range(src.shape[0]):
        for k in range(3):
            for d in range(3):
                dst[m, k, d] = R[d, 0] * src[m, k, 0] + R[d, 1] * src[m, k, 1] + R[d, 2] * src[m, k, 2] + t[d]


@njit(cache=True)
def _first_colliding_pose(quats, trans, tb_local, left_b, right_b, start_b, count_b, order_b,
                          ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a):
    """Index of the first pose at which the moving mesh hits the fixed mesh, or -1."""
    R = np.empty((3, 3))
    tb = np.empty_like(tb_local)
    lo_b = np.empty((len(left_b), 3))
    hi_b = np.empty((len(left_b), 3))
    for k in range(quats.shape[0]):
        _quat_matrix(quats[k], R)
        _place(tb_local, R, trans[k], tb)
        _refit(tb, left_b, right_b, start_b, count_b, order_b, lo_b, hi_b)
        ti, tj = _traverse(ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a,
                           tb, lo_b, hi_b, left_b, right_b, start_b, count_b, order_b)
        if ti >= 0:
            return k, ti, tj
    return -1, -1, -1


@njit(cache=True)
def _colliding_mask(quats, trans, tb_local, left_b, right_b, start_b, count_b, order_b,
                    ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a):
    R = np.empty((3, 3))
    tb = np.empty_like(tb_local)
    lo_b = np.empty((len(left_b), 3))
    hi_b = np.empty((len(left_b), 3))
    out = np.zeros(quats.shape[0], dtype=np.bool_)
    for k in range(quats.shape[0]):
        _quat_matrix(quats[k], R)
        _place(tb_local, R, trans[k], tb)
        _refit(tb, left_b, right_b, start_b, count_b, order_b, lo_b, hi_b)
        ti, _ = _traverse(ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a,
                          tb, lo_b, hi_b, left_b, right_b, start_b, count_b, order_b)
        out[k] = ti >= 0
    return out


@dataclass(frozen=True)
class CollisionReport:
    intersecting: bool
    witness: tuple[int, int] | None = None  # (triangle in a, triangle in b)


def _moving_args(index: CollisionIndex):
    return (index.tri_verts, index.left, index.right, index.start, index.count, index.order)


def _fixed_args(index: CollisionIndex):
    return (index.tri_verts, index.lo, index.hi, index.left, index.right, index.start, index.count, index.order)


def first_collision(fixed: CollisionIndex, moving: CollisionIndex, quats: np.ndarray, trans: np.ndarray):
    """Batch query: ``(pose_index, tri_fixed, tri_moving)`` of the first hit, all -1 if none.

    Poses place ``moving`` in the frame of ``fixed``.
    """
    quats = np.ascontiguousarray(quats, dtype=float).reshape(-1, 4)
    trans = np.ascontiguousarray(trans, dtype=float).reshape(-1, 3)
    return _first_colliding_pose(quats, trans, *_moving_args(moving), *_fixed_args(fixed))


def collision_mask(fixed: CollisionIndex, moving: CollisionIndex, quats: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Per-pose collision verdicts for a batch of poses."""
    quats = np.ascontiguousarray(quats, dtype=float).reshape(-1, 4)
    trans = np.ascontiguousarray(trans, dtype=float).reshape(-1, 3)
    return _colliding_mask(quats, trans, *_moving_args(moving), *_fixed_args(fixed))


def check_collision(a: CollisionIndex, pose_a: RigidTransform, b: CollisionIndex, pose_b: RigidTransform) -> CollisionReport:
    rel = compose(invert(pose_a), pose_b)
    k, ti, tj = first_collision(a, b, rel.rotation[None], rel.translation[None])
    if k < 0:
        return CollisionReport(False)
    return CollisionReport(True, (int(ti), int(tj)))


@njit(cache=True)
def slerp_into(q0, q1, s, out):
    """Shortest-arc slerp matching :func:`transform.interpolate_many`."""
    d = q0[0] * q1[0] + q0[1] * q1[1] + q0[2] * q1[2] + q0[3] * q1[3]
    sign = 1.0
    if d < 0.0:
        sign = -1.0
        d = -d
    if d > 1.0 - 1e-12:
        for k in range(4):
            out[k] = q0[k] + s * (sign * q1[k] - q0[k])
    else:
        theta = np.arccos(min(d, 1.0))
        wa = np.sin((1.0 - s) * theta) / np.sin(theta)
        wb = np.sin(s * theta) / np.sin(theta)
        for k in range(4):
            out[k] = wa * q0[k] + wb * sign * q1[k]
    n = np.sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2] + out[3] * out[3])
    for k in range(4):
        out[k] /= n


@njit(cache=True)
def _edge_first_collision(p0, q0, p1, q1, n, tb_local, left_b, right_b, start_b, count_b, order_b,
                          ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a):
    quats = np.empty((n, 4))
    trans = np.empty((n, 3))
    for k in range(n):
        s = (k + 1) / n
        if k == n - 1:
            quats[k] = q1
            trans[k] = p1
        else:
            slerp_into(q0, q1, s, quats[k])
            for d in range(3):
                trans[k, d] = (1.0 - s) * p0[d] + s * p1[d]
    hit, _, _ = _first_colliding_pose(quats, trans, tb_local, left_b, right_b, start_b, count_b, order_b,
                                      ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a)
    return hit


def edge_first_collision(fixed: CollisionIndex, moving: CollisionIndex, p0, q0, p1, q1, n: int) -> int:
    """First of the ``n`` evenly spaced poses after ``(p0, q0)`` up to ``(p1, q1)`` that collides, or -1."""
    return _edge_first_collision(p0, q0, p1, q1, n, *_moving_args(moving), *_fixed_args(fixed))


@njit(cache=True)
def _bisection_order(n):
    """Sample indices 0..n-1 ordered endpoint first, then by recursive halving."""
    order = np.empty(n, dtype=np.int64)
    order[0] = n - 1
    m = 1
    queue = np.empty((2 * n + 1, 2), dtype=np.int64)
    queue[0, 0] = -1
    queue[0, 1] = n - 1
    head, tail = 0, 1
    while head < tail:
        lo, hi = queue[head, 0], queue[head, 1]
        head += 1
        if hi - lo < 2:
            continue
        mid = (lo + hi) // 2
        order[m] = mid
        m += 1
        queue[tail, 0], queue[tail, 1] = lo, mid
        queue[tail + 1, 0], queue[tail + 1, 1] = mid, hi
        tail += 2
    return order


@njit(cache=True)
def _edge_collides(p0, q0, p1, q1, n, tb_local, left_b, right_b, start_b, count_b, order_b,
                   ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a):
    R = np.empty((3, 3))
    tb = np.empty_like(tb_local)
    lo_b = np.empty((len(left_b), 3))
    hi_b = np.empty((len(left_b), 3))
    q = np.empty(4)
    p = np.empty(3)
    for k in _bisection_order(n):
        if k == n - 1:
            q[:] = q1
            p[:] = p1
        else:
            s = (k + 1) / n
            slerp_into(q0, q1, s, q)
            for d in range(3):
                p[d] = (1.0 - s) * p0[d] + s * p1[d]
        _quat_matrix(q, R)
        _place(tb_local, R, p, tb)
        _refit(tb, left_b, right_b, start_b, count_b, order_b, lo_b, hi_b)
        ti, _ = _traverse(ta, lo_a, hi_a, left_a, right_a, start_a, count_a, order_a,
                          tb, lo_b, hi_b, left_b, right_b, start_b, count_b, order_b)
        if ti >= 0:
            return True
    return False


def edge_collides(fixed: CollisionIndex, moving: CollisionIndex, p0, q0, p1, q1, n: int) -> bool:
    """Whether any of the same ``n`` edge samples collides, probing coarse-to-fine."""
    return _edge_collides(p0, q0, p1, q1, n, *_moving_args(moving), *_fixed_args(fixed))
