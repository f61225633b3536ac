"""Triangle meshes and a minimal Wavefront OBJ reader/writer."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEGENERATE_AREA = 1e-12  # m^2


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (N, 3) float, meters
    triangles: np.ndarray  # (M, 3) int

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("triangle index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def __len__(self) -> int:
        return len(self.triangles)

    def triangle_vertices(self) -> np.ndarray:
        """(M, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        tv = self.triangle_vertices()
        return 0.5 * np.linalg.norm(np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    def diameter(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def transformed(self, pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.triangles)

    def cleaned(self, area_threshold: float = DEGENERATE_AREA) -> "TriMesh":
        """Drop degenerate triangles and unreferenced vertices."""
        keep = self.areas() > area_threshold
        tris = self.triangles[keep]
        used, inverse = np.unique(tris, return_inverse=True)
        return TriMesh(self.vertices[used], inverse.reshape(-1, 3))


def merge(meshes: list[TriMesh]) -> TriMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriMesh(np.vstack(verts), np.vstack(tris))


_BOX_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [3, 7, 6], [3, 6, 2],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ]
)


def box(lo, hi) -> TriMesh:
    """Axis-aligned box with corners ``lo`` and ``hi``, outward-facing winding."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    if not (x1 > x0 and y1 > y0 and z1 > z0):
        raise MeshError(f"empty box {lo} {hi}")
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ],
        dtype=float,
    )
    return TriMesh(v, _BOX_FACES)


def boxes(extents: list[tuple]) -> TriMesh:
    return merge([box(lo, hi) for lo, hi in extents])


def icosphere(radius: float, subdivisions: int = 1, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Geodesic sphere: an icosahedron with each face split ``subdivisions`` times."""
    g = (1 + 5**0.5) / 2
    verts = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0), (0, -1, g), (0, 1, g),
        (0, -1, -g), (0, 1, -g), (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
        (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
        (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    pts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        midpoints: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = pts[a] + pts[b]
                pts.append(m / np.linalg.norm(m))
                midpoints[key] = len(pts) - 1
            return midpoints[key]

        split = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            split += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = split
    return TriMesh(np.array(pts) * radius + np.asarray(center, dtype=float), np.array(faces))


def load_obj(path: str | Path) -> TriMesh:
    """Read ``v`` and ``f`` records; polygons are fan-triangulated.

    Face entries may use the ``v/vt/vn`` form and negative (relative) indices.
    """
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    verts.append([float(c) for c in parts[1:4]])
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad vertex") from exc
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise MeshError(f"{path}:{lineno}: face with fewer than 3 vertices")
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
    if not tris:
        raise MeshError(f"{path}: no faces")
    return TriMesh(np.array(verts), np.array(tris)).cleaned()


def save_obj(mesh: TriMesh, path: str | Path, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for v in mesh.vertices:
            fh.write("v {:.6f} {:.6f} {:.6f}\n".format(*v))
        for f in mesh.triangles:
            fh.write("f {} {} {}\n".format(*(f + 1)))
