"""Triangle meshes and their text file format (v / vn / f lines)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (V, 3) float64, world coordinates
    normals: np.ndarray    # (V, 3) float64, unit length
    triangles: np.ndarray  # (T, 3) int64 indices into vertices/normals

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.normals.shape != self.vertices.shape:
            raise ValueError("one normal per vertex required")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle indices out of range")

    def __len__(self):
        return len(self.triangles)


def save_mesh(path, mesh: TriangleMesh) -> None:
    """Write `v x y z`, `vn x y z` and 1-based `f i j k` lines."""
    with open(path, "w", encoding="utf-8") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for n in mesh.normals:
            f.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_mesh(path) -> TriangleMesh:
    verts, norms, tris = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag, rest = parts[0], parts[1:]
            if tag == "v":
                verts.append([float(x) for x in rest])
            elif tag == "vn":
                norms.append([float(x) for x in rest])
            elif tag == "f":
                if len(rest) != 3:
                    raise ValueError(f"{path}:{ln}: only triangles supported")
                tris.append([int(x) - 1 for x in rest])
            else:
                raise ValueError(f"{path}:{ln}: unknown record {tag!r}")
    return TriangleMesh(
        np.asarray(verts, dtype=np.float64),
        np.asarray(norms, dtype=np.float64),
        np.asarray(tris, dtype=np.int64),
    )
