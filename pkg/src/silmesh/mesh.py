"""Triangle meshes: icospheres, displacement shells, smoothness energy.

All generated meshes keep outward-wound (counter-clockwise from the
outside) faces; the dihedral smoothness term relies on that orientation
being consistent.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegenerateGeometryError, NonManifoldError

_f32 = np.float32


@dataclass
class TriMesh:
    """Vertices (V, 3) float32 and faces (F, 3) int32, zero-based."""
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=_f32)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")
        if self.faces.size and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")


@dataclass
class EdgeAdjacency:
    """Unique undirected edges and the two faces sharing each one.

    ``vertex_pairs`` rows are sorted (lo, hi) and the rows themselves are
    in lexicographic order, so the structure is deterministic for a given
    face list.
    """
    vertex_pairs: np.ndarray   # (E, 2) int32
    face_pairs: np.ndarray     # (E, 2) int32, order of first encounter


def icosahedron() -> TriMesh:
    """Regular unit icosahedron, outward wound."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ], dtype=_f32)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int32)
    return TriMesh(verts, faces)


def subdivide(mesh: TriMesh) -> TriMesh:
    """One 4-to-1 loop split with unit-sphere reprojection.

    Midpoint vertices are appended in lexicographic order of their parent
    edge (lo, hi), which makes the refined vertex numbering deterministic.
    """
    v, f = mesh.vertices, mesh.faces
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    pairs = np.sort(pairs, axis=1)
    edges = np.unique(pairs, axis=0)
    mid_index = {(int(a), int(b)): len(v) + i for i, (a, b) in enumerate(edges)}

    mids = v[edges[:, 0]] + v[edges[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    new_v = np.concatenate([v, mids.astype(_f32)])
    new_v /= np.linalg.norm(new_v, axis=1, keepdims=True)

    def mid(a, b):
        return mid_index[(int(min(a, b)), int(max(a, b)))]

    new_f = np.empty((4 * len(f), 3), dtype=np.int32)
    for i, (a, b, c) in enumerate(f):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        new_f[4 * i:4 * i + 4] = [(a, mab, mca), (b, mbc, mab),
                                  (c, mca, mbc), (mab, mbc, mca)]
    return TriMesh(new_v.astype(_f32), new_f)


@lru_cache(maxsize=8)
def _icosphere_cached(level: int) -> TriMesh:
    mesh = icosahedron()
    for _ in range(level):
        mesh = subdivide(mesh)
    return mesh


def make_icosphere(level: int) -> TriMesh:
    """Unit icosphere after ``level`` subdivisions (level 3: 642 V, 1280 F)."""
    if not 0 <= level <= 6:
        raise ValueError("subdivision level must be in [0, 6]")
    cached = _icosphere_cached(level)
    return TriMesh(cached.vertices.copy(), cached.faces.copy())


def apply_displacements(base: TriMesh, delta: np.ndarray) -> TriMesh:
    """Add per-vertex displacements given flat (3V,) or (V, 3)."""
    delta = np.asarray(delta, dtype=_f32)
    v = len(base.vertices)
    if delta.shape == (3 * v,):
        delta = delta.reshape(v, 3)
    if delta.shape != (v, 3):
        raise ValueError(f"displacements must be ({3 * v},) or ({v}, 3)")
    return TriMesh(base.vertices + delta, base.faces)


def build_edge_adjacency(mesh: TriMesh) -> EdgeAdjacency:
    """Map each undirected edge to its two incident faces.

    Raises NonManifoldError when an edge has any other number of faces;
    for a closed triangle mesh E == 3F/2 afterwards.
    """
    incident: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        for u, w in ((a, b), (b, c), (c, a)):
            key = (int(min(u, w)), int(max(u, w)))
            incident.setdefault(key, []).append(fi)
    for key, faces in incident.items():
        if len(faces) != 2:
            raise NonManifoldError(
                f"edge {key} belongs to {len(faces)} faces, expected 2")
    keys = sorted(incident)
    vertex_pairs = np.array(keys, dtype=np.int32).reshape(len(keys), 2)
    face_pairs = np.array([incident[k] for k in keys], dtype=np.int32)
    assert len(keys) * 2 == 3 * len(mesh.faces)
    return EdgeAdjacency(vertex_pairs, face_pairs)


def face_normals(mesh: TriMesh) -> np.ndarray:
    """Unnormalized outward normals, one per face."""
    v = mesh.vertices
    e1 = v[mesh.faces[:, 1]] - v[mesh.faces[:, 0]]
    e2 = v[mesh.faces[:, 2]] - v[mesh.faces[:, 0]]
    return np.cross(e1, e2)


def smoothness_energy(verts: Tensor, faces: np.ndarray,
                      edge_faces: np.ndarray) -> Tensor:
    """Sum over edges of (1 + cos theta_e)^2, differentiable in ``verts``.

    cos theta_e = -(n_l . n_r) for unit face normals, so a flat (pi)
    dihedral contributes zero and a fold is penalized.  ``faces`` and
    ``edge_faces`` may index a batch of identical meshes stacked into one
    vertex tensor.
    """
    v0 = ad.gather_rows(verts, faces[:, 0])
    v1 = ad.gather_rows(verts, faces[:, 1])
    v2 = ad.gather_rows(verts, faces[:, 2])
    n = ad.cross3(ad.sub(v1, v0), ad.sub(v2, v0))
    norms = ad.sqrt(ad.add(ad.sum(ad.square(n), axis=1), 1e-12))
    unit = ad.scale_rows(n, ad.div(1.0, norms))
    nl = ad.gather_rows(unit, edge_faces[:, 0])
    nr = ad.gather_rows(unit, edge_faces[:, 1])
    cos_d = ad.neg(ad.sum(ad.mul(nl, nr), axis=1))
    return ad.sum(ad.square(ad.add(cos_d, 1.0)))


def smoothness_loss(mesh: TriMesh, adjacency: EdgeAdjacency | None = None) -> float:
    """Scalar smoothness of one mesh; rejects zero-area faces."""
    areas = 0.5 * np.linalg.norm(face_normals(mesh), axis=1)
    if (areas < 1e-9).any():
        bad = int(np.argmin(areas))
        raise DegenerateGeometryError(f"face {bad} has area {areas[bad]:.3e}")
    if adjacency is None:
        adjacency = build_edge_adjacency(mesh)
    return smoothness_energy(Tensor(mesh.vertices), mesh.faces,
                             adjacency.face_pairs).item()


def tile_mesh_indices(faces: np.ndarray, edge_faces: np.ndarray,
                      copies: int, n_vertices: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays for ``copies`` meshes stacked along the vertex axis."""
    n_faces = len(faces)
    fo = np.concatenate([faces + i * n_vertices for i in range(copies)])
    eo = np.concatenate([edge_faces + i * n_faces for i in range(copies)])
    return fo.astype(np.int64), eo.astype(np.int64)


def export_obj(mesh: TriMesh, path: str) -> None:
    """Write Wavefront OBJ with 1-based faces and 6-decimal vertices."""
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path: str) -> TriMesh:
    """Read the v/f subset of OBJ; triangles only."""
    verts, faces = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] not in ("v", "f"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{ln}: bad vertex line")
                verts.append([float(p) for p in parts[1:4]])
            else:
                if len(parts) != 4:
                    raise ValueError(f"{path}:{ln}: only triangles supported")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts or not faces:
        raise ValueError(f"{path}: no mesh data")
    return TriMesh(np.array(verts, dtype=_f32), np.array(faces, dtype=np.int32))
