"""Perspective projection and soft silhouette rasterization.

Silhouettes are float32 (H, W) arrays in [0, 1], row 0 at the top of the
image.  Screen coordinates span [-1, 1] on both axes, x to the right and
y up; a pixel at row i, column j has its center at
(-1 + (2j+1)/res, 1 - (2i+1)/res).

The camera orbit is parameterized by azimuth (degrees about +y, zero on
the +z axis), elevation above the equatorial plane, and distance from
the origin.  The camera always looks at the origin with up = +y.

The rasterizer computes, per pixel and face, the signed 2-d distance to
the face boundary (positive inside) and blends face coverage
probabilities sigmoid(d / sigma_r) as

    pixel = 1 - prod_f (1 - sigmoid(d_f / sigma_r)).

It is a single fused graph node.  Work is restricted to sparse
(pixel, face) candidate pairs taken from face bounding boxes expanded
by CUTOFF_SIGMAS * sigma_r; beyond that radius a face's coverage is
under 1e-7 and its factor is 1 within float32.  The backward pass
recomputes the sparse working set from the saved screen vertices rather
than caching it, so peak memory stays bounded by one sample's transient
arrays.  The inside/outside sign is treated as a constant during
differentiation; gradients follow the distance-to-segment geometry with
the foot parameter t held fixed (exact for clamped t, and the interior
optimum makes dd/dt vanish otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BehindCameraError, UndefinedIoUError
from .mesh import TriMesh

_f32 = np.float32

NEAR_PLANE = 0.1
DEFAULT_FOV = 30.0


@dataclass(frozen=True)
class Pose:
    """Camera orbit position and the viewpoint bin it belongs to."""
    azimuth: float
    elevation: float
    distance: float
    view_bin: int = 0

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("pose distance must be positive")


def camera_basis(pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Rotation (rows = camera x/y/back axes) and camera position."""
    az = np.deg2rad(pose.azimuth)
    el = np.deg2rad(pose.elevation)
    center = pose.distance * np.array(
        [np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
    back = center / np.linalg.norm(center)
    up = np.array([0.0, 1.0, 0.0])
    x = np.cross(up, back)
    if np.linalg.norm(x) < 1e-8:      # looking straight up/down the y axis
        up = np.array([0.0, 0.0, 1.0])
        x = np.cross(up, back)
    x /= np.linalg.norm(x)
    y = np.cross(back, x)
    rot = np.stack([x, y, back]).astype(_f32)
    return rot, center.astype(_f32)


def project_points(verts: Tensor, pose: Pose,
                   fov: float = DEFAULT_FOV) -> tuple[Tensor, Tensor]:
    """Differentiable pinhole projection of (V, 3) points.

    Returns screen coordinates (V, 2) and positive depth (V,).  Raises
    BehindCameraError if any point reaches the near plane.
    """
    rot, center = camera_basis(pose)
    n = verts.data.shape[0]
    cam = ad.add_bias(ad.matmul(verts, Tensor(rot.T)),
                      Tensor(-rot @ center))
    depth = ad.neg(ad.take_per_row(cam, np.full(n, 2, dtype=np.int64)))
    worst = float(depth.data.min())
    if worst <= NEAR_PLANE:
        idx = int(np.argmin(depth.data))
        raise BehindCameraError(
            f"vertex {idx} at depth {worst:.4f} <= near plane {NEAR_PLANE}")
    focal = 1.0 / np.tan(np.deg2rad(fov) / 2.0)
    sx = ad.div(ad.mul(ad.take_per_row(cam, np.zeros(n, np.int64)), focal), depth)
    sy = ad.div(ad.mul(ad.take_per_row(cam, np.ones(n, np.int64)), focal), depth)
    screen = ad.concat([ad.reshape(sx, (n, 1)), ad.reshape(sy, (n, 1))], axis=1)
    return screen, depth


def project_vertices(mesh: TriMesh, pose: Pose,
                     fov: float = DEFAULT_FOV) -> np.ndarray:
    """Per-vertex (screen x, screen y, depth) as a plain (V, 3) array."""
    screen, depth = project_points(Tensor(mesh.vertices), pose, fov)
    return np.column_stack([screen.data, depth.data])


# Pairs whose distance exceeds CUTOFF_SIGMAS * sigma_r are skipped: their
# coverage sigmoid is below 1e-7, invisible next to float32 resolution.
CUTOFF_SIGMAS = 16.2


def _candidate_pairs(verts2d: np.ndarray, faces: np.ndarray, res: int,
                     margin: float):
    """Sparse (face, row, col) pairs: every pixel center within ``margin``
    (L-inf) of a face bounding box.  Also returns pixels-per-face counts;
    pairs are grouped by face in face order."""
    tri = verts2d[faces]
    lo = tri.min(axis=1) - _f32(margin)
    hi = tri.max(axis=1) + _f32(margin)
    # pixel center x of column j is -1 + (2j+1)/res, y of row i is 1 - (2i+1)/res
    j0 = np.maximum(np.ceil((lo[:, 0] + 1) * (res / 2) - 0.5), 0).astype(np.int32)
    j1 = np.minimum(np.floor((hi[:, 0] + 1) * (res / 2) - 0.5), res - 1).astype(np.int32)
    i0 = np.maximum(np.ceil((1 - hi[:, 1]) * (res / 2) - 0.5), 0).astype(np.int32)
    i1 = np.minimum(np.floor((1 - lo[:, 1]) * (res / 2) - 0.5), res - 1).astype(np.int32)
    ncols = np.maximum(j1 - j0 + 1, 0)
    nrows = np.maximum(i1 - i0 + 1, 0)
    counts = ncols * nrows
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int32)
        return empty, empty, empty, counts
    face_idx = np.repeat(np.arange(len(faces), dtype=np.int32), counts)
    start = np.concatenate([[0], np.cumsum(counts[:-1], dtype=np.int64)])
    k = np.arange(total, dtype=np.int64) - np.repeat(start, counts)
    within_row, within_col = np.divmod(k.astype(np.int32),
                                       np.repeat(ncols, counts))
    rows = np.repeat(i0, counts) + within_row
    cols = np.repeat(j0, counts) + within_col
    return face_idx, rows, cols, counts


def _pair_terms(verts2d: np.ndarray, faces: np.ndarray, face_idx: np.ndarray,
                px: np.ndarray, py: np.ndarray):
    """Closest-edge data per candidate (pixel, face) pair.

    Returns distance, foot parameter t on the closest edge, closest edge
    index (0..2) and the inside sign (+1/-1, positive inside).  This is
    the innermost loop of training, so it reuses a small set of scratch
    buffers instead of allocating per operation.
    """
    m = len(px)
    best_d = np.full(m, np.inf, dtype=_f32)
    best_t = np.zeros(m, dtype=_f32)
    best_e = np.zeros(m, dtype=np.int8)
    all_pos = np.ones(m, dtype=bool)
    all_neg = np.ones(m, dtype=bool)
    ax, ay, abx, aby = (np.empty(m, _f32) for _ in range(4))
    apx, apy, t, w1, w2 = (np.empty(m, _f32) for _ in range(5))
    mask = np.empty(m, dtype=bool)
    for e in range(3):
        a = verts2d[faces[:, e]]
        ab = verts2d[faces[:, (e + 1) % 3]] - a
        inv = 1.0 / (ab[:, 0] * ab[:, 0] + ab[:, 1] * ab[:, 1] + 1e-12)
        np.take(a[:, 0], face_idx, out=ax)
        np.take(a[:, 1], face_idx, out=ay)
        np.take(ab[:, 0], face_idx, out=abx)
        np.take(ab[:, 1], face_idx, out=aby)
        np.subtract(px, ax, out=apx)
        np.subtract(py, ay, out=apy)
        np.multiply(apx, abx, out=t)
        np.multiply(apy, aby, out=w1)
        t += w1
        np.take(inv, face_idx, out=w1)
        t *= w1
        np.clip(t, 0.0, 1.0, out=t)
        # squared point-to-segment distance into w1
        np.multiply(t, abx, out=w1)
        np.subtract(apx, w1, out=w1)
        w1 *= w1
        np.multiply(t, aby, out=w2)
        np.subtract(apy, w2, out=w2)
        w2 *= w2
        w1 += w2
        # edge cross product into w2 (consumes abx)
        np.multiply(abx, apy, out=w2)
        np.multiply(aby, apx, out=abx)
        w2 -= abx
        np.greater_equal(w2, 0.0, out=mask)
        all_pos &= mask
        np.less_equal(w2, 0.0, out=mask)
        all_neg &= mask
        np.less(w1, best_d, out=mask)
        np.copyto(best_d, w1, where=mask)
        np.copyto(best_t, t, where=mask)
        np.copyto(best_e, np.int8(e), where=mask)
    np.logical_or(all_pos, all_neg, out=all_pos)
    sign = all_pos.astype(_f32)
    sign *= 2.0
    sign -= 1.0
    np.maximum(best_d, 1e-18, out=best_d)
    dist = np.sqrt(best_d, out=best_d)
    return dist, best_t, best_e, sign


# Above this many candidate pairs the backward pass recomputes the
# working set instead of caching it (roughly a 200 MB cap).
_CACHE_LIMIT = 8_000_000


def rasterize_silhouettes(screen, faces: np.ndarray, n_images: int,
                          resolution: int, sigma_r: float = 0.02) -> Tensor:
    """Soft silhouettes for a batch of meshes sharing one vertex tensor.

    ``screen`` holds ``n_images`` vertex blocks stacked along axis 0 and
    ``faces`` indexes into that stack, image-major (see
    ``mesh.tile_mesh_indices``).  Returns an (n_images, res, res) tensor.
    The face product is accumulated as a sum of log(1 - s) per pixel, and
    pairs beyond CUTOFF_SIGMAS * sigma_r are skipped (coverage < 1e-7).
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    if sigma_r <= 0:
        raise ValueError("sigma_r must be positive")
    screen_t = ad.as_tensor(screen)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if screen_t.data.ndim != 2 or screen_t.data.shape[1] != 2:
        raise ValueError("screen vertices must be (V, 2)")
    n_verts = screen_t.data.shape[0]
    if faces.size and faces.max() >= n_verts:
        raise ValueError("face index out of range")
    if n_images < 1 or len(faces) % n_images:
        raise ValueError("faces must tile evenly across images")
    per_image = len(faces) // n_images
    res = resolution
    verts2d = screen_t.data.copy()
    faces32 = faces.astype(np.int32)

    face_idx, prows, pcols, counts = _candidate_pairs(verts2d, faces32, res,
                                                      CUTOFF_SIGMAS * sigma_r)
    m = len(face_idx)
    px = (2 * pcols + 1).astype(_f32)
    px /= res
    px -= 1.0
    py = (2 * prows + 1).astype(_f32)
    py /= res
    np.subtract(1.0, py, out=py)
    image_offset = (np.arange(len(faces32), dtype=np.int64) // per_image) * (res * res)
    pix_idx = np.repeat(image_offset, counts)
    pix_idx += prows.astype(np.int64) * res
    pix_idx += pcols

    def working_set():
        dist, t, eidx, sign = _pair_terms(verts2d, faces32, face_idx, px, py)
        s = dist * sign
        s /= _f32(sigma_r)
        expit(s, out=s)
        np.clip(s, None, 1.0 - 1e-7, out=s)
        logq = np.log1p(-s)
        return dist, t, eidx, sign, s, logq

    terms = working_set()
    log_free = np.bincount(pix_idx, weights=terms[5],
                           minlength=n_images * res * res)
    out_data = (1.0 - np.exp(log_free)).astype(_f32).reshape(n_images, res, res)
    cached = terms if m <= _CACHE_LIMIT else None

    def bw(g):
        dist, t, eidx, sign, s, logq = cached if cached else working_set()
        # coeff = d(pixel)/d(dist) / dist, built in place:
        # leave-one-out product, times upstream grad, times sigmoid slope
        buf64 = np.empty(m, np.float64)
        np.take(log_free, pix_idx, out=buf64)
        buf64 -= logq
        coeff = buf64.astype(_f32)
        np.exp(coeff, out=coeff)
        w1 = np.empty(m, _f32)
        np.take(np.ascontiguousarray(g.reshape(-1)), pix_idx, out=w1)
        coeff *= w1
        np.subtract(1.0, s, out=w1)
        w1 *= s
        coeff *= w1
        coeff *= sign
        coeff /= _f32(sigma_r)
        coeff /= dist

        # vertex ids at the ends of each pair's closest edge
        ia = np.multiply(face_idx, 3, dtype=np.int64)
        ia += eidx
        ib = np.multiply(face_idx, 3, dtype=np.int64)
        ib += (eidx + 1) % 3
        flat = faces32.reshape(-1)
        np.take(flat, ia, out=ia.view(np.int64)[:0] if False else None) \
            if False else None
        ia = flat[ia].astype(np.int64)
        ib = flat[ib].astype(np.int64)

        vx = np.ascontiguousarray(verts2d[:, 0])
        vy = np.ascontiguousarray(verts2d[:, 1])
        ax = np.empty(m, _f32)
        qx = np.empty(m, _f32)
        np.take(vx, ia, out=ax)
        np.take(vx, ib, out=qx)
        qx -= ax
        qx *= t
        qx += ax
        qx -= px                                       # foot x minus pixel x
        qy = np.empty(m, _f32)
        np.take(vy, ia, out=ax)
        np.take(vy, ib, out=qy)
        qy -= ax
        qy *= t
        qy += ax
        qy -= py                                       # foot y minus pixel y

        np.subtract(1.0, t, out=ax)                    # weight of vertex a
        ax *= coeff
        coeff *= t                                     # weight of vertex b
        gxa = np.bincount(ia, weights=ax * qx, minlength=n_verts)
        gxa += np.bincount(ib, weights=coeff * qx, minlength=n_verts)
        qx *= 0.0                                      # reuse as y weights
        gya = np.bincount(ia, weights=ax * qy, minlength=n_verts)
        gya += np.bincount(ib, weights=coeff * qy, minlength=n_verts)
        return ((screen_t, np.stack([gxa, gya], axis=1).astype(_f32)),)

    return ad._make(out_data, (screen_t,), bw)


def rasterize_silhouette(screen, faces: np.ndarray, resolution: int,
                         sigma_r: float = 0.02) -> Tensor:
    """Soft silhouette of one projected mesh; differentiable in ``screen``.

    ``screen`` is a (V, 2) tensor or array in [-1, 1] coordinates.  The
    output approaches the binary coverage mask as sigma_r tends to 0.
    """
    batch = rasterize_silhouettes(screen, faces, 1, resolution, sigma_r)
    return ad.reshape(batch, (resolution, resolution))


def render_silhouette(mesh: TriMesh, pose: Pose, resolution: int = 64,
                      sigma_r: float = 0.02, fov: float = DEFAULT_FOV) -> np.ndarray:
    """Render a mesh to a soft silhouette array (no gradients retained)."""
    screen, _ = project_points(Tensor(mesh.vertices), pose, fov)
    return rasterize_silhouette(screen.data, mesh.faces, resolution, sigma_r).data


def soft_iou(a, b):
    """Soft intersection over union of two silhouettes.

    Accepts tensors or arrays; returns a Tensor when either input is one,
    otherwise a float.  Raises UndefinedIoUError when both are zero.
    """
    tensor_mode = isinstance(a, Tensor) or isinstance(b, Tensor)
    at, bt = ad.as_tensor(a), ad.as_tensor(b)
    if at.data.shape != bt.data.shape:
        raise ValueError("silhouette shapes must match")
    inter = ad.sum(ad.mul(at, bt))
    union = ad.sub(ad.add(ad.sum(at), ad.sum(bt)), inter)
    if float(union.data) == 0.0:
        raise UndefinedIoUError("both silhouettes are identically zero")
    iou = ad.div(inter, union)
    return iou if tensor_mode else iou.item()


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a [0, 1] float image as binary 8-bit PGM (P5)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("image must be 2-d")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Read a binary 8-bit PGM back to a float32 [0, 1] image."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":                  # comment line
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1
    if len(raw) - pos < w * h:
        raise ValueError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return (data.reshape(h, w).astype(_f32)) / 255.0
