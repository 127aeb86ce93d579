"""Dataset ingestion and point-cloud transforms.

Covers the two input pipelines (MNIST-style IDX images -> 2-D point sets,
OFF meshes -> surface-sampled clouds with normals), cloud normalization,
train-time augmentation, and the test-time corruptions used by the
robustness experiments.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .nn import ParameterError, ShapeError, as_f64


class ParseError(ValueError):
    """Malformed input file; message carries the offending line number."""


@dataclass
class PointCloud:
    coords: np.ndarray  # [N, d]
    normals: np.ndarray | None = None  # [N, 3]
    label: int = -1

    def __post_init__(self):
        self.coords = as_f64(self.coords)
        if self.normals is not None:
            self.normals = as_f64(self.normals)
            if self.normals.shape[0] != self.coords.shape[0]:
                raise ShapeError(
                    f"{self.normals.shape[0]} normals for "
                    f"{self.coords.shape[0]} points"
                )

    @property
    def n(self) -> int:
        return self.coords.shape[0]


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # [V, 3]
    faces: np.ndarray  # [F, 3] int

    def __post_init__(self):
        self.vertices = as_f64(self.vertices)
        self.faces = np.asarray(self.faces, dtype=np.int64)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def normalize(cloud: PointCloud) -> PointCloud:
    """Center the centroid at the origin and scale the farthest point to norm 1.

    Tolerance-guarded so the operation is bit-level idempotent: a cloud that
    already satisfies the invariants passes through unchanged.
    """
    coords = cloud.coords
    centroid = coords.mean(axis=0)
    if np.linalg.norm(centroid) >= 1e-9:
        coords = coords - centroid
    max_norm = np.linalg.norm(coords, axis=1).max()
    if max_norm <= 0:
        raise ParameterError("degenerate cloud: all points coincide at the centroid")
    if abs(max_norm - 1.0) >= 1e-12:
        coords = coords / max_norm
    if coords is cloud.coords:
        return cloud
    return PointCloud(coords, cloud.normals, cloud.label)


# ---- OFF meshes ----


def parse_off(data) -> TriangleMesh:
    """Parse an OFF mesh; polygon faces are fan-triangulated.

    Accepts the ModelNet header quirk where the counts share the first line
    with the "OFF" keyword.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    lines = data.splitlines()

    def fail(lineno, msg):
        raise ParseError(f"OFF parse error at line {lineno + 1}: {msg}")

    pos = 0
    while pos < len(lines) and (not lines[pos].strip() or lines[pos].lstrip().startswith("#")):
        pos += 1
    if pos >= len(lines):
        fail(0, "empty file")
    header = lines[pos].strip()
    if not header.startswith("OFF"):
        fail(pos, f"expected OFF keyword, got {header[:20]!r}")
    rest = header[3:].strip()
    pos += 1
    if not rest:
        while pos < len(lines) and (not lines[pos].strip() or lines[pos].lstrip().startswith("#")):
            pos += 1
        if pos >= len(lines):
            fail(pos - 1, "missing element counts")
        rest = lines[pos].strip()
        pos += 1
    parts = rest.split()
    if len(parts) < 2:
        fail(pos - 1, f"expected vertex/face counts, got {rest!r}")
    try:
        n_vertices, n_faces = int(parts[0]), int(parts[1])
    except ValueError:
        fail(pos - 1, f"non-integer element counts {rest!r}")

    tokens = []
    token_lines = []
    for lineno in range(pos, len(lines)):
        line = lines[lineno].split("#", 1)[0]
        for tok in line.split():
            tokens.append(tok)
            token_lines.append(lineno)
    cursor = 0

    def take(count, what):
        nonlocal cursor
        if cursor + count > len(tokens):
            fail(len(lines) - 1, f"unexpected end of file while reading {what}")
        out = tokens[cursor : cursor + count]
        line = token_lines[cursor]
        cursor += count
        return out, line

    vertices = np.empty((n_vertices, 3))
    for i in range(n_vertices):
        toks, line = take(3, f"vertex {i}")
        try:
            vertices[i] = [float(t) for t in toks]
        except ValueError:
            fail(line, f"bad vertex coordinates {toks}")
    triangles = []
    for i in range(n_faces):
        toks, line = take(1, f"face {i}")
        try:
            k = int(toks[0])
        except ValueError:
            fail(line, f"bad face vertex count {toks[0]!r}")
        if k < 3:
            fail(line, f"face {i} has {k} vertices")
        idx, line = take(k, f"face {i} indices")
        try:
            idx = [int(t) for t in idx]
        except ValueError:
            fail(line, f"bad face indices {idx}")
        if any(j < 0 or j >= n_vertices for j in idx):
            fail(line, f"face {i} index out of range [0, {n_vertices})")
        for j in range(1, k - 1):
            triangles.append((idx[0], idx[j], idx[j + 1]))
    return TriangleMesh(vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3))


def sample_surface(mesh: TriangleMesh, n: int, rng, normalized=True) -> PointCloud:
    """Area-weighted uniform surface sampling; per-point face normals."""
    areas = mesh.face_areas()
    usable = areas > 1e-12
    if not usable.any():
        raise ParameterError("mesh has no non-degenerate faces to sample")
    areas = np.where(usable, areas, 0.0)
    probs = areas / areas.sum()
    face_idx = rng.choice(len(probs), size=n, p=probs)
    a = mesh.vertices[mesh.faces[face_idx, 0]]
    b = mesh.vertices[mesh.faces[face_idx, 1]]
    c = mesh.vertices[mesh.faces[face_idx, 2]]
    u = rng.random(n)
    v = rng.random(n)
    over = u + v > 1.0
    u[over] = 1.0 - u[over]
    v[over] = 1.0 - v[over]
    points = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    raw_normals = np.cross(b - a, c - a)
    normals = raw_normals / np.linalg.norm(raw_normals, axis=1, keepdims=True)
    cloud = PointCloud(points, normals)
    return normalize(cloud) if normalized else cloud


# ---- MNIST-style IDX ----

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open_maybe_gzip(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx_images(path) -> np.ndarray:
    with _open_maybe_gzip(path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != IDX_IMAGES_MAGIC:
            raise ParseError(
                f"bad IDX image magic 0x{magic:08x} in {path} "
                f"(expected 0x{IDX_IMAGES_MAGIC:08x})"
            )
        data = f.read(count * rows * cols)
    if len(data) != count * rows * cols:
        raise ParseError(f"truncated IDX image file {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    with _open_maybe_gzip(path) as f:
        magic, count = struct.unpack(">II", f.read(8))
        if magic != IDX_LABELS_MAGIC:
            raise ParseError(
                f"bad IDX label magic 0x{magic:08x} in {path} "
                f"(expected 0x{IDX_LABELS_MAGIC:08x})"
            )
        data = f.read(count)
    if len(data) != count:
        raise ParseError(f"truncated IDX label file {path}")
    return np.frombuffer(data, dtype=np.uint8).copy()


def save_idx_images(path, images: np.ndarray):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        f.write(images.tobytes())


def save_idx_labels(path, labels: np.ndarray):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


BRIGHT_THRESHOLD = 128


def mnist_to_points(image: np.ndarray, n: int = 256, rng=None) -> PointCloud:
    """Turn a grayscale digit image into a fixed-size 2-D point set.

    Pixels with intensity >= 128 become points at pixel centers mapped to
    [-1, 1]^2. Excess points are subsampled without replacement; shortfalls
    are filled by resampling with replacement, with uniform jitter of half a
    pixel width applied to the duplicates.
    """
    image = np.asarray(image)
    h, w = image.shape
    rows, cols = np.nonzero(image >= BRIGHT_THRESHOLD)
    if len(rows) == 0:
        raise ParameterError("image has no pixels above the brightness threshold")
    points = np.stack(
        [(cols + 0.5) / w * 2.0 - 1.0, (rows + 0.5) / h * 2.0 - 1.0], axis=1
    )
    if rng is None:
        rng = np.random.default_rng(0)
    count = len(points)
    if count > n:
        keep = rng.choice(count, size=n, replace=False)
        points = points[keep]
    elif count < n:
        extra_idx = rng.choice(count, size=n - count, replace=True)
        jitter = rng.uniform(-1.0 / (2 * w), 1.0 / (2 * w), size=(n - count, 2))
        points = np.concatenate([points, points[extra_idx] + jitter], axis=0)
    return PointCloud(points)


# ---- augmentation and corruption ----


@dataclass
class AugmentConfig:
    rotate: bool = True
    axis: str = "z"  # gravity axis for 3-D rotation; 2-D input rotates in-plane
    jitter_std: float = 0.01
    jitter_clip: float = 0.05
    forced_angle: float | None = None  # tests pin the rotation angle


_AXES = {"x": 0, "y": 1, "z": 2}


def _rotation_matrix(angle: float, d: int, axis: str) -> np.ndarray:
    ca, sa = np.cos(angle), np.sin(angle)
    if d == 2:
        return np.array([[ca, sa], [-sa, ca]])
    if axis not in _AXES:
        raise ParameterError(f"unknown gravity axis {axis!r}")
    k = _AXES[axis]
    i, j = [a for a in range(3) if a != k]
    rot = np.eye(d)
    rot[i, i] = ca
    rot[i, j] = sa
    rot[j, i] = -sa
    rot[j, j] = ca
    return rot


def augment(cloud: PointCloud, rng, config: AugmentConfig = AugmentConfig()) -> PointCloud:
    """Random horizontal rotation followed by clipped Gaussian coordinate jitter."""
    coords = cloud.coords
    normals = cloud.normals
    if config.rotate:
        angle = (
            config.forced_angle
            if config.forced_angle is not None
            else rng.uniform(0.0, 2.0 * np.pi)
        )
        rot = _rotation_matrix(angle, coords.shape[1], config.axis)
        coords = coords @ rot
        if normals is not None:
            normals = normals @ _rotation_matrix(angle, normals.shape[1], config.axis)
    if config.jitter_std > 0:
        jitter = rng.normal(0.0, config.jitter_std, size=coords.shape)
        np.clip(jitter, -config.jitter_clip, config.jitter_clip, out=jitter)
        coords = coords + jitter
    return PointCloud(coords, normals, cloud.label)


def corrupt_dropout(cloud: PointCloud, fraction: float, rng) -> PointCloud:
    """Keep a random subset of ceil(N * (1 - fraction)) points."""
    if not 0.0 <= fraction < 1.0:
        raise ParameterError(f"dropout fraction must be in [0, 1), got {fraction}")
    if fraction == 0.0:
        return cloud
    keep = int(np.ceil(cloud.n * (1.0 - fraction)))
    idx = np.sort(rng.choice(cloud.n, size=keep, replace=False))
    normals = cloud.normals[idx] if cloud.normals is not None else None
    return PointCloud(cloud.coords[idx], normals, cloud.label)


def corrupt_noise(cloud: PointCloud, std: float, rng) -> PointCloud:
    """Add i.i.d. Gaussian noise to every coordinate; no re-normalization."""
    if std < 0:
        raise ParameterError(f"noise std must be >= 0, got {std}")
    if std == 0.0:
        return cloud
    coords = cloud.coords + rng.normal(0.0, std, size=cloud.coords.shape)
    return PointCloud(coords, cloud.normals, cloud.label)


# ---- packed datasets ----

CACHE_VERSION = 1


@dataclass
class Dataset:
    """Fixed-size clouds packed into arrays: X [S, N, d_total], y [S]."""

    x: np.ndarray
    y: np.ndarray
    coord_dims: int = field(default=0)

    def __post_init__(self):
        self.x = as_f64(self.x)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.coord_dims == 0:
            self.coord_dims = min(3, self.x.shape[2])
        if self.x.shape[0] != self.y.shape[0]:
            raise ShapeError(f"{self.x.shape[0]} clouds vs {self.y.shape[0]} labels")

    def __len__(self):
        return self.x.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.x.shape[2] > self.coord_dims

    def save(self, path):
        np.savez(
            path,
            version=np.array([CACHE_VERSION]),
            x=self.x,
            y=self.y,
            coord_dims=np.array([self.coord_dims]),
        )

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            version = int(data["version"][0])
            if version != CACHE_VERSION:
                raise ParseError(f"unsupported dataset cache version {version}")
            return cls(data["x"], data["y"], int(data["coord_dims"][0]))


def pack_clouds(clouds, with_normals=False) -> Dataset:
    coords = np.stack([c.coords for c in clouds])
    if with_normals:
        normals = np.stack([c.normals for c in clouds])
        x = np.concatenate([coords, normals], axis=2)
    else:
        x = coords
    y = np.array([c.label for c in clouds], dtype=np.int64)
    return Dataset(x, y, coord_dims=coords.shape[2])


def augment_batch(x: np.ndarray, coord_dims: int, rng, config: AugmentConfig) -> np.ndarray:
    """Per-cloud augmentation over a packed batch [B, N, d_total]."""
    out = x.copy()
    b, _, d_total = x.shape
    for i in range(b):
        normals = out[i, :, coord_dims:] if d_total > coord_dims else None
        cloud = augment(PointCloud(out[i, :, :coord_dims], normals), rng, config)
        out[i, :, :coord_dims] = cloud.coords
        if cloud.normals is not None:
            out[i, :, coord_dims:] = cloud.normals
    return out
