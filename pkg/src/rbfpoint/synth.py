"""Synthetic desk-scale datasets.

Real MNIST/ModelNet downloads are not assumed to be available, so the
harness can fabricate stand-ins that flow through the exact same ingestion
paths: rendered digit glyphs written as genuine IDX files, and procedural
meshes serialized as OFF text before being parsed and surface-sampled.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from . import data
from .data import Dataset, PointCloud, TriangleMesh, mnist_to_points, parse_off, sample_surface

FONT_DIR = "/usr/share/fonts/truetype/dejavu"
FONT_FILES = [
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSansMono.ttf",
]


def _render_digit(digit: int, rng) -> np.ndarray:
    """One 28x28 grayscale digit image with random font, pose and scale."""
    font_file = FONT_FILES[rng.integers(len(FONT_FILES))]
    size = int(rng.integers(30, 46))
    font = ImageFont.truetype(os.path.join(FONT_DIR, font_file), size=size)
    canvas = Image.new("L", (56, 56), 0)
    draw = ImageDraw.Draw(canvas)
    left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
    cx = (56 - (right - left)) / 2 - left + rng.uniform(-5, 5)
    cy = (56 - (bottom - top)) / 2 - top + rng.uniform(-5, 5)
    draw.text((cx, cy), str(digit), fill=255, font=font)
    angle = rng.uniform(-20.0, 20.0)
    canvas = canvas.rotate(angle, resample=Image.BILINEAR)
    small = canvas.resize((28, 28), resample=Image.BILINEAR)
    return np.array(small)


def make_digit_corpus(out_dir, n_train=10_000, n_test=2_000, seed=0):
    """Write an MNIST-shaped IDX corpus of rendered digits; returns the paths.

    Files follow the MNIST naming convention so any IDX pipeline can read
    them. Existing files are reused (the corpus is deterministic per seed).
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train_images": os.path.join(out_dir, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(out_dir, "train-labels-idx1-ubyte"),
        "test_images": os.path.join(out_dir, "t10k-images-idx3-ubyte"),
        "test_labels": os.path.join(out_dir, "t10k-labels-idx1-ubyte"),
    }
    if all(os.path.exists(p) for p in paths.values()):
        return paths
    rng = np.random.default_rng(seed)
    for split, count in (("train", n_train), ("test", n_test)):
        labels = rng.integers(0, 10, size=count).astype(np.uint8)
        images = np.stack([_render_digit(int(d), rng) for d in labels])
        data.save_idx_images(paths[f"{split}_images"], images)
        data.save_idx_labels(paths[f"{split}_labels"], labels)
    return paths


def load_digit_dataset(
    idx_dir, split="train", limit=None, n_points=256, seed=0
) -> Dataset:
    """IDX images + labels -> packed 2-D point-set dataset."""
    prefix = "train" if split == "train" else "t10k"
    images = data.load_idx_images(os.path.join(idx_dir, f"{prefix}-images-idx3-ubyte"))
    labels = data.load_idx_labels(os.path.join(idx_dir, f"{prefix}-labels-idx1-ubyte"))
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D]))
    clouds = []
    for img, label in zip(images, labels):
        cloud = mnist_to_points(img, n=n_points, rng=rng)
        cloud.label = int(label)
        clouds.append(cloud)
    return data.pack_clouds(clouds)


# ---- procedural meshes ----


def uv_sphere(n_lat=10, n_lon=14) -> TriangleMesh:
    verts = [(0.0, 0.0, 1.0)]
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        for j in range(n_lon):
            theta = 2 * np.pi * j / n_lon
            verts.append(
                (np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi))
            )
    verts.append((0.0, 0.0, -1.0))
    bottom = len(verts) - 1
    faces = []
    ring = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
        faces.append((bottom, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    return TriangleMesh(np.array(verts), np.array(faces))


def box() -> TriangleMesh:
    verts = np.array(
        [[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float
    )
    quads = [
        (0, 1, 3, 2),
        (4, 6, 7, 5),
        (0, 4, 5, 1),
        (2, 3, 7, 6),
        (0, 2, 6, 4),
        (1, 5, 7, 3),
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(verts, np.array(faces))


def cylinder(n_seg=18) -> TriangleMesh:
    verts = []
    for z in (1.0, -1.0):
        for j in range(n_seg):
            theta = 2 * np.pi * j / n_seg
            verts.append((np.cos(theta), np.sin(theta), z))
    verts.append((0.0, 0.0, 1.0))
    verts.append((0.0, 0.0, -1.0))
    top_c, bot_c = len(verts) - 2, len(verts) - 1
    faces = []
    for j in range(n_seg):
        a, b = j, (j + 1) % n_seg
        c, d = n_seg + j, n_seg + (j + 1) % n_seg
        faces.append((a, c, d))
        faces.append((a, d, b))
        faces.append((top_c, a, b))
        faces.append((bot_c, d, c))
    return TriangleMesh(np.array(verts), np.array(faces))


def cone(n_seg=18) -> TriangleMesh:
    verts = [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    for j in range(n_seg):
        theta = 2 * np.pi * j / n_seg
        verts.append((np.cos(theta), np.sin(theta), -1.0))
    faces = []
    for j in range(n_seg):
        a, b = 2 + j, 2 + (j + 1) % n_seg
        faces.append((0, a, b))
        faces.append((1, b, a))
    return TriangleMesh(np.array(verts), np.array(faces))


def torus(major=1.0, minor=0.4, n_maj=14, n_min=10) -> TriangleMesh:
    verts = []
    for i in range(n_maj):
        u = 2 * np.pi * i / n_maj
        for j in range(n_min):
            v = 2 * np.pi * j / n_min
            verts.append(
                (
                    (major + minor * np.cos(v)) * np.cos(u),
                    (major + minor * np.cos(v)) * np.sin(u),
                    minor * np.sin(v),
                )
            )
    faces = []
    at = lambda i, j: (i % n_maj) * n_min + (j % n_min)
    for i in range(n_maj):
        for j in range(n_min):
            a, b = at(i, j), at(i + 1, j)
            c, d = at(i, j + 1), at(i + 1, j + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    return TriangleMesh(np.array(verts), np.array(faces))


SHAPE_BUILDERS = {
    "sphere": uv_sphere,
    "box": box,
    "cylinder": cylinder,
    "cone": cone,
    "torus": torus,
}


def mesh_to_off(mesh: TriangleMesh) -> str:
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(lines) + "\n"


def make_shape_dataset(
    n_per_class=32,
    n_points=128,
    seed=0,
    classes=("sphere", "box", "cylinder", "cone"),
    with_normals=False,
) -> Dataset:
    """Surface-sampled clouds of procedural shapes with per-sample scaling.

    Each base mesh round-trips through OFF text so the dataset exercises the
    same parser real mesh files would.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3D]))
    meshes = [parse_off(mesh_to_off(SHAPE_BUILDERS[c]())) for c in classes]
    clouds = []
    for label, mesh in enumerate(meshes):
        for _ in range(n_per_class):
            scale = rng.uniform(0.6, 1.4, size=3)
            scaled = TriangleMesh(mesh.vertices * scale, mesh.faces)
            cloud = sample_surface(scaled, n_points, rng)
            cloud.label = label
            if not with_normals:
                cloud.normals = None
            clouds.append(cloud)
    return data.pack_clouds(clouds, with_normals=with_normals)
