"""TopoDisc: a dense disk plus a triangle boundary in the plane.

The disk pulls codebook entries toward its centroid; the triangle edges make
any inward warping of the embedding visible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeometryError, SchemaError

DISK = "disk"
TRIANGLE = "triangle"
MODES = (DISK, TRIANGLE)


@dataclass(frozen=True)
class TopoDiscConfig:
    n_disk: int = 400
    n_triangle: int = 275
    disk_center: tuple = (0.0, 0.0)
    disk_radius: float = 0.5
    triangle_vertices: tuple = ((-1.2, -1.0), (1.2, -1.0), (0.0, 1.1))
    seed: int = 0

    def __post_init__(self):
        if self.n_disk < 1 or self.n_triangle < 1:
            raise ConfigError(f"point counts must be >= 1, got {self.n_disk}, {self.n_triangle}")
        if not self.disk_radius > 0:
            raise ConfigError(f"disk_radius must be > 0, got {self.disk_radius}")
        _check_triangle(np.asarray(self.triangle_vertices, dtype=np.float64))


@dataclass
class TopoDisc:
    points: np.ndarray
    mode: np.ndarray  # str labels, one per row
    config: TopoDiscConfig | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.points)

    @property
    def disk_mask(self):
        return self.mode == DISK

    @property
    def triangle_mask(self):
        return self.mode == TRIANGLE


def _check_triangle(vertices):
    if vertices.shape != (3, 2):
        raise GeometryError(f"triangle needs three 2D vertices, got shape {vertices.shape}")
    a, b, c = vertices
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    scale = max(np.ptp(vertices[:, 0]), np.ptp(vertices[:, 1]), 1e-300)
    if abs(cross) <= 1e-12 * scale * scale:
        raise GeometryError(f"triangle vertices are collinear: {vertices.tolist()}")


def gen_disk(n, center, radius, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform over the disk area."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if not radius > 0:
        raise ConfigError(f"radius must be > 0, got {radius}")
    r = radius * np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    cx, cy = center
    return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])


def gen_triangle(n, vertices, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform by arc length on the triangle perimeter.

    Arc-length positions are stratified (one uniform draw per ``1/n`` slice of
    the perimeter), so even tiny ``n`` covers every edge.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    v = np.asarray(vertices, dtype=np.float64)
    _check_triangle(v)
    starts = v
    ends = np.roll(v, -1, axis=0)
    lengths = np.linalg.norm(ends - starts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    perimeter = cum[-1]

    s = (np.arange(n) + rng.uniform(size=n)) * (perimeter / n)
    edge = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, 2)
    frac = np.clip((s - cum[edge]) / lengths[edge], 0.0, 1.0)
    return starts[edge] + frac[:, None] * (ends[edge] - starts[edge])


def gen_topodisc(config: TopoDiscConfig | None = None) -> TopoDisc:
    config = config or TopoDiscConfig()
    rng = np.random.default_rng(config.seed)
    disk = gen_disk(config.n_disk, config.disk_center, config.disk_radius, rng)
    tri = gen_triangle(config.n_triangle, config.triangle_vertices, rng)
    mode = np.array([DISK] * config.n_disk + [TRIANGLE] * config.n_triangle)
    return TopoDisc(np.vstack([disk, tri]), mode, config)


def edge_distance(points, vertices) -> np.ndarray:
    """Distance from each point to the nearest triangle edge segment."""
    v = np.asarray(vertices, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64)
    best = np.full(len(p), np.inf)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        ab = b - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(p - (a + t[:, None] * ab), axis=1)
        best = np.minimum(best, d)
    return best


def save_csv(data: TopoDisc, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "mode"])
        for (x, y), m in zip(data.points, data.mode):
            w.writerow([repr(float(x)), repr(float(y)), m])


def load_csv(path) -> TopoDisc:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["x", "y", "mode"]:
            raise SchemaError(f"{path}: expected header x,y,mode, found {header}")
        xs, modes = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 or row[2] not in MODES:
                raise SchemaError(f"{path}:{lineno}: malformed row {row}")
            xs.append((float(row[0]), float(row[1])))
            modes.append(row[2])
    if not xs:
        raise SchemaError(f"{path}: no data rows")
    return TopoDisc(np.array(xs, dtype=np.float64), np.array(modes))
