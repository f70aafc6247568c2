import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provq.errors import ConfigError, GeometryError, SchemaError
from provq.topodisc import (
    DISK, TRIANGLE, TopoDiscConfig, edge_distance, gen_disk, gen_topodisc, gen_triangle,
    load_csv, save_csv,
)

VERTS = ((-1.2, -1.0), (1.2, -1.0), (0.0, 1.1))


def seg_dist(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0, 1)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def test_disk_default_count_and_radius():
    pts = gen_disk(400, (0.0, 0.0), 0.5, np.random.default_rng(0))
    assert pts.shape == (400, 2)
    assert np.all(np.linalg.norm(pts, axis=1) <= 0.5)


def test_disk_rejects_zero_radius():
    with pytest.raises(ConfigError):
        gen_disk(1, (0.0, 0.0), 0.0, np.random.default_rng(0))


def test_disk_mean_radius_uniform_area():
    # E[r] = integral_0^1 r * 2r dr = 2/3 for a uniform-area unit disk
    pts = gen_disk(100_000, (0.0, 0.0), 1.0, np.random.default_rng(1))
    assert abs(np.linalg.norm(pts, axis=1).mean() - 2 / 3) < 0.01


def test_triangle_points_on_perimeter():
    pts = gen_triangle(275, VERTS, np.random.default_rng(0))
    assert pts.shape == (275, 2)
    assert np.all(edge_distance(pts, VERTS) < 1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_triangle_three_points_hit_every_edge(seed):
    pts = gen_triangle(3, VERTS, np.random.default_rng(seed))
    v = np.array(VERTS)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        assert seg_dist(pts, a, b).min() < 0.05


def test_triangle_edge_fractions_follow_length():
    v = np.array(VERTS)
    ends = np.roll(v, -1, axis=0)
    lengths = np.linalg.norm(ends - v, axis=1)
    pts = gen_triangle(100_000, VERTS, np.random.default_rng(2))
    d = np.column_stack([seg_dist(pts, a, b) for a, b in zip(v, ends)])
    frac = np.bincount(np.argmin(d, axis=1), minlength=3) / len(pts)
    np.testing.assert_allclose(frac, lengths / lengths.sum(), atol=0.01)


def test_collinear_vertices_rejected():
    with pytest.raises(GeometryError):
        gen_triangle(5, ((0, 0), (1, 1), (2, 2)), np.random.default_rng(0))
    with pytest.raises(GeometryError):
        TopoDiscConfig(triangle_vertices=((0, 0), (1, 0), (3, 0)))


def test_default_dataset():
    data = gen_topodisc()
    assert len(data) == 675
    assert np.sum(data.mode == DISK) == 400
    assert np.sum(data.mode == TRIANGLE) == 275
    assert np.all(np.linalg.norm(data.points[data.disk_mask], axis=1) <= 0.5)
    assert np.all(edge_distance(data.points[data.triangle_mask], VERTS) < 1e-9)


def test_seed_determinism():
    a, b = gen_topodisc(TopoDiscConfig(seed=3)), gen_topodisc(TopoDiscConfig(seed=3))
    assert a.points.tobytes() == b.points.tobytes()
    c = gen_topodisc(TopoDiscConfig(seed=4))
    assert not np.array_equal(a.points, c.points)


@settings(max_examples=30, deadline=None)
@given(
    n_disk=st.integers(1, 50),
    n_tri=st.integers(1, 50),
    cx=st.floats(-2, 2),
    cy=st.floats(-2, 2),
    radius=st.floats(0.01, 3),
    seed=st.integers(0, 2**31),
)
def test_partition_and_containment(n_disk, n_tri, cx, cy, radius, seed):
    cfg = TopoDiscConfig(n_disk=n_disk, n_triangle=n_tri, disk_center=(cx, cy),
                         disk_radius=radius, seed=seed)
    data = gen_topodisc(cfg)
    assert data.disk_mask.sum() == n_disk and data.triangle_mask.sum() == n_tri
    r = np.linalg.norm(data.points[data.disk_mask] - [cx, cy], axis=1)
    assert np.all(r <= radius * (1 + 1e-12))
    assert np.all(edge_distance(data.points[data.triangle_mask], cfg.triangle_vertices) < 1e-9)


def test_csv_round_trip(tmp_path):
    data = gen_topodisc()
    path = tmp_path / "d.csv"
    save_csv(data, path)
    assert path.read_text().splitlines()[0] == "x,y,mode"
    back = load_csv(path)
    assert back.points.tobytes() == data.points.tobytes()
    assert list(back.mode) == list(data.mode)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,disk\n")
    with pytest.raises(SchemaError):
        load_csv(path)
