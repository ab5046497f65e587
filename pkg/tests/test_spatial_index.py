import math

import numpy as np
import pytest

from spatialsales import spatial_index as si
from spatialsales.spatial_index import (
    ProjectedPoint,
    build_grid,
    convex_hull,
    dilate_convex,
    load_graph_csv,
    neighbors_brute,
    neighbors_grid,
    project,
    save_graph_csv,
    search_space,
)


def _pts(coords):
    return [ProjectedPoint(f"p{i}", float(x), float(y)) for i, (x, y) in enumerate(coords)]


class TestProjection:
    def test_single_point_is_origin(self):
        pts, _ = project([("a", 40.7, -73.9)])
        assert pts[0].x == pytest.approx(0.0, abs=1e-9)
        assert pts[0].y == pytest.approx(0.0, abs=1e-9)

    def test_latitude_hundredth_degree(self):
        pts, _ = project([("a", 40.70, -73.9), ("b", 40.71, -73.9)])
        dy = pts[1].y - pts[0].y
        expected = si.EARTH_RADIUS_M * math.radians(0.01)
        assert dy == pytest.approx(expected, rel=1e-12)
        assert dy == pytest.approx(1111.9, abs=0.1)

    def test_round_trip_within_1e9_degrees(self):
        rng = np.random.default_rng(5)
        lat = 40.5 + rng.uniform(0, 0.5, 200)
        lon = -74.2 + rng.uniform(0, 0.5, 200)
        pts, proj = project(list(zip([str(i) for i in range(200)], lat, lon)))
        x = np.array([p.x for p in pts])
        y = np.array([p.y for p in pts])
        lat2, lon2 = proj.to_latlon(x, y)
        np.testing.assert_allclose(lat2, lat, rtol=0, atol=1e-9)
        np.testing.assert_allclose(lon2, lon, rtol=0, atol=1e-9)

    def test_empty_input(self):
        pts, _ = project([])
        assert pts == []


class TestGrid:
    def test_single_point_single_partition(self):
        parts = build_grid(_pts([(3.0, 4.0)]), 100.0)
        assert len(parts) == 1
        assert parts[0].point_ids == ["p0"]

    def test_four_corner_points(self):
        # 2x2 km square, points pulled inside to avoid the shared boundary
        coords = [(10.0, 10.0), (1990.0, 10.0), (10.0, 1990.0), (1990.0, 1990.0)]
        parts = build_grid(_pts(coords), 1000.0)
        assert len(parts) == 4
        assert all(len(p.point_ids) == 1 for p in parts)

    def test_identical_points_one_partition(self):
        parts = build_grid(_pts([(5.0, 5.0)] * 7), 50.0)
        assert len(parts) == 1
        assert len(parts[0].point_ids) == 7

    def test_nonfinite_rejected(self):
        with pytest.raises(si.SpatialIndexError):
            build_grid(_pts([(0.0, float("nan"))]), 10.0)

    def test_partition_union_is_point_set(self):
        rng = np.random.default_rng(0)
        pts = _pts(rng.uniform(0, 5000, size=(300, 2)))
        parts = build_grid(pts, 710.0)
        seen = sorted(i for p in parts for i in p.indices)
        assert seen == list(range(300))


class TestHullAndBuffer:
    def test_hull_of_square_plus_interior(self):
        xy = np.array([[0, 0], [10, 0], [10, 10], [0, 10], [5, 5], [2, 3]], float)
        hull = convex_hull(xy)
        assert len(hull) == 4

    def test_collinear_degenerates_to_segment(self):
        xy = np.array([[0, 0], [5, 5], [10, 10]], float)
        hull = convex_hull(xy)
        assert len(hull) == 2

    def test_buffer_contains_true_disc(self):
        # single point: polygon must contain the closed d-disc and not
        # overshoot by more than the chord tolerance
        poly = dilate_convex(np.array([[0.0, 0.0]]), 500.0)
        r = np.hypot(poly[:, 0], poly[:, 1])
        assert (r >= 500.0 - 1e-9).all()
        assert (r <= 500.0 + 0.01).all()

    def test_capsule_for_two_points(self):
        hull = np.array([[0.0, 0.0], [100.0, 0.0]])
        poly = dilate_convex(hull, 50.0)
        # point 49.9 m from the segment interior is inside, 50.2 m is not
        assert si._points_in_convex(poly, np.array([[50.0, 49.9]])).all()
        assert not si._points_in_convex(poly, np.array([[50.0, 50.2]])).any()


class TestSearchSpace:
    def test_single_point_partition_disc(self):
        pts = _pts([(0.0, 0.0), (499.0, 0.0), (501.0, 0.0), (0.0, -250.0)])
        parts = build_grid(pts, 100.0)
        part = next(p for p in parts if 0 in p.indices)
        ss = search_space(part, pts, 500.0)
        assert "p1" in ss.candidate_ids
        assert "p3" in ss.candidate_ids
        assert "p2" not in ss.candidate_ids

    def test_square_hull_against_exact_distance(self):
        # oracle: exact distance to the square vs polygon membership
        square = [(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]
        rng = np.random.default_rng(11)
        probes = rng.uniform(-700, 800, size=(1500, 2))
        d = 500.0
        hull = convex_hull(np.array(square))
        poly = dilate_convex(hull, d)
        inside = si._points_in_convex(poly, probes)
        # exact distance from each probe to the filled square
        dx = np.clip(np.maximum(0.0 - probes[:, 0], probes[:, 0] - 100.0), 0, None)
        dy = np.clip(np.maximum(0.0 - probes[:, 1], probes[:, 1] - 100.0), 0, None)
        dist = np.hypot(dx, dy)
        assert inside[dist <= d].all()  # never misses a true neighbor
        assert (dist[inside] <= d + 0.02).all()  # over-covers by < chord slack

    def test_no_external_points(self):
        pts = _pts([(0.0, 0.0), (10.0, 10.0), (20.0, 5.0)])
        parts = build_grid(pts, 1000.0)
        ss = search_space(parts[0], pts, 500.0)
        assert sorted(ss.candidate_ids) == ["p0", "p1", "p2"]


class TestNeighbors:
    def test_brute_empty(self):
        g = neighbors_brute([], 500.0)
        assert g.neighbors == {}

    def test_brute_collinear(self):
        pts = _pts([(0.0, 0.0), (400.0, 0.0), (800.0, 0.0)])
        g = neighbors_brute(pts, 500.0)
        assert [n for n, _ in g.neighbors["p0"]] == ["p1"]
        assert sorted(n for n, _ in g.neighbors["p1"]) == ["p0", "p2"]
        assert [n for n, _ in g.neighbors["p2"]] == ["p1"]

    def test_boundary_inclusive(self):
        g = neighbors_grid(_pts([(0.0, 0.0), (499.9, 0.0)]), 500.0)
        assert g.degree("p0") == 1 and g.degree("p1") == 1
        g = neighbors_grid(_pts([(0.0, 0.0), (500.1, 0.0)]), 500.0)
        assert g.degree("p0") == 0 and g.degree("p1") == 0

    def test_exact_distance_counts(self):
        g = neighbors_grid(_pts([(0.0, 0.0), (500.0, 0.0)]), 500.0)
        assert g.degree("p0") == 1

    def test_colocated_points_are_neighbors(self):
        g = neighbors_grid(_pts([(1.0, 1.0), (1.0, 1.0)]), 500.0)
        assert g.neighbors["p0"] == [("p1", 0.0)]

    def test_symmetry_irreflexivity(self):
        rng = np.random.default_rng(3)
        pts = _pts(rng.uniform(0, 3000, size=(250, 2)))
        g = neighbors_grid(pts, 500.0)
        for src, lst in g.neighbors.items():
            for dst, dist in lst:
                assert dst != src
                assert dist <= 500.0
                assert (src, dist) in [(a, b) for a, b in g.neighbors[dst]]

    def test_grid_equals_brute_uniform_1000(self):
        rng = np.random.default_rng(42)
        pts = _pts(rng.uniform(0, 6000, size=(1000, 2)))
        gg = neighbors_grid(pts, 500.0)
        gb = neighbors_brute(pts, 500.0)
        assert gg.neighbors == gb.neighbors

    def test_cell_size_invariance(self):
        rng = np.random.default_rng(7)
        pts = _pts(rng.uniform(0, 4000, size=(400, 2)))
        base = neighbors_grid(pts, 500.0, 500.0).neighbors
        for cs in (137.0, 250.0, 1350.0, 5000.0):
            assert neighbors_grid(pts, 500.0, cs).neighbors == base

    def test_clustered_and_duplicate_points(self):
        rng = np.random.default_rng(9)
        a = rng.normal(0, 120, size=(150, 2))
        b = rng.normal(2500, 80, size=(150, 2)) * [1, 0] + [0, 200]
        coords = np.vstack([a, b, a[:10]])  # exact duplicates included
        pts = _pts(coords)
        assert neighbors_grid(pts, 500.0).neighbors == neighbors_brute(pts, 500.0).neighbors


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        pts = _pts(rng.uniform(0, 2000, size=(120, 2)))
        g = neighbors_grid(pts, 500.0)
        path = tmp_path / "graph.csv"
        save_graph_csv(g, path)
        g2 = load_graph_csv(path, point_ids=[p.id for p in pts])
        assert g2.radius_m == g.radius_m
        assert g2.neighbors == g.neighbors

    def test_edge_list_sorted(self, tmp_path):
        pts = _pts([(0.0, 0.0), (100.0, 0.0), (50.0, 50.0)])
        g = neighbors_grid(pts, 500.0)
        edges = g.edges()
        assert edges == sorted(edges)
        assert all(a < b for a, b, _ in edges)


class TestBenchmark:
    def test_small_benchmark_rows(self, tmp_path):
        rows = si.benchmark_index(
            [200, 800], d=500.0, seed=0, out_csv=tmp_path / "b.csv", assert_faster=False
        )
        assert [r["n"] for r in rows] == [200, 800]
        assert (tmp_path / "b.csv").exists()
        assert rows[1]["edges"] > 0
