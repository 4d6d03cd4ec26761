import numpy as np
import pytest

from dpcdenoise.geometry import (
    Frame,
    Sequence,
    build_neighbor_index,
    downsample_random,
    estimate_normals,
    farthest_point_sampling,
    knn,
    knn_point,
    mean_nn_distance,
    orient_normals,
    radius_neighbors,
)


def brute_knn(points, query, k, exclude=None):
    """Reference: sort all points by (distance, index), drop excluded, take k."""
    d = np.sqrt(np.sum((points - query) ** 2, axis=1))
    order = np.lexsort((np.arange(len(points)), d))
    if exclude is not None:
        order = order[order != exclude]
    return order[:k]


def random_cloud(n, seed, scale=1.0):
    return np.random.default_rng(seed).uniform(0, scale, (n, 3))


class TestFrame:
    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty"):
            Frame(np.empty((0, 3)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            Frame([[0.0, 0.0, np.nan]])

    def test_rejects_non_unit_normals(self):
        with pytest.raises(ValueError, match="unit"):
            Frame([[0.0, 0.0, 0.0]], normals=[[0.0, 0.0, 2.0]])

    def test_positions_read_only(self):
        f = Frame([[1.0, 2.0, 3.0]])
        with pytest.raises(ValueError):
            f.positions[0, 0] = 5.0

    def test_sequence_requires_increasing_indices(self):
        a = Frame([[0.0, 0.0, 0.0]], frame_index=1)
        b = Frame([[1.0, 0.0, 0.0]], frame_index=1)
        with pytest.raises(ValueError, match="increasing"):
            Sequence((a, b))


class TestKnn:
    def test_singleton_cloud_has_no_neighbors(self):
        idx = build_neighbor_index(Frame([[0.0, 0.0, 0.0]]))
        with pytest.raises(ValueError, match="k too large"):
            knn(idx, [0.0, 0.0, 0.0], 1, exclude_self=True)

    def test_query_at_existing_point_includes_it(self):
        f = Frame([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        idx = build_neighbor_index(f)
        assert knn(idx, [0.0, 0.0, 0.0], 1).tolist() == [0]

    def test_collinear_example(self):
        f = Frame([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        idx = build_neighbor_index(f)
        assert knn(idx, f.positions[2], 1, exclude_self=True).tolist() == [1]

    def test_tie_break_unit_square(self):
        corners = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
        idx = build_neighbor_index(Frame(np.asarray(corners, float)))
        # (1,0,0) and (0,1,0) tie at distance 1; the lower index wins.
        assert knn(idx, [0.0, 0.0, 0.0], 2).tolist() == [0, 1]
        assert knn(idx, [0.0, 0.0, 0.0], 3).tolist() == [0, 1, 2]

    def test_k_equals_n_returns_all_sorted(self):
        pts = random_cloud(20, 3)
        idx = build_neighbor_index(Frame(pts))
        q = np.array([0.5, 0.5, 0.5])
        assert knn(idx, q, 20).tolist() == brute_knn(pts, q, 20).tolist()

    def test_matches_brute_force_on_random_clouds(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            n = int(rng.integers(2, 120))
            pts = rng.uniform(-1, 1, (n, 3))
            idx = build_neighbor_index(Frame(pts))
            q = rng.uniform(-1, 1, 3)
            k = int(rng.integers(1, n + 1))
            assert knn(idx, q, k).tolist() == brute_knn(pts, q, k).tolist()

    def test_matches_brute_force_with_exact_ties(self):
        # Grid points produce many exactly equal distances.
        g = np.arange(4, dtype=float)
        pts = np.array([(x, y, z) for x in g for y in g for z in g])
        idx = build_neighbor_index(Frame(pts))
        for qi in (0, 21, 37, 63):
            for k in (1, 5, 17):
                got = knn_point(idx, qi, k)
                want = brute_knn(pts, pts[qi], k, exclude=qi)
                assert got.tolist() == want.tolist()

    def test_knn_per_point_against_brute_force_500(self):
        pts = random_cloud(500, 7)
        idx = build_neighbor_index(Frame(pts))
        for i in range(0, 500, 37):
            got = knn_point(idx, i, 5)
            want = brute_knn(pts, pts[i], 5, exclude=i)
            assert got.tolist() == want.tolist()

    def test_radius_matches_brute_force(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 1, (200, 3))
        idx = build_neighbor_index(Frame(pts))
        q = rng.uniform(0, 1, 3)
        got = radius_neighbors(idx, q, 0.3)
        d = np.sqrt(np.sum((pts - q) ** 2, axis=1))
        want = np.flatnonzero(d < 0.3)
        assert sorted(got.tolist()) == want.tolist()
        assert np.all(np.diff(d[got]) >= 0)


class TestMeanNnDistance:
    def test_two_points(self):
        f = Frame([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        assert mean_nn_distance(f) == pytest.approx(2.0)

    def test_regular_grid_spacing(self):
        h = 0.25
        pts = np.column_stack([np.arange(10) * h, np.zeros(10), np.zeros(10)])
        assert mean_nn_distance(Frame(pts)) == pytest.approx(h)

    def test_matches_brute_force(self):
        pts = random_cloud(80, 11)
        f = Frame(pts)
        d = np.sqrt(np.sum((pts[:, None] - pts[None]) ** 2, axis=2))
        np.fill_diagonal(d, np.inf)
        assert mean_nn_distance(f) == pytest.approx(np.mean(d.min(axis=1)), abs=1e-12)

    def test_requires_two_points(self):
        with pytest.raises(ValueError, match="two points"):
            mean_nn_distance(Frame([[0.0, 0.0, 0.0]]))


class TestEstimateNormals:
    def test_plane_gives_unit_z(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(0, 1, (100, 2)), np.zeros(100)])
        out, degenerate = estimate_normals(Frame(pts), 10)
        assert degenerate == 0
        assert np.allclose(np.abs(out.normals[:, 2]), 1.0, atol=1e-9)

    def test_sphere_normals_radial(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(6000, 3))
        pts = 2.0 * v / np.linalg.norm(v, axis=1, keepdims=True)
        out, _ = estimate_normals(Frame(pts), 12)
        radial = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        cos = np.abs(np.einsum("ij,ij->i", out.normals, radial))
        assert np.all(cos >= np.cos(np.deg2rad(5.0)))

    def test_k_plane_too_small(self):
        with pytest.raises(ValueError, match="k_plane"):
            estimate_normals(Frame(random_cloud(10, 2)), 2)

    def test_degenerate_line_falls_back_to_up(self):
        pts = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
        out, degenerate = estimate_normals(Frame(pts), 4)
        assert degenerate == 10
        assert np.allclose(out.normals, [0.0, 0.0, 1.0])


class TestOrientNormals:
    def test_plane_all_up(self):
        rng = np.random.default_rng(3)
        pts = np.column_stack([rng.uniform(0, 1, (50, 2)), np.zeros(50)])
        signs = rng.choice([-1.0, 1.0], size=50)
        normals = np.column_stack([np.zeros(50), np.zeros(50), signs])
        out = orient_normals(Frame(pts, normals), 8)
        assert np.array_equal(out.normals, np.tile((0.0, 0.0, 1.0), (50, 1)))

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(0, 1, (60, 3))
        frame, _ = estimate_normals(Frame(pts), 8)
        once = orient_normals(frame, 8)
        twice = orient_normals(once, 8)
        assert np.array_equal(once.normals, twice.normals)

    def test_invariant_to_input_sign_flips(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 1, (80, 3))
        frame, _ = estimate_normals(Frame(pts), 8)
        flips = rng.choice([-1.0, 1.0], size=(80, 1))
        flipped = Frame(pts, frame.normals * flips)
        assert np.array_equal(
            orient_normals(frame, 8).normals, orient_normals(flipped, 8).normals
        )

    def test_requires_normals(self):
        with pytest.raises(ValueError, match="normals"):
            orient_normals(Frame(random_cloud(5, 0)))


def brute_fps(points, m, first):
    chosen = [first]
    min_sq = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(m - 1):
        best = int(np.flatnonzero(min_sq == min_sq.max())[0])
        chosen.append(best)
        min_sq = np.minimum(min_sq, np.sum((points - points[best]) ** 2, axis=1))
    return chosen


class TestFarthestPointSampling:
    def test_m_equals_n_is_permutation(self):
        f = Frame(random_cloud(30, 9))
        picks = farthest_point_sampling(f, 30, seed=0)
        assert sorted(picks.tolist()) == list(range(30))

    def test_line_example(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [10.0, 0, 0]])
        # Find a seed whose first pick is index 0, then the farthest is x=10.
        for seed in range(50):
            picks = farthest_point_sampling(Frame(pts), 2, seed=seed)
            if picks[0] == 0:
                assert picks[1] == 3
                break
        else:
            pytest.fail("no seed produced first pick 0")

    def test_matches_greedy_oracle(self):
        rng = np.random.default_rng(13)
        for trial in range(10):
            n = int(rng.integers(5, 200))
            pts = rng.uniform(0, 1, (n, 3))
            m = int(rng.integers(1, n + 1))
            seed = int(rng.integers(10_000))
            picks = farthest_point_sampling(Frame(pts), m, seed)
            assert picks.tolist() == brute_fps(pts, m, picks[0])

    def test_m_too_large(self):
        with pytest.raises(ValueError):
            farthest_point_sampling(Frame(random_cloud(5, 1)), 6, seed=0)


class TestDownsampleRandom:
    def test_rate_one_is_identity(self):
        f = Frame(random_cloud(17, 21))
        out = downsample_random(f, 1.0, seed=0)
        assert np.array_equal(out.positions, f.positions)

    def test_half_rate_cardinality(self):
        f = Frame(random_cloud(10, 22))
        out = downsample_random(f, 0.5, seed=3)
        assert len(out) == 5
        pos = {tuple(p) for p in f.positions}
        assert all(tuple(p) in pos for p in out.positions)

    def test_deterministic(self):
        f = Frame(random_cloud(40, 23))
        a = downsample_random(f, 0.3, seed=7)
        b = downsample_random(f, 0.3, seed=7)
        assert np.array_equal(a.positions, b.positions)

    def test_keeps_matching_normals(self):
        pts = random_cloud(20, 25)
        normals = np.tile((0.0, 0.0, 1.0), (20, 1))
        normals[::2] = (1.0, 0.0, 0.0)
        f = Frame(pts, normals)
        out = downsample_random(f, 0.4, seed=2)
        for p, n in zip(out.positions, out.normals):
            i = int(np.flatnonzero(np.all(pts == p, axis=1))[0])
            assert np.array_equal(n, normals[i])

    def test_bad_rate(self):
        f = Frame(random_cloud(4, 24))
        for rate in (0.0, 1.5, -0.1):
            with pytest.raises(ValueError):
                downsample_random(f, rate, seed=0)
