import itertools

import numpy as np
import pytest

from sublab import metricspace as ms
from sublab.errors import (
    DisconnectedGraph,
    EmptyFiberNet,
    NotSurjective,
    TooLarge,
    UncoveredTarget,
)
from sublab.metricspace import Correspondence, FiniteMetricSpace, NetReport


def euclidean_space(points, prefix="p"):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return FiniteMetricSpace([f"{prefix}{i}" for i in range(len(pts))], d)


def random_space(rng, n, prefix="p"):
    return euclidean_space(rng.random((n, 3)), prefix=prefix)


SINGLETON = FiniteMetricSpace(["s"], np.zeros((1, 1)))


class TestFiniteMetricSpace:
    def test_rejects_asymmetry(self):
        with pytest.raises(ValueError):
            FiniteMetricSpace(["a", "b"], np.array([[0.0, 1.0], [2.0, 0.0]]))

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError):
            FiniteMetricSpace(["a"], np.array([[1.0]]))

    def test_graph_space_satisfies_triangle_inequality(self):
        g = ms.graph_space(["a", "b", "c"], [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 5.0)])
        assert g.dist[0, 2] == 2.0
        assert g.triangle_defect() <= 1e-12

    def test_disconnected_graph_raises(self):
        with pytest.raises(DisconnectedGraph):
            ms.graph_space(["a", "b", "c"], [(0, 1, 1.0)])

    def test_csv_round_trip_bit_exact(self):
        rng = np.random.default_rng(0)
        X = random_space(rng, 5)
        text = ms.space_to_csv(X)
        Y = ms.space_from_csv(text)
        assert Y.labels == X.labels
        assert np.array_equal(Y.dist, X.dist)
        assert ms.space_to_csv(Y) == text

    def test_mesh_of_line(self):
        X = euclidean_space([0.0, 0.3, 1.0])
        assert X.mesh() == 0.7


class TestEpsNet:
    def test_five_point_line(self):
        X = euclidean_space([0.0, 0.25, 0.5, 0.75, 1.0])
        net = ms.eps_net(X, 0.25)
        assert net.covering_radius <= 0.25
        assert len(net.subset) <= 3
        # postcondition verified by independent recomputation
        assert net.covering_radius == ms.covering_radius(X, net.subset)

    def test_eps_at_least_diameter_single_point(self):
        X = euclidean_space([0.0, 0.25, 0.5])
        net = ms.eps_net(X, 10.0)
        assert net.subset == [0]
        assert net.covering_radius <= 10.0

    def test_circle_packing_lower_bound(self):
        n = 360
        ang = 2 * np.pi * np.arange(n) / n
        d = np.abs(ang[:, None] - ang[None, :])
        d = np.minimum(d, 2 * np.pi - d)
        X = FiniteMetricSpace([f"c{i}" for i in range(n)], d)
        eps = np.pi / 4
        net = ms.eps_net(X, eps)
        assert net.covering_radius <= eps
        # brute packing count: each eps-ball covers an arc of pi/2 at most
        assert len(net.subset) >= 4

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        X = random_space(rng, 40)
        a = ms.eps_net(X, 0.3)
        b = ms.eps_net(X, 0.3)
        assert a.subset == b.subset


class TestNetLemmaOps:
    def test_single_fiber_reduces_to_base_net(self):
        X = euclidean_space([0.0, 0.5, 1.0])
        base_net = NetReport(subset=[0, 2], covering_radius=0.5)
        merged = ms.merge_fiber_nets(base_net, [[0], [2]], X)
        assert merged.subset == [0, 2]
        assert merged.covering_radius == 0.5

    def test_empty_fiber_net_rejected(self):
        X = euclidean_space([0.0, 1.0])
        with pytest.raises(EmptyFiberNet):
            ms.merge_fiber_nets(NetReport([0], 1.0), [[]], X)

    def test_diameter_eps_two_points_cover(self):
        X = euclidean_space([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        eps = X.diameter()
        merged = ms.merge_fiber_nets(NetReport([0], eps), [[3]], X)
        assert merged.covering_radius <= 2 * eps

    def test_project_net_identity(self):
        X = euclidean_space([0.0, 0.5, 1.0])
        net = ms.eps_net(X, 0.5)
        projected = ms.project_net(net, np.arange(3), X)
        assert projected.subset == sorted(net.subset)
        assert projected.covering_radius == net.covering_radius

    def test_project_net_all_points(self):
        X = euclidean_space([0.0, 0.5, 1.0])
        net = NetReport(subset=[0, 1, 2], covering_radius=0.0)
        projected = ms.project_net(net, np.array([0, 0, 1]), euclidean_space([0.0, 1.0], "b"))
        assert projected.subset == [0, 1]
        assert projected.covering_radius == 0.0


class TestDistortion:
    def test_identity_zero(self):
        rng = np.random.default_rng(2)
        X = random_space(rng, 6)
        R = Correspondence(np.stack([np.arange(6), np.arange(6)], axis=-1))
        assert ms.distortion(R, X, X) == 0.0

    def test_two_points_vs_singleton(self):
        X = euclidean_space([0.0, 2.0])
        R = Correspondence(np.array([[0, 0], [1, 0]]))
        assert ms.distortion(R, X, SINGLETON) == 2.0
        assert ms.gh_upper(R, X, SINGLETON) == 1.0

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(3)
        X = random_space(rng, 4)
        Y = random_space(rng, 4, prefix="q")
        pairs = np.array([[0, 1], [1, 0], [2, 2], [3, 3], [1, 2]])
        R = Correspondence(pairs)
        brute = max(
            abs(X.dist[i, k] - Y.dist[j, l]) for (i, j) in pairs for (k, l) in pairs
        )
        assert ms.distortion(R, X, Y) == brute

    def test_not_surjective(self):
        X = euclidean_space([0.0, 1.0])
        R = Correspondence(np.array([[0, 0]]))
        with pytest.raises(NotSurjective):
            ms.distortion(R, X, SINGLETON)


class TestGHExact:
    def test_relabeling_gives_zero(self):
        rng = np.random.default_rng(4)
        X = random_space(rng, 4)
        perm = [2, 0, 3, 1]
        Y = FiniteMetricSpace([f"r{i}" for i in range(4)], X.dist[np.ix_(perm, perm)])
        assert ms.gh_exact(X, Y) == 0.0

    def test_equilateral_triangle_vs_singleton(self):
        tri = FiniteMetricSpace(
            list("abc"), np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
        )
        assert ms.gh_exact(tri, SINGLETON) == 0.5

    def test_two_segments(self):
        X = euclidean_space([0.0, 1.0])
        Y = euclidean_space([0.0, 2.0], "q")
        assert ms.gh_exact(X, Y) == 0.5

    def test_matches_full_subset_enumeration(self):
        # oracle: brute force over every surjective-both-ways subset of the pair grid
        rng = np.random.default_rng(5)
        for _ in range(6):
            X = random_space(rng, int(rng.integers(1, 4)))
            Y = random_space(rng, int(rng.integers(1, 4)), prefix="q")
            cells = list(itertools.product(range(X.n), range(Y.n)))
            best = np.inf
            for r in range(1, len(cells) + 1):
                for combo in itertools.combinations(cells, r):
                    P = np.array(combo)
                    if len(set(P[:, 0])) != X.n or len(set(P[:, 1])) != Y.n:
                        continue
                    best = min(best, 0.5 * ms.distortion(Correspondence(P), X, Y))
            assert abs(ms.gh_exact(X, Y) - best) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        for _ in range(8):
            X = random_space(rng, 4)
            Y = random_space(rng, 4, prefix="q")
            assert ms.gh_exact(X, Y) == ms.gh_exact(Y, X)

    def test_upper_bound_dominates_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            X = random_space(rng, 5)
            Y = random_space(rng, 5, prefix="q")
            exact = ms.gh_exact(X, Y)
            assert ms.gh_upper(ms.full_correspondence(X, Y), X, Y) >= exact - 1e-15

    def test_singleton_exact_is_half_diameter(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            X = random_space(rng, int(rng.integers(2, 7)))
            assert ms.gh_exact(X, SINGLETON) == X.diameter() / 2

    def test_too_large(self):
        rng = np.random.default_rng(9)
        X = random_space(rng, 7)
        Y = random_space(rng, 6, prefix="q")
        with pytest.raises(TooLarge):
            ms.gh_exact(X, Y)


class TestProjectionCorrespondence:
    def test_identity_map(self):
        R = ms.projection_correspondence(np.arange(5), 5)
        rng = np.random.default_rng(10)
        X = random_space(rng, 5)
        assert ms.distortion(R, X, X) == 0.0

    def test_uncovered_target(self):
        with pytest.raises(UncoveredTarget):
            ms.projection_correspondence(np.array([0, 0, 0]), 2)
