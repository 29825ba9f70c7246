import numpy as np
import pytest

from sublab import bundle as bd
from sublab import metricspace as ms
from sublab import spaces as sp
from sublab import submersion as sub
from sublab.bundle import PQParams
from sublab.scenarios import circle, make_product_sphere_circle, make_product_torus

TORUS = make_product_torus().submersion
SPHERE_CIRCLE = make_product_sphere_circle().submersion


class TestManifoldSpace:
    def test_circle_distances_exact(self):
        M = circle()
        space = sp.manifold_space(M, sp.axis_centers(M, [24])).space
        assert abs(space.diameter() - np.pi) < 1e-12
        # adjacent samples sit one cell apart
        assert abs(space.dist[0, 1] - 2 * np.pi / 24) < 1e-12

    def test_flat_torus_diagonal_inflation_bounded(self):
        M = TORUS.total
        space = sp.manifold_space(M, sp.axis_centers(M, [16, 16])).space
        pts = sp._grid_points(sp.axis_centers(M, [16, 16]))[0]
        from sublab.geometry import coord_delta

        rng = np.random.default_rng(0)
        idx = rng.integers(0, len(pts), size=(40, 2))
        for i, j in idx:
            true = np.linalg.norm(coord_delta(M, pts[i], pts[j]))
            got = space.dist[i, j]
            assert got >= true - 1e-9
            assert got <= true * 1.0824 + 1e-9  # 8-neighbor stencil limit sec(pi/8)

    def test_projection_match_is_exact_on_product_grid(self):
        total_axes = sp.axis_centers(TORUS.total, [12, 12])
        total = sp.manifold_space(TORUS.total, total_axes)
        base = sp.manifold_space(TORUS.base, [total_axes[0]])
        t2b = sp.match_projection(TORUS, total, base)
        proj = TORUS.project(total.points)
        assert np.allclose(proj[:, 0], base.points[t2b][:, 0], atol=1e-12)
        fibers = sp.fiber_partition(t2b, base.space.n)
        assert all(len(f) == 12 for f in fibers)


class TestUnitBundleSpace:
    def test_sphere_bundle_of_circle_is_two_circles(self):
        M = circle()
        pq = PQParams(1.0, 1.0)
        sm = sp.unit_bundle_space(bd.tangent_bundle(M), pq, sp.axis_centers(M, [24]), 2)
        n = sm.space.n
        assert n == 48
        labels = sm.space.labels
        i0 = labels.index("b0f0")
        # antipodal node on the same sheet: half circumference
        i_half = labels.index("b12f0")
        assert abs(sm.space.dist[i0, i_half] - np.pi) < 0.05 * np.pi
        # full loop via two half loops
        circumference = 2 * sm.space.dist[i0, i_half]
        assert abs(circumference - 2 * np.pi) < 0.05 * 2 * np.pi
        # crossing sheets costs the chordal fiber hop
        i_flip = labels.index("b0f1")
        assert abs(sm.space.dist[i0, i_flip] - 2 * 2 ** (-pq.p / 2) * 1.0) < 1e-9

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_fiber_circle_circumference_scales_with_p(self, p):
        pq = PQParams(p, 1.0)
        E = bd.horizontal_bundle(SPHERE_CIRCLE)
        axes = sp.axis_centers(SPHERE_CIRCLE.total, [4, 4, 4])
        e1 = sp.unit_bundle_space(E, pq, axes, 16)
        # sum of consecutive fiber-node distances over one grid point
        n_fib = e1.fiber_count
        total = 0.0
        for s in range(n_fib):
            total += e1.space.dist[s, (s + 1) % n_fib]
        expected = 2 * np.pi * 2 ** (-p / 2)
        assert abs(total - expected) < 0.05 * expected

    def test_coarsening_stability(self):
        pq = PQParams(1.0, 1.0)
        E = bd.horizontal_bundle(TORUS)
        fine = sp.unit_bundle_space(E, pq, sp.axis_centers(TORUS.total, [16, 16]), 2)
        coarse = sp.unit_bundle_space(E, pq, sp.axis_centers(TORUS.total, [8, 8]), 2)
        d_f = fine.space.diameter()
        d_c = coarse.space.diameter()
        assert abs(d_f - d_c) < 0.10 * d_f

    def test_bundle_matching_covers_sphere_bundle(self):
        pq = PQParams(1.0, 1.0)
        total_axes = sp.axis_centers(TORUS.total, [10, 10])
        e1 = sp.unit_bundle_space(bd.horizontal_bundle(TORUS), pq, total_axes, 2)
        sm = sp.unit_bundle_space(bd.tangent_bundle(TORUS.base), pq, [total_axes[0]], 2)
        b2s = sp.match_bundle_projection(TORUS, e1, sm)
        R = ms.projection_correspondence(b2s, sm.space.n)
        assert ms.gh_upper(R, e1.space, sm.space) <= np.pi / 2 + 1e-9


class TestFiberScaleCorrespondence:
    def test_distortion_bounded_by_scaled_fiber_diameter(self):
        # shrunk product fiber: correspondence distortion <= pi*c + mesh slack
        for c in (1.0, 0.5, 0.25):
            w = sub.WarpSpec(f=lambda x, c=c: np.full(np.asarray(x).shape[:-1], c), upper_bound=2.0)
            S_c = sub.warp_submersion(TORUS, w)
            total_axes = sp.axis_centers(TORUS.total, [12, 12])
            total = sp.manifold_space(S_c.total, total_axes)
            base = sp.manifold_space(S_c.base, [total_axes[0]])
            t2b = sp.match_projection(S_c, total, base)
            R = ms.projection_correspondence(t2b, base.space.n)
            dist = ms.distortion(R, total.space, base.space)
            assert dist <= np.pi * c * 1.05 + 1e-9
