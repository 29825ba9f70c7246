"""Sampled realizations of manifolds and unit bundles as finite metric spaces.

Nodes live on deterministic lattices; edges connect stencil neighbors and carry
local Riemannian lengths; distances are graph geodesics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bundle import BundleContext, PQParams
from .errors import UnsupportedFiberSphere
from .geometry import (
    ManifoldModel,
    _wrap_periodic_only,
    christoffel_batch,
    coord_delta,
    metric_batch,
)
from .metricspace import FiniteMetricSpace, graph_space
from .submersion import SubmersionModel


@dataclass
class SampledSpace:
    space: FiniteMetricSpace
    points: np.ndarray                   # (N, d) carrying-manifold coordinates
    fibers: Optional[np.ndarray] = None  # (N, d) unit fiber vectors for bundle spaces
    fiber_count: int = 0                 # fiber samples per grid point (bundle spaces)
    grid_points: Optional[np.ndarray] = None  # distinct carrying-manifold samples


def axis_centers(M: ManifoldModel, resolution: Sequence[int] | int) -> list[np.ndarray]:
    """Per-axis cell-center sample values."""
    if np.isscalar(resolution):
        resolution = [int(resolution)] * M.dim
    out = []
    for ax, r in zip(M.axes, resolution):
        r = int(r)
        out.append(ax.lo + (ax.hi - ax.lo) * (np.arange(r) + 0.5) / r)
    return out


def _grid_points(axis_points: list[np.ndarray]) -> tuple[np.ndarray, tuple[int, ...]]:
    mesh = np.meshgrid(*axis_points, indexing="ij")
    shape = tuple(len(a) for a in axis_points)
    return np.stack([m.ravel() for m in mesh], axis=-1), shape


def _stencil_pairs(M: ManifoldModel, shape: tuple[int, ...]) -> np.ndarray:
    """Unordered index pairs of lattice stencil neighbors (all +-1 offsets per axis)."""
    d = len(shape)
    idx = np.indices(shape).reshape(d, -1).T  # (N, d) multi-indices
    strides = np.array([int(np.prod(shape[k + 1 :])) for k in range(d)])
    pairs = {}
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]
    for off in offsets:
        nbr = idx + np.array(off)
        ok = np.ones(len(idx), dtype=bool)
        for k in range(d):
            if M.axes[k].periodic:
                nbr[:, k] %= shape[k]
            else:
                ok &= (nbr[:, k] >= 0) & (nbr[:, k] < shape[k])
        src = np.nonzero(ok)[0]
        dst = nbr[ok] @ strides
        for a, b in zip(src, dst):
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            pairs[key] = None
    return np.array(sorted(pairs), dtype=int).reshape(-1, 2)


def _segment_lengths(M: ManifoldModel, x_from: np.ndarray, x_to: np.ndarray) -> np.ndarray:
    delta = coord_delta(M, x_from, x_to)
    mid = _wrap_periodic_only(M, x_from + 0.5 * delta)
    g = metric_batch(M, mid)
    return np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", delta, g, delta), 0.0))


def manifold_space(M: ManifoldModel, axis_points: list[np.ndarray]) -> SampledSpace:
    """Sampled (M, g) with stencil-graph geodesic distances."""
    pts, shape = _grid_points(axis_points)
    pairs = _stencil_pairs(M, shape)
    weights = _segment_lengths(M, pts[pairs[:, 0]], pts[pairs[:, 1]])
    labels = [f"p{i}" for i in range(len(pts))]
    edges = [(int(a), int(b), float(w)) for (a, b), w in zip(pairs, weights)]
    return SampledSpace(space=graph_space(labels, edges), points=pts)


def transport_step_batch(
    E: BundleContext, x_from: np.ndarray, x_to: np.ndarray, xi: np.ndarray
) -> np.ndarray:
    """One-step parallel transport of fiber vectors along connecting segments."""
    delta = coord_delta(E.manifold, x_from, x_to)
    mid = _wrap_periodic_only(E.manifold, x_from + 0.5 * delta)
    gamma = christoffel_batch(E.manifold, mid)
    moved = xi - np.einsum("nkij,ni,nj->nk", gamma, delta, xi)
    if E.submersion is not None:
        moved = np.einsum("nij,nj->ni", E.projector(x_to), moved)
    return moved


def _fiber_offsets(n_fib: int, sphere_dim: int) -> list[int]:
    if sphere_dim == 0:
        return [0, 1]  # stay, or hop to the antipode
    return [-1, 0, 1]


def _fiber_neighbor(s: np.ndarray, off: int, n_fib: int, sphere_dim: int) -> np.ndarray:
    if sphere_dim == 0:
        return s ^ off
    return (s + off) % n_fib


def unit_bundle_space(
    E: BundleContext,
    pq: PQParams,
    axis_points: list[np.ndarray],
    fiber_count: int,
) -> SampledSpace:
    """Sampled unit bundle with local (p,q)-lengths on edges.

    Edge weight between nearby bundle points: the carrying-manifold length of the
    base displacement combined with 2^(-p/2) times the fiber mismatch after a
    one-step parallel transport; the q-term is second order on the unit sphere
    and is dropped (grid-refinement tests cover the error).
    """
    sphere_dim = E.fiber_dim - 1
    if sphere_dim not in (0, 1):
        raise UnsupportedFiberSphere(f"fiber sphere dimension {sphere_dim} not sampled")
    pts, shape = _grid_points(axis_points)
    n_base = len(pts)
    frames = E.fiber_frame(pts)  # (N, fiber_dim, d)
    if sphere_dim == 0:
        n_fib = 2
        fibers = np.stack([frames[:, 0, :], -frames[:, 0, :]], axis=1)
    else:
        n_fib = int(fiber_count)
        ang = 2.0 * np.pi * np.arange(n_fib) / n_fib
        fibers = (
            np.cos(ang)[None, :, None] * frames[:, None, 0, :]
            + np.sin(ang)[None, :, None] * frames[:, None, 1, :]
        )  # (N, n_fib, d)

    base_pairs = _stencil_pairs(E.manifold, shape)
    same = np.arange(n_base)
    fiber_scale = 2.0 ** (-pq.p / 2.0)

    seen: dict[tuple[int, int], float] = {}
    ii: list[int] = []
    jj: list[int] = []
    xf: list[np.ndarray] = []
    xt: list[np.ndarray] = []
    fi: list[np.ndarray] = []
    ft: list[np.ndarray] = []

    def queue_edges(src_base, dst_base, s, t):
        for a, b, si, ti in zip(src_base, dst_base, s, t):
            u = int(a) * n_fib + int(si)
            v = int(b) * n_fib + int(ti)
            if u == v:
                continue
            key = (u, v) if u < v else (v, u)
            if key in seen:
                continue
            seen[key] = 0.0
            ii.append(u)
            jj.append(v)
            xf.append(pts[a])
            xt.append(pts[b])
            fi.append(fibers[a, si])
            ft.append(fibers[b, ti])

    for off in _fiber_offsets(n_fib, sphere_dim):
        for s in range(n_fib):
            t = int(_fiber_neighbor(np.array(s), off, n_fib, sphere_dim))
            if off != 0:  # same-base fiber moves
                queue_edges(same, same, np.full(n_base, s), np.full(n_base, t))
            queue_edges(base_pairs[:, 0], base_pairs[:, 1],
                        np.full(len(base_pairs), s), np.full(len(base_pairs), t))

    x_from = np.array(xf)
    x_to = np.array(xt)
    f_from = np.array(fi)
    f_to = np.array(ft)
    base_len = _segment_lengths(E.manifold, x_from, x_to)
    moved = transport_step_batch(E, x_from, x_to, f_from)
    g_to = metric_batch(E.manifold, x_to)
    mismatch = f_to - moved
    fiber_len = fiber_scale * np.sqrt(
        np.maximum(np.einsum("ni,nij,nj->n", mismatch, g_to, mismatch), 0.0)
    )
    weights = np.sqrt(base_len**2 + fiber_len**2)

    labels = [f"b{i}f{s}" for i in range(n_base) for s in range(n_fib)]
    edges = [(int(a), int(b), float(w)) for a, b, w in zip(ii, jj, weights)]
    node_pts = np.repeat(pts, n_fib, axis=0)
    node_fib = fibers.reshape(-1, fibers.shape[-1])
    return SampledSpace(
        space=graph_space(labels, edges),
        points=node_pts,
        fibers=node_fib,
        fiber_count=n_fib,
        grid_points=pts,
    )


def nearest_index_map(
    M: ManifoldModel, targets: np.ndarray, queries: np.ndarray
) -> np.ndarray:
    """Index of the nearest target sample for each query, minimal-image coordinates."""
    deltas = coord_delta(M, targets[None, :, :], queries[:, None, :])
    return np.argmin(np.einsum("qti,qti->qt", deltas, deltas), axis=1)


def match_projection(
    S: SubmersionModel, total: SampledSpace, base: SampledSpace
) -> np.ndarray:
    """For each total sample, the index of the nearest base sample to its projection."""
    proj = S.project(total.points)
    return nearest_index_map(S.base, base.points, proj)


def match_bundle_projection(
    S: SubmersionModel, bundle: SampledSpace, sphere: SampledSpace
) -> np.ndarray:
    """Match unit horizontal-bundle nodes to unit sphere-bundle nodes of the base.

    The base point maps by nearest projection; the fiber direction maps to the
    sampled sphere direction with the largest metric inner product.
    """
    proj = S.project(bundle.points)
    J = S.jacobian(bundle.points)
    pushed = np.einsum("nbd,nd->nb", J, bundle.fibers)
    n_fib = sphere.fiber_count
    base_idx = nearest_index_map(S.base, sphere.grid_points, proj)
    g = metric_batch(S.base, proj)
    out = np.empty(len(bundle.points), dtype=int)
    for k in range(len(bundle.points)):
        b = int(base_idx[k])
        dirs = sphere.fibers[b * n_fib : (b + 1) * n_fib]
        scores = dirs @ g[k] @ pushed[k]
        out[k] = b * n_fib + int(np.argmax(scores))
    return out


def fiber_partition(total_to_base: np.ndarray, n_base: int) -> list[list[int]]:
    """Total-sample indices over each base sample."""
    out: list[list[int]] = [[] for _ in range(n_base)]
    for i, j in enumerate(np.asarray(total_to_base, dtype=int)):
        out[j].append(int(i))
    return out
