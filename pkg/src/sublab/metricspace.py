"""Finite metric spaces, greedy nets, correspondences, and Gromov-Hausdorff machinery."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import (
    DisconnectedGraph,
    EmptyFiberNet,
    NotSurjective,
    TooLarge,
    UncoveredTarget,
)

# Exhaustive GH search is capped at this many correspondence cells.
GH_EXACT_CAP = 36
# Multiplicative slack absorbing graph-vs-geodesic error in the net lemma checks.
NET_SLACK = 1.05


@dataclass
class FiniteMetricSpace:
    labels: list[str]
    dist: np.ndarray

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=float)
        n = len(self.labels)
        if self.dist.shape != (n, n):
            raise ValueError("distance matrix shape does not match labels")
        if n < 1:
            raise ValueError("need at least one point")
        if np.max(np.abs(self.dist - self.dist.T)) > 1e-9:
            raise ValueError("distance matrix not symmetric")
        if np.max(np.abs(np.diag(self.dist))) > 1e-12:
            raise ValueError("nonzero diagonal")
        if np.any(self.dist < 0) or not np.all(np.isfinite(self.dist)):
            raise ValueError("distances must be finite and nonnegative")

    @property
    def n(self) -> int:
        return len(self.labels)

    def diameter(self) -> float:
        return float(self.dist.max())

    def mesh(self) -> float:
        """Largest nearest-neighbor gap among the samples."""
        if self.n == 1:
            return 0.0
        masked = self.dist + np.diag(np.full(self.n, np.inf))
        return float(masked.min(axis=1).max())

    def triangle_defect(self, pivots: int = 64) -> float:
        """Worst triangle-inequality violation; exact for small spaces, pivot-sampled otherwise."""
        idx = range(self.n) if self.n <= 300 else np.linspace(0, self.n - 1, pivots, dtype=int)
        worst = 0.0
        for k in idx:
            via = self.dist[:, k, None] + self.dist[None, k, :]
            worst = max(worst, float((self.dist - via).max()))
        return worst

    def restrict(self, indices: np.ndarray) -> "FiniteMetricSpace":
        indices = np.asarray(indices, dtype=int)
        return FiniteMetricSpace(
            labels=[self.labels[i] for i in indices],
            dist=self.dist[np.ix_(indices, indices)],
        )


def space_to_csv(X: FiniteMetricSpace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(X.labels)
    for row in X.dist:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def space_from_csv(text: str) -> FiniteMetricSpace:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError("empty CSV")
    labels = [c.strip() for c in rows[0]]
    dist = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    return FiniteMetricSpace(labels=labels, dist=dist)


def graph_space(labels: list[str], edges: list[tuple[int, int, float]]) -> FiniteMetricSpace:
    """All-pairs graph geodesics from an undirected weighted edge list."""
    n = len(labels)
    if edges:
        ii = np.fromiter((e[0] for e in edges), dtype=int, count=len(edges))
        jj = np.fromiter((e[1] for e in edges), dtype=int, count=len(edges))
        ww = np.fromiter((e[2] for e in edges), dtype=float, count=len(edges))
        adj = csr_matrix((ww, (ii, jj)), shape=(n, n))
    else:
        adj = csr_matrix((n, n))
    dist = shortest_path(adj, method="D", directed=False)
    if not np.all(np.isfinite(dist)):
        raise DisconnectedGraph(f"{int(np.sum(~np.isfinite(dist)))} unreachable pairs")
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return FiniteMetricSpace(labels=labels, dist=dist)


@dataclass
class NetReport:
    subset: list[int]
    covering_radius: float


def covering_radius(X: FiniteMetricSpace, subset: list[int]) -> float:
    return float(X.dist[:, list(subset)].min(axis=1).max())


def eps_net(X: FiniteMetricSpace, eps: float, candidates: list[int] | None = None) -> NetReport:
    """Greedy farthest-point net seeded at the first candidate; ties break at lowest index.

    ``candidates`` restricts which points may be selected; coverage is always
    measured over the whole space. The greedy loop stops once the covering radius
    drops to ``eps`` or the candidates are exhausted.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    cand = list(range(X.n)) if candidates is None else sorted(candidates)
    if not cand:
        return NetReport(subset=[], covering_radius=float("inf"))
    chosen = [cand[0]]
    dmin = X.dist[:, cand[0]].copy()
    remaining = set(cand[1:])
    while dmin.max() > eps and remaining:
        # farthest remaining candidate from the current net
        best_idx = -1
        best_val = -1.0
        for c in sorted(remaining):
            if dmin[c] > best_val:
                best_val = dmin[c]
                best_idx = c
        if best_val <= 0.0:
            break
        chosen.append(best_idx)
        remaining.discard(best_idx)
        np.minimum(dmin, X.dist[:, best_idx], out=dmin)
    return NetReport(subset=chosen, covering_radius=float(dmin.max()))


def merge_fiber_nets(
    base_net: NetReport,
    fiber_nets: list[list[int]],
    total_space: FiniteMetricSpace,
) -> NetReport:
    """Union of per-fiber nets (indices into the total space), radius recomputed there."""
    if len(fiber_nets) != len(base_net.subset):
        raise ValueError("one fiber net per base net point")
    merged: list[int] = []
    for k, net in enumerate(fiber_nets):
        if not net:
            raise EmptyFiberNet(f"fiber net over base net point {k} is empty")
        merged.extend(net)
    merged = sorted(set(merged))
    return NetReport(subset=merged, covering_radius=covering_radius(total_space, merged))


def project_net(
    net: NetReport, total_to_base: np.ndarray, base_space: FiniteMetricSpace
) -> NetReport:
    """Image of a total-space net under the sampled projection; duplicates merged."""
    total_to_base = np.asarray(total_to_base, dtype=int)
    image = sorted(set(int(total_to_base[i]) for i in net.subset))
    return NetReport(subset=image, covering_radius=covering_radius(base_space, image))


@dataclass
class Correspondence:
    pairs: np.ndarray  # (m, 2) index pairs

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=int)
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 2:
            raise ValueError("pairs must be (m, 2)")

    def check_surjective(self, nx: int, ny: int) -> None:
        if len(set(self.pairs[:, 0])) != nx or len(set(self.pairs[:, 1])) != ny:
            raise NotSurjective("correspondence must cover both spaces")


def distortion(R: Correspondence, X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    """Largest distance discrepancy over pairs of related points."""
    R.check_surjective(X.n, Y.n)
    I = R.pairs[:, 0]
    J = R.pairs[:, 1]
    return float(np.abs(X.dist[np.ix_(I, I)] - Y.dist[np.ix_(J, J)]).max())


def gh_upper(R: Correspondence, X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    """Gromov-Hausdorff upper bound: half the correspondence distortion."""
    return 0.5 * distortion(R, X, Y)


def full_correspondence(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> Correspondence:
    I, J = np.meshgrid(np.arange(X.n), np.arange(Y.n), indexing="ij")
    return Correspondence(pairs=np.stack([I.ravel(), J.ravel()], axis=-1))


def _all_maps(n_from: int, n_to: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(n_to)] * n_from), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1).astype(int)


def _map_distortion(D_from: np.ndarray, D_to: np.ndarray, maps: np.ndarray) -> np.ndarray:
    out = np.zeros(len(maps))
    n = D_from.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            np.maximum(out, np.abs(D_from[i, j] - D_to[maps[:, i], maps[:, j]]), out=out)
    return out


def gh_exact(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    """Exact Gromov-Hausdorff distance for desk-scale spaces.

    Minimizes half the distortion over all surjective-both-ways relations. Every
    minimal relation is a function graph union a cofunction graph, so the search
    enumerates those pairs, pruned by sorting on the one-sided distortions.
    """
    if X.n * Y.n > GH_EXACT_CAP:
        raise TooLarge(f"|X|*|Y| = {X.n * Y.n} exceeds cap {GH_EXACT_CAP}")
    DX, DY = X.dist, Y.dist
    n, m = X.n, Y.n
    phis = _all_maps(n, m)
    psis = _all_maps(m, n)
    A = _map_distortion(DX, DY, phis)
    B = _map_distortion(DY, DX, psis)
    order = np.argsort(A, kind="stable")
    phis, A = phis[order], A[order]
    order = np.argsort(B, kind="stable")
    psis, B = psis[order], B[order]
    best = np.inf
    for phi, a in zip(phis, A):
        if a >= best:
            break
        k = int(np.searchsorted(B, best, side="left")) if np.isfinite(best) else len(B)
        if k == 0:
            break
        cand = psis[:k]
        cross = np.zeros(len(cand))
        for i in range(n):
            for j in range(m):
                np.maximum(cross, np.abs(DX[i, cand[:, j]] - DY[phi[i], j]), out=cross)
        score = np.maximum(np.maximum(a, B[:k]), cross)
        best = min(best, float(score.min()))
    return 0.5 * best


def projection_correspondence(total_to_target: np.ndarray, n_target: int) -> Correspondence:
    """Correspondence induced by a sampled projection: each source index pairs with
    the nearest sampled image of its projection."""
    total_to_target = np.asarray(total_to_target, dtype=int)
    covered = set(int(t) for t in total_to_target)
    if covered != set(range(n_target)):
        missing = sorted(set(range(n_target)) - covered)
        raise UncoveredTarget(f"{len(missing)} target samples are not hit (first: {missing[:5]})")
    pairs = np.stack([np.arange(len(total_to_target)), total_to_target], axis=-1)
    return Correspondence(pairs=pairs)
