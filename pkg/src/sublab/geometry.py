"""Coordinate-chart Riemannian manifolds: metrics, Christoffel symbols, geodesics, curves.

A manifold is a single coordinate box with optional periodic identifications.
Metric callables are batch-capable: they accept ``(..., d)`` coordinate arrays
and return ``(..., d, d)`` matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateMetric, LeftDomain, OutOfDomain

# Finite-difference step for metric derivatives (truncation vs roundoff at float64).
FD_METRIC_STEP = 1e-5
# Step for directional derivatives of vector fields (Lie brackets, basic lifts).
FLOW_STEP = 1e-4
# Smallest admissible metric eigenvalue.
EIGENVALUE_FLOOR = 1e-10
# Bound violations smaller than this are treated as roundoff.
BOUNDARY_SLACK = 1e-9


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    periodic: bool = False

    @property
    def period(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ManifoldModel:
    """Coordinate-domain manifold with a metric tensor field."""

    name: str
    dim: int
    axes: tuple[Axis, ...]
    metric_fn: Callable[[np.ndarray], np.ndarray]
    embedding_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if len(self.axes) != self.dim:
            raise ValueError(f"{self.name}: {len(self.axes)} axes for dim {self.dim}")


@dataclass(frozen=True)
class TangentVec:
    base: np.ndarray
    comp: np.ndarray


@dataclass(frozen=True)
class Curve:
    """Sampled curve: coordinates plus strictly increasing parameter values."""

    samples: np.ndarray  # (n, d)
    param: np.ndarray    # (n,)

    def __post_init__(self):
        if len(self.samples) != len(self.param):
            raise ValueError("samples and param lengths differ")
        if len(self.samples) == 0:
            raise ValueError("empty curve")
        if len(self.param) > 1 and not np.all(np.diff(self.param) > 0):
            raise ValueError("param must be strictly increasing")


def wrap_coords(M: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """Wrap periodic axes into [lo, lo+period); reject out-of-bound non-periodic ones."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    for i, ax in enumerate(M.axes):
        xi = out[..., i]
        if ax.periodic:
            out[..., i] = ax.lo + np.mod(xi - ax.lo, ax.period)
        else:
            if np.any(xi < ax.lo - BOUNDARY_SLACK) or np.any(xi > ax.hi + BOUNDARY_SLACK):
                raise OutOfDomain(f"{M.name}: axis {i} value outside [{ax.lo}, {ax.hi}]")
            out[..., i] = np.clip(xi, ax.lo, ax.hi)
    return out


def in_domain(M: ManifoldModel, x: np.ndarray) -> bool:
    try:
        wrap_coords(M, x)
    except OutOfDomain:
        return False
    return True


def coord_delta(M: ManifoldModel, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Minimal-image displacement end - start (periodic axes use the shortest representative)."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    delta = end - start
    for i, ax in enumerate(M.axes):
        if ax.periodic:
            p = ax.period
            delta[..., i] = (delta[..., i] + p / 2.0) % p - p / 2.0
    return delta


def metric_batch(M: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """Metric matrices at a batch of (already wrapped) points; no SPD checks."""
    g = np.asarray(M.metric_fn(np.asarray(x, dtype=float)), dtype=float)
    return g


def metric_at(M: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """Metric tensor at one point, validated symmetric positive definite."""
    x = wrap_coords(M, np.asarray(x, dtype=float))
    g = metric_batch(M, x)
    if g.shape != (M.dim, M.dim):
        raise DegenerateMetric(f"{M.name}: metric_fn returned shape {g.shape}")
    if np.max(np.abs(g - g.T)) > 1e-12:
        raise DegenerateMetric(f"{M.name}: metric not symmetric at {x}")
    w = np.linalg.eigvalsh(g)
    if w[0] <= EIGENVALUE_FLOOR:
        raise DegenerateMetric(f"{M.name}: eigenvalue {w[0]:.3e} at {x}")
    return g


def _fd_points(M: ManifoldModel, x: np.ndarray, h: float) -> np.ndarray:
    """Stencil x +/- h*e_i for all axes, shape (d, 2, d); wraps periodic axes."""
    d = M.dim
    pts = np.broadcast_to(x, (d, 2, d)).copy()
    for i in range(d):
        pts[i, 0, i] += h
        pts[i, 1, i] -= h
    return pts


def _check_fd_margin(M: ManifoldModel, x: np.ndarray, h: float) -> None:
    for i, ax in enumerate(M.axes):
        if not ax.periodic:
            xi = np.asarray(x)[..., i]
            if np.any(xi < ax.lo + h - BOUNDARY_SLACK) or np.any(xi > ax.hi - h + BOUNDARY_SLACK):
                raise OutOfDomain(
                    f"{M.name}: axis {i} within finite-difference step {h} of the boundary"
                )


def christoffel_batch(M: ManifoldModel, x: np.ndarray, h: float = FD_METRIC_STEP) -> np.ndarray:
    """Christoffel symbols Gamma^k_{ij} for a batch of points, shape (..., d, d, d).

    Metric derivatives by central differences with step ``h``, then the
    Levi-Civita formula contracted with the inverse metric.
    """
    x = wrap_coords(M, np.asarray(x, dtype=float))
    _check_fd_margin(M, x, h)
    d = M.dim
    lead = x.shape[:-1]
    # single metric evaluation over the whole +-h stencil
    shifts = np.concatenate([h * np.eye(d), -h * np.eye(d)])  # (2d, d)
    stencil = _wrap_periodic_only(M, x[..., None, :] + shifts)
    g_st = metric_batch(M, stencil)
    # dg[..., i, a, b] = d g_ab / d x_i
    dg = (g_st[..., :d, :, :] - g_st[..., d:, :, :]) / (2.0 * h)
    g = metric_batch(M, x)
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetric(f"{M.name}: metric not invertible") from exc
    gamma = 0.5 * (
        np.einsum("...kl,...ijl->...kij", ginv, dg)
        + np.einsum("...kl,...jil->...kij", ginv, dg)
        - np.einsum("...kl,...lij->...kij", ginv, dg)
    )
    return gamma


def _wrap_periodic_only(M: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """Wrap periodic axes without bound checks (FD stencils may touch the slack zone)."""
    out = x.copy()
    for i, ax in enumerate(M.axes):
        if ax.periodic:
            out[..., i] = ax.lo + np.mod(out[..., i] - ax.lo, ax.period)
    return out


def christoffel(M: ManifoldModel, x: np.ndarray, h: float = FD_METRIC_STEP) -> np.ndarray:
    """Christoffel symbols at a single point, shape (d, d, d), symmetric in (i, j)."""
    return christoffel_batch(M, np.asarray(x, dtype=float), h=h)


def norm(M: ManifoldModel, v: TangentVec) -> float:
    g = metric_at(M, v.base)
    return float(np.sqrt(v.comp @ g @ v.comp))


def inner(M: ManifoldModel, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    g = metric_at(M, x)
    return float(u @ g @ v)


def integrate_geodesic(M: ManifoldModel, start: TangentVec, T: float, steps: int) -> Curve:
    """Geodesic from ``start`` over parameter length ``T`` with a classical
    fourth-order one-step integrator on x'' = -Gamma(x)(x', x')."""
    if T == 0.0:
        x0 = wrap_coords(M, start.base)
        return Curve(samples=x0[None, :], param=np.zeros(1))
    if steps < 2:
        raise ValueError("steps must be >= 2")

    def rhs(x, v):
        gam = christoffel_batch(M, x)
        acc = -np.einsum("kij,i,j->k", gam, v, v)
        return v, acc

    dt = T / steps
    x = wrap_coords(M, np.asarray(start.base, dtype=float))
    v = np.asarray(start.comp, dtype=float).copy()
    samples = [x.copy()]
    params = [0.0]
    for k in range(steps):
        try:
            k1x, k1v = rhs(x, v)
            k2x, k2v = rhs(_wrap_periodic_only(M, x + 0.5 * dt * k1x), v + 0.5 * dt * k1v)
            k3x, k3v = rhs(_wrap_periodic_only(M, x + 0.5 * dt * k2x), v + 0.5 * dt * k2v)
            k4x, k4v = rhs(_wrap_periodic_only(M, x + dt * k3x), v + dt * k3v)
            x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            x = wrap_coords(M, x)
        except OutOfDomain as exc:
            raise LeftDomain(f"{M.name}: geodesic left the domain at step {k}") from exc
        samples.append(x.copy())
        params.append((k + 1) * dt)
    return Curve(samples=np.array(samples), param=np.array(params))


def curve_length(M: ManifoldModel, c: Curve) -> float:
    """Riemannian length by midpoint-rule segment sums."""
    if len(c.samples) < 2:
        return 0.0
    a = c.samples[:-1]
    delta = coord_delta(M, a, c.samples[1:])
    mid = _wrap_periodic_only(M, a + 0.5 * delta)
    g = metric_batch(M, mid)
    seg2 = np.einsum("ni,nij,nj->n", delta, g, delta)
    return float(np.sum(np.sqrt(np.maximum(seg2, 0.0))))


def sample_grid(M: ManifoldModel, resolution: Sequence[int] | int) -> np.ndarray:
    """Deterministic lattice over the domain, shape (N, d).

    Periodic axes omit the duplicate endpoint; non-periodic axes include both ends.
    """
    if np.isscalar(resolution):
        resolution = [int(resolution)] * M.dim
    if len(resolution) != M.dim:
        raise ValueError("one resolution per axis")
    axes_pts = []
    for ax, r in zip(M.axes, resolution):
        r = int(r)
        if r < 2:
            raise ValueError("resolution must be >= 2 per axis")
        if ax.periodic:
            axes_pts.append(ax.lo + ax.period * np.arange(r) / r)
        else:
            axes_pts.append(np.linspace(ax.lo, ax.hi, r))
    mesh = np.meshgrid(*axes_pts, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def validate_curve(M: ManifoldModel, c: Curve, max_step: float) -> None:
    """Check that consecutive samples stay within max_step after periodic unwrapping."""
    if len(c.samples) < 2:
        return
    deltas = coord_delta(M, c.samples[:-1], c.samples[1:])
    worst = float(np.abs(deltas).max())
    if worst >= max_step:
        raise ValueError(f"curve step {worst:.3e} exceeds max step {max_step:.3e}")


def interior_grid(M: ManifoldModel, resolution: Sequence[int] | int) -> np.ndarray:
    """Cell-center lattice, shape (N, d); never touches non-periodic boundaries."""
    if np.isscalar(resolution):
        resolution = [int(resolution)] * M.dim
    axes_pts = []
    for ax, r in zip(M.axes, resolution):
        r = int(r)
        if r < 2:
            raise ValueError("resolution must be >= 2 per axis")
        axes_pts.append(ax.lo + (ax.hi - ax.lo) * (np.arange(r) + 0.5) / r)
    mesh = np.meshgrid(*axes_pts, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def unwrap_samples(M: ManifoldModel, samples: np.ndarray) -> np.ndarray:
    """Continuous (non-wrapped) representative of a sampled curve."""
    out = np.asarray(samples, dtype=float).copy()
    for k in range(1, len(out)):
        out[k] = out[k - 1] + coord_delta(M, out[k - 1], out[k])
    return out


@dataclass
class CurveInterpolator:
    """Cubic-spline position/velocity view of a sampled curve."""

    M: ManifoldModel
    curve: Curve
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        unwrapped = unwrap_samples(self.M, self.curve.samples)
        self._spline = CubicSpline(self.curve.param, unwrapped, axis=0)
        self._vel = self._spline.derivative()

    def position(self, t: float) -> np.ndarray:
        return _wrap_periodic_only(self.M, np.asarray(self._spline(t), dtype=float))

    def velocity(self, t: float) -> np.ndarray:
        return np.asarray(self._vel(t), dtype=float)
