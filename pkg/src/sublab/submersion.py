"""Riemannian submersions: splitting frames, horizontal lifts, bracket residuals, warping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    BasePointMismatch,
    LeftDomain,
    NonPositiveWarp,
    OutOfDomain,
    RankDeficient,
)
from .geometry import (
    FD_METRIC_STEP,
    FLOW_STEP,
    Curve,
    CurveInterpolator,
    ManifoldModel,
    TangentVec,
    _wrap_periodic_only,
    christoffel_batch,
    coord_delta,
    metric_batch,
    wrap_coords,
)

# Frames are dropped below this squared-norm threshold during Gram-Schmidt.
MGS_DROP_TOL = 1e-16
RANK_FLOOR = 1e-8


@dataclass(frozen=True)
class SubmersionModel:
    """Projection between manifolds with enough structure to split tangent spaces."""

    total: ManifoldModel
    base: ManifoldModel
    proj_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def fiber_dim(self) -> int:
        return self.total.dim - self.base.dim

    def project(self, x: np.ndarray) -> np.ndarray:
        return wrap_coords(self.base, np.asarray(self.proj_fn(np.asarray(x, dtype=float))))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """d(proj) as a (..., b, d_total) array."""
        x = np.asarray(x, dtype=float)
        if self.jacobian_fn is not None:
            return np.asarray(self.jacobian_fn(x), dtype=float)
        return _fd_jacobian(self, x, FD_METRIC_STEP)


def _fd_jacobian(S: SubmersionModel, x: np.ndarray, h: float) -> np.ndarray:
    d = S.total.dim
    cols = []
    for i in range(d):
        xp = x.copy()
        xp[..., i] += h
        xm = x.copy()
        xm[..., i] -= h
        pp = np.asarray(S.proj_fn(_wrap_periodic_only(S.total, xp)), dtype=float)
        pm = np.asarray(S.proj_fn(_wrap_periodic_only(S.total, xm)), dtype=float)
        # base-periodic-aware difference so seam crossings do not corrupt the column
        cols.append(coord_delta(S.base, pm, pp) / (2.0 * h))
    return np.stack(cols, axis=-1)


def gram_schmidt(vectors: np.ndarray, g: np.ndarray, keep: int | None = None) -> np.ndarray:
    """Modified Gram-Schmidt w.r.t. metric g, processing rows in order.

    Near-dependent rows are dropped. Batched: ``vectors`` (..., m, d), ``g`` (..., d, d).
    With a batch, callers must guarantee no row drops (same count everywhere).
    """
    vecs = np.asarray(vectors, dtype=float)
    if vecs.ndim == 2:
        out = []
        for v in vecs:
            w = v.copy()
            for u in out:
                w = w - (w @ g @ u) * u
            n2 = w @ g @ w
            if n2 > MGS_DROP_TOL:
                out.append(w / np.sqrt(n2))
            if keep is not None and len(out) == keep:
                break
        return np.array(out) if out else np.zeros((0, vecs.shape[-1]))
    # batched path: fixed row count, no drops
    out_rows = []
    for k in range(vecs.shape[-2]):
        w = vecs[..., k, :].copy()
        for u in out_rows:
            coeff = np.einsum("...i,...ij,...j->...", w, g, u)
            w = w - coeff[..., None] * u
        n2 = np.einsum("...i,...ij,...j->...", w, g, w)
        out_rows.append(w / np.sqrt(n2)[..., None])
        if keep is not None and len(out_rows) == keep:
            break
    return np.stack(out_rows, axis=-2)


def vertical_frames_batch(S: SubmersionModel, x: np.ndarray) -> np.ndarray:
    """g-orthonormal frames of ker(Jacobian) at a batch of points, shape (..., a, d)."""
    x = np.asarray(x, dtype=float)
    a, d = S.fiber_dim, S.total.dim
    J = S.jacobian(x)
    _, sv, vt = np.linalg.svd(J)
    if np.any(sv[..., S.base.dim - 1] < RANK_FLOOR):
        raise RankDeficient(f"{S.total.name}: projection Jacobian rank deficient")
    if a == 0:
        return np.zeros(x.shape[:-1] + (0, d))
    null = vt[..., S.base.dim :, :]
    g = metric_batch(S.total, x)
    return gram_schmidt(null, g)


def horizontal_frames_batch(S: SubmersionModel, x: np.ndarray) -> np.ndarray:
    """g-orthonormal frames of the orthogonal complement of the vertical space, (..., b, d)."""
    x = np.asarray(x, dtype=float)
    b, d = S.base.dim, S.total.dim
    g = metric_batch(S.total, x)
    vert = vertical_frames_batch(S, x)
    basis = np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()
    if vert.shape[-2]:
        coeff = np.einsum("...mi,...ij,...kj->...mk", basis, g, vert)
        basis = basis - np.einsum("...mk,...kj->...mj", coeff, vert)
    if x.ndim == 1:
        frame = gram_schmidt(basis, g, keep=b)
        if len(frame) != b:
            raise RankDeficient(f"{S.total.name}: horizontal frame incomplete")
        return frame
    # batched: keep coordinate rows that stay independent over the whole batch
    n2 = np.einsum("...mi,...ij,...mj->...m", basis, g, basis)
    good = np.where(n2.reshape(-1, d).min(axis=0) > 1e-12)[0]
    if len(good) < b:
        raise RankDeficient(f"{S.total.name}: horizontal candidate rows collapse in batch")
    frame = gram_schmidt(basis[..., good[:b], :], g, keep=b)
    if not np.all(np.isfinite(frame)):
        raise RankDeficient(f"{S.total.name}: horizontal frame degenerate in batch")
    return frame


def projector_batch(S: SubmersionModel, x: np.ndarray) -> np.ndarray:
    """Matrix of g-orthogonal projection onto the horizontal subspace, (..., d, d)."""
    g = metric_batch(S.total, x)
    H = horizontal_frames_batch(S, x)
    return np.einsum("...mi,...mj,...jk->...ik", H, H, g)


def vertical_space(S: SubmersionModel, x: np.ndarray) -> np.ndarray:
    """Orthonormal frame of the vertical space at one point, shape (a, d)."""
    return vertical_frames_batch(S, wrap_coords(S.total, np.asarray(x, dtype=float)))


def horizontal_space(S: SubmersionModel, x: np.ndarray) -> np.ndarray:
    """Orthonormal frame of the horizontal space at one point, shape (b, d)."""
    return horizontal_frames_batch(S, wrap_coords(S.total, np.asarray(x, dtype=float)))


def horizontal_lift_vector(S: SubmersionModel, x: np.ndarray, w: TangentVec) -> np.ndarray:
    """The unique horizontal vector at x projecting onto w."""
    x = wrap_coords(S.total, np.asarray(x, dtype=float))
    px = S.project(x)
    gap = coord_delta(S.base, px, wrap_coords(S.base, w.base))
    if np.max(np.abs(gap)) > 1e-9:
        raise BasePointMismatch(f"vector anchored at {w.base}, fiber point projects to {px}")
    return lift_components(S, x, np.asarray(w.comp, dtype=float))


def lift_components(S: SubmersionModel, x: np.ndarray, w_comp: np.ndarray) -> np.ndarray:
    """Horizontal lift by solving in the horizontal frame (batched in the leading axes)."""
    H = horizontal_frames_batch(S, x)
    J = S.jacobian(x)
    A = np.einsum("...bj,...mj->...bm", J, H)  # b x b, columns J(H_m)
    coeff = np.linalg.solve(A, w_comp[..., :, None])[..., 0]
    return np.einsum("...m,...mi->...i", coeff, H)


def basic_field(S: SubmersionModel, base_comp: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Basic vector field: the horizontal lift of a constant-component base field."""

    def field(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        comp = np.broadcast_to(base_comp, y.shape[:-1] + (S.base.dim,))
        return lift_components(S, y, comp)

    return field


def directional_derivative(
    M: ManifoldModel,
    field: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    direction: np.ndarray,
    step: float = FLOW_STEP,
) -> np.ndarray:
    """Central difference of field components along a straight coordinate flow line."""
    xp = _wrap_periodic_only(M, x + step * direction)
    xm = _wrap_periodic_only(M, x - step * direction)
    return (field(xp) - field(xm)) / (2.0 * step)


def lie_bracket(
    M: ManifoldModel,
    field_x: Callable[[np.ndarray], np.ndarray],
    field_y: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    step: float = FLOW_STEP,
) -> np.ndarray:
    """[X, Y] at x via two-sided finite differences of the coordinate flows."""
    vx = field_x(x)
    vy = field_y(x)
    return directional_derivative(M, field_y, x, vx, step) - directional_derivative(
        M, field_x, x, vy, step
    )


def horizontal_lift_curve(
    S: SubmersionModel, x0: np.ndarray, gamma: Curve, substeps: int = 1
) -> Curve:
    """Horizontal lift of a base curve, integrated with the 4th-order one-step scheme."""
    x0 = wrap_coords(S.total, np.asarray(x0, dtype=float))
    start_gap = coord_delta(S.base, S.project(x0), wrap_coords(S.base, gamma.samples[0]))
    if np.max(np.abs(start_gap)) > 1e-6:
        raise BasePointMismatch("lift start point does not sit over gamma(0)")
    if len(gamma.samples) == 1:
        return Curve(samples=x0[None, :], param=gamma.param.copy())
    interp = CurveInterpolator(S.base, gamma)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return lift_components(S, _wrap_periodic_only(S.total, y), interp.velocity(t))

    samples = [x0.copy()]
    y = x0.copy()
    try:
        for k in range(len(gamma.param) - 1):
            t0, t1 = gamma.param[k], gamma.param[k + 1]
            dt = (t1 - t0) / substeps
            for s in range(substeps):
                t = t0 + s * dt
                k1 = rhs(t, y)
                k2 = rhs(t + dt / 2, y + dt / 2 * k1)
                k3 = rhs(t + dt / 2, y + dt / 2 * k2)
                k4 = rhs(t + dt, y + dt * k3)
                y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            y = wrap_coords(S.total, y)
            samples.append(y.copy())
    except OutOfDomain as exc:
        raise LeftDomain("horizontal lift left the total domain") from exc
    return Curve(samples=np.array(samples), param=gamma.param.copy())


def lemma1_residuals(
    S: SubmersionModel, points: np.ndarray, step: float = FLOW_STEP
) -> tuple[float, float]:
    """Max deviations in the two basic-field covariant-derivative identities.

    Part (i): the base projection of the horizontal-bundle derivative of one basic
    field along another equals the base covariant derivative of the projected fields.
    Part (ii): pairing that derivative along vertical directions against a basic field
    equals minus half the vertical pairing with the Lie bracket.
    Fields are basic lifts of base coordinate fields plus the vertical frame.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    b = S.base.dim
    fields = [basic_field(S, np.eye(b)[i]) for i in range(b)]
    r_i = 0.0
    r_ii = 0.0
    for x in points:
        x = wrap_coords(S.total, x)
        gamma_tot = christoffel_batch(S.total, x)
        g_tot = metric_batch(S.total, x)
        P = _projector_single(S, x)
        J = S.jacobian(x)
        px = S.project(x)
        gamma_base = christoffel_batch(S.base, px)
        g_base = metric_batch(S.base, px)
        vert = vertical_frames_batch(S, x)
        lifts = [fields[i](x) for i in range(b)]
        for i in range(b):
            for j in range(b):
                dY = directional_derivative(S.total, fields[j], x, lifts[i], step)
                nabla = dY + np.einsum("kab,a,b->k", gamma_tot, lifts[i], lifts[j])
                lhs = J @ (P @ nabla)
                rhs = gamma_base[:, i, j]
                diff = lhs - rhs
                r_i = max(r_i, float(np.sqrt(diff @ g_base @ diff)))
        for u in vert:
            for i in range(b):
                dX = directional_derivative(S.total, fields[i], x, u, step)
                nabla_u = dX + np.einsum("kab,a,b->k", gamma_tot, u, lifts[i])
                DuX = P @ nabla_u
                for j in range(b):
                    lhs = float(DuX @ g_tot @ lifts[j])
                    br = lie_bracket(S.total, fields[i], fields[j], x, step)
                    rhs = -0.5 * float(u @ g_tot @ br)
                    r_ii = max(r_ii, abs(lhs - rhs))
    return r_i, r_ii


def _projector_single(S: SubmersionModel, x: np.ndarray) -> np.ndarray:
    g = metric_batch(S.total, x)
    H = horizontal_frames_batch(S, x)
    return np.einsum("mi,mj,jk->ik", H, H, g)


def integrability_defect(S: SubmersionModel, x: np.ndarray, step: float = FLOW_STEP) -> float:
    """Largest vertical bracket component over orthonormal horizontal pairs at x.

    Vanishes iff the horizontal distribution is integrable near x; the brackets use
    basic extensions, so the vertical part is frame-independent.
    """
    x = wrap_coords(S.total, np.asarray(x, dtype=float))
    H = horizontal_frames_batch(S, x)
    if len(H) < 2:
        return 0.0
    g = metric_batch(S.total, x)
    P = _projector_single(S, x)
    J = S.jacobian(x)
    exts = [basic_field(S, J @ h) for h in H]
    worst = 0.0
    for i in range(len(H)):
        for j in range(i + 1, len(H)):
            br = lie_bracket(S.total, exts[i], exts[j], x, step)
            v = br - P @ br
            worst = max(worst, float(np.sqrt(max(v @ g @ v, 0.0))))
    return worst


@dataclass(frozen=True)
class WarpSpec:
    """Positive rescaling of the vertical directions, driven by a base function."""

    f: Callable[[np.ndarray], np.ndarray]
    upper_bound: float = 1.0

    def values(self, base_points: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.f(np.asarray(base_points, dtype=float)), dtype=float)
        if np.any(vals <= 0.0):
            raise NonPositiveWarp("warping function must be strictly positive")
        return vals


def warp_metric(S: SubmersionModel, w: WarpSpec) -> ManifoldModel:
    """Total-space metric that keeps horizontal lengths and scales vertical ones by f(P(x)).

    Assembled pointwise from the orthonormal (horizontal + vertical) frame and
    converted back to coordinates via the two projectors.
    """

    def metric_fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = S.total.dim
        lead = x.shape[:-1]
        pts = x.reshape(-1, d)
        g = metric_batch(S.total, pts)
        P = projector_batch(S, pts)
        Q = np.eye(d) - P
        fvals = w.values(S.project(pts))
        gh = np.einsum("nji,njk,nkl->nil", P, g, P)
        gv = np.einsum("nji,njk,nkl->nil", Q, g, Q)
        out = gh + (fvals**2)[:, None, None] * gv
        return out.reshape(lead + (d, d))

    return ManifoldModel(
        name=f"{S.total.name}#warped",
        dim=S.total.dim,
        axes=S.total.axes,
        metric_fn=metric_fn,
        embedding_fn=S.total.embedding_fn,
    )


def warp_submersion(S: SubmersionModel, w: WarpSpec) -> SubmersionModel:
    """The same projection viewed as a submersion of the warped total space."""
    return SubmersionModel(
        total=warp_metric(S, w),
        base=S.base,
        proj_fn=S.proj_fn,
        jacobian_fn=S.jacobian_fn,
    )
