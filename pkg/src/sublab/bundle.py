"""Bundle metrics of Cheeger-Gromoll type: connection maps, parallel transport,
the three-way splitting of unit-bundle tangents, and the claim verifiers.

A :class:`BundleContext` is either the tangent bundle of a manifold (Levi-Civita
connection) or the horizontal subbundle of a submersion (projected connection).
Fiber vectors are stored in total-space coordinates in both cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import MismatchedBasePoint
from .geometry import (
    FLOW_STEP,
    Curve,
    CurveInterpolator,
    ManifoldModel,
    _wrap_periodic_only,
    christoffel_batch,
    coord_delta,
    interior_grid,
    metric_batch,
    wrap_coords,
)
from .submersion import (
    SubmersionModel,
    gram_schmidt,
    horizontal_frames_batch,
    integrability_defect,
    lift_components,
    vertical_frames_batch,
    warp_submersion,
    WarpSpec,
)

# Step for the projector derivative entering the transport equation.
PROJ_FD_STEP = 1e-5


@dataclass(frozen=True)
class PQParams:
    p: float
    q: float

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("q must be nonnegative")


@dataclass(frozen=True)
class BundlePoint:
    base: np.ndarray   # coordinates on the carrying manifold
    fiber: np.ndarray  # fiber vector components in those coordinates


@dataclass(frozen=True)
class BundleTangent:
    at: BundlePoint
    dbase: np.ndarray   # image under the bundle projection differential
    dfiber: np.ndarray  # raw derivative of fiber components along a realizing curve


@dataclass(frozen=True)
class BundleContext:
    """Vector bundle with fiber metric and Riemannian connection, in coordinates."""

    manifold: ManifoldModel
    submersion: Optional[SubmersionModel] = None

    @property
    def fiber_dim(self) -> int:
        return self.submersion.base.dim if self.submersion else self.manifold.dim

    def metric(self, x: np.ndarray) -> np.ndarray:
        return metric_batch(self.manifold, x)

    def christoffel(self, x: np.ndarray) -> np.ndarray:
        return christoffel_batch(self.manifold, x)

    def projector(self, x: np.ndarray) -> np.ndarray:
        """Projection onto the fiber subspace of the ambient tangent space."""
        if self.submersion is None:
            d = self.manifold.dim
            return np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d)).copy()
        g = self.metric(x)
        H = horizontal_frames_batch(self.submersion, x)
        return np.einsum("...mi,...mj,...jk->...ik", H, H, g)

    def fiber_frame(self, x: np.ndarray) -> np.ndarray:
        """Orthonormal frame of the fiber at x, shape (..., fiber_dim, d)."""
        if self.submersion is None:
            d = self.manifold.dim
            basis = np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d)).copy()
            return gram_schmidt(basis, self.metric(x))
        return horizontal_frames_batch(self.submersion, x)


def tangent_bundle(M: ManifoldModel) -> BundleContext:
    return BundleContext(manifold=M)


def horizontal_bundle(S: SubmersionModel) -> BundleContext:
    return BundleContext(manifold=S.total, submersion=S)


def connection_map(E: BundleContext, A: BundleTangent) -> np.ndarray:
    """K(A): covariant fiber derivative encoded by the bundle tangent.

    With no base motion this is the canonical isomorphism, returned exactly.
    """
    dbase = np.asarray(A.dbase, dtype=float)
    if not np.any(dbase):
        return np.asarray(A.dfiber, dtype=float).copy()
    x = wrap_coords(E.manifold, np.asarray(A.at.base, dtype=float))
    gamma = E.christoffel(x)
    K = np.asarray(A.dfiber, dtype=float) + np.einsum(
        "kij,i,j->k", gamma, dbase, np.asarray(A.at.fiber, dtype=float)
    )
    if E.submersion is not None:
        K = E.projector(x) @ K
    return K


def _require_same_point(A: BundleTangent, B: BundleTangent, M: ManifoldModel) -> None:
    gap = coord_delta(M, np.asarray(A.at.base, float), np.asarray(B.at.base, float))
    if np.max(np.abs(gap)) > 1e-9 or np.max(np.abs(np.asarray(A.at.fiber) - B.at.fiber)) > 1e-9:
        raise MismatchedBasePoint("bundle tangents live at different bundle points")


def _sym_pair(g: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    # symmetrized so that swapping arguments is bitwise neutral
    return 0.5 * (float(u @ g @ v) + float(v @ g @ u))


def pq_metric(E: BundleContext, pq: PQParams, A: BundleTangent, B: BundleTangent) -> float:
    """The (p,q)-metric value on two bundle tangents at the same bundle point."""
    _require_same_point(A, B, E.manifold)
    x = wrap_coords(E.manifold, np.asarray(A.at.base, dtype=float))
    g = E.metric(x)
    zeta = np.asarray(A.at.fiber, dtype=float)
    base_term = _sym_pair(g, np.asarray(A.dbase, dtype=float), np.asarray(B.dbase, dtype=float))
    KA = connection_map(E, A)
    KB = connection_map(E, B)
    z2 = float(zeta @ g @ zeta)
    fiber_term = _sym_pair(g, KA, KB) + pq.q * float(KA @ g @ zeta) * float(KB @ g @ zeta)
    return base_term + (1.0 + z2) ** (-pq.p) * fiber_term


def pq_norm(E: BundleContext, pq: PQParams, A: BundleTangent) -> float:
    return float(np.sqrt(max(pq_metric(E, pq, A, A), 0.0)))


def sasaki_form(E: BundleContext, A: BundleTangent, B: BundleTangent) -> float:
    """Independently coded Sasaki metric (reference implementation for cross-checks)."""
    _require_same_point(A, B, E.manifold)
    x = wrap_coords(E.manifold, np.asarray(A.at.base, dtype=float))
    g = E.metric(x)
    gamma = E.christoffel(x)
    d = E.manifold.dim

    def cov(T: BundleTangent) -> np.ndarray:
        out = np.array(T.dfiber, dtype=float)
        for k in range(d):
            acc = 0.0
            for i in range(d):
                for j in range(d):
                    acc += gamma[k, i, j] * T.dbase[i] * T.at.fiber[j]
            out[k] += acc
        if E.submersion is not None:
            out = E.projector(x) @ out
        return out

    ka, kb = cov(A), cov(B)
    horiz = sum(A.dbase[i] * g[i, j] * B.dbase[j] for i in range(d) for j in range(d))
    vert = sum(ka[i] * g[i, j] * kb[j] for i in range(d) for j in range(d))
    return float(horiz + vert)


def cheeger_gromoll_form(E: BundleContext, A: BundleTangent, B: BundleTangent) -> float:
    """Independently coded Cheeger-Gromoll metric (reference implementation)."""
    _require_same_point(A, B, E.manifold)
    x = wrap_coords(E.manifold, np.asarray(A.at.base, dtype=float))
    g = E.metric(x)
    gamma = E.christoffel(x)
    d = E.manifold.dim
    zeta = np.asarray(A.at.fiber, dtype=float)

    def cov(T: BundleTangent) -> np.ndarray:
        out = np.array(T.dfiber, dtype=float)
        for k in range(d):
            acc = 0.0
            for i in range(d):
                for j in range(d):
                    acc += gamma[k, i, j] * T.dbase[i] * T.at.fiber[j]
            out[k] += acc
        if E.submersion is not None:
            out = E.projector(x) @ out
        return out

    ka, kb = cov(A), cov(B)
    horiz = sum(A.dbase[i] * g[i, j] * B.dbase[j] for i in range(d) for j in range(d))
    hv = sum(ka[i] * g[i, j] * kb[j] for i in range(d) for j in range(d))
    ha = sum(ka[i] * g[i, j] * zeta[j] for i in range(d) for j in range(d))
    hb = sum(kb[i] * g[i, j] * zeta[j] for i in range(d) for j in range(d))
    z2 = sum(zeta[i] * g[i, j] * zeta[j] for i in range(d) for j in range(d))
    return float(horiz + (hv + ha * hb) / (1.0 + z2))


def _transport_rhs(E: BundleContext, x: np.ndarray, v: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Right-hand side of the parallel-transport equation for the bundle connection."""
    gamma = E.christoffel(x)
    nabla = -np.einsum("kij,i,j->k", gamma, v, xi)
    if E.submersion is None:
        return nabla
    P = E.projector(x)
    speed = float(np.sqrt(v @ v))
    if speed == 0.0:
        return P @ nabla
    eps = PROJ_FD_STEP / speed
    Pp = E.projector(_wrap_periodic_only(E.manifold, x + eps * v))
    Pm = E.projector(_wrap_periodic_only(E.manifold, x - eps * v))
    Pdot = (Pp - Pm) / (2.0 * eps)
    return P @ nabla + Pdot @ xi


def _rk4_transport(
    E: BundleContext,
    pos: Callable[[float], np.ndarray],
    vel: Callable[[float], np.ndarray],
    t0: float,
    t1: float,
    xi: np.ndarray,
    steps: int,
) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).copy()
    dt = (t1 - t0) / steps
    for s in range(steps):
        t = t0 + s * dt

        def f(tau: float, y: np.ndarray) -> np.ndarray:
            return _transport_rhs(E, pos(tau), vel(tau), y)

        k1 = f(t, xi)
        k2 = f(t + dt / 2, xi + dt / 2 * k1)
        k3 = f(t + dt / 2, xi + dt / 2 * k2)
        k4 = f(t + dt, xi + dt * k3)
        xi = xi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if E.submersion is not None:
            xi = E.projector(pos(t + dt)) @ xi
    return xi


def parallel_transport_bundle(
    E: BundleContext, c: Curve, xi0: np.ndarray, substeps: int = 4
) -> np.ndarray:
    """Parallel fiber field along a curve, one row per curve sample."""
    xi0 = np.asarray(xi0, dtype=float)
    if len(c.samples) == 1:
        return xi0[None, :].copy()
    interp = CurveInterpolator(E.manifold, c)
    out = [xi0.copy()]
    xi = xi0.copy()
    for k in range(len(c.param) - 1):
        xi = _rk4_transport(
            E, interp.position, interp.velocity, c.param[k], c.param[k + 1], xi, substeps
        )
        out.append(xi.copy())
    return np.array(out)


def transport_along_segment(
    E: BundleContext, x0: np.ndarray, direction: np.ndarray, h: float, xi: np.ndarray, steps: int = 2
) -> np.ndarray:
    """Transport along the straight coordinate segment x0 + t*direction, t in [0, h]."""
    x0 = np.asarray(x0, dtype=float)
    direction = np.asarray(direction, dtype=float)

    def pos(t: float) -> np.ndarray:
        return _wrap_periodic_only(E.manifold, x0 + t * direction)

    def vel(t: float) -> np.ndarray:
        return direction

    return _rk4_transport(E, pos, vel, 0.0, h, xi, steps)


def _lift_and_transport(
    E: BundleContext,
    S: SubmersionModel,
    x0: np.ndarray,
    xi0: np.ndarray,
    base_comp: np.ndarray,
    h: float,
    steps: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Follow the horizontal lift of a constant base direction while transporting xi.

    Joint fourth-order step on (position, fiber); returns (x(h), xi(h)).
    """
    y = np.concatenate([np.asarray(x0, float), np.asarray(xi0, float)])
    d = S.total.dim

    def f(_t: float, state: np.ndarray) -> np.ndarray:
        x = _wrap_periodic_only(S.total, state[:d])
        xi = state[d:]
        v = lift_components(S, x, base_comp)
        return np.concatenate([v, _transport_rhs(E, x, v, xi)])

    dt = h / steps
    t = 0.0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    x_end = _wrap_periodic_only(S.total, y[:d])
    xi_end = E.projector(x_end) @ y[d:]
    return x_end, xi_end


def split_subbundles(
    S: SubmersionModel,
    point: BundlePoint,
    E: Optional[BundleContext] = None,
    h: float = FLOW_STEP,
) -> tuple[list[BundleTangent], list[BundleTangent], list[BundleTangent]]:
    """Pairwise orthogonal tangent frames of the unit horizontal bundle at a point.

    Returns (fiber-sphere tangents, base-lift directions, fiber-transport directions)
    with dimensions (b-1, b, a). The last two families come from two-sided one-step
    parallel transport with step ``h``, finite-differenced.
    """
    if E is None:
        E = horizontal_bundle(S)
    x = wrap_coords(E.manifold, np.asarray(point.base, dtype=float))
    xi = np.asarray(point.fiber, dtype=float)
    g = E.metric(x)
    frame = E.fiber_frame(x)
    b = S.base.dim
    at = BundlePoint(base=x, fiber=xi)

    # tangents to the unit fiber sphere: no base motion, fiber motion orthogonal to xi
    cands = frame - np.outer(frame @ g @ xi, xi)
    kappa = gram_schmidt(cands, g, keep=b - 1) if b > 1 else np.zeros((0, S.total.dim))
    h_prime = [BundleTangent(at=at, dbase=np.zeros(S.total.dim), dfiber=k) for k in kappa]

    # velocities of transported xi along horizontal lifts of base coordinate directions
    h_second = []
    for i in range(b):
        e_i = np.eye(b)[i]
        _, xi_plus = _lift_and_transport(E, S, x, xi, e_i, h)
        _, xi_minus = _lift_and_transport(E, S, x, xi, e_i, -h)
        dfiber = (xi_plus - xi_minus) / (2.0 * h)
        dbase = lift_components(S, x, e_i)
        h_second.append(BundleTangent(at=at, dbase=dbase, dfiber=dfiber))

    # velocities of transported xi along the fiber directions
    vert = vertical_frames_batch(S, x)
    v_frame = []
    for u in vert:
        xi_plus = transport_along_segment(E, x, u, h, xi)
        xi_minus = transport_along_segment(E, x, u, -h, xi)
        dfiber = (xi_plus - xi_minus) / (2.0 * h)
        v_frame.append(BundleTangent(at=at, dbase=u.copy(), dfiber=dfiber))

    return h_prime, h_second, v_frame


def bundle_pushforward(S: SubmersionModel, A: BundleTangent, step: float = FLOW_STEP) -> BundleTangent:
    """Image of a horizontal-bundle tangent under the projection differential,
    landing in the tangent bundle of the base."""
    x = wrap_coords(S.total, np.asarray(A.at.base, dtype=float))
    J = S.jacobian(x)
    base_pt = S.project(x)
    u = J @ np.asarray(A.at.fiber, dtype=float)
    dbase = J @ np.asarray(A.dbase, dtype=float)
    dfiber = J @ np.asarray(A.dfiber, dtype=float)
    v = np.asarray(A.dbase, dtype=float)
    if np.any(v):
        Jp = S.jacobian(_wrap_periodic_only(S.total, x + step * v))
        Jm = S.jacobian(_wrap_periodic_only(S.total, x - step * v))
        dfiber = dfiber + ((Jp - Jm) / (2.0 * step)) @ np.asarray(A.at.fiber, dtype=float)
    return BundleTangent(at=BundlePoint(base=base_pt, fiber=u), dbase=dbase, dfiber=dfiber)


def unit_fiber_directions(E: BundleContext, x: np.ndarray, count: int) -> np.ndarray:
    """Deterministic unit fiber vectors at x: both poles for 1-dim fibers, a circle
    of ``count`` directions for 2-dim fibers."""
    frame = E.fiber_frame(x)
    if E.fiber_dim == 1:
        return np.stack([frame[0], -frame[0]])
    if E.fiber_dim == 2:
        ang = 2.0 * np.pi * (np.arange(count)) / count
        return np.outer(np.cos(ang), frame[0]) + np.outer(np.sin(ang), frame[1])
    from .errors import UnsupportedFiberSphere

    raise UnsupportedFiberSphere(f"fiber sphere of dimension {E.fiber_dim - 1} not sampled")


def sample_unit_points(
    S: SubmersionModel,
    E: Optional[BundleContext] = None,
    base_res: int = 3,
    fiber_count: int = 4,
) -> list[BundlePoint]:
    """Deterministic unit horizontal-bundle points for the claim verifiers."""
    if E is None:
        E = horizontal_bundle(S)
    pts = interior_grid(S.total, base_res)
    out = []
    for x in pts:
        for xi in unit_fiber_directions(E, x, fiber_count):
            out.append(BundlePoint(base=x.copy(), fiber=xi))
    return out


def verify_claim1(
    S: SubmersionModel, pq: PQParams, points: list[BundlePoint], tol: float
) -> dict:
    """Fiber-sphere tangents keep their length under the projection differential."""
    E = horizontal_bundle(S)
    base_E = tangent_bundle(S.base)
    worst = 0.0
    checked = 0
    for pt in points:
        h_prime, _, _ = split_subbundles(S, pt, E)
        for A in h_prime:
            val = pq_metric(E, pq, A, A)
            PA = bundle_pushforward(S, A)
            val_down = pq_metric(base_E, pq, PA, PA)
            worst = max(worst, abs(val - val_down) / max(val, 1e-300))
            checked += 1
    return {"name": "claim1", "max_rel_deviation": worst, "tol": tol,
            "passed": worst < tol, "checked": checked}


def verify_claim2(
    S: SubmersionModel, pq: PQParams, points: list[BundlePoint], tol: float
) -> dict:
    """Base-lift directions project isometrically and land connection-horizontal."""
    E = horizontal_bundle(S)
    base_E = tangent_bundle(S.base)
    worst_len = 0.0
    worst_vert = 0.0
    for pt in points:
        _, h_second, _ = split_subbundles(S, pt, E)
        for A in h_second:
            norm_up = pq_norm(E, pq, A)
            PA = bundle_pushforward(S, A)
            gb = base_E.metric(wrap_coords(S.base, PA.at.base))
            w = PA.dbase
            norm_down = float(np.sqrt(max(w @ gb @ w, 0.0)))
            worst_len = max(worst_len, abs(norm_up - norm_down) / max(norm_up, 1e-300))
            Kdown = connection_map(base_E, PA)
            worst_vert = max(worst_vert, float(np.sqrt(max(Kdown @ gb @ Kdown, 0.0))))
    return {"name": "claim2", "max_len_deviation": worst_len, "max_vertical_norm": worst_vert,
            "tol": tol, "passed": worst_len < tol and worst_vert < tol}


def verify_claim3_and_prop1(
    S: SubmersionModel, pq: PQParams, points: list[BundlePoint], tol: float
) -> dict:
    """Dichotomy: fiber-transport directions die under the projection differential
    exactly when the horizontal distribution is integrable."""
    E = horizontal_bundle(S)
    base_E = tangent_bundle(S.base)
    v_image = 0.0
    defect = 0.0
    seen = set()
    for pt in points:
        _, _, v_frame = split_subbundles(S, pt, E)
        for A in v_frame:
            PA = bundle_pushforward(S, A)
            v_image = max(v_image, pq_norm(base_E, pq, PA))
        key = tuple(np.round(pt.base, 12))
        if key not in seen:
            seen.add(key)
            defect = max(defect, integrability_defect(S, pt.base))
    if v_image < tol and defect < tol:
        verdict = "SUBMERSION"
    elif v_image > 10 * tol and defect > 10 * tol:
        verdict = "NOT_SUBMERSION"
    else:
        verdict = "INCONCLUSIVE"
    return {"name": "claim3_prop1", "v_image_norm": v_image, "integrability_defect": defect,
            "tol": tol, "verdict": verdict}


def _bt_scale(A: BundleTangent, c: float) -> BundleTangent:
    return BundleTangent(at=A.at, dbase=c * A.dbase, dfiber=c * A.dfiber)


def _bt_axpy(A: BundleTangent, B: BundleTangent, c: float) -> BundleTangent:
    return BundleTangent(at=A.at, dbase=A.dbase - c * B.dbase, dfiber=A.dfiber - c * B.dfiber)


def _orthonormalize_bt(E: BundleContext, pq: PQParams, vecs: list[BundleTangent]) -> list[BundleTangent]:
    out: list[BundleTangent] = []
    for v in vecs:
        w = v
        for u in out:
            w = _bt_axpy(w, u, pq_metric(E, pq, w, u))
        n = pq_norm(E, pq, w)
        if n > 1e-10:
            out.append(_bt_scale(w, 1.0 / n))
    return out


def subspace_gap(
    E: BundleContext, pq: PQParams, first: list[BundleTangent], second: list[BundleTangent]
) -> float:
    """Largest principal-angle sine between two tangent spans in the (p,q)-metric.

    Computed from projection residuals, which stays linear in perturbations
    (arccos of gram entries cannot resolve angles below the square root of
    machine precision).
    """
    U = _orthonormalize_bt(E, pq, first)
    V = _orthonormalize_bt(E, pq, second)
    if not U or not V:
        return 0.0
    worst = 0.0
    for A_basis, B_basis in ((U, V), (V, U)):
        resid = []
        for v in B_basis:
            r = v
            for u in A_basis:
                r = _bt_axpy(r, u, pq_metric(E, pq, r, u))
            resid.append(r)
        G = np.array([[pq_metric(E, pq, a, b) for b in resid] for a in resid])
        lam = float(np.linalg.eigvalsh(G)[-1])
        worst = max(worst, math.sqrt(max(lam, 0.0)))
    return worst


def verify_warped_claims(
    S: SubmersionModel,
    warp: WarpSpec,
    pq: PQParams,
    points: list[BundlePoint],
    tol: float,
) -> dict:
    """Warping leaves the bundle metric alone on the sphere/base-lift directions,
    scales it by the squared warp value on the fiber-transport directions, and
    does not move the splitting."""
    E = horizontal_bundle(S)
    S_f = warp_submersion(S, warp)
    E_f = horizontal_bundle(S_f)
    worst_hh = 0.0
    worst_ratio = 0.0
    worst_gap = 0.0
    for pt in points:
        h_prime, h_second, v_frame = split_subbundles(S, pt, E)
        pool = h_prime + h_second
        for i, A in enumerate(pool):
            for B in pool[i:]:
                worst_hh = max(worst_hh, abs(pq_metric(E_f, pq, A, B) - pq_metric(E, pq, A, B)))
        fhat2 = float(warp.values(S.project(pt.base)[None, :])[0]) ** 2
        for W in v_frame:
            ratio = pq_metric(E_f, pq, W, W) / pq_metric(E, pq, W, W)
            worst_ratio = max(worst_ratio, abs(ratio - fhat2))
        h_prime_f, h_second_f, _ = split_subbundles(S_f, pt, E_f)
        for fam, fam_f in ((h_prime, h_prime_f), (h_second, h_second_f)):
            worst_gap = max(worst_gap, subspace_gap(E, pq, fam, fam_f))
    return {
        "name": "warped_claims",
        "max_horizontal_deviation": worst_hh,
        "max_vv_ratio_deviation": worst_ratio,
        "max_subspace_gap": worst_gap,
        "tol": tol,
        "passed": worst_hh < tol and worst_ratio < tol and worst_gap < tol,
    }
