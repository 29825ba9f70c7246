"""Experiment orchestration: verification suites, the net criterion, and collapse runs."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bundle as bd
from . import metricspace as ms
from . import spaces as sp
from .errors import IntegrabilityRequired, InvalidScenario
from .geometry import interior_grid, metric_batch, metric_at
from .scenarios import Scenario, ScenarioConfig, get_scenario, warp_function
from .submersion import (
    SubmersionModel,
    WarpSpec,
    horizontal_frames_batch,
    integrability_defect,
    lemma1_residuals,
    lift_components,
    vertical_frames_batch,
    warp_metric,
    warp_submersion,
)

CRITERION_GRID_SIZE = 16


def thread_count() -> int:
    """Worker cap for independent experiment legs; SUBLAB_THREADS overrides."""
    env = os.environ.get("SUBLAB_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    scenario_id: str
    p: float
    q: float
    checks: list[CheckResult] = field(default_factory=list)
    verdict: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class CollapseRecord:
    n: int
    sup_f: float
    gh_total_base: float
    gh_bundle_sm: float
    criterion_eps: float


def scenario_grid_axes(
    scenario: Scenario, base_res: int, fiber_res: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Lattice axis values for total and base samples, aligned so that projected
    total samples land exactly on base samples."""
    S = scenario.submersion
    sid = scenario.scenario_id
    if sid == "product-torus":
        total = sp.axis_centers(S.total, [base_res, fiber_res])
        return total, [total[0]]
    if sid == "identity":
        total = sp.axis_centers(S.total, [base_res, base_res])
        return total, total
    if sid == "product-sphere-circle":
        total = sp.axis_centers(S.total, [base_res, base_res, fiber_res])
        return total, total[:2]
    if sid == "hopf":
        total = sp.axis_centers(S.total, [base_res, fiber_res, fiber_res])
        # projection doubles eta and subtracts the fiber angles
        theta = 2.0 * total[0]
        phi = 2.0 * math.pi * np.arange(fiber_res) / fiber_res
        return total, [theta, phi]
    raise InvalidScenario(sid)


@dataclass
class SampledScenario:
    scenario: Scenario
    total: sp.SampledSpace
    base: sp.SampledSpace
    total_to_base: np.ndarray

    @property
    def submersion(self) -> SubmersionModel:
        return self.scenario.submersion


def sample_scenario(
    scenario: Scenario, base_res: int, fiber_res: int, total_manifold=None
) -> SampledScenario:
    """Sampled total and base spaces plus the index map realizing the projection."""
    S = scenario.submersion
    total_axes, base_axes = scenario_grid_axes(scenario, base_res, fiber_res)
    M_total = total_manifold if total_manifold is not None else S.total
    total = sp.manifold_space(M_total, total_axes)
    base = sp.manifold_space(S.base, base_axes)
    t2b = sp.match_projection(S, total, base)
    return SampledScenario(scenario=scenario, total=total, base=base, total_to_base=t2b)


def criterion_eps_grid(base_space: ms.FiniteMetricSpace, size: int = CRITERION_GRID_SIZE) -> np.ndarray:
    """Geometric epsilon grid spanning [sample mesh, diameter]."""
    mesh = max(base_space.mesh(), 1e-12)
    diam = max(base_space.diameter(), mesh * (1 + 1e-9))
    return mesh * (diam / mesh) ** (np.arange(size) / (size - 1))


def criterion_check(
    base_space: ms.FiniteMetricSpace, f_values: np.ndarray, eps_grid: np.ndarray
) -> float:
    """Smallest grid epsilon admitting an epsilon-net through points with f below it.

    Returns +inf when no grid value works.
    """
    f_values = np.asarray(f_values, dtype=float)
    for eps in eps_grid:
        cand = np.nonzero(f_values < eps)[0].tolist()
        if not cand:
            continue
        net = ms.eps_net(base_space, float(eps), candidates=cand)
        if net.covering_radius <= eps:
            return float(eps)
    return math.inf


def _fiber_sample_count(S: SubmersionModel, sphere_fiber_resolution: int) -> int:
    return 2 if S.base.dim == 1 else sphere_fiber_resolution


def _collapse_leg(
    cfg: ScenarioConfig,
    scenario: Scenario,
    n: int,
    base_sampled: sp.SampledSpace,
    sm: sp.SampledSpace,
    eps_grid: np.ndarray,
) -> CollapseRecord:
    S = scenario.submersion
    f_n = warp_function(cfg, n)
    spec = WarpSpec(f=f_n, upper_bound=cfg.warp_upper_bound)
    f_vals = spec.values(base_sampled.points)
    if float(f_vals.max()) > cfg.warp_upper_bound:
        raise InvalidScenario(f"warp values exceed upper bound at n={n}")
    S_n = warp_submersion(S, spec)
    total_axes, _ = scenario_grid_axes(scenario, cfg.base_resolution, cfg.fiber_resolution)
    total_n = sp.manifold_space(S_n.total, total_axes)
    t2b = sp.match_projection(S_n, total_n, base_sampled)
    R = ms.projection_correspondence(t2b, base_sampled.space.n)
    gh_total = ms.gh_upper(R, total_n.space, base_sampled.space)

    E_n = bd.horizontal_bundle(S_n)
    pq = bd.PQParams(cfg.p, cfg.q)
    e1_n = sp.unit_bundle_space(E_n, pq, total_axes, _fiber_sample_count(S, cfg.sphere_fiber_resolution))
    b2s = sp.match_bundle_projection(S_n, e1_n, sm)
    R2 = ms.projection_correspondence(b2s, sm.space.n)
    gh_bundle = ms.gh_upper(R2, e1_n.space, sm.space)

    crit = criterion_check(base_sampled.space, f_vals, eps_grid)
    return CollapseRecord(
        n=n,
        sup_f=float(f_vals.max()),
        gh_total_base=gh_total,
        gh_bundle_sm=gh_bundle,
        criterion_eps=crit,
    )


def run_collapse(cfg: ScenarioConfig, write: bool = True) -> tuple[list[CollapseRecord], str]:
    """Warped-sequence experiment: GH bounds against the base and its sphere bundle,
    plus the net-criterion value, one record per n. Writes the CSV when asked to."""
    cfg.validate()
    scenario = get_scenario(cfg.scenario_id)
    if not scenario.integrable:
        raise IntegrabilityRequired(
            f"scenario {cfg.scenario_id!r} has a non-integrable horizontal distribution"
        )
    sampled = sample_scenario(scenario, cfg.base_resolution, cfg.fiber_resolution)
    pq = bd.PQParams(cfg.p, cfg.q)
    _, base_axes = scenario_grid_axes(scenario, cfg.base_resolution, cfg.fiber_resolution)
    sm = sp.unit_bundle_space(
        bd.tangent_bundle(scenario.submersion.base),
        pq,
        base_axes,
        _fiber_sample_count(scenario.submersion, cfg.sphere_fiber_resolution),
    )
    eps_grid = criterion_eps_grid(sampled.base.space)

    workers = min(thread_count(), len(cfg.n_list))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(
                    lambda n: _collapse_leg(cfg, scenario, n, sampled.base, sm, eps_grid),
                    cfg.n_list,
                )
            )
    else:
        records = [_collapse_leg(cfg, scenario, n, sampled.base, sm, eps_grid) for n in cfg.n_list]

    csv_text = render_collapse_csv(records)
    if write and cfg.out_path:
        with open(cfg.out_path, "w") as fh:
            fh.write(csv_text)
    return records, csv_text


def render_collapse_csv(records: list[CollapseRecord]) -> str:
    lines = ["n,sup_f,gh_total_base,gh_bundle_sm,criterion_eps"]
    for r in records:
        lines.append(
            f"{r.n},{r.sup_f!r},{r.gh_total_base!r},{r.gh_bundle_sm!r},"
            f"{'inf' if math.isinf(r.criterion_eps) else repr(r.criterion_eps)}"
        )
    return "\n".join(lines) + "\n"


def net_report(scenario_id: str, eps: float, base_res: int = 24, fiber_res: int = 24):
    """Greedy net on the sampled total space of a scenario."""
    scenario = get_scenario(scenario_id)
    sampled = sample_scenario(scenario, base_res, fiber_res)
    return ms.eps_net(sampled.total.space, eps), sampled


# ---------------------------------------------------------------------------
# verification suite


def default_tolerance(scenario: Scenario) -> float:
    return 1e-5 if scenario.integrable else 1e-4


def verify_all(
    scenario_id: str,
    p: float,
    q: float,
    res: int = 16,
    tol: float | None = None,
) -> VerificationReport:
    """Full invariant and claim suite for one scenario."""
    scenario = get_scenario(scenario_id)
    S = scenario.submersion
    pq = bd.PQParams(p, q)
    if tol is None:
        tol = default_tolerance(scenario)
    report = VerificationReport(scenario_id=scenario_id, p=p, q=q)
    checks = report.checks

    pts = interior_grid(S.total, 3 if S.total.dim < 3 else 2)
    g_tot = metric_batch(S.total, pts)

    # Jacobian rank and the Riemannian submersion property
    J = S.jacobian(pts)
    sv = np.linalg.svd(J, compute_uv=False)
    checks.append(CheckResult("jacobian_rank_min_sv", float(sv[..., -1].min()), 1e-8,
                              bool(sv[..., -1].min() > 1e-8)))
    H = horizontal_frames_batch(S, pts)
    V = vertical_frames_batch(S, pts)
    push = np.einsum("nbd,nmd->nmb", J, H)
    g_base = metric_batch(S.base, S.project(pts))
    push_norm = np.sqrt(np.einsum("nmb,nbc,nmc->nm", push, g_base, push))
    riem_dev = float(np.abs(push_norm - 1.0).max())
    checks.append(CheckResult("riemannian_property", riem_dev, 1e-6, riem_dev < 1e-6))

    # splitting completeness: vertical + horizontal is an orthonormal frame
    F = np.concatenate([V, H], axis=1)
    gram = np.einsum("nmi,nij,nkj->nmk", F, g_tot, F)
    eye = np.eye(S.total.dim)
    gram_dev = float(np.abs(gram - eye).max())
    checks.append(CheckResult("splitting_gram_identity", gram_dev, 1e-9, gram_dev < 1e-9))

    # lift-projection identity on base coordinate vectors
    lift_dev = 0.0
    for i in range(S.base.dim):
        w = np.broadcast_to(np.eye(S.base.dim)[i], (len(pts), S.base.dim))
        lifted = lift_components(S, pts, w)
        back = np.einsum("nbd,nd->nb", J, lifted)
        lift_dev = max(lift_dev, float(np.abs(back - w).max()))
    checks.append(CheckResult("lift_projection_identity", lift_dev, 1e-9, lift_dev < 1e-9))

    # Lemma 1 residuals
    lemma_pts = interior_grid(S.total, 2)
    r_i, r_ii = lemma1_residuals(S, lemma_pts)
    checks.append(CheckResult("lemma1_residual_i", r_i, 1e-4, r_i < 1e-4))
    checks.append(CheckResult("lemma1_residual_ii", r_ii, 1e-4, r_ii < 1e-4))

    # integrability defect, judged against the scenario's known character
    defect = max(integrability_defect(S, x) for x in lemma_pts)
    if scenario.integrable:
        checks.append(CheckResult("integrability_defect", defect, 1e-5, defect < 1e-5))
    else:
        checks.append(CheckResult("integrability_defect_nonintegrable", defect, 0.1, defect > 0.1,
                                  detail="expected large: non-integrable scenario"))

    # identity warp reproduces the metric
    ones = WarpSpec(f=lambda x: np.ones(np.asarray(x).shape[:-1]), upper_bound=2.0)
    M1 = warp_metric(S, ones)
    warp_dev = float(np.abs(metric_batch(M1, pts) - g_tot).max())
    checks.append(CheckResult("warp_identity", warp_dev, 1e-12, warp_dev < 1e-12))

    # claims on the unit horizontal bundle
    upts = bd.sample_unit_points(S, base_res=2, fiber_count=4)
    c1 = bd.verify_claim1(S, pq, upts, tol)
    checks.append(CheckResult("claim1_isometry", c1["max_rel_deviation"], tol, c1["passed"]))
    c2 = bd.verify_claim2(S, pq, upts, tol)
    checks.append(CheckResult("claim2_isometry", c2["max_len_deviation"], tol,
                              c2["max_len_deviation"] < tol))
    checks.append(CheckResult("claim2_horizontality", c2["max_vertical_norm"], tol,
                              c2["max_vertical_norm"] < tol))
    c3 = bd.verify_claim3_and_prop1(S, pq, upts, tol)
    report.verdict = c3["verdict"]
    expected = "SUBMERSION" if scenario.integrable else "NOT_SUBMERSION"
    checks.append(CheckResult("prop1_verdict", c3["v_image_norm"], tol,
                              c3["verdict"] == expected,
                              detail=f"verdict={c3['verdict']} defect={c3['integrability_defect']:.3e}"))

    # unit-bundle tangency of the produced frames
    E = bd.horizontal_bundle(S)
    tangency = 0.0
    ortho = 0.0
    for ptu in upts[:4]:
        hp, hs, vv = bd.split_subbundles(S, ptu, E)
        g_here = metric_at(E.manifold, ptu.base)
        tagged = [(A, 0) for A in hp] + [(A, 1) for A in hs] + [(A, 2) for A in vv]
        for A, _ in tagged:
            KA = bd.connection_map(E, A)
            tangency = max(tangency, abs(float(KA @ g_here @ ptu.fiber)))
        for i, (A, fam_a) in enumerate(tagged):
            for Bv, fam_b in tagged[i + 1 :]:
                if fam_a != fam_b:
                    ortho = max(ortho, abs(bd.pq_metric(E, pq, A, Bv)))
    checks.append(CheckResult("unit_bundle_tangency", tangency, 1e-6, tangency < 1e-6))
    checks.append(CheckResult("subbundle_orthogonality", ortho, 1e-6, ortho < 1e-6))

    # warped claims (hypothesis: integrable horizontal distribution)
    if scenario.integrable:
        const = WarpSpec(f=lambda x: np.full(np.asarray(x).shape[:-1], 0.5), upper_bound=2.0)
        sep = WarpSpec(f=lambda x: 0.5 + 0.25 * np.sin(np.asarray(x)[..., 0]), upper_bound=2.0)
        for wname, wspec, wtol in (("const", const, tol), ("separable", sep, max(tol, 1e-4)),
                                   ("identity", ones, 1e-10)):
            wr = bd.verify_warped_claims(S, wspec, pq, upts[:4], wtol)
            worst = max(wr["max_horizontal_deviation"], wr["max_vv_ratio_deviation"],
                        wr["max_subspace_gap"])
            checks.append(CheckResult(f"warped_claims_{wname}", worst, wtol, wr["passed"]))

    # sampled net lemma: merged fiber nets and projected nets
    sampled = sample_scenario(scenario, res, res)
    eps = 0.45 * sampled.base.space.diameter()
    base_net = ms.eps_net(sampled.base.space, eps)
    fibers = sp.fiber_partition(sampled.total_to_base, sampled.base.space.n)
    fiber_nets = []
    for b_idx in base_net.subset:
        sub_idx = fibers[b_idx]
        sub_space = sampled.total.space.restrict(np.array(sub_idx))
        sub_net = ms.eps_net(sub_space, eps)
        fiber_nets.append([sub_idx[k] for k in sub_net.subset])
    merged = ms.merge_fiber_nets(base_net, fiber_nets, sampled.total.space)
    checks.append(CheckResult("net_merge_radius", merged.covering_radius, 2 * eps * ms.NET_SLACK,
                              merged.covering_radius <= 2 * eps * ms.NET_SLACK))
    up_net = ms.eps_net(sampled.total.space, eps)
    projected = ms.project_net(up_net, sampled.total_to_base, sampled.base.space)
    checks.append(CheckResult("net_project_radius", projected.covering_radius, eps * ms.NET_SLACK,
                              projected.covering_radius <= eps * ms.NET_SLACK))

    # special-case bundle metrics against independent reference formulas
    dev = special_case_deviation(S.total, trials=50, seed=0)
    checks.append(CheckResult("pq_special_cases", dev, 1e-12, dev < 1e-12))

    return report


def special_case_deviation(M, trials: int = 1000, seed: int = 0) -> float:
    """Largest gap between the (p,q)-metric at (0,0)/(1,1) and independently coded
    Sasaki / Cheeger-Gromoll formulas on random tangent-bundle inputs."""
    rng = np.random.default_rng(seed)
    E = bd.tangent_bundle(M)
    sas = bd.PQParams(0.0, 0.0)
    cg = bd.PQParams(1.0, 1.0)
    d = M.dim
    lo = np.array([ax.lo for ax in M.axes])
    hi = np.array([ax.hi for ax in M.axes])
    span = hi - lo
    worst = 0.0
    for _ in range(trials):
        x = lo + span * (0.2 + 0.6 * rng.random(d))
        zeta = rng.standard_normal(d)
        at = bd.BundlePoint(base=x, fiber=zeta)
        A = bd.BundleTangent(at=at, dbase=rng.standard_normal(d), dfiber=rng.standard_normal(d))
        B = bd.BundleTangent(at=at, dbase=rng.standard_normal(d), dfiber=rng.standard_normal(d))
        worst = max(worst, abs(bd.pq_metric(E, sas, A, B) - bd.sasaki_form(E, A, B)))
        worst = max(worst, abs(bd.pq_metric(E, cg, A, B) - bd.cheeger_gromoll_form(E, A, B)))
    return worst


def render_report(report: VerificationReport) -> str:
    lines = [
        f"scenario={report.scenario_id} p={report.p} q={report.q} verdict={report.verdict}",
        f"{'check':<34}{'value':>14}{'threshold':>14}  status",
    ]
    for c in report.checks:
        status = "pass" if c.passed else "FAIL"
        extra = f"  ({c.detail})" if c.detail else ""
        lines.append(f"{c.name:<34}{c.value:>14.3e}{c.threshold:>14.3e}  {status}{extra}")
    lines.append(f"overall: {'pass' if report.passed else 'FAIL'}")
    return "\n".join(lines)
