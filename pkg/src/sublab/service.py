"""FastAPI service wrapping the lab: verification, nets, GH estimates, collapse runs.

The CLI and the HTTP endpoints share these handlers and models, so in-process
and remote invocations produce identical payloads.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from . import metricspace as ms
from . import spaces as sp
from .errors import SublabError, TooLarge
from .lab import (
    CollapseRecord,
    criterion_eps_grid,
    net_report,
    render_report,
    run_collapse,
    scenario_grid_axes,
    verify_all,
)
from .scenarios import SCENARIO_IDS, ScenarioConfig, get_scenario


class CheckModel(BaseModel):
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


class VerifyRequest(BaseModel):
    scenario: str
    p: float = 1.0
    q: float = Field(default=1.0, ge=0.0)
    res: int = 16
    tol: float | None = None


class VerifyResponse(BaseModel):
    scenario: str
    p: float
    q: float
    verdict: str
    passed: bool
    checks: list[CheckModel]
    text: str


class NetRequest(BaseModel):
    scenario: str
    eps: float = Field(gt=0.0)
    base_resolution: int = 24
    fiber_resolution: int = 24


class NetResponse(BaseModel):
    scenario: str
    eps: float
    size: int
    covering_radius: float
    subset: list[int]


class GHRequest(BaseModel):
    x_csv: str
    y_csv: str
    exact: bool = False


class GHResponse(BaseModel):
    value: float
    exact: bool
    method: str


class CollapseRequest(BaseModel):
    scenario: str = "product-torus"
    base_resolution: int = 24
    fiber_resolution: int = 24
    sphere_fiber_resolution: int = 8
    p: float = 1.0
    q: float = Field(default=1.0, ge=0.0)
    warp_kind: str = "constant-sequence"
    warp_params: list[float] = [1.0, 1.0]
    warp_upper_bound: float = 10.0
    n_list: list[int] = [1, 2, 4, 8]
    seed: int = 0
    out_path: str = ""

    def to_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            scenario_id=self.scenario,
            base_resolution=self.base_resolution,
            fiber_resolution=self.fiber_resolution,
            sphere_fiber_resolution=self.sphere_fiber_resolution,
            p=self.p,
            q=self.q,
            warp_kind=self.warp_kind,
            warp_params=list(self.warp_params),
            warp_upper_bound=self.warp_upper_bound,
            n_list=list(self.n_list),
            seed=self.seed,
            out_path=self.out_path,
        )


class CollapseRecordModel(BaseModel):
    n: int
    sup_f: float
    gh_total_base: float
    gh_bundle_sm: float
    criterion_eps: float | None  # None encodes the +inf sentinel over JSON

    @classmethod
    def from_record(cls, r: CollapseRecord) -> "CollapseRecordModel":
        return cls(
            n=r.n,
            sup_f=r.sup_f,
            gh_total_base=r.gh_total_base,
            gh_bundle_sm=r.gh_bundle_sm,
            criterion_eps=None if math.isinf(r.criterion_eps) else r.criterion_eps,
        )


class CollapseResponse(BaseModel):
    records: list[CollapseRecordModel]
    csv_text: str
    criterion_floor: float


def handle_verify(req: VerifyRequest) -> VerifyResponse:
    report = verify_all(req.scenario, req.p, req.q, res=req.res, tol=req.tol)
    return VerifyResponse(
        scenario=report.scenario_id,
        p=report.p,
        q=report.q,
        verdict=report.verdict,
        passed=report.passed,
        checks=[CheckModel(**c.__dict__) for c in report.checks],
        text=render_report(report),
    )


def handle_net(req: NetRequest) -> NetResponse:
    net, _ = net_report(req.scenario, req.eps, req.base_resolution, req.fiber_resolution)
    return NetResponse(
        scenario=req.scenario,
        eps=req.eps,
        size=len(net.subset),
        covering_radius=net.covering_radius,
        subset=list(net.subset),
    )


def handle_gh(req: GHRequest) -> GHResponse:
    X = ms.space_from_csv(req.x_csv)
    Y = ms.space_from_csv(req.y_csv)
    if req.exact:
        value = ms.gh_exact(X, Y)
        return GHResponse(value=value, exact=True, method="exhaustive correspondence search")
    R = ms.full_correspondence(X, Y)
    return GHResponse(value=ms.gh_upper(R, X, Y), exact=False,
                      method="half distortion of the complete correspondence")


def handle_collapse(req: CollapseRequest, write: bool = False) -> CollapseResponse:
    cfg = req.to_config()
    records, csv_text = run_collapse(cfg, write=write)
    scenario = get_scenario(cfg.scenario_id)
    _, base_axes = scenario_grid_axes(scenario, cfg.base_resolution, cfg.fiber_resolution)
    base_sp = sp.manifold_space(scenario.submersion.base, base_axes)
    floor = float(criterion_eps_grid(base_sp.space)[0])
    return CollapseResponse(
        records=[CollapseRecordModel.from_record(r) for r in records],
        csv_text=csv_text,
        criterion_floor=floor,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="sublab", version=__version__,
                  description="Riemannian submersion bundle-metric lab")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/scenarios")
    def scenarios() -> dict:
        return {"scenarios": list(SCENARIO_IDS)}

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest) -> VerifyResponse:
        try:
            return handle_verify(req)
        except SublabError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/net", response_model=NetResponse)
    def net(req: NetRequest) -> NetResponse:
        try:
            return handle_net(req)
        except SublabError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/gh", response_model=GHResponse)
    def gh(req: GHRequest) -> GHResponse:
        try:
            return handle_gh(req)
        except TooLarge as exc:
            raise HTTPException(status_code=413, detail=str(exc)) from exc
        except (SublabError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/collapse", response_model=CollapseResponse)
    def collapse(req: CollapseRequest) -> CollapseResponse:
        try:
            # the service never writes files; clients persist the returned CSV
            return handle_collapse(req, write=False)
        except SublabError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    return app


app = create_app()
