"""Thin command-line client over the service layer.

Every subcommand builds the same request models the HTTP endpoints accept and
either calls the handlers in-process (default) or posts them to a running
server given via --server or the SUBLAB_SERVER environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import SublabError
from .scenarios import SCENARIO_IDS, parse_config
from .service import (
    CollapseRequest,
    GHRequest,
    NetRequest,
    VerifyRequest,
    handle_collapse,
    handle_gh,
    handle_net,
    handle_verify,
)


def _remote(server: str, path: str, payload: dict):
    import httpx

    resp = httpx.post(f"{server.rstrip('/')}{path}", json=payload, timeout=600.0)
    if resp.status_code != 200:
        raise SublabError(f"server error {resp.status_code}: {resp.text}")
    return resp.json()


def cmd_verify(args) -> int:
    req = VerifyRequest(scenario=args.scenario, p=args.p, q=args.q, res=args.res, tol=args.tol)
    if args.server:
        data = _remote(args.server, "/verify", req.model_dump())
        print(data["text"])
        return 0 if data["passed"] else 1
    out = handle_verify(req)
    print(out.text)
    return 0 if out.passed else 1


def cmd_collapse(args) -> int:
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    req = CollapseRequest(
        scenario=cfg.scenario_id,
        base_resolution=cfg.base_resolution,
        fiber_resolution=cfg.fiber_resolution,
        sphere_fiber_resolution=cfg.sphere_fiber_resolution,
        p=cfg.p,
        q=cfg.q,
        warp_kind=cfg.warp_kind,
        warp_params=cfg.warp_params,
        warp_upper_bound=cfg.warp_upper_bound,
        n_list=cfg.n_list,
        seed=cfg.seed,
        out_path=cfg.out_path,
    )
    if args.server:
        data = _remote(args.server, "/collapse", req.model_dump())
        csv_text = data["csv_text"]
    else:
        csv_text = handle_collapse(req, write=False).csv_text
    out_path = args.out or cfg.out_path
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(csv_text)
        print(f"wrote {out_path}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_net(args) -> int:
    req = NetRequest(scenario=args.scenario, eps=args.eps,
                     base_resolution=args.res, fiber_resolution=args.res)
    if args.server:
        data = _remote(args.server, "/net", req.model_dump())
        size, radius = data["size"], data["covering_radius"]
    else:
        out = handle_net(req)
        size, radius = out.size, out.covering_radius
    print(f"net size: {size}")
    print(f"covering radius: {radius!r}")
    return 0


def cmd_gh(args) -> int:
    with open(args.x) as fh:
        x_csv = fh.read()
    with open(args.y) as fh:
        y_csv = fh.read()
    req = GHRequest(x_csv=x_csv, y_csv=y_csv, exact=args.exact)
    if args.server:
        data = _remote(args.server, "/gh", req.model_dump())
        value, exact = data["value"], data["exact"]
    else:
        out = handle_gh(req)
        value, exact = out.value, out.exact
    kind = "exact" if exact else "upper bound"
    print(f"gromov-hausdorff {kind}: {value!r}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("sublab.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sublab",
                                     description="Riemannian submersion bundle-metric lab")
    parser.add_argument("--server", default=os.environ.get("SUBLAB_SERVER", ""),
                        help="base URL of a running sublab service; empty = run in-process")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("verify", help="run the invariant and claim suite for a scenario")
    p.add_argument("--scenario", required=True, choices=SCENARIO_IDS)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--res", type=int, default=16)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("collapse", help="run a warped-sequence collapse experiment")
    p.add_argument("--config", required=True, help="flat key-value config file")
    p.add_argument("--out", default="", help="override the configured CSV output path")
    p.set_defaults(func=cmd_collapse)

    p = subs.add_parser("net", help="greedy epsilon-net on a sampled scenario total space")
    p.add_argument("--scenario", required=True, choices=SCENARIO_IDS)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--res", type=int, default=24)
    p.set_defaults(func=cmd_net)

    p = subs.add_parser("gh", help="Gromov-Hausdorff estimate between two CSV metric spaces")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--exact", action="store_true")
    p.set_defaults(func=cmd_gh)

    p = subs.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SublabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
