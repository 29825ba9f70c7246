"""Scenario catalog: concrete compact submersions plus experiment configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidScenario
from .geometry import Axis, ManifoldModel
from .submersion import SubmersionModel

TWO_PI = 2.0 * math.pi
# Chart shrink that keeps sampled points away from coordinate singularities.
POLE_MARGIN = 1e-2

SCENARIO_IDS = ("product-torus", "product-sphere-circle", "hopf", "identity")


def flat_torus(name: str = "torus2", dims: int = 2) -> ManifoldModel:
    eye = np.eye(dims)

    def metric_fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (dims, dims)).copy()

    axes = tuple(Axis(0.0, TWO_PI, periodic=True) for _ in range(dims))
    return ManifoldModel(name=name, dim=dims, axes=axes, metric_fn=metric_fn)


def circle(name: str = "circle") -> ManifoldModel:
    return flat_torus(name=name, dims=1)


def round_sphere(name: str = "sphere", radius: float = 1.0, margin: float = POLE_MARGIN) -> ManifoldModel:
    """Round 2-sphere in colatitude/longitude, poles excluded by the chart margin."""

    r2 = radius * radius

    def metric_fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        theta = x[..., 0]
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = r2
        g[..., 1, 1] = r2 * np.sin(theta) ** 2
        return g

    def embedding_fn(x: np.ndarray) -> np.ndarray:
        theta, phi = x[..., 0], x[..., 1]
        return radius * np.stack(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1
        )

    axes = (Axis(margin, math.pi - margin, periodic=False), Axis(0.0, TWO_PI, periodic=True))
    return ManifoldModel(name=name, dim=2, axes=axes, metric_fn=metric_fn, embedding_fn=embedding_fn)


def hopf_total(name: str = "s3-hopf", margin: float = POLE_MARGIN) -> ManifoldModel:
    """Unit 3-sphere in Hopf coordinates (eta, xi1, xi2); degenerate circles excluded."""

    def metric_fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eta = x[..., 0]
        g = np.zeros(x.shape[:-1] + (3, 3))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = np.cos(eta) ** 2
        g[..., 2, 2] = np.sin(eta) ** 2
        return g

    axes = (
        Axis(margin, math.pi / 2 - margin, periodic=False),
        Axis(0.0, TWO_PI, periodic=True),
        Axis(0.0, TWO_PI, periodic=True),
    )
    return ManifoldModel(name=name, dim=3, axes=axes, metric_fn=metric_fn)


def product_metric(m1: ManifoldModel, m2: ManifoldModel, name: str) -> ManifoldModel:
    d1, d2 = m1.dim, m2.dim

    def metric_fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (d1 + d2, d1 + d2))
        g[..., :d1, :d1] = m1.metric_fn(x[..., :d1])
        g[..., d1:, d1:] = m2.metric_fn(x[..., d1:])
        return g

    return ManifoldModel(name=name, dim=d1 + d2, axes=m1.axes + m2.axes, metric_fn=metric_fn)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    submersion: SubmersionModel
    integrable: bool
    description: str


def _first_factor_projection(b: int) -> tuple[Callable, Callable]:
    def proj(x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., :b]

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        J = np.zeros((b, d))
        J[:, :b] = np.eye(b)
        return np.broadcast_to(J, x.shape[:-1] + (b, d)).copy()

    return proj, jac


def make_product_torus() -> Scenario:
    total = flat_torus("torus2")
    base = circle("circle-base")
    proj, jac = _first_factor_projection(1)
    S = SubmersionModel(total=total, base=base, proj_fn=proj, jacobian_fn=jac)
    return Scenario("product-torus", S, integrable=True, description="flat T^2 -> S^1, first factor")


def make_product_sphere_circle() -> Scenario:
    sphere = round_sphere("sphere-base")
    fiber = circle("fiber-circle")
    total = product_metric(sphere, fiber, "sphere-x-circle")
    proj, jac = _first_factor_projection(2)
    S = SubmersionModel(total=total, base=sphere, proj_fn=proj, jacobian_fn=jac)
    return Scenario(
        "product-sphere-circle", S, integrable=True, description="S^2 x S^1 -> S^2, first factor"
    )


def make_hopf() -> Scenario:
    """Hopf map S^3 -> S^2(1/2) in Hopf/colatitude coordinates; non-integrable."""
    total = hopf_total()
    base = round_sphere("sphere-half", radius=0.5, margin=2 * POLE_MARGIN)

    def proj(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        theta = 2.0 * x[..., 0]
        phi = np.mod(x[..., 1] - x[..., 2], TWO_PI)
        return np.stack([theta, phi], axis=-1)

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
        return np.broadcast_to(J, x.shape[:-1] + (2, 3)).copy()

    S = SubmersionModel(total=total, base=base, proj_fn=proj, jacobian_fn=jac)
    return Scenario("hopf", S, integrable=False, description="Hopf fibration S^3 -> S^2(1/2)")


def make_identity() -> Scenario:
    total = flat_torus("torus2-id")
    proj, jac = _first_factor_projection(2)
    S = SubmersionModel(total=total, base=total, proj_fn=proj, jacobian_fn=jac)
    return Scenario("identity", S, integrable=True, description="identity submersion of T^2")


_BUILDERS = {
    "product-torus": make_product_torus,
    "product-sphere-circle": make_product_sphere_circle,
    "hopf": make_hopf,
    "identity": make_identity,
}


def get_scenario(scenario_id: str) -> Scenario:
    try:
        return _BUILDERS[scenario_id]()
    except KeyError:
        raise InvalidScenario(f"unknown scenario {scenario_id!r}; expected one of {SCENARIO_IDS}") from None


@dataclass
class ScenarioConfig:
    """Flat experiment configuration; mirrors the key-value config file."""

    scenario_id: str = "product-torus"
    base_resolution: int = 24
    fiber_resolution: int = 24
    sphere_fiber_resolution: int = 8
    p: float = 1.0
    q: float = 1.0
    warp_kind: str = "constant-sequence"
    warp_params: list[float] = field(default_factory=lambda: [1.0, 1.0])
    warp_upper_bound: float = 10.0
    n_list: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    seed: int = 0
    out_path: str = ""

    def validate(self) -> None:
        if self.scenario_id not in SCENARIO_IDS:
            raise InvalidScenario(f"unknown scenario {self.scenario_id!r}")
        for name in ("base_resolution", "fiber_resolution", "sphere_fiber_resolution"):
            if getattr(self, name) < 4:
                raise InvalidScenario(f"{name} must be >= 4")
        if not self.n_list:
            raise InvalidScenario("n_list must be nonempty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise InvalidScenario("n_list must be strictly increasing")
        if self.warp_kind not in ("constant-sequence", "separable"):
            raise InvalidScenario(f"unknown warp_kind {self.warp_kind!r}")
        if self.q < 0:
            raise InvalidScenario("q must be nonnegative")


def warp_function(cfg: ScenarioConfig, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Warping function f_n on base coordinates for experiment step n.

    constant-sequence: f_n = c0 / n^alpha with params [c0, alpha].
    separable:         f_n(x) = (c0 + c1*sin(x_0)) / n^alpha with params [c0, c1, alpha].
    """
    if cfg.warp_kind == "constant-sequence":
        c0 = cfg.warp_params[0]
        alpha = cfg.warp_params[1] if len(cfg.warp_params) > 1 else 1.0
        value = c0 / float(n) ** alpha

        def f_const(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return np.full(x.shape[:-1], value)

        return f_const
    c0 = cfg.warp_params[0]
    c1 = cfg.warp_params[1] if len(cfg.warp_params) > 1 else 0.0
    alpha = cfg.warp_params[2] if len(cfg.warp_params) > 2 else 1.0
    scale = 1.0 / float(n) ** alpha

    def f_sep(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (c0 + c1 * np.sin(x[..., 0])) * scale

    return f_sep


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(tok) for tok in inner.split(",")]
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str) -> ScenarioConfig:
    """Parse the flat key-value config format (a TOML-compatible subset)."""
    cfg = ScenarioConfig()
    known = set(cfg.__dataclass_fields__)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InvalidScenario(f"config line {lineno}: expected key = value")
        key, raw = stripped.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in known:
            raise InvalidScenario(f"config line {lineno}: unknown key {key!r}")
        value = _parse_value(raw)
        if key in ("n_list", "warp_params"):
            if not isinstance(value, list):
                value = [value]
            value = [float(v) for v in value] if key == "warp_params" else [int(v) for v in value]
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def render_config(cfg: ScenarioConfig) -> str:
    lines = []
    for name in cfg.__dataclass_fields__:
        val = getattr(cfg, name)
        if isinstance(val, str):
            lines.append(f'{name} = "{val}"')
        elif isinstance(val, list):
            lines.append(f"{name} = [{', '.join(repr(v) for v in val)}]")
        else:
            lines.append(f"{name} = {val!r}")
    return "\n".join(lines) + "\n"
