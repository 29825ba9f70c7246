import math
import os

import numpy as np
import pytest

from sublab import lab
from sublab import metricspace as ms
from sublab import spaces as sp
from sublab.errors import IntegrabilityRequired, InvalidScenario
from sublab.scenarios import (
    ScenarioConfig,
    get_scenario,
    parse_config,
    render_config,
    warp_function,
)


def small_cfg(**overrides):
    cfg = ScenarioConfig(
        scenario_id="product-torus",
        base_resolution=12,
        fiber_resolution=12,
        n_list=[1, 2, 4],
        out_path="",
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


class TestConfig:
    def test_parse_round_trip(self):
        cfg = small_cfg(seed=7, warp_params=[2.0, 1.0])
        text = render_config(cfg)
        back = parse_config(text)
        assert back == cfg

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(InvalidScenario):
            parse_config("bogus_key = 3\n")

    def test_validate_rejects_small_resolution(self):
        with pytest.raises(InvalidScenario):
            small_cfg(base_resolution=3).validate()

    def test_validate_rejects_nonincreasing_n(self):
        with pytest.raises(InvalidScenario):
            small_cfg(n_list=[1, 1, 2]).validate()

    def test_validate_rejects_unknown_scenario(self):
        with pytest.raises(InvalidScenario):
            small_cfg(scenario_id="klein-bottle").validate()

    def test_warp_families(self):
        cfg = small_cfg(warp_kind="constant-sequence", warp_params=[1.0, 1.0])
        f4 = warp_function(cfg, 4)
        assert np.allclose(f4(np.zeros((3, 1))), 0.25)
        cfg = small_cfg(warp_kind="separable", warp_params=[0.5, 0.25, 1.0])
        f2 = warp_function(cfg, 2)
        x = np.array([[np.pi / 2]])
        assert abs(float(f2(x)[0]) - 0.375) < 1e-15


class TestCriterion:
    def _base_space(self, res=12):
        scenario = get_scenario("product-torus")
        _, base_axes = lab.scenario_grid_axes(scenario, res, res)
        return sp.manifold_space(scenario.submersion.base, base_axes).space

    def test_constant_small_value_hits_floor(self):
        space = self._base_space()
        grid = lab.criterion_eps_grid(space)
        f = np.full(space.n, 1e-6)
        assert lab.criterion_check(space, f, grid) == grid[0]

    def test_constant_value_above_grid_returns_inf(self):
        space = self._base_space()
        grid = lab.criterion_eps_grid(space)
        f = np.full(space.n, 10.0)  # larger than the diameter pi
        assert math.isinf(lab.criterion_check(space, f, grid))

    def test_constant_value_selects_first_grid_point_above(self):
        space = self._base_space()
        grid = lab.criterion_eps_grid(space)
        c = 0.5
        got = lab.criterion_check(space, np.full(space.n, c), grid)
        expected = float(grid[np.argmax(grid > c)])
        assert got == expected

    def test_grid_refinement_moves_less_than_one_step(self):
        space = self._base_space()
        g16 = lab.criterion_eps_grid(space, 16)
        g32 = lab.criterion_eps_grid(space, 32)
        f = np.full(space.n, 0.4)
        c16 = lab.criterion_check(space, f, g16)
        c32 = lab.criterion_check(space, f, g32)
        step = g16[1] / g16[0]
        assert c32 <= c16 <= c32 * step * (1 + 1e-12)


class TestCollapse:
    def test_shrink_run_decreasing_and_consistent(self):
        records, csv_text = lab.run_collapse(small_cfg(), write=False)
        ns = [r.n for r in records]
        assert ns == [1, 2, 4]
        gh_t = [r.gh_total_base for r in records]
        gh_b = [r.gh_bundle_sm for r in records]
        for seq in (gh_t, gh_b):
            for a, b in zip(seq, seq[1:]):
                assert b <= a * 1.05
        for r in records:
            assert r.gh_total_base <= np.pi / (2 * r.n) + 0.05
            assert r.sup_f == 1.0 / r.n
        assert csv_text.startswith("n,sup_f,gh_total_base,gh_bundle_sm,criterion_eps\n")
        assert csv_text.endswith("\n")

    def test_control_run_constant_columns(self):
        records, _ = lab.run_collapse(
            small_cfg(warp_params=[1.0, 0.0]), write=False
        )
        gh_t = [r.gh_total_base for r in records]
        gh_b = [r.gh_bundle_sm for r in records]
        assert max(gh_t) - min(gh_t) <= 0.01 * max(gh_t)
        assert max(gh_b) - min(gh_b) <= 0.01 * max(gh_b)

    def test_hopf_rejected(self):
        with pytest.raises(IntegrabilityRequired):
            lab.run_collapse(small_cfg(scenario_id="hopf"), write=False)

    def test_csv_written(self, tmp_path):
        out = tmp_path / "out.csv"
        cfg = small_cfg(n_list=[1, 2], out_path=str(out))
        _, csv_text = lab.run_collapse(cfg)
        assert out.read_text() == csv_text

    def test_deterministic_rerun(self):
        cfg = small_cfg()
        _, first = lab.run_collapse(cfg, write=False)
        _, second = lab.run_collapse(cfg, write=False)
        assert first == second

    def test_thread_count_does_not_change_output(self, monkeypatch):
        cfg = small_cfg(n_list=[1, 2])
        monkeypatch.setenv("SUBLAB_THREADS", "1")
        _, serial = lab.run_collapse(cfg, write=False)
        monkeypatch.setenv("SUBLAB_THREADS", "3")
        _, threaded = lab.run_collapse(cfg, write=False)
        assert serial == threaded

    def test_inf_criterion_rendered_as_inf(self):
        rec = lab.CollapseRecord(n=1, sup_f=10.0, gh_total_base=1.0,
                                 gh_bundle_sm=1.0, criterion_eps=math.inf)
        text = lab.render_collapse_csv([rec])
        assert text.splitlines()[1].endswith(",inf")


class TestVerifyAll:
    @pytest.mark.parametrize("sid,expected", [
        ("product-torus", "SUBMERSION"),
        ("identity", "SUBMERSION"),
        ("hopf", "NOT_SUBMERSION"),
    ])
    def test_suite_passes_with_expected_verdict(self, sid, expected):
        report = lab.verify_all(sid, 1.0, 1.0, res=10)
        assert report.verdict == expected
        failed = [c.name for c in report.checks if not c.passed]
        assert not failed, failed

    def test_render_report_mentions_every_check(self):
        report = lab.verify_all("product-torus", 0.0, 0.0, res=8)
        text = lab.render_report(report)
        for c in report.checks:
            assert c.name in text

    def test_threads_env_parsing(self, monkeypatch):
        monkeypatch.setenv("SUBLAB_THREADS", "2")
        assert lab.thread_count() == 2
        monkeypatch.delenv("SUBLAB_THREADS")
        assert lab.thread_count() >= 1
