import numpy as np

from sublab.cli import main
from sublab.metricspace import FiniteMetricSpace, space_from_csv, space_to_csv


def test_verify_exit_code_zero(capsys):
    rc = main(["verify", "--scenario", "identity", "--p", "0.0", "--q", "0.0", "--res", "8"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "overall: pass" in out
    assert "verdict=SUBMERSION" in out


def test_collapse_writes_csv(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    out = tmp_path / "records.csv"
    cfg.write_text(
        "\n".join(
            [
                'scenario_id = "product-torus"',
                "base_resolution = 12",
                "fiber_resolution = 12",
                "n_list = [1, 2]",
                f'out_path = "{out}"',
            ]
        )
        + "\n"
    )
    rc = main(["collapse", "--config", str(cfg)])
    assert rc == 0
    text = out.read_text()
    lines = text.strip().splitlines()
    assert lines[0] == "n,sup_f,gh_total_base,gh_bundle_sm,criterion_eps"
    assert len(lines) == 3


def test_collapse_rerun_bit_exact(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'scenario_id = "product-torus"\nbase_resolution = 12\nfiber_resolution = 12\n'
        "n_list = [1, 2]\nseed = 5\n"
    )
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert main(["collapse", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["collapse", "--config", str(cfg), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_net_output(capsys):
    rc = main(["net", "--scenario", "product-torus", "--eps", "0.9", "--res", "12"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "net size:" in out
    assert "covering radius:" in out


def test_gh_exact_and_bound(tmp_path, capsys):
    X = FiniteMetricSpace(["a", "b"], np.array([[0.0, 1.0], [1.0, 0.0]]))
    Y = FiniteMetricSpace(["c"], np.zeros((1, 1)))
    xp = tmp_path / "x.csv"
    yp = tmp_path / "y.csv"
    xp.write_text(space_to_csv(X))
    yp.write_text(space_to_csv(Y))
    rc = main(["gh", "--x", str(xp), "--y", str(yp), "--exact"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "exact: 0.5" in out
    rc = main(["gh", "--x", str(xp), "--y", str(yp)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "upper bound" in out


def test_hopf_collapse_fails_cleanly(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('scenario_id = "hopf"\nn_list = [1, 2]\n')
    rc = main(["collapse", "--config", str(cfg)])
    err = capsys.readouterr().err
    assert rc == 2
    assert "error:" in err


def test_csv_round_trip_through_files(tmp_path):
    rng = np.random.default_rng(1)
    pts = rng.random((4, 2))
    d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
    X = FiniteMetricSpace([f"p{i}" for i in range(4)], d)
    path = tmp_path / "space.csv"
    path.write_text(space_to_csv(X))
    Y = space_from_csv(path.read_text())
    assert np.array_equal(X.dist, Y.dist)
