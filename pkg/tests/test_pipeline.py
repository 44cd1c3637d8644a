import json

import numpy as np
import pytest

from nsfp import pipeline as P
from nsfp.config import RunConfig, preset

SMALL = dict(N=1, dt=0.01, T=0.5, ensemble_size=3000, snapshot_every=0.25, compare_times=(0.25, 0.5),
             grid_nodes=64, fp_dt=5e-3, alpha=(0.5,), kernel_bounds=False, ou_check_members=3000)


def _small(**kw):
    return RunConfig(**{**SMALL, **kw}).check()


def test_validate_rows():
    ok, rows = P.validate(preset("nonlinear-n1"))
    assert ok and [r["name"] for r in rows] == ["diagonal_noise", "generators", "finite_span", "F_nondegenerate"]
    ok, rows = P.validate(preset("line-noise"))
    assert not ok and not next(r for r in rows if r["name"] == "generators")["passed"]


def test_zero_noise_on_F_is_reported():
    ok, rows = P.validate(_small(noise_modes={((1, 0, 0), 1): 0.0}))
    row = next(r for r in rows if r["name"] == "F_nondegenerate")
    assert not ok and "non-singular matrix" in row["detail"] and "violation" in row["detail"]


def test_linear_run_passes_ou_checks(tmp_path):
    cfg = _small(linear_only=True, F=((1, 0, 0, 1, "re"),))
    rep = P.run_pipeline(cfg, out_dir=tmp_path)
    assert rep.checks["assumptions"]
    assert {r["quantity"] for r in rep.tables["ou_checks"]} >= {"variance[0]", "kde_max_error"}
    assert all(r["passed"] for r in rep.tables["ou_checks"] if r["quantity"].startswith("variance"))
    assert (tmp_path / "report.json").exists() and (tmp_path / "config.txt").exists()
    for name in rep.tables:
        assert (tmp_path / f"{name}.csv").exists()


def test_report_is_deterministic():
    cfg = _small(N=2, ensemble_size=500)
    a = P.run_pipeline(cfg)
    b = P.run_pipeline(cfg)
    assert a.body() == b.body()
    assert a.provenance["config_sha256"] == b.provenance["config_sha256"]


def test_report_contents():
    rep = P.run_pipeline(_small(ensemble_size=2000, kernel_bounds=True))
    for key in ("G_p(T)", "F_alpha[kde]", "F_alpha[fp]", "main_theorem[0.5]", "besov_audit_spread",
                "kernel_constants"):
        assert key in rep.scalars
    masses = [r["mass"] for r in rep.tables["kde"]]
    assert all(0.98 <= m <= 1.02 for m in masses)
    sups = [r["running_sup"] for r in rep.tables["G_p"] if r["p"] == 1.0]
    assert all(a <= b for a, b in zip(sups, sups[1:]))


def test_validation_failure_raises_stage_error(tmp_path):
    with pytest.raises(P.StageError) as err:
        P.run_pipeline(preset("line-noise", ensemble_size=50), out_dir=tmp_path)
    assert err.value.exit_code == 2 and err.value.stage == "validate"
    assert (tmp_path / "report.partial.json").exists()


def test_numerical_failure_exit_code():
    cfg = _small(N=2, dt=0.1, ensemble_size=4, initial_condition="shell:2:1e30")
    with np.errstate(all="ignore"), pytest.raises(P.StageError) as err:
        P.run_pipeline(cfg)
    assert err.value.exit_code == 3 and err.value.stage == "simulate"


def test_emit_plot_data(tmp_path):
    rep = P.RunReport("x")
    path = P.emit_plot_data(rep, "stationary", tmp_path / "s.csv")
    assert open(path).read().splitlines() == [",".join(P.PLOT_COLUMNS["stationary"])]
    rep.add_rows("stationary", [{"t": 1.0, "grid": "g", "window": 2.0, "residual": 0.1}])
    lines = open(P.emit_plot_data(rep, "stationary", tmp_path / "s.csv")).read().splitlines()
    assert lines[1] == "1.0,g,2.0,0.1"
    with pytest.raises(KeyError):
        P.emit_plot_data(rep, "nope", tmp_path / "n.csv")


def test_unresolved_grid_is_a_config_error():
    with pytest.raises(P.StageError) as err:
        P.run_pipeline(_small(grid_nodes=8, ensemble_size=300))
    assert err.value.exit_code == 2 and err.value.stage == "solve-fp"


def test_first_diff():
    assert P._first_diff({"a": [1, 2]}, {"a": [1, 3]}) == "/a[1]"
    assert P._first_diff({"a": 1}, {"a": 1}) is None
    assert P._first_diff({"a": 1}, {"b": 1}) == "/a"


def test_replay_detects_tampering(tmp_path):
    cfg = _small(ensemble_size=300, fp_check=False)
    P.run_pipeline(cfg, out_dir=tmp_path / "a")
    same, where, _ = P.replay(tmp_path / "a", out_dir=tmp_path / "b")
    assert same and where is None
    path = tmp_path / "a" / "report.json"
    obj = json.loads(path.read_text())
    obj["tables"]["G_p"][0]["value"] += 1e-15
    path.write_text(json.dumps(obj))
    same, where, _ = P.replay(tmp_path / "a", out_dir=tmp_path / "c")
    assert not same and where.startswith("/tables/G_p[0]")
