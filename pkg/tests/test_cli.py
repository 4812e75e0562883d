import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qbgk.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VERIFY,
    main,
)
from qbgk.distributions import (
    DistributionField,
    MomentumGrid,
    read_snapshot,
    write_snapshot,
)
from qbgk.dynamics import read_diagnostics_csv
from qbgk.equilibrium import equilibrium_moments

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def _species(mass, stat, mom):
    return {"mass": mass, "statistics": stat, "moments": mom.to_dict()}


def test_solve_coeffs_symmetric(tmp_path):
    mom = equilibrium_moments(1.0, (0.1, 0, 0), 0.7, 1.0, 1)
    cfg = _write(tmp_path / "c.json", {"species": [_species(1.0, "fermion", mom)] * 2})
    assert main(["solve-coeffs", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "coefficients.json").read_text())
    assert rep["feasible"] == {"intra": [True, True], "inter": True}
    c1 = rep["intra"][0]["c"]
    assert rep["inter"]["c12"] == pytest.approx(c1, abs=1e-10)
    assert rep["inter"]["c21"] == pytest.approx(c1, abs=1e-10)
    assert all(abs(v) <= 1e-8 for v in rep["residuals"]["inter"]["residuals"].values())
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["subcommand"] == "solve-coeffs" and man["exit_code"] == 0
    assert man["outputs"] == ["coefficients.json"]


def test_solve_coeffs_fermion_boson_forward_case(tmp_path):
    a, b, c12, c21 = 0.9, np.array([0.2, -0.1, 0.0]), -1.0, 0.8
    m1 = equilibrium_moments(a, b, c12, 1.0, 1)
    m2 = equilibrium_moments(a, b, c21, 2.0, -1)
    # split the total momentum and energy unevenly between the species
    shift = np.array([0.05, 0.0, 0.02])
    mom1 = type(m1)(m1.N, m1.P + shift, m1.E + 0.1)
    mom2 = type(m2)(m2.N, m2.P - shift, m2.E - 0.1)
    cfg = _write(tmp_path / "c.json", {"species": [
        _species(1.0, "fermion", mom1), _species(2.0, "boson", mom2)]})
    assert main(["solve-coeffs", cfg, "--out", str(tmp_path)]) == EXIT_OK
    inter = json.loads((tmp_path / "coefficients.json").read_text())["inter"]
    assert inter["a"] == pytest.approx(a, rel=1e-8)
    assert np.allclose(inter["b"], b, rtol=1e-8, atol=1e-8)
    assert inter["c12"] == pytest.approx(c12, rel=1e-8)
    assert inter["c21"] == pytest.approx(c21, rel=1e-8)


def test_solve_coeffs_infeasible(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["solve-coeffs", str(CONFIGS / "infeasible.json"), "--out", str(out)])
    assert code == EXIT_INFEASIBLE
    err = _stderr_json(capsys)
    assert err["code"] == EXIT_INFEASIBLE and err["error"] == "infeasible"
    assert err["reason"].startswith("mixture:")
    assert "nonpositive mixture internal energy" in err["reason"]
    rep = json.loads((out / "coefficients.json").read_text())
    assert rep["feasible"]["inter"] is False and rep["inter"] is None
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == EXIT_INFEASIBLE


def test_missing_config_is_exit_1(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert _stderr_json(capsys)["code"] == EXIT_CONFIG


@pytest.mark.parametrize(
    "cfg",
    [
        "not json",
        json.dumps({"species": [{"mass": 1.0, "statistics": "fermion"}]}),
        json.dumps({"species": [{"mass": -1.0, "statistics": "fermion"}] * 2}),
        json.dumps({"species": [{"mass": 1.0, "statistics": "anyon"}] * 2}),
    ],
)
def test_bad_config_is_exit_1(tmp_path, capsys, cfg):
    path = tmp_path / "bad.json"
    path.write_text(cfg, encoding="utf-8")
    assert main(["solve-coeffs", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert _stderr_json(capsys)["error"] in ("config", "io")


def _sim_config(t_end=0.2, **extra):
    cfg = {
        "mode": "homogeneous",
        "dt": 0.05,
        "t_end": t_end,
        "grid": {"n": 12},
        "species": [{"mass": 1.0, "statistics": "fermion"}, {"mass": 2.0, "statistics": "fermion"}],
        "init": {"kind": "equilibria", "species": [
            {"a": 1.0, "b": [0.3, 0.0, 0.0], "c": 0.5},
            {"a": 1.5, "b": [-0.2, 0.1, 0.0], "c": 1.0}]},
    }
    cfg.update(extra)
    return cfg


def test_simulate_zero_time_reproduces_initial_condition(tmp_path):
    from qbgk.cli import build_sim_config
    from qbgk.dynamics import initial_state

    raw = _sim_config(t_end=0.0)
    cfg = _write(tmp_path / "s.json", raw)
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out)]) == EXIT_OK
    expected = initial_state(build_sim_config(raw, str(tmp_path)))
    for s in range(2):
        fld, grid = read_snapshot(out / f"species{s + 1}.snap")
        assert grid == expected.config.grid
        assert np.array_equal(fld.values, expected.f[s][0])


def test_simulate_outputs_and_invariants(tmp_path, capsys):
    cfg = _write(tmp_path / "s.json", _sim_config())
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "final H" in stdout and "max occupancy" in stdout
    man = json.loads((out / "manifest.json").read_text())
    assert man["outputs"] == ["diagnostics.csv", "species1.snap", "species2.snap"]
    rec = np.array(read_diagnostics_csv(out / "diagnostics.csv"))
    H = rec[:, 7]
    assert np.all(np.diff(H) <= 1e-14 * np.abs(H[:-1]))
    for col in (1, 2, 6):
        assert np.max(np.abs(rec[:, col] / rec[0, col] - 1)) <= 1e-12


def test_simulate_slab_writes_per_cell_snapshots(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", str(CONFIGS / "slab_cosine.json"), "--out", str(out)]) == EXIT_OK
    names = json.loads((out / "manifest.json").read_text())["outputs"]
    assert "species2_cell0007.snap" in names
    assert len(names) == 2 * 8 + 1


def test_simulate_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    cfg = _write(tmp_path / "s.json", _sim_config())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", cfg, "--out", str(a)]) == EXIT_OK
    monkeypatch.setenv("THREADS", "3")
    assert main(["simulate", cfg, "--out", str(b)]) == EXIT_OK
    for name in ("species1.snap", "species2.snap", "diagnostics.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_runtime_failure_is_exit_3(tmp_path, capsys):
    grid = MomentumGrid(4.0, 8)
    lump = np.full(grid.shape, 1e-3)
    lump[3:5, 3:5, 3:5] = 1e4  # far beyond any Bose-Einstein equilibrium
    write_snapshot(tmp_path / "b.snap", DistributionField(lump, -1, 1.0), grid)
    write_snapshot(tmp_path / "f.snap", DistributionField(np.full(grid.shape, 0.2), 1, 1.0), grid)
    cfg = _write(tmp_path / "s.json", _sim_config(
        grid={"n": 8, "p_max": 4.0},
        species=[{"mass": 1.0, "statistics": "fermion"}, {"mass": 1.0, "statistics": "boson"}],
        init={"kind": "snapshot", "paths": ["f.snap", "b.snap"]},
    ))
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out)]) == EXIT_RUNTIME
    err = _stderr_json(capsys)
    assert err["code"] == EXIT_RUNTIME
    assert "step=0" in err["reason"] and "species=2" in err["reason"]
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == EXIT_RUNTIME


def test_simulate_cfl_violation_is_exit_1(tmp_path, capsys):
    cfg = _write(tmp_path / "s.json", _sim_config(mode="slab1d", nx=4, x_length=1.0, dt=1.0))
    assert main(["simulate", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
    reason = _stderr_json(capsys)["reason"]
    assert "CFL" in reason or "Courant" in reason


def test_verify_quick_passes(tmp_path, capsys):
    assert main(["verify", "--level", "quick", "--out", str(tmp_path)]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out
    payload = json.loads((tmp_path / "verify.json").read_text())
    assert payload["checks"] and all(c["passed"] for c in payload["checks"])


def test_verify_failure_path_is_exit_4(capsys):
    assert main(["verify", "--level", "quick", "--tol-scale", "1e-30"]) == EXIT_VERIFY
    assert _stderr_json(capsys)["code"] == EXIT_VERIFY


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qbgk", "solve-coeffs", str(CONFIGS / "fb_coeffs.json"),
         "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "c12" in proc.stdout
    rep = json.loads((tmp_path / "coefficients.json").read_text())
    assert math.isfinite(rep["inter"]["a"])
