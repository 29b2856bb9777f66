import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nhgeom.cli import main, run
from nhgeom.config import parse_config
from nhgeom.dynamics import read_columns
from nhgeom.errors import ConfigError
from nhgeom.experiments import qutrit_expected_diagonal, run_qutrit
from nhgeom.operators import matrix_to_json

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
MIN_EVOLVE = {
    "command": "evolve",
    "rho0": {"rows": 2, "cols": 2, "re": [0.5, 0.0, 0.0, 0.5], "im": [0.0, 0.0, 0.0, 0.0]},
    "H": {"rows": 2, "cols": 2, "re": [0.0, 1.0, 1.0, 0.0], "im": [0.0, 0.0, 0.0, 0.0]},
    "dt": 0.1,
    "horizon": [0.0, 1.0],
}


def cfg_bytes(**changes):
    obj = dict(MIN_EVOLVE)
    obj.update(changes)
    return json.dumps({k: v for k, v in obj.items() if v is not None}).encode()


# -- parse_config ------------------------------------------------------------


def test_minimal_config_round_trips():
    text = cfg_bytes()
    cfg = parse_config(text)
    assert json.dumps(cfg.to_dict(), sort_keys=True) == json.dumps(json.loads(text), sort_keys=True)
    assert json.loads(cfg.to_json()) == json.loads(text)


@pytest.mark.parametrize("dt", [-0.1, 0, "0.1", True])
def test_bad_dt_names_dt(dt):
    with pytest.raises(ConfigError) as err:
        parse_config(cfg_bytes(dt=dt))
    assert err.value.field == "dt"


def test_non_hermitian_operator_is_named():
    bad = {"rows": 2, "cols": 2, "re": [0.0, 1.0, 1.0 + 2e-10, 0.0]}
    with pytest.raises(ConfigError) as err:
        parse_config(cfg_bytes(H=bad))
    assert err.value.field == "H" and "H" in str(err.value)
    ok = {"rows": 2, "cols": 2, "re": [0.0, 1.0, 1.0 + 5e-11, 0.0]}
    parse_config(cfg_bytes(H=ok))


@pytest.mark.parametrize(
    "changes,field",
    [
        ({"bogus": 1}, "bogus"),
        ({"horizon": [1.0, 0.0]}, "horizon"),
        ({"horizon": None}, "horizon"),
        ({"command": "fly"}, "command"),
        ({"rho0": {"rows": 2, "cols": 2, "re": [0.6, 0, 0, 0.6]}}, "rho0"),
        ({"Gamma": {"rows": 3, "cols": 3, "re": [0] * 9}}, "Gamma"),
        ({"K": {"rows": 2, "cols": 2, "re": [0] * 4}}, "K"),
        ({"optimize": "yes"}, "optimize"),
        ({"rho0": {"rows": 2, "cols": 2, "re": [1, 0, 0, 0], "junk": 0}}, "rho0"),
    ],
)
def test_schema_violations(changes, field):
    with pytest.raises(ConfigError) as err:
        parse_config(cfg_bytes(**changes))
    assert err.value.field == field


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as err:
        parse_config(b'{"command": "evolve",\n "dt": }')
    assert err.value.field.startswith("line 2")


def test_tangent_must_be_traceless():
    cfg = {
        "command": "decompose",
        "rho": MIN_EVOLVE["rho0"],
        "tangent": {"rows": 2, "cols": 2, "re": [1.0, 0.0, 0.0, 0.0]},
    }
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(cfg).encode())
    assert err.value.field == "tangent"


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = parse_config(path.read_bytes())
    assert json.loads(cfg.to_json()) == json.loads(path.read_text())


# -- run ---------------------------------------------------------------------


def test_zero_generator_norm_column_is_one(tmp_path):
    zero = {"rows": 2, "cols": 2, "re": [0.0] * 4}
    run(parse_config(cfg_bytes(H=zero)), tmp_path)
    cols = read_columns(tmp_path / "evolve.csv")
    assert np.all(cols["norm"] == 1.0)
    assert len(cols["t"]) == 11


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_run_deterministically(path, tmp_path):
    cfg = parse_config(path.read_bytes())
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a == b
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        if name.endswith(".csv"):
            assert (tmp_path / "a" / name).read_text().startswith("# columns: ")


def test_evolve_optimize_columns(tmp_path):
    run(parse_config((CONFIGS / "evolve.json").read_bytes()), tmp_path)
    cols = read_columns(tmp_path / "evolve.csv")
    assert list(cols)[:5] == ["t", "norm", "gamma", "gamma_opt", "speed"]
    assert np.all(cols["gamma_opt"] <= cols["gamma"] + 1e-12)


def test_sta_config_tracks_gibbs(tmp_path):
    run(parse_config((CONFIGS / "sta.json").read_bytes()), tmp_path)
    summary = json.loads((tmp_path / "sta.json").read_text())
    assert summary["max_gibbs_distance"] <= 1e-6
    assert summary["max_commutator_residual"] <= 1e-10


def test_speedlimit_config_orders_bounds(tmp_path):
    run(parse_config((CONFIGS / "speedlimit.json").read_bytes()), tmp_path)
    s = json.loads((tmp_path / "speedlimit.json").read_text())
    assert s["elapsed"] >= s["qsl"] >= s["qsl_weak"]


def test_decompose_output_reconstructs(tmp_path):
    run(parse_config((CONFIGS / "decompose.json").read_bytes()), tmp_path)
    out = json.loads((tmp_path / "decompose.json").read_text())
    total = sum(np.array(out[k]["re"]) + 1j * np.array(out[k]["im"]) for k in ("coherent", "classical", "lifting"))
    n = sum(out["bures_norm_sq"][k] for k in ("coherent", "classical", "lifting"))
    assert n == pytest.approx(out["bures_norm_sq"]["total"], rel=1e-10)
    assert total.shape == (9,)


# -- main / exit codes -------------------------------------------------------


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_bytes(cfg_bytes())
    assert main(["run", str(good), "--output-dir", str(tmp_path / "out")]) == 0
    bad = tmp_path / "bad.json"
    bad.write_bytes(cfg_bytes(dt=-1))
    assert main(["run", str(bad)]) == 2
    assert "dt" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    lossy = tmp_path / "lossy.json"
    lossy.write_bytes(
        cfg_bytes(
            H=None,
            K={"rows": 2, "cols": 2, "re": [0.0] * 4, "im": [0.0, 0.0, 0.0, -5.0]},
            horizon=[0.0, 10.0],
            dt=0.01,
        )
    )
    assert main(["run", str(lossy), "--output-dir", str(tmp_path / "o2")]) == 3
    err = capsys.readouterr().err
    assert "evolve" in err and "rank lost" in err


def test_output_dir_precedence(tmp_path, monkeypatch):
    good = tmp_path / "good.json"
    good.write_bytes(cfg_bytes(output_dir=str(tmp_path / "from_config")))
    monkeypatch.chdir(tmp_path)
    assert main(["run", str(good)]) == 0
    assert (tmp_path / "from_config" / "evolve.csv").exists()
    monkeypatch.setenv("NHGEOM_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert main(["run", str(good)]) == 0
    assert (tmp_path / "from_env" / "evolve.csv").exists()
    assert main(["run", str(good), "--output-dir", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "evolve.csv").exists()


def test_seed_flag_is_accepted(tmp_path):
    assert main(["reproduce-qutrit", "--seed", "7", "--output-dir", str(tmp_path)]) == 0


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as err:
        main(["nonsense"])
    assert err.value.code == 2


# -- reproduction commands ---------------------------------------------------


def test_reproduce_qubit_files(tmp_path):
    assert main(["reproduce-qubit", "--output-dir", str(tmp_path)]) == 0
    norms = read_columns(tmp_path / "qubit_norms.csv")
    rates = read_columns(tmp_path / "qubit_rates.csv")
    assert list(norms) == ["t", "norm_baseline", "norm_opt", "rel_diff"]
    assert list(rates) == ["t", "gamma", "gamma_opt", "gamma_unnorm", "gamma_opt_unnorm"]
    summary = json.loads((tmp_path / "qubit_summary.json").read_text())
    steps = round(summary["theta"] / (summary["theta"] / 2000))
    assert len(norms["t"]) == steps + 1 == 2001
    assert np.allclose(rates["gamma_unnorm"], rates["gamma"] * norms["norm_baseline"], rtol=1e-14)
    assert norms["t"][-1] == summary["theta"]


def test_reproduce_qubit_custom_dt(tmp_path):
    assert main(["reproduce-qubit", "--dt", "0.01", "--output-dir", str(tmp_path)]) == 0
    norms = read_columns(tmp_path / "qubit_norms.csv")
    theta = json.loads((tmp_path / "qubit_summary.json").read_text())["theta"]
    assert len(norms["t"]) == round(theta / 0.01) + 1


def test_reproduce_qutrit_prints_verdict(tmp_path, capsys):
    assert main(["reproduce-qutrit", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "fails" in out and "K_g(0)" in out
    data = json.loads((tmp_path / "qutrit.json").read_text())
    assert data["verdict"] == "fails" and data["distinct_eigenvalues"] == 3
    rep = run_qutrit()
    assert np.allclose(np.diag(rep.K0), qutrit_expected_diagonal(rep.plan.theta), atol=1e-10)


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "nhgeom.cli", "reproduce-qutrit", "--output-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "fails" in proc.stdout
