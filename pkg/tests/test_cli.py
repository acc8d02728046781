import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nlshift.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run_cli("simulate", "--dgp", "linear_gaussian", "--n", "600", "--seed", "5",
                   "--j", "2", "--p", "1", "--out", out, "--oracle-draws", "50000")
    assert code == 0
    return out


def _patch_config(sim_dir, tmp_path, **kw):
    cfg = json.loads((sim_dir / "config.json").read_text())
    cfg["first_stage"]["m1"] = 51
    cfg["out"] = str(tmp_path / "results")
    for k, v in kw.items():
        cur = cfg
        parts = k.split(".")
        for part in parts[:-1]:
            cur = cur.setdefault(part, {})
        cur[parts[-1]] = v
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, Path(cfg["out"])


def test_simulate_writes_expected_files(sim_dir):
    for name in ("panel.csv", "oracle.json", "config.json", "sector.csv"):
        assert (sim_dir / name).exists()
    oracle = json.loads((sim_dir / "oracle.json").read_text())
    assert oracle["ad_true"] == 2.0
    assert len(oracle["pe_true"]) == 31  # 30 tariff rungs + unit shift


def test_estimate_round_trip_recovers_slope(sim_dir, tmp_path):
    cfg, out = _patch_config(sim_dir, tmp_path)
    assert run_cli("estimate", "--config", cfg) == 0
    est = json.loads((out / "estimates.json").read_text())
    assert est["ad"] == pytest.approx(2.0, abs=0.15)
    assert est["meta"]["seed"] == 5
    assert len(est["meta"]["config_hash"]) == 16
    for name in ("asf.csv", "lar.csv", "treatment.csv"):
        assert (out / name).exists()


def test_estimate_grid_export(sim_dir, tmp_path):
    cfg, out = _patch_config(sim_dir, tmp_path, export_grid=True)
    assert run_cli("estimate", "--config", cfg) == 0
    lines = (out / "first_stage_grid.csv").read_text().strip().splitlines()
    assert len(lines) == 52  # header + one row per mesh level


def test_missing_data_file_exits_2(sim_dir, tmp_path):
    cfg, _ = _patch_config(sim_dir, tmp_path, **{"data.path": str(tmp_path / "nope.csv")})
    assert run_cli("estimate", "--config", cfg) == 2


def test_bad_config_field_exits_2(sim_dir, tmp_path):
    cfg, _ = _patch_config(sim_dir, tmp_path, **{"first_stage.eps": 0.9})
    assert run_cli("estimate", "--config", cfg) == 2


def test_missing_config_exits_2(tmp_path):
    assert run_cli("estimate", "--config", tmp_path / "absent.json") == 2


def test_bootstrap_smoke_and_determinism(sim_dir, tmp_path):
    cfg, out = _patch_config(sim_dir, tmp_path, **{"inference.b": 4})
    assert run_cli("bootstrap", "--config", cfg) == 0
    first = (out / "bands.json").read_bytes()
    payload = json.loads(first)
    assert payload["meta"]["b"] == 4
    assert set(payload["bands"]["targets"]) >= {"asf", "lar", "ad"}
    # rerun the identical config: byte-identical output
    (out / "bands.json").unlink()
    assert run_cli("bootstrap", "--config", cfg) == 0
    assert (out / "bands.json").read_bytes() == first


def test_policy_ladder_written(sim_dir, tmp_path):
    cfg, out = _patch_config(sim_dir, tmp_path, **{"inference.b": 0})
    assert run_cli("policy", "--config", cfg) == 0
    est = json.loads((out / "estimates.json").read_text())
    assert len(est["pe"]) == 30
    phis = [row["phi"] for row in est["pe"]]
    assert phis[0] == 0.01 and phis[-1] == 0.30
    assert (out / "pe.csv").exists()


def test_policy_with_bands(sim_dir, tmp_path):
    cfg, out = _patch_config(sim_dir, tmp_path, **{"inference.b": 4, "policy.phi_ladder": [0.1, 0.2]})
    assert run_cli("policy", "--config", cfg) == 0
    payload = json.loads((out / "policy.json").read_text())
    assert "pe" in payload["bands"]["targets"]
    assert payload["bands"]["targets"]["pe"]["x"] == [0.1, 0.2]


def test_compare_2sls_outputs(sim_dir, tmp_path):
    cfg, out = _patch_config(sim_dir, tmp_path)
    assert run_cli("compare-2sls", "--config", cfg) == 0
    payload = json.loads((out / "compare_2sls.json").read_text())
    row = payload["per_period"][0]
    assert row["tsls"] == pytest.approx(2.0, abs=0.2)
    assert row["ad"] == pytest.approx(2.0, abs=0.2)
    assert (out / "compare_2sls.csv").exists()


def test_cli_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "nlshift.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "nlshift" in proc.stdout


def test_simulate_rejects_unknown_dgp(tmp_path):
    with pytest.raises(SystemExit):
        run_cli("simulate", "--dgp", "bogus", "--n", "10", "--out", tmp_path)
