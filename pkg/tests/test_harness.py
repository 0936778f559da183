import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from rebirthlab import bundle_io
from rebirthlab import path_engine as pe
from rebirthlab.errors import ConfigError
from rebirthlab.harness import check_ids, load_config, parse_config, run_experiment
from rebirthlab.harness.cli import main

from conftest import brownian_u

MINIMAL = {"schema_version": 1, "seed": 5, "case_id": 1, "process": {"beta": 1.0},
           "checks": ["kernel_golden"]}


def write_config(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def test_minimal_config_runs(tmp_path):
    cfg = load_config(write_config(tmp_path, {**MINIMAL, "output_dir": "out"}))
    man = run_experiment(cfg)
    assert man.passed and len(man.verdicts) == 1
    assert man.timing["kernel_golden"] < 60
    on_disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert on_disk["verdicts"][0]["status"] == "pass"
    assert on_disk["config_hash"] == cfg.config_hash
    assert on_disk["artifacts"] == ["verdicts/kernel_golden.json"]


def test_rerun_gives_identical_statistics(tmp_path):
    raw = {**MINIMAL, "checks": ["kernel_golden", "scalar_identities",
                                 {"id": "laplace_normalization", "n": 200}]}
    a = run_experiment(parse_config({**raw, "output_dir": str(tmp_path / "a")}))
    b = run_experiment(parse_config({**raw, "output_dir": str(tmp_path / "b")}), workers=2)
    assert json.dumps(a.verdicts, sort_keys=True) == json.dumps(b.verdicts, sort_keys=True)


def test_validation_lists_every_offending_key():
    raw = {**MINIMAL, "bogus": 1, "checks": ["nope", {"id": "kernel_golden", "n_pts": 3}],
           "sim": {"dt": -1, "speed": 2}, "thresholds": {"z_max": 0}, "format": "xml"}
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    msg = str(exc.value)
    for key in ("bogus", "'nope'", "n_pts", "sim.dt", "sim.speed", "thresholds.z_max", "format"):
        assert key in msg


@pytest.mark.parametrize("patch", [{"schema_version": 2}, {"seed": None}, {"checks": []},
                                   {"rebirth": {"mode": "full", "atoms": [[0.0, 0.5]]}},
                                   {"case_id": 4}])
def test_invalid_configs(patch):
    with pytest.raises(ConfigError):
        parse_config({**MINIMAL, **patch})


def test_process_blocks(tmp_path):
    cfg = parse_config({**MINIMAL, "process": {"beta": 2.0, "levy": {"kind": "stable",
                                                                     "alpha": 1.5}}})
    assert cfg.base.levy.alpha == 1.5 and cfg.base.beta == 2.0
    cfg = parse_config({**MINIMAL, "case_id": 4,
                        "process": {"diffusion": {"preset": "ou", "theta": 0.5}},
                        "rebirth": {"mode": "partial", "atoms": [[1.0, 0.5]]}})
    assert cfg.base.diffusion.name == "ou" and cfg.rebirth.mode == "partial"
    table = tmp_path / "coef.csv"
    table.write_text("x,a,c\n-5,1,0\n5,1,0\n")
    cfg = parse_config({**MINIMAL, "case_id": 4, "process": {"diffusion": {"table": "coef.csv"}}},
                       str(tmp_path))
    assert cfg.base.diffusion.name == "table"


def test_sim_block_and_overrides():
    cfg = parse_config({**MINIMAL, "sim": {"dt": 2e-3, "n": 50},
                        "checks": ["kernel_golden", {"id": "laplace_normalization", "n": 10}]})
    params = dict(cfg.checks)
    assert params["laplace_normalization"] == {"dt": 2e-3, "n": 10}
    assert params["kernel_golden"] == {}


def test_modulus_tables_and_plot_descriptor(tmp_path):
    raw = {**MINIMAL, "output_dir": str(tmp_path / "o"),
           "checks": [{"id": "brownian_uniform_modulus", "n_replicas": 4, "k_max": 10}]}
    man = run_experiment(parse_config(raw))
    assert man.passed  # informational checks never fail the run
    assert man.verdicts[0]["status"] == "informational" and not man.verdicts[0]["hard"]
    rows = list(csv.DictReader(open(tmp_path / "o" / "data" / "brownian_uniform_modulus_scales.csv")))
    assert [float(r["level"]) for r in rows] == [8.0, 9.0, 10.0]
    desc = json.loads((tmp_path / "o" / "data" / "brownian_uniform_modulus_plot.json").read_text())
    assert desc["data"] == "brownian_uniform_modulus_scales.csv"
    raw["format"] = "json"
    raw["output_dir"] = str(tmp_path / "j")
    man = run_experiment(parse_config(raw))
    assert all(not a.startswith("data/") for a in man.artifacts)


def test_promoted_modulus_can_fail(tmp_path):
    raw = {**MINIMAL, "output_dir": str(tmp_path),
           "checks": [{"id": "brownian_uniform_modulus", "n_replicas": 4, "k_max": 10,
                       "band": [5.0, 6.0], "promote": True}]}
    man = run_experiment(parse_config(raw))
    assert not man.passed and man.verdicts[0]["status"] == "fail"


# command line ---------------------------------------------------------------------

def test_cli_run_exit_codes(tmp_path, capsys):
    good = write_config(tmp_path, {**MINIMAL, "output_dir": "out"})
    assert main(["run", str(good)]) == 0
    bad = write_config(tmp_path, {**MINIMAL, "checks": ["not_a_check"]}, "bad.yaml")
    assert main(["run", str(bad)]) == 2
    assert "not_a_check" in capsys.readouterr().err
    failing = write_config(tmp_path, {**MINIMAL, "output_dir": "f",
                                      "checks": [{"id": "kernel_golden", "rel_tol": 1e-30}]},
                           "fail.yaml")
    assert main(["run", str(failing)]) == 1


def test_cli_list_checks(capsys):
    assert main(["list-checks"]) == 0
    out = capsys.readouterr().out
    assert all(cid in out for cid in check_ids())


def test_dump_kernel_brownian(tmp_path):
    out = tmp_path / "u.csv"
    assert main(["dump-kernel", "u_beta", "--grid=-3:3:0.01", "-o", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 601
    x = np.array([float(r["x"]) for r in rows])
    v = np.array([float(r["value"]) for r in rows])
    np.testing.assert_allclose(v, brownian_u(1.0, x), rtol=1e-9)
    assert {r["status"] for r in rows} == {"ok"}


def test_dump_kernel_w_asymmetry(tmp_path, capsys):
    out = tmp_path / "w.csv"
    assert main(["dump-kernel", "w_p", "--grid=-2:2:0.25", "--mu", "1:1", "--y", "0.3",
                 "-o", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["max_asymmetry"] > 0.1


def test_dump_kernel_empty_grid(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["dump-kernel", "u_beta", "--grid", "", "-o", str(out)]) == 0
    assert out.read_text().splitlines() == ["x,value,status"]


def test_dump_kernel_marks_failing_rows(tmp_path, capsys):
    out = tmp_path / "k.csv"
    # the killed kernel is undefined at 0; that row is marked and the rest kept
    assert main(["dump-kernel", "frak_u0", "--grid=-1,0,1", "--y", "0.5", "-o", str(out)]) == 1
    rows = list(csv.DictReader(open(out)))
    assert [r["status"].startswith("error") for r in rows] == [False, True, False]
    assert rows[1]["value"] == ""


def test_simulate_and_replay(tmp_path, capsys):
    b = tmp_path / "b.rblb"
    assert main(["simulate", "--seed", "2", "--t-max", "3", "-o", str(b)]) == 0
    capsys.readouterr()
    bundle = bundle_io.load_bundle(b)
    ref = pe.estimate_local_time(bundle, [0.0, 0.5], epsilon=0.05)
    assert main(["replay", str(b), "--levels=0,0.5", "--epsilon", "0.05"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert np.array_equal(np.array(out["values"]), ref.values)
    assert main(["replay", str(b), "--levels=0,0.5", "--epsilon", "0.1"]) == 0
    other = json.loads(capsys.readouterr().out)
    assert not np.array_equal(np.array(other["values"]), ref.values)
    assert main(["replay", str(b), "--check", "decomposition", "--epsilon", "0.1"]) == 0
    assert json.loads(capsys.readouterr().out)["residual"] <= 1e-12


def test_replay_corrupted_bundle(tmp_path, capsys):
    b = tmp_path / "b.rblb"
    main(["simulate", "--seed", "2", "--t-max", "1", "-o", str(b)])
    data = bytearray(b.read_bytes())
    data[60] ^= 0xFF
    b.write_bytes(bytes(data))
    assert main(["replay", str(b)]) == 2
    assert "checksum" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["quick.yaml", "acceptance.yaml"])
def test_shipped_configs_parse(name):
    path = Path(__file__).resolve().parents[1] / "configs" / name
    cfg = load_config(path)
    assert cfg.seed == 20261019
    assert all(cid in check_ids() for cid, _ in cfg.checks)
