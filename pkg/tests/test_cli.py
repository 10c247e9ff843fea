import json
from pathlib import Path

import pytest

from rangelab.cli import main
from rangelab.config import config_hash, load_config, parse_config
from rangelab.errors import ConfigError

SMALL = """
[domain]
shape = "unit-square"

[walk]
kind = "simple"

[experiment]
a = [0.5, 0.5]
n_grid = [12, 16, 20]
replicates = 200
p_max = 2
k_max = 2
h = 0.015625

[output]
plots = true
plot_data = true
histogram = true
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_simulate_writes_everything_and_is_reproducible(cfg_file, tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg_file), "--seed", "42", "--out-dir", str(out1)]) == 0
    assert main(["simulate", "--config", str(cfg_file), "--seed", "42", "--out-dir", str(out2),
                 "--workers", "3"]) == 0
    assert (out1 / "result.json").read_bytes() == (out2 / "result.json").read_bytes()
    man = json.loads((out1 / "manifest.json").read_text())
    for name in man["outputs"]:
        assert (out1 / name).exists()
    for name in ("result.json", "moments.csv", "moments.dat", "moments_k1.png", "moments_k2.png",
                 "range_hist.png"):
        assert name in man["outputs"]
    assert man["seed"] == 42 and man["seed_source"] == "flag"
    header = (out1 / "moments.csv").read_text().splitlines()[0]
    assert header.startswith("N,statistic,p,k,moment,moment_se")


def test_entropy_seed_is_recorded(cfg_file, tmp_path):
    out = tmp_path / "e"
    assert main(["simulate", "--config", str(cfg_file), "--out-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed_source"] == "entropy"
    res = json.loads((out / "result.json").read_text())
    assert res["config"]["seed"] == man["seed"]


def test_missing_domain_is_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace('[domain]\nshape = "unit-square"\n', ""))
    assert main(["simulate", "--config", str(p), "--seed", "1", "--out-dir", str(tmp_path)]) == 2
    assert "domain" in capsys.readouterr().err


def test_unknown_key_is_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace("p_max = 2", "p_max = 2\nreplicas = 3"))
    assert main(["simulate", "--config", str(p), "--seed", "1", "--out-dir", str(tmp_path)]) == 2
    assert "replicas" in capsys.readouterr().err


def test_runtime_error_is_exit_3(tmp_path, capsys):
    p = tmp_path / "cap.toml"
    p.write_text(SMALL.replace("k_max = 2", "k_max = 2\nstep_cap = 3"))
    assert main(["simulate", "--config", str(p), "--seed", "1", "--out-dir", str(tmp_path)]) == 3
    assert "step cap" in capsys.readouterr().err


def test_usage_errors_are_exit_2(capsys):
    assert main([]) == 2
    assert main(["spectral", "--n", "1", "--conductance"]) == 2
    assert main(["spectral", "--n", "5"]) == 2
    assert main(["bogus"]) == 2


def test_spectral_conductance(capsys):
    assert main(["spectral", "--n", "3", "--conductance"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x1,x2,g"
    row = dict((tuple(l.split(",")[:2]), float(l.split(",")[2])) for l in lines[1:])
    assert row[("1", "1")] == pytest.approx(6 / 7, abs=1e-12)
    assert main(["spectral", "--n", "2", "--conductance"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1:] == ["1,1,1.0"]


def test_spectral_hitting_and_bounds(tmp_path, capsys):
    assert main(["spectral", "--n", "3", "--hitting", "1", "1"]) == 0
    out = capsys.readouterr().out
    assert "1,2,0.2857142857" in out
    assert main(["spectral", "--n", "64", "128", "--bound-check", "--out-dir", str(tmp_path)]) == 0
    cap = capsys.readouterr()
    assert "min over midband" in cap.err
    assert (tmp_path / "bounds.csv").exists() and (tmp_path / "bounds.png").exists()


def test_solve(cfg_file, tmp_path, capsys):
    assert main(["solve", "--config", str(cfg_file), "--out-dir", str(tmp_path), "--k", "2"]) == 0
    meta = json.loads((tmp_path / "field.json").read_text())
    assert meta["at"]["u"][0] == pytest.approx(0.14734, abs=3e-4)
    assert max(meta["residuals"]) <= 1e-10
    header = (tmp_path / "field.csv").read_text().splitlines()[0]
    assert header == "x1,x2,u1,u2"


def test_verify_fault_injection_exit_1(tmp_path, capsys, monkeypatch):
    from rangelab import verify
    # only the deterministic checks, to keep this quick
    real = verify.run_suite
    monkeypatch.setattr(verify, "run_suite", lambda *a, **k: real(*a, only={1, 2}, **k))
    js = tmp_path / "v.json"
    assert main(["verify", "--inject-fault", "sine-table", "--json", str(js)]) == 1
    err = capsys.readouterr().err
    assert "series/solver equivalence" in err
    data = json.loads(js.read_text())
    assert data["passed"] is False and 2 in data["failed"]
    assert main(["verify", "--json", str(js)]) == 0
    data = json.loads(js.read_text())
    assert [c["id"] for c in data["criteria"]] == [1, 2] and data["passed"]


def test_config_hash_covers_inputs_but_not_workers(cfg_file):
    a, _ = load_config(cfg_file, seed=1)
    b, _ = load_config(cfg_file, seed=1, workers=4)
    c, _ = load_config(cfg_file, seed=2)
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_parse_config_errors():
    with pytest.raises(ConfigError, match="section"):
        parse_config({"domain": {"shape": "unit-square"}, "experiment": {}, "extra": {}})
    with pytest.raises(ConfigError, match="n_grid"):
        parse_config({"domain": {"shape": "unit-square"},
                      "experiment": {"a": [0.5, 0.5], "replicates": 100, "seed": 1}})
    with pytest.raises(ConfigError, match="plots"):
        parse_config({"domain": {"shape": "unit-square"},
                      "experiment": {"a": [0.5, 0.5], "n_grid": [8], "replicates": 100, "seed": 1},
                      "output": {"plots": "yes"}})


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.toml"))
    assert files
    for f in files:
        load_config(f)
