import json
import math

import pytest

from rwrelab.cli import main


def test_constants_json(capsys):
    assert main(["constants", "--kappa", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["c_kappa"] - 0.5) < 1e-12


def test_fit_synthetic_csv(tmp_path, capsys):
    f = tmp_path / "p.csv"
    f.write_text("u,p_hat\n" + "".join(f"{u},{math.exp(-2 * u * u)!r}\n" for u in (1, 2, 3)))
    assert main(["fit", "--mode", "log_vs_log", "--input", str(f)]) == 0
    assert abs(json.loads(capsys.readouterr().out)["slope"] - 2.0) < 1e-9


def test_verify_identities(capsys):
    assert main(["verify", "identities"]) == 0
    assert "PASS identities" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    assert main(["no-such-command"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"kappa": 0.5, "colour": 1}')
    assert main(["constants", "--config", str(bad)]) == 2
    assert main(["constants"]) == 2
    assert main(["tail-annealed", "--kappa", "0.5", "--t", "10", "--u", "2", "--n", "5", "--event", "bad"]) == 2


def test_runtime_failure(capsys):
    code = main(["tail-quenched", "--kappa", "0.5", "--t", "10000", "--nu", "0.5", "--n", "5",
                 "--event", "slowdown_H", "--window", "-80", "50"])
    assert code == 1


def test_config_and_csv_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kappa": 0.5, "t": 100.0, "u": 2.0, "n": 50, "event": "speedup_H"}))
    out = tmp_path / "e.csv"
    assert main(["tail-annealed", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "event,kappa,t,u,n,p_hat,se,seed,env_seed" and lines[1].startswith("speedup_H,0.5,100.0,2.0,50,")
    env = tmp_path / "w.csv"
    assert main(["sample-env", "--kappa", "0.5", "--window", "-1", "1", "--out", str(env)]) == 0
    assert env.read_text().startswith("# kappa=")
    assert main(["simulate", "--kappa", "0.5", "--t", "2", "--dx", "0.05"]) == 0
    assert main(["hitting", "--kappa", "0.5", "--v", "2", "--n", "3"]) == 0
    assert main(["valleys", "--kappa", "0.5", "--t", "20", "--v", "3", "--dx", "0.05"]) == 0
    assert main(["tail-quenched", "--kappa", "0.5", "--t", "100", "--nu", "0.25", "--n", "20",
                 "--event", "slowdown_H"]) == 0
