import csv
import json

from ube_tabular.cli import EXIT_CONFIG, EXIT_OK, main, sweep_configs


def test_run_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--env", "deep-sea", "--size", "4", "--agent", "exact-ube", "--episodes", "3", "--seeds", "2", "--out", str(out)])
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6 and rows[0]["agent"] == "exact_ube"
    assert "u-0.05" in rows[0]["run_id"]  # DeepSea default floor for exact-ube


def test_run_json_stdout(capsys):
    code = main(["run", "--size", "3", "--agent", "psrl", "--episodes", "2", "--seeds", "1", "--format", "json"])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["agent"]["estimator"] == "psrl"


def test_config_errors(capsys):
    assert main(["run", "--agent", "bogus", "--episodes", "1"]) == EXIT_CONFIG
    assert main(["run", "--size", "1"]) == EXIT_CONFIG
    assert main(["run", "--env", "custom-json"]) == EXIT_CONFIG
    assert main(["nonsense"]) == EXIT_CONFIG
    assert main(["verify", "--only", "nope"]) == EXIT_CONFIG


def test_sweep(tmp_path):
    cfg = {
        "base": {"env": {"kind": "deep_sea", "size": 3}, "episodes": 2, "seeds": [0]},
        "grid": {"agent": ["exact_ube", "pombu"], "lambda": [0.5, 1.0]},
    }
    configs = sweep_configs(cfg)
    assert len(configs) == 4
    assert {c.agent.u_min for c in configs if c.agent.estimator == "exact_ube"} == {-0.05}
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(path), "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 1 + 4 * 2


def test_sweep_bad_grid(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grid": {"colour": [1]}}))
    assert main(["sweep", "--config", str(path)]) == EXIT_CONFIG


def test_verify_subset(capsys):
    assert main(["verify", "--only", "toy-table", "decomposition"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 2
