import json

import pytest

from gglab import cli
from gglab.config import dump
from gglab.experiments import REGISTRY, list_experiments, preset, replay, run

NAMES = ["green-asymptotics", "delocalize-2d", "hs-identity", "brascamp-lieb", "coupling-contraction", "tilt",
         "cov-decay-A", "cov-decay-B", "nonexist-2d", "pinning", "convolution-appendix"]


def small_tilt():
    return preset("tilt").replace(N=2, ensemble=4, n_samples=20, thin=2, burn_in=0.5, params={"window": 1, "axis": 0})


def small_hs():
    return preset("hs-identity").replace(N=3, params={"pairs": [[[0, 0], [1, 0]]], "walkers": 30000})


def test_registry_is_complete_and_ordered():
    assert [e[0] for e in list_experiments()] == NAMES
    assert set(REGISTRY) == set(NAMES)
    assert all(desc for _, desc, _ in list_experiments())


def test_list_command(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(n in out for n in NAMES)


def test_unknown_experiment_is_a_usage_error(capsys):
    assert cli.main(["run", "no-such-experiment"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_run_writes_outputs(tmp_path, capsys):
    assert cli.main(["run", "delocalize-2d", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["files"]) == {"green_center_d2.csv", "green_center_d1_d3.csv", "summary.txt"}
    assert man["status"] == "pass" and not man["budget_exceeded"]
    assert "[PASS] 3:" in capsys.readouterr().out


def test_failed_check_exit_code_and_records(tmp_path, capsys):
    cfg = preset("delocalize-2d")
    cfg.params["rtol"] = 1e-6
    dump(cfg, tmp_path / "c.ini")
    assert cli.main(["run", "delocalize-2d", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path / "o")]) == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["id"] == "3" and set(record) == {"id", "measured", "target", "tolerance"}


def test_config_for_another_experiment(tmp_path):
    dump(preset("pinning"), tmp_path / "c.ini")
    assert cli.main(["run", "tilt", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path)]) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    cfg = small_tilt()
    cfg.params["window"] = 5
    dump(cfg, tmp_path / "c.ini")
    assert cli.main(["run", "tilt", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path / "o")]) == 3


def test_environment_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("GGLAB_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("GGLAB_THREADS", "2")
    dump(small_hs(), tmp_path / "c.ini")
    assert cli.main(["run", "hs-identity", "--config", str(tmp_path / "c.ini")]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["threads"] == 2


def test_seed_flag(tmp_path):
    dump(small_hs(), tmp_path / "c.ini")
    cli.main(["run", "hs-identity", "--config", str(tmp_path / "c.ini"), "--seed", "7", "--out", str(tmp_path / "o")])
    assert "seed = 7" in json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]


@pytest.mark.parametrize("cfg_fn", [small_tilt, small_hs])
def test_replay_is_identical_across_thread_counts(cfg_fn, tmp_path):
    res = run(cfg_fn().name, cfg_fn(), tmp_path, threads=1)
    man = tmp_path / "manifest.json"
    assert replay(man).ok
    assert replay(man, threads=3).ok


def test_replay_reports_seed_edit(tmp_path, capsys):
    run("hs-identity", small_hs(), tmp_path)
    man = tmp_path / "manifest.json"
    data = json.loads(man.read_text())
    data["config"] = data["config"].replace("seed = 0", "seed = 1")
    man.write_text(json.dumps(data))
    res = replay(man)
    assert not res.ok and "hs_identity.csv" in res.mismatches
    assert cli.main(["replay", str(man)]) == 1


def test_replay_missing_outputs(tmp_path):
    run("delocalize-2d", preset("delocalize-2d"), tmp_path)
    (tmp_path / "green_center_d2.csv").unlink()
    with pytest.raises(FileNotFoundError):
        replay(tmp_path / "manifest.json")
    assert cli.main(["replay", str(tmp_path / "manifest.json")]) == 2
