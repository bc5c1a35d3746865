import json
import os

import pytest

from hiddenmac.cli import (EXIT_BAD_CONFIG, EXIT_IO, EXIT_OK, PRESETS,
                           ExperimentConfig, main)
from hiddenmac.neural import BiLstmNet

TINY_LEARNED = {
    "hidden": 4, "epochs": 2, "eval_every": 1, "eval_window": 120,
    "lookback": 12, "episode_len": 50,
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(*argv):
    return main(list(argv))


def test_config_unknown_key_rejected():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"epohcs": 10})


def test_config_agent_alias_resolution():
    cfg = ExperimentConfig.from_dict({"agent": "madrl-ht"})
    assert cfg.agent == "learned"
    cfg = ExperimentConfig.from_dict({"agent": "madrl-alt-obs"})
    assert cfg.train_config().observation == "alt"
    cfg = ExperimentConfig.from_dict({"agent": "madrl-alpha-reward"})
    assert cfg.train_config().reward == "alpha"


def test_config_rejects_unknown_agent():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"agent": "aloha"})


def test_config_rejects_bad_topology():
    with pytest.raises(Exception):
        ExperimentConfig.from_dict({"topology": "{A,,B}"})


def test_config_hash_tracks_content():
    a = ExperimentConfig.from_dict({"epochs": 10})
    b = ExperimentConfig.from_dict({"epochs": 10})
    c = ExperimentConfig.from_dict({"epochs": 11})
    assert a.hash() == b.hash() != c.hash()


def test_duration_slots():
    cfg = ExperimentConfig.from_dict({"duration_s": 1.0})
    assert cfg.duration_slots == 111111


def test_all_presets_are_valid():
    for name, variants in PRESETS.items():
        for label, over in variants:
            cfg = ExperimentConfig.from_dict(dict(over))
            assert cfg.agent in ("learned", "learned-alt-obs",
                                 "learned-alpha-reward", "csma", "rtscts"), name


def test_seed_list_flag(tmp_path):
    out = str(tmp_path / "run")
    code = run_cli("run", "--topology", "{A|B}", "--agent", "csma",
                   "--seeds", "5,7", "--duration-s", "0.01", "--out", out)
    assert code == EXIT_OK
    lines = open(os.path.join(out, "run", "metrics.csv")).read().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].startswith("seed,thr_A,thr_B,")
    assert [l.split(",")[0] for l in lines[2:]] == ["5", "7"]


def baseline_run(tmp_path, name, seeds="2"):
    out = str(tmp_path / name)
    code = run_cli("run", "--topology", "{A|B}", "--agent", "csma",
                   "--seeds", seeds, "--duration-s", "0.02", "--out", out)
    assert code == EXIT_OK
    return out


def test_baseline_reruns_byte_identical(tmp_path):
    a = baseline_run(tmp_path, "a")
    b = baseline_run(tmp_path, "b")
    for rel in (os.path.join("run", "metrics.csv"), "config.json"):
        assert open(os.path.join(a, rel), "rb").read() == \
               open(os.path.join(b, rel), "rb").read()


def test_learned_run_outputs(tmp_path):
    cfg = write_config(tmp_path, dict(TINY_LEARNED, topology="{A,B}",
                                      agent="learned", seeds=[0]))
    outs = []
    for name in ("la", "lb"):
        out = str(tmp_path / name)
        assert run_cli("run", "--config", cfg, "--out", out) == EXIT_OK
        outs.append(out)
    csv_a = open(os.path.join(outs[0], "run", "seed0.csv"), "rb").read()
    csv_b = open(os.path.join(outs[1], "run", "seed0.csv"), "rb").read()
    assert csv_a == csv_b
    header = csv_a.decode().splitlines()[1]
    assert header == ("epoch,slots_elapsed,norm_fairness,thr_A,thr_B,pcr,"
                      "mean_reward,unknown_fraction")
    actor = BiLstmNet.load(os.path.join(outs[0], "run", "seed0_actor0.npz"))
    assert actor.softmax_head and actor.in_rows == 3
    critic = BiLstmNet.load(os.path.join(outs[0], "run", "seed0_critic.npz"))
    assert critic.out_dim == 1 and critic.in_rows == 2


def test_preset_pins_topology_and_agent(tmp_path):
    cfg = write_config(tmp_path, dict(TINY_LEARNED, seeds=[0]))
    out = str(tmp_path / "preset")
    code = run_cli("run", "--preset", "topo2p-obs-ablation", "--config", cfg,
                   "--topology", "{A,B,C,D}", "--agent", "csma", "--out", out)
    assert code == EXIT_OK
    manifest = json.load(open(os.path.join(out, "config.json")))
    variants = manifest["variants"]
    assert set(variants) == {"consolidated-obs", "ack-row-obs"}
    for v in variants.values():
        assert v["topology"] == "{A|B}"      # the flag did not override it
    assert variants["ack-row-obs"]["agent"] == "learned-alt-obs"
    for label in variants:
        assert os.path.exists(os.path.join(out, label, "seed0.csv"))


def test_compare_self_consistent(tmp_path, capsys):
    a = baseline_run(tmp_path, "a")
    b = baseline_run(tmp_path, "b")
    assert run_cli("compare", a, b) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("metric,")
    table = {l.split(",")[0]: l.split(",")[1:] for l in lines[1:]}
    # identical runs: every cell pair agrees
    for cells in table.values():
        assert cells[0] == cells[1]


def test_compare_rejects_single_dir(tmp_path):
    a = baseline_run(tmp_path, "a")
    assert run_cli("compare", a) == EXIT_BAD_CONFIG


def test_compare_rejects_mixed_topologies(tmp_path):
    a = baseline_run(tmp_path, "a")
    out = str(tmp_path / "other")
    run_cli("run", "--topology", "{A,B,C}", "--agent", "csma", "--seeds", "1",
            "--duration-s", "0.01", "--out", out)
    assert run_cli("compare", a, out) == EXIT_BAD_CONFIG


def test_bad_config_exit_code(tmp_path):
    cfg = write_config(tmp_path, {"agent": "nonsense"})
    code = run_cli("run", "--config", cfg, "--out", str(tmp_path / "x"))
    assert code == EXIT_BAD_CONFIG


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    code = run_cli("run", "--topology", "{A|B}", "--agent", "csma",
                   "--seeds", "1", "--duration-s", "0.01",
                   "--out", str(blocker / "sub"))
    assert code == EXIT_IO
