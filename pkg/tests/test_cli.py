import csv
import hashlib
import json

import numpy as np
import pytest

from latent_atlas import cli
from latent_atlas.errors import NonFiniteError

TINY_MLP = {"family": "mlp", "L": 6, "H": 4, "latent_dim": 4, "width": 16}
TINY = {
    "version": 1,
    "n_seeds": 2,
    "models": [TINY_MLP, {"family": "esn", "L": 6, "H": 4, "reservoir_size": 32}],
    "dataset": {"system": "hopf", "T": 80, "n_traj": 3},
    "training": {"epochs_max": 2, "stride": 2},
    "alignment": {"n_samples": 60, "n_anchors": 10, "temporal_length": 30},
    "ablation": {"K": [1, 4, 60], "repeats": 3, "random_K": [4]},
    "perturbation": {"noise": [0.0, 0.1], "L": [4], "n_seeds": 1, "models": [TINY_MLP]},
    "stitching": {"m": 8, "n_seeds": 2, "models": [TINY_MLP]},
}


def write_config(tmp_path, data=TINY, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def digests(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file() and "manifests" not in p.parts}


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_unknown_config_key_exits_1(tmp_path, capsys):
    bad = dict(TINY, alignment={"n_samples": 10, "n_anchor": 3})
    assert cli.main(["generate", "--config", write_config(tmp_path, bad), "--out", str(tmp_path / "r")]) == 1
    assert "n_anchor" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"seed": 1,\n  "grid": }')
    assert cli.main(["generate", "--config", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["generate", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["generate", "--seed", "x"]) == 1
    assert cli.main(["generate", "--system", "nope", "--out", str(tmp_path / "r")]) == 1


def test_model_entries_may_not_set_seeds(tmp_path):
    bad = dict(TINY, models=[dict(TINY_MLP, seed=3)])
    assert cli.main(["train", "--config", write_config(tmp_path, bad), "--out", str(tmp_path / "r")]) == 1


def test_numerical_failure_exits_2(tmp_path, monkeypatch):
    def boom(run):
        raise NonFiniteError("loss is nan")

    monkeypatch.setitem(cli.COMMANDS, "generate", boom)
    assert cli.main(["generate", "--out", str(tmp_path / "r")]) == 2


def test_config_hash_ignores_output_location():
    a = cli.parse_config(dict(TINY, out="/a"))
    b = cli.parse_config(dict(TINY, out="/b"))
    c = cli.parse_config(dict(TINY, seed=1))
    assert a.hash() == b.hash() != c.hash()


def test_generate_lorenz_with_seed(tmp_path):
    cfg = write_config(tmp_path, {"dataset": {"T": 60, "n_traj": 2}})
    out = tmp_path / "r"
    assert cli.main(["generate", "--system", "lorenz", "--seed", "7", "--config", cfg, "--out", str(out)]) == 0
    meta = json.loads((out / "dataset" / "meta.json").read_text())
    assert meta["system"]["system_id"] == "lorenz63"
    assert meta["system"]["seed"] == 7
    manifest = json.loads((out / "manifests" / "generate.json").read_text())
    assert "dataset/meta.json" in manifest["files"]
    assert manifest["config"]["seed"] == 7


def test_generate_is_byte_reproducible(tmp_path):
    cfg = write_config(tmp_path, {"dataset": {"system": "double_pendulum", "T": 50, "n_traj": 2}})
    for name in ("a", "b"):
        assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    assert digests(tmp_path / "a") == digests(tmp_path / "b")


def test_output_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    cfg = write_config(tmp_path, {"dataset": {"system": "hopf", "T": 30, "n_traj": 2}})
    assert cli.main(["generate", "--config", cfg]) == 0
    assert (tmp_path / "env" / "dataset" / "meta.json").exists()


def test_generate_from_pod_table(tmp_path):
    t = np.arange(3 * 2 * 30) * 0.2
    table = tmp_path / "wake.csv"
    np.savetxt(table, np.column_stack([np.sin(t), np.cos(t), np.sin(2 * t)]), delimiter=",")
    cfg = write_config(tmp_path, {"dataset": {"T": 30, "n_traj": 2}})
    out = tmp_path / "r"
    assert cli.main(["generate", "--system", "pod", "--input", str(table), "--config", cfg, "--out", str(out)]) == 0
    meta = json.loads((out / "dataset" / "meta.json").read_text())
    assert meta["system"]["system_id"] == "pod_wake"
    assert meta["shapes"]["train"] == [2, 30, 3]


def test_pod_without_input_is_a_validation_error(tmp_path):
    assert cli.main(["generate", "--system", "pod", "--out", str(tmp_path / "r")]) == 1


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root)
    for name in ("a", "b"):
        for cmd in ("generate", "train", "align"):
            assert cli.main([cmd, "--config", cfg, "--out", str(root / name)]) == 0
    return root, cfg


def test_pipeline_is_byte_reproducible(tiny_runs):
    root, _ = tiny_runs
    a = {k: v for k, v in digests(root / "a").items() if k.endswith(".csv") or k.endswith(".json")}
    b = {k: v for k, v in digests(root / "b").items() if k.endswith(".csv") or k.endswith(".json")}
    assert a and a == b


def test_every_csv_carries_provenance(tiny_runs):
    root, _ = tiny_runs
    h = cli.load_config(tiny_runs[1]).hash()
    for p in (root / "a").rglob("*.csv"):
        rows = read_csv(p)
        assert rows, p
        assert all(r["config_hash"] == h and r["seed"] == "0" for r in rows)
    for name in ("generate", "train", "align"):
        assert (root / "a" / "manifests" / f"{name}.json").exists()


def test_alignment_csv_contract(tiny_runs):
    root, _ = tiny_runs
    rows = read_csv(root / "a" / "align" / "alignment.csv")
    assert rows[0]["model_a"] == rows[0]["model_b"] == "True System"
    cos = {(r["model_a"], r["seed_a"], r["model_b"], r["seed_b"]): float(r["cosine"]) for r in rows}
    for (ma, sa, mb, sb), v in cos.items():
        assert -1.0 <= v <= 1.0
        assert cos[(mb, sb, ma, sa)] == v
        if (ma, sa) == (mb, sb):
            assert v == pytest.approx(1.0)
    heat = json.loads((root / "a" / "align" / "heatmap.json").read_text())
    assert heat["cosine"]["models"][0] == "True System"
    for name in ("absolute.csv", "temporal.csv", "pca.csv"):
        assert read_csv(root / "a" / "align" / name)


def test_downstream_commands_reuse_the_run(tiny_runs):
    root, cfg = tiny_runs
    out = str(root / "a")
    ckpts = sorted((root / "a" / "checkpoints").iterdir())
    for cmd in ("ablate", "probe", "stitch", "perturb", "report"):
        assert cli.main([cmd, "--config", cfg, "--out", out]) == 0
    # absolute checkpoints are shared with stitching rather than retrained
    assert sorted((root / "a" / "checkpoints").iterdir()) == ckpts
    abl = read_csv(root / "a" / "ablate" / "ablation.csv")
    assert {r["anchors"] for r in abl} == {"shared", "random"}
    stitch = read_csv(root / "a" / "stitch" / "stitch.csv")
    assert [(r["encoder"], r["decoder"]) for r in stitch] == [("MLP", "MLP")]
    perturb = read_csv(root / "a" / "perturb" / "perturb.csv")
    assert [(r["condition"], r["value"]) for r in perturb] == [("noise", "0.0"), ("noise", "0.1"), ("L", "4")]
    # every condition trains its own checkpoint
    assert len(list((root / "a" / "perturb" / "checkpoints").iterdir())) == 3
    report = json.loads((root / "a" / "report.json").read_text())
    assert "align/alignment.csv" in report["tables"]
    assert set(report["test_mse"]) == {"MLP#s0", "MLP#s1", "ESN#s0", "ESN#s1"}


def test_training_overrides_by_family_then_label():
    cfg = cli.parse_config({"training": {"stride": 1, "family_overrides": {
        "mlp": {"stride": 3, "epochs_max": 7}, "N-MLP": {"stride": 5}}}})
    plain, node = cfg.model_specs()[0], cfg.model_specs()[2]
    assert (plain.label, node.label) == ("MLP", "N-MLP")
    assert cli._train_kwargs(cfg, plain)["stride"] == 3
    kw = cli._train_kwargs(cfg, node)
    assert (kw["stride"], kw["epochs_max"]) == (5, 7)
    with pytest.raises(cli.ConfigError):
        cli.parse_config({"training": {"family_overrides": {"mlp": {"strid": 2}}}})
