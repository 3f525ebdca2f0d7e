import json

import numpy as np
import pytest

from gate.cli import main
from gate.config import bundled_config, config_hash, load_config, resolved, write_snapshot
from gate.errors import ConfigError

SMALL = """\
seed = 3

[synth]
n_subjects = 24
n_rois = 5
n_times = 120

[train]
ssl_epochs = 4
ft_epochs = 5
hidden = 8
label_rate = 0.5

[graph]
k = 3

[experiment]
rates = [0.25, 0.5]
n_folds = 2
n_repeats = 1
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def read(path):
    return path.read_bytes()


def test_defaults_and_overrides(small_config):
    cfg = load_config(small_config)
    assert cfg.seed == 3 and cfg.synth.seed == 3 and cfg.train.seed == 3
    assert cfg.train.hidden == 8 and cfg.train.lr == 1e-3
    assert load_config(small_config, seed=9).train.seed == 9
    assert load_config().train.gamma == 0.2


def test_unknown_and_invalid_keys(tmp_path):
    cases = {
        "[train]\nlabel_rate = 1.5\n": "train.label_rate",
        "[train]\nlabelrate = 0.5\n": "train.labelrate",
        "[trian]\nhidden = 3\n": "trian",
        "[graph]\nk = 0\n": "graph.k",
        "[train]\nssl_epochs = 'many'\n": "train.ssl_epochs",
    }
    for text, key in cases.items():
        path = tmp_path / "bad.toml"
        path.write_text(text)
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            load_config(path)


def test_cli_reports_bad_key(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[train]\nlabel_rate = 1.5\n")
    assert main(["evaluate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "label_rate" in capsys.readouterr().err


def test_snapshot_roundtrip(small_config, tmp_path):
    cfg = load_config(small_config)
    snap = write_snapshot(cfg, tmp_path / "snap.toml")
    again = load_config(snap)
    assert resolved(again) == resolved(cfg)
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(load_config(small_config, seed=4)) != config_hash(cfg)


def test_bundled_acceptance_config_is_valid():
    cfg = load_config(bundled_config())
    assert cfg.acceptance.criteria == tuple(range(1, 10))
    assert cfg.synth.n_subjects == 200 and cfg.synth.class_gap == 0.6


def test_run_is_deterministic(small_config, tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", str(small_config), "--out", str(tmp_path / name)]) == 0
    for rel in ("sweep/metrics.csv", "sweep/metrics_long.csv", "sweep/metrics.json", "predictions.csv",
                "finetune_metrics.csv", "singular_values.csv", "pretrain_trace.csv",
                "augment_audit.jsonl", "config.resolved.toml"):
        assert read(tmp_path / "a" / rel) == read(tmp_path / "b" / rel), rel
    text = (tmp_path / "a" / "sweep" / "metrics.csv").read_text()
    h = config_hash(load_config(small_config))
    assert text.startswith(f"# config_hash={h}\n# seed=3\n")


def test_stages_compose_to_run(small_config, tmp_path):
    cfg = ["--config", str(small_config)]
    assert main(["run", *cfg, "--out", str(tmp_path / "run")]) == 0
    staged = tmp_path / "staged"
    assert main(["synth", *cfg, "--out", str(staged)]) == 0
    manifest = str(staged / "cohort" / "manifest.json")
    assert main(["pretrain", *cfg, "--out", str(staged), "--cohort", manifest]) == 0
    assert main(["finetune", *cfg, "--out", str(staged), "--cohort", manifest,
                 "--checkpoint", str(staged / "pretrained.npz")]) == 0
    for rel in ("predictions.csv", "finetune_metrics.csv", "pretrain_trace.csv", "finetune_trace.csv"):
        assert read(tmp_path / "run" / rel) == read(staged / rel), rel


def test_sweep_and_svd(small_config, tmp_path):
    out = tmp_path / "o"
    cfg = ["--config", str(small_config), "--out", str(out)]
    assert main(["sweep", *cfg, "--rates", "0.25,0.5,0.75,1.0"]) == 0
    lines = [ln for ln in (out / "sweep" / "metrics.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 1 + 4 * 2
    assert main(["pretrain", *cfg]) == 0
    assert main(["svd-diag", *cfg, "--checkpoint", str(out / "pretrained.npz")]) == 0
    rows = [ln.split(",") for ln in (out / "singular_values.csv").read_text().splitlines()[3:]]
    values = np.array([float(v) for _, v in rows])
    assert values.size == 8 and np.all(np.diff(values) <= 0) and np.all(values >= 0)


def test_evaluate_writes_stamped_json(small_config, tmp_path):
    out = tmp_path / "o"
    assert main(["evaluate", "--config", str(small_config), "--out", str(out), "--threads", "1"]) == 0
    doc = json.loads((out / "evaluate" / "metrics.json").read_text())
    assert doc["seed"] == 3 and len(doc["reports"]) == 2


def test_checkpoint_hash_mismatch(small_config, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["pretrain", "--config", str(small_config), "--out", str(out)]) == 0
    code = main(["finetune", "--config", str(small_config), "--seed", "4", "--out", str(out),
                 "--checkpoint", str(out / "pretrained.npz")])
    assert code == 1 and "hash" in capsys.readouterr().err
