from dataclasses import replace

import numpy as np
import pytest

from gate.errors import ConfigError
from gate.model import GateModel
from gate.signal import WindowSpec, all_window_features
from gate.synth import SynthConfig, generate_cohort
from gate.trainer import (TrainConfig, average_window_probs, decide, expand_windows, fine_tune,
                          predict, predict_windows, split_labels, ssl_pretrain, stratified_sample)

SMALL = TrainConfig(hidden=16)


@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(SynthConfig(n_subjects=60, n_rois=8, n_times=120, seed=1))


@pytest.fixture(scope="module")
def windows(cohort):
    return all_window_features(cohort, WindowSpec())


def fresh(in_dim, seed=0, hidden=16):
    return GateModel.init(in_dim, hidden, rng=np.random.default_rng(seed))


def test_config_validation():
    with pytest.raises(ConfigError, match="label_rate"):
        TrainConfig(label_rate=1.5)
    with pytest.raises(ConfigError):
        TrainConfig(ssl_epochs=-1)


def test_zero_epochs_is_noop(cohort, windows):
    m = fresh(windows.shape[2])
    before = {k: v.values.copy() for k, v in m.named_parameters().items()}
    ssl_pretrain(cohort, m, replace(SMALL, ssl_epochs=0))
    for k, v in m.named_parameters().items():
        np.testing.assert_array_equal(v.values, before[k])


def test_ssl_deterministic(cohort, windows):
    cfg = replace(SMALL, ssl_epochs=5)
    _, a = ssl_pretrain(cohort, fresh(windows.shape[2]), cfg)
    _, b = ssl_pretrain(cohort, fresh(windows.shape[2]), cfg)
    assert a.ssl_loss == b.ssl_loss


def test_ssl_loss_decreases(cohort, windows):
    _, trace = ssl_pretrain(cohort, fresh(windows.shape[2]), replace(SMALL, ssl_epochs=100))
    assert trace.ssl_loss[-1] < trace.ssl_loss[0]


def test_ssl_leaves_head_alone(cohort, windows):
    m = fresh(windows.shape[2])
    head = m.classifier_weight.values.copy()
    ssl_pretrain(cohort, m, replace(SMALL, ssl_epochs=3))
    np.testing.assert_array_equal(m.classifier_weight.values, head)


def test_window_expansion_counts(windows):
    assert windows.shape[0] == 7  # T = 120, L = 30, s = 15
    rows, owner = expand_windows(windows[:, :1])
    assert rows.shape[0] == 7 and np.all(owner == 0)
    rows, owner, labels = expand_windows(windows, np.arange(60) % 2)
    assert rows.shape[0] == 60 * 7
    np.testing.assert_array_equal(rows[7 * 3 + 2], windows[2, 3])
    assert labels[7 * 5] == 1


def test_fine_tune_needs_labels(windows):
    with pytest.raises(ConfigError):
        fine_tune(fresh(windows.shape[2]), np.empty((0, windows.shape[2])), np.empty(0), SMALL)


def test_full_fine_tune_beats_frozen(cohort, windows):
    labels = np.array([r.meta.label for r in cohort])
    rows, _, row_labels = expand_windows(windows, labels)
    cfg = replace(SMALL, ft_epochs=30)
    _, full = fine_tune(fresh(windows.shape[2]), rows, row_labels, cfg)
    _, frozen = fine_tune(fresh(windows.shape[2]), rows, row_labels, cfg, train_encoder=False)
    assert full.ft_loss[-1] <= frozen.ft_loss[-1]
    assert full.ft_loss[-1] < full.ft_loss[0]


def test_window_averaging_examples():
    probs = np.array([[0.9, 0.1], [0.3, 0.7]])
    avg = average_window_probs(probs, np.array([0, 0]), 1)
    np.testing.assert_allclose(avg, [[0.6, 0.4]])
    assert decide(avg)[0] == 0
    assert decide(np.array([[0.5, 0.5]]))[0] == 0
    same = np.array([[0.2, 0.8]] * 3)
    np.testing.assert_allclose(average_window_probs(same, np.zeros(3, int), 1), [[0.2, 0.8]], rtol=1e-15)


def test_single_window_prediction_is_softmax(cohort):
    m = fresh(36)
    win = all_window_features(cohort, WindowSpec(120, 15))
    assert win.shape[0] == 1
    probs, labels = predict(m, cohort, WindowSpec(120, 15))
    np.testing.assert_allclose(probs, predict_windows(m, win))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert labels.shape == (60,)


def test_stratified_sample_counts():
    labels = np.array([0] * 30 + [1] * 10)
    idx = stratified_sample(labels, 0.2, np.random.default_rng(0))
    assert len(idx) == 8
    assert np.sum(labels[idx] == 0) == 6 and np.sum(labels[idx] == 1) == 2
    idx = stratified_sample(labels, 0.01, np.random.default_rng(0))
    assert sorted(labels[idx].tolist()) == [0, 1]
    assert len(stratified_sample(labels, 1.0, np.random.default_rng(0))) == 40


def test_split_labels(cohort):
    labeled, unlabeled = split_labels(cohort, 0.2, seed=3)
    assert len(labeled) == 12 and len(unlabeled) == 48
    assert not set(labeled) & set(unlabeled)
    assert split_labels(cohort, 0.2, seed=3) == (labeled, unlabeled)
    by_id = {r.subject_id: r.meta.label for r in cohort}
    assert sum(by_id[i] for i in labeled) == 6
