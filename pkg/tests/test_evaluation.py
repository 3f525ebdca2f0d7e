import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gate.evaluation import (UndefinedAucError, auc_score, binary_metrics, fold_plan, label_rate_sweep,
                             run_experiment, singular_value_profile, trailing_mass, two_sample_ttest,
                             write_reports)
from gate.errors import GateError
from gate.synth import SynthConfig, generate_cohort
from gate.trainer import TrainConfig
from oracles import brute_auc, jacobi_eigenvalues, welch_pvalue_quadrature

TINY = TrainConfig(ssl_epochs=3, ft_epochs=5, hidden=8)


@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(SynthConfig(n_subjects=50, n_rois=6, n_times=120, seed=2))


def test_metrics_example():
    m = binary_metrics([0.9, 0.2, 0.8, 0.1], [1, 0, 1, 0], [1, 0, 0, 0])
    assert m["accuracy"] == 0.75
    assert m["precision"] == 0.5 and m["recall"] == 1.0
    assert m["f1"] == pytest.approx(2 / 3)
    assert m["auc"] == 1.0


def test_metrics_degenerate_conventions():
    m = binary_metrics([0.1, 0.2], [0, 0], [1, 0])
    assert m["precision"] == 0.0 and m["recall"] == 0.0 and m["f1"] == 0.0
    assert math.isnan(binary_metrics([0.1, 0.2], [0, 0], [0, 0])["auc"])


def test_auc_examples():
    assert auc_score([0.5, 0.5], [0, 1]) == 0.5
    assert auc_score([0.1, 0.9], [1, 0]) == 0.0
    with pytest.raises(UndefinedAucError):
        auc_score([0.1, 0.2], [1, 1])


def test_auc_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 5, n) / 4.0  # plenty of ties
        assert auc_score(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=20), st.integers(0, 2 ** 16))
def test_auc_monotone_invariance(scores, seed):
    labels = np.random.default_rng(seed).integers(0, 2, len(scores))
    labels[:2] = [0, 1]
    s = np.array(scores, dtype=float)
    # exact in floating point, so ties and order survive
    assert auc_score(3 * s ** 3 + 1, labels) == auc_score(s, labels)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=30), st.integers(0, 2 ** 16))
def test_metric_identities(labels, seed):
    pred = np.random.default_rng(seed).integers(0, 2, len(labels))
    m = binary_metrics(np.zeros(len(labels)), pred, labels)
    assert m["accuracy"] + np.mean(pred != np.array(labels)) == pytest.approx(1.0)
    p, r = m["precision"], m["recall"]
    if p + r > 0:
        assert m["f1"] == pytest.approx(2 * p * r / (p + r))


def test_ttest_conventions():
    assert two_sample_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 1.0)
    assert two_sample_ttest([2.0, 2.0], [2.0, 2.0]) == (0.0, 1.0)
    t, p = two_sample_ttest([0.0] * 4, [1.0] * 4)
    assert t == -math.inf and p < 1e-10
    with pytest.raises(GateError):
        two_sample_ttest([1.0], [1.0, 2.0])


@pytest.mark.parametrize("seed", range(10))
def test_ttest_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 1, int(rng.integers(3, 15)))
    b = rng.normal(0.7, 2, int(rng.integers(3, 15)))
    t, p = two_sample_ttest(a, b)
    t_ref, p_ref = welch_pvalue_quadrature(a, b)
    assert t == pytest.approx(t_ref, rel=1e-12)
    assert abs(p - p_ref) <= 1e-6


def test_singular_values_examples():
    np.testing.assert_allclose(singular_value_profile(np.eye(4)), np.ones(4))
    rank1 = np.outer([1.0, 2, 3, 4, 5], [1.0, -1, 2])
    s = singular_value_profile(rank1)
    assert s[0] == pytest.approx(np.linalg.norm(rank1)) and np.all(s[1:] < 1e-6)


def test_singular_values_match_jacobi():
    z = np.random.default_rng(1).standard_normal((20, 8))
    s = singular_value_profile(z)
    ref = np.sqrt(np.clip(jacobi_eigenvalues(z.T @ z), 0, None))
    np.testing.assert_allclose(s, ref, atol=1e-8)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert trailing_mass(s, 3) == pytest.approx(s[-3:].sum())


def test_fold_plan_partitions():
    labels = np.repeat([0, 1], 25)
    plan = fold_plan(labels, 5, 2, seed=0)
    assert len(plan) == 10
    for r in range(2):
        tests = np.concatenate([f.test for f in plan if f.repeat == r])
        assert sorted(tests.tolist()) == list(range(50))
    for f in plan:
        assert len(f.test) == 10 and not set(f.test) & set(f.train)
        assert np.sum(labels[f.test]) == 5
    again = fold_plan(labels, 5, 2, seed=0)
    assert all(np.array_equal(a.test, b.test) for a, b in zip(plan, again))
    assert not np.array_equal(plan[0].test, fold_plan(labels, 5, 2, seed=1)[0].test)


def test_experiment_determinism_and_files(cohort, tmp_path):
    a = run_experiment(cohort, TINY, rates=(0.2,), n_folds=5, n_repeats=1)
    b = run_experiment(cohort, TINY, rates=(0.2,), n_folds=5, n_repeats=1)
    for key in a.reports:
        assert a.reports[key].folds == b.reports[key].folds
        assert len(a.reports[key].folds) == 5
    files_a = write_reports(a, tmp_path / "a", {"seed": 0})
    files_b = write_reports(b, tmp_path / "b", {"seed": 0})
    for p, q in zip(files_a, files_b):
        assert p.read_bytes() == q.read_bytes()
    assert files_a[0].read_text().startswith("# seed=0")


def test_sweep_shape(cohort):
    result = label_rate_sweep(cohort, [0.1, 0.2, 0.5, 0.8], TINY, n_folds=2, n_repeats=1)
    assert len(result.reports) == 8
    assert {r for _, r in result.reports} == {0.1, 0.2, 0.5, 0.8}


def test_experiment_rejects_bad_arguments(cohort):
    with pytest.raises(GateError):
        run_experiment(cohort, TINY, methods=("svm",), n_folds=2, n_repeats=1)
    with pytest.raises(GateError):
        run_experiment(cohort, TINY, rates=(1.5,), n_folds=2, n_repeats=1)
