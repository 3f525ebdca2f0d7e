import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gate.errors import InvalidSegmentError, InvalidWindowError, SchemaError, ShapeError
from gate.signal import (BoldRecording, FcMatrix, SubjectMeta, WindowSpec, extract_segment,
                         feature_dim, flatten_upper, pearson_fc, read_manifest, segment_count,
                         unflatten_upper, window_features, write_manifest)


def _rec(signal, sid="s", label=None):
    return BoldRecording(sid, np.asarray(signal, dtype=float),
                         SubjectMeta(label, {"sex": "F", "age": 30.0, "site": "a"}))


def textbook_corr(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sx = sum((a - mx) ** 2 for a in x) ** 0.5
    sy = sum((b - my) ** 2 for b in y) ** 0.5
    return cov / (sx * sy)


@pytest.mark.parametrize("n_times, expected", [(120, 7), (30, 1)])
def test_segment_count(n_times, expected):
    assert segment_count(n_times, WindowSpec(30, 15)) == expected


def test_segment_count_window_too_long():
    with pytest.raises(InvalidWindowError):
        segment_count(29, WindowSpec(30, 15))


def test_window_spec_rejects_nonpositive():
    with pytest.raises(InvalidWindowError):
        WindowSpec(0, 1)
    with pytest.raises(InvalidWindowError):
        WindowSpec(5, 0)


def test_extract_segment():
    sig = np.arange(2 * 120, dtype=float).reshape(2, 120)
    rec = _rec(sig)
    np.testing.assert_array_equal(extract_segment(rec, 0, 120), sig)
    np.testing.assert_array_equal(extract_segment(rec, 15, 30), sig[:, 15:45])
    with pytest.raises(InvalidWindowError):
        extract_segment(rec, 100, 30)


def test_recording_validation():
    with pytest.raises(ShapeError):
        _rec(np.ones((1, 10)))
    with pytest.raises(ShapeError):
        _rec(np.ones((3, 1)))
    with pytest.raises(ShapeError):
        _rec([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(SchemaError):
        SubjectMeta(label=2)


def test_pearson_perfect_cases():
    fc = pearson_fc(np.array([[1, 2, 3], [2, 4, 6], [3, 2, 1]], dtype=float))
    assert fc.values[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert fc.values[0, 2] == pytest.approx(-1.0, abs=1e-15)
    assert not fc.degenerate_rois


def test_pearson_constant_row_is_degenerate():
    fc = pearson_fc(np.array([[1, 2, 3], [5, 5, 5]], dtype=float))
    assert fc.degenerate_rois == {1}
    assert np.all(fc.values[1] == 0.0) and np.all(fc.values[:, 1] == 0.0)
    assert fc.values[0, 0] == 1.0


def test_pearson_matches_textbook_formula():
    seg = np.random.default_rng(3).standard_normal((4, 20))
    fc = pearson_fc(seg).values
    for i in range(4):
        for j in range(4):
            assert fc[i, j] == pytest.approx(textbook_corr(seg[i], seg[j]), abs=1e-12)


def test_pearson_short_segment():
    with pytest.raises(InvalidSegmentError):
        pearson_fc(np.ones((3, 1)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(2, 12)),
              elements=st.floats(-1e3, 1e3, allow_subnormal=False)))
def test_fc_invariants(seg):
    fc = pearson_fc(seg)
    v = fc.values
    assert np.array_equal(v, v.T)
    assert np.all(np.abs(v) <= 1.0)
    live = [i for i in range(v.shape[0]) if i not in fc.degenerate_rois]
    assert np.all(v[live, live] == 1.0)


def test_pearson_affine_invariance():
    rng = np.random.default_rng(0)
    seg = rng.standard_normal((5, 25))
    slopes = rng.uniform(0.1, 10.0, size=(5, 1))
    shifts = rng.uniform(-50, 50, size=(5, 1))
    np.testing.assert_allclose(pearson_fc(slopes * seg + shifts).values, pearson_fc(seg).values,
                               atol=1e-10)


def test_flatten_upper_examples():
    np.testing.assert_array_equal(flatten_upper(FcMatrix(np.array([[1, 0.5], [0.5, 1]]))), [1, 0.5, 1])
    np.testing.assert_array_equal(flatten_upper(np.eye(3)), [1, 0, 0, 1, 0, 1])
    assert flatten_upper(np.eye(122)).size == 7503 == feature_dim(122)


def test_flatten_roundtrip():
    fc = pearson_fc(np.random.default_rng(1).standard_normal((7, 30))).values
    np.testing.assert_array_equal(unflatten_upper(flatten_upper(fc)), fc)


def test_window_features_shapes():
    rng = np.random.default_rng(2)
    cohort = [_rec(rng.standard_normal((2, 40)), f"s{i}") for i in range(3)]
    assert window_features(cohort, 0, 20).shape == (3, 3)
    single = window_features(cohort[:1], 5, 20)
    np.testing.assert_array_equal(single[0], flatten_upper(pearson_fc(cohort[0].signal[:, 5:25])))
    same = [_rec(cohort[0].signal, f"c{i}") for i in range(3)]
    feats = window_features(same, 0, 40)
    assert np.all(feats == feats[0])


def test_window_features_mixed_rois():
    cohort = [_rec(np.random.default_rng(0).standard_normal((2, 10))),
              _rec(np.random.default_rng(1).standard_normal((3, 10)))]
    with pytest.raises(ShapeError):
        window_features(cohort, 0, 5)


def test_windows_fit_within_recording():
    for n_times in range(30, 130, 7):
        spec = WindowSpec(30, 15)
        starts = spec.starts(n_times)
        assert len(starts) == segment_count(n_times, spec)
        assert all(s % 15 == 0 and s + 30 <= n_times for s in starts)


def test_manifest_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    cohort = [_rec(rng.standard_normal((3, 12)), f"sub-{i}", label=i % 2) for i in range(3)]
    path = write_manifest(cohort, tmp_path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "gate-bold-v1"
    back = read_manifest(path)
    assert [r.subject_id for r in back] == [r.subject_id for r in cohort]
    for a, b in zip(back, cohort):
        np.testing.assert_array_equal(a.signal, b.signal)
        assert a.meta == b.meta


def test_manifest_rejects_wrong_format(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"format": "other", "subjects": []}))
    with pytest.raises(SchemaError):
        read_manifest(tmp_path / "m.json")
