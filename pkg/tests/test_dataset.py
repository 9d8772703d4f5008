import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from trojanscope.dataset import (LabeledDataset, MinMaxScaler, aggregate_top_features,
                                 build_dataset, dataset_csv, f1_score, fit_scaler,
                                 forward_feature_selection, read_dataset_csv, stratified_folds)
from trojanscope.errors import FeatureMismatch, InsufficientData, Untrainable
from trojanscope.features import FeatureTable
from trojanscope.injector import TriggerSpec, TrojanInstance


def _table(nets, rows, cols=("p1", "p_trans")):
    return FeatureTable(list(nets), tuple(cols), np.array(rows, dtype=float))


def _troj(nets):
    return TrojanInstance("comb", TriggerSpec(1, 0.1, (("a", 1),)), "a", (), tuple(nets), nets[-1])


def test_build_dataset_labels():
    clean = _table(["a", "b"], [[0.1, 0.2], [0.5, 0.25]])
    inf = _table(["a", "b", "t1", "t2"], [[0.1, 0.2], [0.5, 0.2], [0.01, 0.01], [0.02, 0.02]])
    d = build_dataset(clean, [(inf, _troj(["t1", "t2"]))], "uart")
    assert d.counts == {"Normal": 2, "Trojan": 2}
    assert d.nets == ["a", "b", "t1", "t2"]
    assert d.designs == ["uart", "uart", "uart#0", "uart#0"]
    assert d.trainable
    with pytest.raises(FeatureMismatch):
        build_dataset(clean, [(_table(["a"], [[0.1]], ("p1",)), _troj(["a"]))])
    with pytest.raises(Untrainable):
        build_dataset(clean, []).require_trainable()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_scaler_unit_range(x):
    s = MinMaxScaler.fit(x, [f"c{i}" for i in range(x.shape[1])])
    z = s.transform(x)
    assert (z >= 0).all() and (z <= 1).all()
    const = x.max(0) == x.min(0)
    assert (z[:, const] == 0).all()
    again = MinMaxScaler.from_json(s.to_json())
    assert np.array_equal(again.transform(x), z)


def test_scaler_clamps_unseen_values():
    s = MinMaxScaler.fit(np.array([[0.0], [1.0]]), ["c"])
    assert s.transform(np.array([[5.0], [-5.0]])).ravel().tolist() == [1.5, -0.5]
    assert s.transform(np.array([[5.0]]), None).item() == 5.0


def test_csv_round_trip():
    rng = np.random.default_rng(0)
    x = rng.random((6, 2))
    d = LabeledDataset(("p1", "co_fs"), x, np.array([0, 0, 0, 1, 1, 1]), list("abcdef"), ["s"] * 6)
    s = fit_scaler(d)
    back = read_dataset_csv(dataset_csv(d, s), s)
    assert np.allclose(back.x, x, atol=1e-15)
    assert back.nets == d.nets and back.y.tolist() == d.y.tolist()


def test_stratified_folds_balanced():
    y = np.array([0] * 23 + [1] * 11)
    f = stratified_folds(y, 5, np.random.default_rng(0))
    for k in range(5):
        assert abs(int(((f == k) & (y == 1)).sum()) - 11 / 5) < 1
        assert abs(int(((f == k) & (y == 0)).sum()) - 23 / 5) < 1


def test_f1():
    assert f1_score(np.array([1, 1, 0, 0]), np.array([1, 0, 1, 0])) == 0.5
    assert f1_score(np.array([0, 0]), np.array([0, 0])) == 0.0


def _separable(n=120, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 4))
    y = (x[:, 2] > 0.6).astype(int)            # only column 2 carries the label
    return LabeledDataset(("p1", "p_trans", "cc1_fs", "co_fs"), x, y, [str(i) for i in range(n)],
                          ["s"] * n)


def test_forward_selection_finds_informative_column():
    d = _separable()
    sel = forward_feature_selection(d, folds=3)
    assert sel[:3] == ["p1", "p_trans", "cc1_fs"]
    assert "selection_history" in d.metadata
    scores = [s for _, s in d.metadata["selection_history"]]
    assert all(b > a for a, b in zip(scores, scores[1:]))


def test_forward_selection_needs_rows():
    d = _separable(30)
    with pytest.raises(InsufficientData):
        forward_feature_selection(d, folds=5)


def test_aggregate_top_features():
    sel = [["p1", "p_trans", "co_fs"], ["p1", "p_trans", "cc1_fs", "co_fs"], ["p1", "p_trans", "cc1_fs"]]
    assert aggregate_top_features(sel, k=3) == ["p1", "p_trans", "cc1_fs"]
    assert aggregate_top_features(sel, k=10) == ["p1", "p_trans", "cc1_fs", "co_fs"]
