import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecrseg.errors import EmptyMask, MissingFeatureMap, NonFiniteFeature, SingleClass, TooFewSamples
from ecrseg.svm import (
    Standardizer,
    SvmModel,
    TrainingSet,
    assemble_training_set,
    fit_standardizer,
    hinge_objective,
    predict_mask,
    train_linear_svm,
)
from ecrseg.texture import FeatureMapStack
from ecrseg.volume import Mask, Volume

cp = pytest.importorskip("cvxpy")


def _noisy_set(seed, n=400, d=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) * rng.uniform(0.5, 20, size=d) + rng.uniform(-5, 5, size=d)
    score = (x - x.mean(0)) / x.std(0)
    y = (score[:, 0] - 0.5 * score[:, -1] + 0.7 * rng.normal(size=n) > 0.2).astype(np.int8)
    return TrainingSet(x, y, tuple(f"f{i}" for i in range(d)))


def _cvx_optimum(xs, y, c):
    n, d = xs.shape
    w = cp.Variable(d)
    b = cp.Variable()
    obj = 0.5 * cp.sum_squares(w) + c * cp.sum(cp.pos(1 - cp.multiply(y, xs @ w + b)))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_standardizer_examples():
    s = fit_standardizer(np.array([[0.0], [2.0]]))
    assert s.mean.tolist() == [1.0] and s.scale.tolist() == [1.0]
    assert s.transform(np.array([[0.0], [2.0]])).ravel().tolist() == [-1.0, 1.0]
    const = fit_standardizer(np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]]))
    assert const.scale[0] == 0.0
    assert not const.transform(np.array([[3.0, 1.0], [3.0, 5.0]]))[:, 0].any()
    with pytest.raises(TooFewSamples):
        fit_standardizer(np.array([[1.0]]))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 50), d=st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_standardized_columns_have_zero_mean_unit_variance(seed, n, d):
    x = np.random.default_rng(seed).normal(size=(n, d)) * 7 + 3
    z = fit_standardizer(x).transform(x)
    assert np.allclose(z.mean(0), 0, atol=1e-9)
    assert np.allclose(z.var(0), 1, atol=1e-9)


@pytest.mark.parametrize("seed,c", [(0, 1.0), (1, 0.1), (2, 10.0), (3, 1.0)])
def test_training_reaches_the_convex_optimum(seed, c):
    ts = _noisy_set(seed, d=2 + seed % 2)
    m = train_linear_svm(ts, c=c)
    xs = m.standardizer.transform(ts.samples)
    y = np.where(ts.labels > 0, 1.0, -1.0)
    ours = hinge_objective(m.weights, m.bias, xs, y, c)
    best = _cvx_optimum(xs, y, c)
    assert ours <= best * (1 + 1e-5) + 1e-9


def test_objective_trace_is_monotone():
    m = train_linear_svm(_noisy_set(4, n=2000))
    trace = np.asarray(m.objective_trace)
    assert trace.size >= 2
    assert np.all(np.diff(trace) <= 1e-12)
    assert m.epochs < 10_000


def test_separable_set_is_fit_perfectly():
    x = np.array([[-1.0, 0.0], [1.0, 0.0]] * 50)
    y = np.array([0, 1] * 50, dtype=np.int8)
    m = train_linear_svm(TrainingSet(x, y, ("a", "b")))
    pred = m.decision(x) > 0
    assert np.array_equal(pred, y.astype(bool))


def test_flipped_labels_negate_the_decision_function():
    ts = _noisy_set(5)
    flipped = TrainingSet(ts.samples, 1 - ts.labels, ts.feature_names)
    a = train_linear_svm(ts, seed=3)
    b = train_linear_svm(flipped, seed=3)
    assert np.array_equal(a.weights, -b.weights)
    assert a.bias == -b.bias


def test_training_is_bit_deterministic():
    ts = _noisy_set(6, n=3000)
    a = train_linear_svm(ts, seed=11)
    b = train_linear_svm(ts, seed=11)
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias


def test_positive_affine_rescale_leaves_predictions_unchanged():
    ts = _noisy_set(7, n=600, d=3)
    probe = np.random.default_rng(8).normal(size=(500, 3)) * ts.samples.std(0) + ts.samples.mean(0)
    base = train_linear_svm(ts, seed=1).decision(probe) > 0
    for col, (scale, shift) in enumerate([(1e3, -7.0), (0.01, 250.0), (3.5, 0.0)]):
        x = ts.samples.copy()
        x[:, col] = scale * x[:, col] + shift
        p = probe.copy()
        p[:, col] = scale * p[:, col] + shift
        m = train_linear_svm(TrainingSet(x, ts.labels, ts.feature_names), seed=1)
        assert np.array_equal(m.decision(p) > 0, base)


def test_training_errors():
    x = np.zeros((4, 2))
    with pytest.raises(SingleClass):
        train_linear_svm(TrainingSet(x, np.ones(4, np.int8), ("a", "b")))
    bad = x.copy()
    bad[0, 0] = np.nan
    with pytest.raises(NonFiniteFeature):
        train_linear_svm(TrainingSet(bad, np.array([0, 1, 0, 1], np.int8), ("a", "b")))


def test_model_json_round_trip(tmp_path):
    m = train_linear_svm(_noisy_set(9), c=0.5, seed=4, params={"radius": 5})
    m.save(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["feature_names"] == ["f0", "f1"] and doc["c"] == 0.5
    back = SvmModel.load(tmp_path / "m.json")
    assert back.weights.tobytes() == m.weights.tobytes()
    assert back.bias == m.bias and back.params == {"radius": 5}
    x = np.random.default_rng(0).normal(size=(50, 2))
    assert np.array_equal(back.decision(x), m.decision(x))


# ------------------------------------------------------------- assembly / prediction


def _maps(dims, values):
    return FeatureMapStack({name: Volume(np.asarray(v, float).reshape(dims)) for name, v in values.items()})


def test_assemble_region_arithmetic():
    dims = (64, 64, 64)
    lesion = np.zeros(dims, bool)
    lesion[10:21, 10:21, 10:21] = True
    maps = _maps(dims, {"lgre": np.arange(64**3), "hgre": np.zeros(64**3)})
    tooth = Mask(np.ones(dims, bool))
    ts = assemble_training_set(maps, tooth, Mask(lesion), 5, ("lgre", "hgre"), "c1")
    assert ts.n == 21**3
    assert int(ts.labels.sum()) == 11**3
    half = np.ones(dims, bool)
    half[:15] = False
    ts2 = assemble_training_set(maps, Mask(half), Mask(lesion), 5)
    assert ts2.n == 11 * 21 * 21
    assert all(case == "" for case, _ in ts2.provenance)
    with pytest.raises(EmptyMask):
        assemble_training_set(maps, tooth, Mask(np.zeros(dims, bool)))


def test_predict_sign_rule_and_errors():
    dims = (3, 1, 1)
    maps = _maps(dims, {"a": [2.0, -1.0, 0.0], "b": [5.0, 5.0, 5.0]})
    identity = Standardizer(np.zeros(2), np.ones(2))
    m = SvmModel(np.array([1.0, 0.0]), 0.0, identity, 1.0, ("a", "b"))
    tooth = Mask(np.ones(dims, bool))
    # decision exactly 0 at the last voxel goes to background
    assert predict_mask(m, maps, tooth).data.ravel().tolist() == [True, False, False]
    assert not predict_mask(m, maps, Mask(np.zeros(dims, bool))).data.any()
    partial = Mask(np.array([False, True, True]).reshape(dims))
    assert not predict_mask(m, maps, partial).data.any()
    missing = SvmModel(np.array([1.0]), 0.0, Standardizer(np.zeros(1), np.ones(1)), 1.0, ("hgre",))
    with pytest.raises(MissingFeatureMap):
        predict_mask(missing, maps, tooth)
