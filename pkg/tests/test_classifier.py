import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from oracles import conv2d_loops, max_pool_loops, numeric_gradient, relative_error
from qhybrid.classifier import (
    CNNClassifier,
    CnnModel,
    DenseClassifier,
    MlpModel,
    TrainConfig,
    accuracy,
    backprop_gradients,
    confusion_matrix,
    conv2d_valid,
    cross_entropy,
    forward,
    load_model,
    max_pool,
    mean_cross_entropy,
    save_model,
    softmax,
    train,
)
from qhybrid.exceptions import DivergedTrainingError, ValidationError


def gradient_error(model, X, y, masks=None):
    _, grads, _ = model.loss_and_gradients(X, y, masks)
    params = model.params()

    def loss():
        return model.loss_and_gradients(X, y, masks)[0]

    return max(relative_error(grads[k], numeric_gradient(loss, params[k])) for k in params)


def blobs(n_per_class=30, n_classes=3, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    centres = rng.normal(scale=4, size=(n_classes, dim))
    X = np.concatenate([c + rng.normal(size=(n_per_class, dim)) for c in centres])
    return X, np.repeat(np.arange(n_classes), n_per_class)


# ---------------------------------------------------------------- metrics

def test_softmax_rows_sum_to_one_and_are_stable():
    p = softmax(np.array([[1000.0, 1000.0], [0.0, -1000.0]]))
    assert np.allclose(p.sum(axis=1), 1)
    assert np.allclose(p[0], [0.5, 0.5])


def test_uniform_ten_class_cross_entropy_is_ln10():
    assert abs(cross_entropy(np.full(10, 0.1), 3) - math.log(10)) <= 1e-9


def test_cross_entropy_floor():
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValidationError):
        cross_entropy(np.array([0.5, 0.5]), 2)


def test_mean_cross_entropy_matches_loop():
    rng = np.random.default_rng(0)
    probs = softmax(rng.normal(size=(7, 4)))
    labels = rng.integers(0, 4, 7)
    loop = sum(-math.log(probs[i, labels[i]]) for i in range(7)) / 7
    assert mean_cross_entropy(probs, labels) == pytest.approx(loop, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(data=st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_confusion_trace_over_total_is_accuracy(data):
    pred, true = map(np.array, zip(*data))
    cm = confusion_matrix(pred, true, 5)
    assert cm.sum() == len(data)
    assert np.trace(cm) / cm.sum() == accuracy(pred, true)


def test_confusion_matrix_is_true_by_predicted():
    cm = confusion_matrix([1, 1, 0], [0, 1, 0], 2)
    assert cm.tolist() == [[1, 1], [0, 1]]


def test_accuracy_rejects_empty_and_mismatched():
    with pytest.raises(ValidationError):
        accuracy([], [])
    with pytest.raises(ValidationError):
        accuracy([1, 2], [1])


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("seed", range(10))
def test_mlp_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 6)), *rng.integers(2, 7, size=rng.integers(1, 3)), 3]
    model = MlpModel.initialize(sizes, seed)
    for b in model.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    X = rng.normal(size=(5, sizes[0]))
    y = rng.integers(0, 3, 5)
    assert gradient_error(model, X, y) <= 1e-4


def test_mlp_gradients_with_fixed_dropout_masks():
    rng = np.random.default_rng(1)
    model = MlpModel.initialize([4, 6, 5, 3], 1, dropout_rate=0.3)
    X, y = rng.normal(size=(6, 4)), rng.integers(0, 3, 6)
    masks = model.draw_masks(rng, 6)
    assert masks[0] is not None
    assert gradient_error(model, X, y, masks) <= 1e-4


def test_mlp_input_gradient():
    rng = np.random.default_rng(2)
    model = MlpModel.initialize([3, 5, 2], 2)
    X, y = rng.normal(size=(4, 3)), rng.integers(0, 2, 4)
    _, _, dX = model.loss_and_gradients(X, y)
    numeric = numeric_gradient(lambda: model.loss_and_gradients(X, y)[0], X)
    assert relative_error(dX, numeric) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_cnn_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    model = CnnModel.initialize((6, 6), 3, n_filters=2, kernel_size=3, pool=2, hidden=(4,),
                                seed=seed)
    model.conv_bias += rng.normal(scale=0.1, size=2)
    X = rng.normal(size=(3, 6, 6))
    y = rng.integers(0, 3, 3)
    assert gradient_error(model, X, y) <= 1e-4


def test_backprop_gradients_keys_match_params():
    model = CnnModel.initialize((4, 4), 2, n_filters=1, kernel_size=2, pool=1, hidden=(3,))
    grads = backprop_gradients(model, np.ones((1, 4, 4)), np.array([1]))
    assert set(grads) == set(model.params())
    assert all(grads[k].shape == v.shape for k, v in model.params().items())


# ---------------------------------------------------------------- CNN pieces

def test_conv2d_matches_loops():
    rng = np.random.default_rng(3)
    images, kernels, bias = rng.normal(size=(2, 7, 6)), rng.normal(size=(3, 3, 3)), rng.normal(size=3)
    out = conv2d_valid(images, kernels, bias)
    assert out.shape == (2, 5, 4, 3)
    for n in range(2):
        for c in range(3):
            assert np.allclose(out[n, :, :, c], conv2d_loops(images[n], kernels[c]) + bias[c])


def test_max_pool_matches_loops():
    maps = np.random.default_rng(4).normal(size=(2, 7, 6, 3))
    out = max_pool(maps, 2)
    assert out.shape == (2, 3, 3, 3)
    for n in range(2):
        for c in range(3):
            assert np.array_equal(out[n, :, :, c], max_pool_loops(maps[n, :, :, c], 2))


def test_cnn_shape_validation():
    with pytest.raises(ValidationError):
        CnnModel.initialize((2, 2), 2, kernel_size=3)
    model = CnnModel.initialize((8, 8), 2, n_filters=2)
    with pytest.raises(ValidationError):
        model.predict_proba(np.zeros((1, 6, 6)))


def test_forward_single_and_batch():
    mlp = MlpModel.initialize([3, 4, 2], 0)
    x = np.array([0.1, -0.2, 0.3])
    assert forward(mlp, x).shape == (2,)
    assert np.allclose(forward(mlp, x), forward(mlp, x[None])[0])
    cnn = CnnModel.initialize((6, 6), 2, n_filters=2)
    assert forward(cnn, np.zeros((6, 6))).shape == (2,)


# ---------------------------------------------------------------- training

def test_train_is_deterministic_and_copies_model():
    X, y = blobs()
    model = MlpModel.initialize([4, 8, 3], 0, dropout_rate=0.2)
    before = [w.copy() for w in model.weights]
    cfg = TrainConfig(epochs=5, batch_size=8, learning_rate=0.1, seed=3)
    m1, r1 = train(model, X, y, X, y, cfg)
    m2, r2 = train(model, X, y, X, y, cfg)
    assert all(np.array_equal(a, b) for a, b in zip(model.weights, before))
    assert r1.to_csv() == r2.to_csv()
    assert all(np.array_equal(a, b) for a, b in zip(m1.weights, m2.weights))


def test_train_learns_separable_data():
    X, y = blobs(seed=1)
    _, report = train(MlpModel.initialize([4, 16, 3], 0), X, y, config=TrainConfig(epochs=20))
    assert report.final.train_accuracy >= 0.95
    assert report.epochs[-1].train_loss < report.epochs[0].train_loss
    assert report.confusion_split == "train" and report.confusion.sum() == len(y)


def test_train_report_csv():
    X, y = blobs()
    _, report = train(MlpModel.initialize([4, 3], 0), X, y, X[:9], y[:9], TrainConfig(epochs=4))
    lines = report.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [1, 2, 3, 4]
    assert report.confusion.sum() == 9


def test_train_divergence_reports_epoch():
    X, y = blobs()
    X = X * 1e200
    with pytest.raises(DivergedTrainingError) as info:
        train(MlpModel.initialize([4, 8, 3], 0), X, y, config=TrainConfig(learning_rate=1e10))
    assert info.value.epoch == 1


def test_train_rejects_missing_class():
    X, y = blobs()
    with pytest.raises(ValidationError):
        train(MlpModel.initialize([4, 3], 0), X[y < 2], y[y < 2])


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": 0},
                                    {"dropout_rate": 1.0}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValidationError):
        TrainConfig(**kwargs)


# ---------------------------------------------------------------- persistence

def test_model_files_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    for model, X in ((MlpModel.initialize([4, 5, 3], 1), rng.normal(size=(3, 4))),
                     (CnnModel.initialize((6, 6), 3, n_filters=2), rng.normal(size=(3, 6, 6)))):
        path = save_model(tmp_path / "m.json", model, {"method": "x"})
        back, meta = load_model(path)
        assert meta == {"method": "x"}
        assert np.array_equal(back.predict_proba(X), model.predict_proba(X))


def test_load_model_rejects_unknown_kind(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"format_version": 1, "kind": "svm"}')
    with pytest.raises(ValidationError):
        load_model(path)


# ---------------------------------------------------------------- estimators

def test_dense_classifier_estimator_api():
    clf = DenseClassifier(hidden_layer_sizes=(8,), epochs=3)
    params = clf.get_params()
    assert params["hidden_layer_sizes"] == (8,) and params["standardize"] is True
    assert clone(clf).get_params() == params


def test_dense_classifier_fit_predict_and_standardization():
    X, y = blobs(seed=2)
    clf = DenseClassifier(hidden_layer_sizes=(16,), epochs=20, seed=1).fit(X * 50 + 7, y + 10)
    assert set(clf.predict(X * 50 + 7)) <= {10, 11, 12}
    assert clf.score(X * 50 + 7, y + 10) >= 0.95
    assert np.allclose(clf.mean_, (X * 50 + 7).mean(axis=0))
    assert clf.n_params_ == 4 * 16 + 16 + 16 * 3 + 3
    assert set(clf.preprocessing()) == {"input_mean", "input_scale"}


def test_dense_classifier_feature_count_checked():
    X, y = blobs()
    clf = DenseClassifier(epochs=1).fit(X, y)
    with pytest.raises(ValidationError):
        clf.predict(X[:, :3])


def test_cnn_classifier_learns_bars():
    rng = np.random.default_rng(0)
    images = np.zeros((60, 8, 8))
    labels = np.repeat([0, 1], 30)
    for i in range(60):
        pos = rng.integers(1, 7)
        if labels[i]:
            images[i, pos, :] = 255
        else:
            images[i, :, pos] = 255
    clf = CNNClassifier(n_filters=4, hidden_layer_sizes=(8,), epochs=15, seed=0).fit(images, labels)
    assert clf.score(images, labels) >= 0.9
    assert clf.predict(images.reshape(60, -1)).shape == (60,)
