"""Dense softmax classifier and a one-convolution CNN baseline, trained with minibatch SGD.

Both networks are plain numpy. Weights are stored as ``(fan_in, fan_out)``
matrices so a layer computes ``a @ W + b``. Hidden layers use ReLU with
inverted dropout during training only; the output layer is softmax and the
training objective is mean cross-entropy.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DivergedTrainingError, ValidationError
from .validation import check_positive_int, check_probability

__all__ = [
    "PROB_FLOOR",
    "MlpModel",
    "CnnModel",
    "TrainConfig",
    "EpochRecord",
    "TrainReport",
    "softmax",
    "forward",
    "cross_entropy",
    "mean_cross_entropy",
    "accuracy",
    "confusion_matrix",
    "backprop_gradients",
    "conv2d_valid",
    "max_pool",
    "train",
    "save_model",
    "load_model",
    "DenseClassifier",
    "CNNClassifier",
]

PROB_FLOOR = 1e-12
MODEL_FORMAT_VERSION = 1


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _dropout_mask(rng, shape, rate):
    if rate <= 0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("labels must be a 1-D array of class indices")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"label outside [0, {n_classes})")
    return labels.astype(int)


# ---------------------------------------------------------------- metrics

def cross_entropy(predicted, label: int) -> float:
    """``-log(predicted[label])`` with the probability floored at 1e-12."""
    predicted = np.asarray(predicted, dtype=float)
    if isinstance(label, bool) or not isinstance(label, (int, np.integer)) \
            or not 0 <= label < predicted.shape[-1]:
        raise ValidationError(f"label {label!r} invalid for {predicted.shape[-1]} classes")
    return float(-np.log(max(predicted[label], PROB_FLOOR)))


def mean_cross_entropy(probs: np.ndarray, labels) -> float:
    labels = _check_labels(labels, probs.shape[1])
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def accuracy(predictions, labels) -> float:
    """Fraction of predictions equal to the labels."""
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValidationError("predictions and labels must be 1-D arrays of equal length")
    if predictions.size == 0:
        raise ValidationError("accuracy of an empty set is undefined")
    return float(np.count_nonzero(predictions == labels)) / predictions.size


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Counts indexed ``[true class, predicted class]``."""
    predictions = _check_labels(predictions, n_classes)
    labels = _check_labels(labels, n_classes)
    if predictions.shape != labels.shape:
        raise ValidationError("predictions and labels differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


# ---------------------------------------------------------------- MLP

@dataclass
class MlpModel:
    """Fully connected ReLU network with a softmax output layer."""

    layer_sizes: list
    weights: list
    biases: list
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ValidationError("layer_sizes needs at least input and output sizes")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValidationError("one weight matrix and bias vector per layer expected")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if np.shape(w) != shape or np.shape(b) != (shape[1],):
                raise ValidationError(f"layer {i}: expected W{shape} and b({shape[1]},)")
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float) for b in self.biases]
        self.dropout_rate = check_probability("dropout_rate", self.dropout_rate, allow_one=False)

    @classmethod
    def initialize(cls, layer_sizes, seed=0, dropout_rate: float = 0.0) -> "MlpModel":
        """Glorot-uniform weights and zero biases from a seeded generator."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        sizes = [int(s) for s in layer_sizes]
        weights = [_glorot(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(sizes, weights, biases, dropout_rate)

    @classmethod
    def zeros(cls, layer_sizes, dropout_rate: float = 0.0) -> "MlpModel":
        sizes = [int(s) for s in layer_sizes]
        return cls(sizes, [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]], dropout_rate)

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.layer_sizes[0]:
            raise ValidationError(
                f"expected inputs with {self.layer_sizes[0]} features, got shape {X.shape}")
        return X

    def _forward(self, X, masks=None):
        acts, pres = [X], []
        a = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if i == last:
                return z, acts, pres
            pres.append(z)
            a = np.maximum(z, 0.0)
            if masks is not None and masks[i] is not None:
                a = a * masks[i]
            acts.append(a)

    def draw_masks(self, rng, n_rows):
        """Inverted-dropout masks for every hidden layer (``None`` when disabled)."""
        return [_dropout_mask(rng, (n_rows, s), self.dropout_rate) for s in self.layer_sizes[1:-1]]

    def predict_proba(self, X) -> np.ndarray:
        logits, _, _ = self._forward(self._check_input(X))
        return softmax(logits)

    def loss_and_gradients(self, X, y, masks=None):
        """Mean cross-entropy and its gradients; also returns d(loss)/d(input)."""
        X = self._check_input(X)
        y = _check_labels(y, self.n_classes)
        logits, acts, pres = self._forward(X, masks)
        probs = softmax(logits)
        loss = mean_cross_entropy(probs, y)
        d = probs
        d[np.arange(len(y)), y] -= 1.0
        d /= len(y)
        grads = {}
        for i in range(len(self.weights) - 1, -1, -1):
            grads[f"W{i}"] = acts[i].T @ d
            grads[f"b{i}"] = d.sum(axis=0)
            d = d @ self.weights[i].T
            if i > 0:
                if masks is not None and masks[i - 1] is not None:
                    d = d * masks[i - 1]
                d = d * (pres[i - 1] > 0)
        return loss, grads, d

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": ["relu"] * (len(self.weights) - 1) + ["softmax"],
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        return cls(d["layer_sizes"], [np.array(w, dtype=float) for w in d["weights"]],
                   [np.array(b, dtype=float) for b in d["biases"]], d.get("dropout_rate", 0.0))


# ---------------------------------------------------------------- CNN baseline

def conv2d_valid(images: np.ndarray, kernels: np.ndarray, bias=None) -> np.ndarray:
    """Stride-1 valid cross-correlation: ``(N, H, W)`` x ``(C, k, k)`` -> ``(N, H-k+1, W-k+1, C)``."""
    k = kernels.shape[-1]
    cols = sliding_window_view(images, (k, k), axis=(1, 2))
    out = np.einsum("nhwij,cij->nhwc", cols, kernels)
    return out if bias is None else out + bias


def max_pool(maps: np.ndarray, window: int) -> np.ndarray:
    """Non-overlapping max pooling over axes 1-2 of ``(N, H, W, C)``; ragged edges are dropped."""
    n, h, w, c = maps.shape
    hp, wp = h // window, w // window
    r = maps[:, :hp * window, :wp * window].reshape(n, hp, window, wp, window, c)
    return r.max(axis=(2, 4))


@dataclass
class CnnModel:
    """conv(k x k, C filters) -> max-pool -> ReLU -> flatten -> MlpModel head."""

    image_shape: tuple
    kernels: np.ndarray
    conv_bias: np.ndarray
    pool: int
    head: MlpModel

    def __post_init__(self):
        self.image_shape = tuple(int(s) for s in self.image_shape)
        self.kernels = np.array(self.kernels, dtype=float)
        self.conv_bias = np.array(self.conv_bias, dtype=float)
        c, k, k2 = self.kernels.shape
        if k != k2 or self.conv_bias.shape != (c,):
            raise ValidationError("kernels must be (C, k, k) with a (C,) bias")
        h, w = self.image_shape
        if k > h or k > w:
            raise ValidationError(f"{k}x{k} kernel does not fit a {h}x{w} image")
        if self.pool < 1 or (h - k + 1) < self.pool or (w - k + 1) < self.pool:
            raise ValidationError(f"pool window {self.pool} does not fit the convolution output")
        if self.head.layer_sizes[0] != self.flat_size:
            raise ValidationError(
                f"head expects {self.head.layer_sizes[0]} inputs, conv stage yields {self.flat_size}")

    @property
    def pooled_shape(self) -> tuple:
        h, w = self.image_shape
        k = self.kernels.shape[-1]
        return ((h - k + 1) // self.pool, (w - k + 1) // self.pool, self.kernels.shape[0])

    @property
    def flat_size(self) -> int:
        return int(np.prod(self.pooled_shape))

    @staticmethod
    def feature_size(image_shape, n_filters, kernel_size, pool) -> int:
        h, w = image_shape
        return ((h - kernel_size + 1) // pool) * ((w - kernel_size + 1) // pool) * n_filters

    @classmethod
    def initialize(cls, image_shape, n_classes, n_filters=8, kernel_size=3, pool=2,
                   hidden=(64,), seed=0, dropout_rate=0.0) -> "CnnModel":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        fan_in = kernel_size * kernel_size
        limit = np.sqrt(6.0 / (fan_in + n_filters * fan_in))
        kernels = rng.uniform(-limit, limit, size=(n_filters, kernel_size, kernel_size))
        flat = cls.feature_size(image_shape, n_filters, kernel_size, pool)
        head = MlpModel.initialize([flat, *hidden, n_classes], rng, dropout_rate)
        return cls(image_shape, kernels, np.zeros(n_filters), pool, head)

    @property
    def n_classes(self) -> int:
        return self.head.n_classes

    @property
    def dropout_rate(self) -> float:
        return self.head.dropout_rate

    @property
    def n_params(self) -> int:
        return int(self.kernels.size + self.conv_bias.size + self.head.n_params)

    def params(self) -> dict:
        return {"K": self.kernels, "c": self.conv_bias, **self.head.params()}

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and X.shape[1] == int(np.prod(self.image_shape)):
            X = X.reshape((-1,) + self.image_shape)
        if X.ndim != 3 or X.shape[1:] != self.image_shape:
            raise ValidationError(f"expected images of shape {self.image_shape}, got {X.shape}")
        return X

    def _stem(self, X):
        conv = conv2d_valid(X, self.kernels, self.conv_bias)
        pooled = max_pool(conv, self.pool)
        return conv, pooled, np.maximum(pooled, 0.0)

    def draw_masks(self, rng, n_rows):
        return self.head.draw_masks(rng, n_rows)

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_input(X)
        _, _, act = self._stem(X)
        return self.head.predict_proba(act.reshape(len(X), -1))

    def loss_and_gradients(self, X, y, masks=None):
        X = self._check_input(X)
        conv, pooled, act = self._stem(X)
        loss, head_grads, d_flat = self.head.loss_and_gradients(act.reshape(len(X), -1), y, masks)
        d_pooled = d_flat.reshape(pooled.shape) * (pooled > 0)
        # route each pooled gradient to the first maximum of its window
        n, hp, wp, c = pooled.shape
        p = self.pool
        win = conv[:, :hp * p, :wp * p].reshape(n, hp, p, wp, p, c).transpose(0, 1, 3, 5, 2, 4)
        win = win.reshape(n, hp, wp, c, p * p)
        arg = win.argmax(axis=-1)
        d_win = np.zeros_like(win)
        np.put_along_axis(d_win, arg[..., None], d_pooled[..., None], axis=-1)
        d_win = d_win.reshape(n, hp, wp, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        d_conv = np.zeros_like(conv)
        d_conv[:, :hp * p, :wp * p] = d_win.reshape(n, hp * p, wp * p, c)
        k = self.kernels.shape[-1]
        cols = sliding_window_view(X, (k, k), axis=(1, 2))
        grads = {
            "K": np.einsum("nhwij,nhwc->cij", cols, d_conv),
            "c": d_conv.sum(axis=(0, 1, 2)),
            **head_grads,
        }
        return loss, grads, None

    def to_dict(self) -> dict:
        return {
            "image_shape": list(self.image_shape),
            "kernels": self.kernels.tolist(),
            "conv_bias": self.conv_bias.tolist(),
            "pool": self.pool,
            "stem_order": ["conv", "maxpool", "relu"],
            "head": self.head.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CnnModel":
        return cls(tuple(d["image_shape"]), np.array(d["kernels"]), np.array(d["conv_bias"]),
                   int(d["pool"]), MlpModel.from_dict(d["head"]))


# ---------------------------------------------------------------- functional API

def forward(model, features) -> np.ndarray:
    """Class probabilities in inference mode (no dropout); 1-D input gives 1-D output."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1 if isinstance(model, MlpModel) else x.ndim == len(model.image_shape)
    probs = model.predict_proba(x[None] if single else x)
    return probs[0] if single else probs


def backprop_gradients(model, X, y, masks=None) -> dict:
    """Gradients of mean cross-entropy over the batch, keyed like ``model.params()``."""
    _, grads, _ = model.loss_and_gradients(X, y, masks)
    return grads


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    dropout_rate: float = 0.2

    def __post_init__(self):
        check_positive_int("epochs", self.epochs)
        check_positive_int("batch_size", self.batch_size)
        if not float(self.learning_rate) > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        check_probability("dropout_rate", self.dropout_rate, allow_one=False)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None


CSV_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    runtime_s: float = 0.0
    confusion: np.ndarray | None = None
    confusion_split: str = "val"

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    def rows(self) -> list:
        return [[r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy]
                for r in self.epochs]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows():
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v)
                             for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(r) for r in self.epochs],
            "runtime_s": self.runtime_s,
            "confusion": None if self.confusion is None else self.confusion.tolist(),
            "confusion_split": self.confusion_split,
        }


def _evaluate(model, X, y):
    probs = model.predict_proba(X)
    return mean_cross_entropy(probs, y), accuracy(probs.argmax(axis=1), y)


def train(model, X, y, X_val=None, y_val=None, config: TrainConfig = TrainConfig()):
    """Minibatch SGD on mean cross-entropy.

    Works on a deep copy of ``model`` (an :class:`MlpModel` or
    :class:`CnnModel`), reshuffling every epoch with a generator seeded by
    ``config.seed``. Metrics are evaluated on the full train and validation
    sets at the end of each epoch with dropout disabled. Returns
    ``(trained_model, report)``; the report's confusion matrix is for the
    validation set when given, else the training set.
    """
    if not isinstance(config, TrainConfig):
        raise ValidationError("config must be a TrainConfig")
    model = copy.deepcopy(model)
    X = np.asarray(X, dtype=float)
    y = _check_labels(y, model.n_classes)
    if len(X) != len(y) or len(y) == 0:
        raise ValidationError("training inputs and labels must be non-empty and aligned")
    missing = sorted(set(range(model.n_classes)) - set(y.tolist()))
    if missing:
        raise ValidationError(f"training set has no samples of classes {missing}")
    has_val = X_val is not None and y_val is not None and len(y_val) > 0
    if has_val:
        X_val = np.asarray(X_val, dtype=float)
        y_val = _check_labels(y_val, model.n_classes)
    rng = np.random.default_rng(config.seed)
    params = model.params()
    report = TrainReport(confusion_split="val" if has_val else "train")
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        # overflow shows up as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            order = rng.permutation(len(y))
            for lo in range(0, len(y), config.batch_size):
                idx = order[lo:lo + config.batch_size]
                masks = model.draw_masks(rng, len(idx))
                loss, grads, _ = model.loss_and_gradients(X[idx], y[idx], masks)
                if not np.isfinite(loss):
                    raise DivergedTrainingError(epoch)
                for name, g in grads.items():
                    params[name] -= config.learning_rate * g
            train_loss, train_acc = _evaluate(model, X, y)
        if not np.isfinite(train_loss):
            raise DivergedTrainingError(epoch)
        record = EpochRecord(epoch, train_loss, train_acc)
        if has_val:
            record.val_loss, record.val_accuracy = _evaluate(model, X_val, y_val)
        report.epochs.append(record)
    report.runtime_s = time.perf_counter() - start
    Xc, yc = (X_val, y_val) if has_val else (X, y)
    report.confusion = confusion_matrix(model.predict_proba(Xc).argmax(axis=1), yc, model.n_classes)
    return model, report


# ---------------------------------------------------------------- persistence

def save_model(path, model, metadata: dict | None = None) -> Path:
    kind = "mlp" if isinstance(model, MlpModel) else "cnn"
    doc = {"format_version": MODEL_FORMAT_VERSION, "kind": kind, "metadata": metadata or {}}
    doc.update(model.to_dict())
    path = Path(path)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_model(path):
    """Returns ``(model, metadata)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {doc.get('format_version')}")
    kind = doc.get("kind")
    if kind == "mlp":
        model = MlpModel.from_dict(doc)
    elif kind == "cnn":
        model = CnnModel.from_dict(doc)
    else:
        raise ValidationError(f"unknown model kind {kind!r}")
    return model, doc.get("metadata", {})


# ---------------------------------------------------------------- sklearn estimators

class _NetworkClassifier(ClassifierMixin, BaseEstimator):
    def _build(self, X, n_classes, rng):
        raise NotImplementedError

    def _prepare(self, X):
        return check_array(X, dtype=float)

    def _fit_inputs(self, X):
        pass

    def fit(self, X, y, X_val=None, y_val=None):
        X = self._prepare(X)
        y = np.asarray(y)
        check_X_y(X.reshape(len(X), -1), y)
        self._fit_inputs(X)
        X = self._scale(X)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        init_seq, _ = np.random.SeedSequence(self.seed).spawn(2)
        model = self._build(X, len(self.classes_), np.random.default_rng(init_seq))
        config = TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.seed,
                             self.dropout_rate)
        val = (None, None)
        if X_val is not None and y_val is not None:
            lookup = {c: i for i, c in enumerate(self.classes_)}
            val = (self._scale(self._prepare(X_val)),
                   np.array([lookup[v] for v in np.asarray(y_val)]))
        self.model_, self.report_ = train(model, X, y_idx, *val, config=config)
        return self

    def _scale(self, X):
        return X

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(self._scale(self._prepare(X)))

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    @property
    def n_params_(self) -> int:
        check_is_fitted(self, "model_")
        return self.model_.n_params


class DenseClassifier(_NetworkClassifier):
    """Flatten -> dense ReLU layers -> softmax, for precomputed feature vectors.

    With ``standardize`` the inputs are shifted and scaled by the training
    mean and standard deviation (``mean_``, ``scale_``) before the network;
    constant features keep unit scale.
    """

    def __init__(self, hidden_layer_sizes=(64,), learning_rate=0.05, epochs=10,
                 batch_size=32, dropout_rate=0.2, seed=0, standardize=True):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.dropout_rate = dropout_rate
        self.seed = seed
        self.standardize = standardize

    def _fit_inputs(self, X):
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale_ = np.where(sd > 1e-12, sd, 1.0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])

    def _scale(self, X):
        if X.shape[1] != self.mean_.shape[0]:
            raise ValidationError(f"expected {self.mean_.shape[0]} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def preprocessing(self) -> dict:
        """Input standardization as plain lists, for model files."""
        check_is_fitted(self, "mean_")
        return {"input_mean": self.mean_.tolist(), "input_scale": self.scale_.tolist()}

    def _build(self, X, n_classes, rng):
        sizes = [X.shape[1], *self.hidden_layer_sizes, n_classes]
        return MlpModel.initialize(sizes, rng, self.dropout_rate)


class CNNClassifier(_NetworkClassifier):
    """Single convolution + max-pool + ReLU stem feeding a dense softmax head.

    Accepts ``(n, h, w)`` image stacks or square flattened rows; intensities
    are divided by ``scale`` before the convolution.
    """

    def __init__(self, n_filters=8, kernel_size=3, pool_size=2, hidden_layer_sizes=(64,),
                 learning_rate=0.05, epochs=10, batch_size=32, dropout_rate=0.2, seed=0,
                 scale=255.0):
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.dropout_rate = dropout_rate
        self.seed = seed
        self.scale = scale

    def _prepare(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            side = int(round(np.sqrt(X.shape[1])))
            if side * side != X.shape[1]:
                raise ValidationError("flattened CNN inputs must be square images")
            X = X.reshape(len(X), side, side)
        if X.ndim != 3:
            raise ValidationError(f"expected an (n, h, w) image stack, got shape {X.shape}")
        return X / self.scale

    def _build(self, X, n_classes, rng):
        return CnnModel.initialize(X.shape[1:], n_classes, self.n_filters, self.kernel_size,
                                   self.pool_size, tuple(self.hidden_layer_sizes), rng,
                                   self.dropout_rate)
