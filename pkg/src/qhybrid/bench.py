"""Run configuration, per-method pipelines and comparison tables."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields

import jsonschema
import numpy as np

from .classifier import CNNClassifier, DenseClassifier, confusion_matrix, mean_cross_entropy
from .data import (Dataset, SplitSpec, dataset_hash, gamma_correct, generate_synthetic,
                   load_dataset, split)
from .encoders import METHODS as QUANTUM_METHODS
from .encoders import extract_features, feature_length
from .exceptions import QHybridError, ValidationError
from .noise import NoiseSpec, noisy_extract_features

__all__ = [
    "ALL_METHODS",
    "RunConfig",
    "BenchResult",
    "featurize",
    "make_estimator",
    "prepare_dataset",
    "run_method",
    "run_bench",
    "format_table",
    "results_to_csv",
    "results_to_json",
    "result_row",
]

ALL_METHODS = ("qcnn", "frqi", "neqr", "cnn", "mlp")

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "method": {"enum": list(ALL_METHODS)},
        "methods": {"type": "array", "items": {"enum": list(ALL_METHODS)}, "minItems": 1},
        "dataset": {"type": ["string", "null"]},
        "features": {"type": ["string", "null"]},
        "model": {"type": ["string", "null"]},
        "image": {"type": ["string", "null"]},
        "out": {"type": ["string", "null"]},
        "side": {"type": "integer", "minimum": 2},
        "gamma": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "gamma_first": {"type": "boolean"},
        "split": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "epochs": {"type": "integer", "minimum": 1},
        "batch": {"type": "integer", "minimum": 1},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0},
        "shots": {"type": "integer", "minimum": 0},
        "noise_p": {"type": "number", "minimum": 0, "maximum": 1},
        "readout_p": {"type": "number", "minimum": 0, "maximum": 1},
        "noise_seed": {"type": ["integer", "null"], "minimum": 0},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "depolarizing_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "readout_flip_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "pool_gate": {"enum": ["CRY", "CRZ"]},
        "classes": {"type": "integer", "minimum": 2, "maximum": 10},
        "per_class": {"type": "integer", "minimum": 2},
        "blur": {"type": "number", "minimum": 0},
        "pixel_noise": {"type": "number", "minimum": 0},
        "filters": {"type": "integer", "minimum": 1},
        "kernel": {"type": "integer", "minimum": 1},
        "pool": {"type": "integer", "minimum": 1},
    },
}


@dataclass
class RunConfig:
    """Every knob of a CLI run as one JSON-serialisable document.

    Noise can be given flat (``noise_p``, ``readout_p``, ``noise_seed``) or as
    a nested ``noise`` object in :class:`~qhybrid.noise.NoiseSpec` form, which
    is also how :meth:`to_document` writes it.
    """

    method: str = "qcnn"
    methods: list = field(default_factory=lambda: list(ALL_METHODS))
    dataset: str | None = None
    features: str | None = None
    model: str | None = None
    image: str | None = None
    out: str | None = None
    side: int = 16
    gamma: float | None = None
    gamma_first: bool = False
    split: float = 0.7
    epochs: int = 10
    batch: int = 32
    lr: float = 0.05
    dropout: float = 0.2
    hidden: list = field(default_factory=lambda: [64])
    seed: int = 0
    shots: int = 0
    noise_p: float = 0.0
    readout_p: float = 0.0
    # sampling streams derive from this seed; None means ``seed``
    noise_seed: int | None = None
    pool_gate: str = "CRY"
    # synthetic dataset used when no --dataset is given
    classes: int = 4
    per_class: int = 200
    blur: float = 2.0
    pixel_noise: float = 0.05
    # CNN baseline
    filters: int = 8
    kernel: int = 3
    pool: int = 2

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ValidationError(f"invalid run config at {where}: {exc.message}") from None
        doc = dict(doc)
        if "noise" in doc:
            clash = {"noise_p", "readout_p", "noise_seed"} & set(doc)
            if clash:
                raise ValidationError(f"run config gives both 'noise' and {sorted(clash)}")
            spec = NoiseSpec.from_dict(doc.pop("noise"))
            doc.update(noise_p=spec.depolarizing_prob, readout_p=spec.readout_flip_prob,
                       noise_seed=spec.seed)
        return cls(**doc)

    def to_dict(self) -> dict:
        """Flat form, one key per field."""
        return asdict(self)

    def to_document(self) -> dict:
        """Form written to disk, with the noise model nested as a NoiseSpec."""
        doc = asdict(self)
        for key in ("noise_p", "readout_p", "noise_seed"):
            doc.pop(key)
        doc["noise"] = self.noise.to_dict()
        return doc

    def merged(self, overrides: dict) -> "RunConfig":
        doc = self.to_dict()
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(doc)

    def validate(self) -> "RunConfig":
        return RunConfig.from_dict(self.to_dict())

    @property
    def noise(self) -> NoiseSpec:
        seed = self.seed if self.noise_seed is None else self.noise_seed
        return NoiseSpec(self.noise_p, self.readout_p, seed)

    @property
    def noisy(self) -> bool:
        return self.noise_p > 0 or self.readout_p > 0

    def encoding_settings(self) -> dict:
        return {"shots": self.shots, "noise": self.noise.to_dict() if self.noisy else None,
                "pool_gate": self.pool_gate, "gamma": self.gamma, "gamma_first": self.gamma_first}


@dataclass
class BenchResult:
    method: str
    dataset_id: str
    dataset_hash: str
    n_samples: int
    n_train: int
    n_val: int
    feature_dim: int
    n_params: int
    accuracy: float | None = None
    final_loss: float | None = None
    train_accuracy: float | None = None
    encode_time_per_image_s: float | None = None
    train_runtime_s: float | None = None
    predict_time_per_image_s: float | None = None
    total_runtime_s: float | None = None
    error: str | None = None
    confusion: list | None = None

    TIMING_FIELDS = ("encode_time_per_image_s", "train_runtime_s",
                     "predict_time_per_image_s", "total_runtime_s")


# ---------------------------------------------------------------- pipelines

def prepare_dataset(cfg: RunConfig) -> Dataset:
    """Load ``cfg.dataset`` or generate the configured synthetic dataset."""
    if cfg.dataset:
        return load_dataset(cfg.dataset, cfg.side, cfg.gamma, cfg.gamma_first)
    ds = generate_synthetic(cfg.classes, cfg.per_class, cfg.side, cfg.blur, cfg.pixel_noise, cfg.seed)
    if cfg.gamma is not None:
        ds = Dataset(gamma_correct(ds.images, cfg.gamma), ds.labels, ds.class_names, ds.meta)
    return ds


def encode_one(img, method: str, cfg: RunConfig, index: int = 0) -> np.ndarray:
    """Features of a single image under ``cfg``; image ``index`` seeds the sampling stream."""
    if method == "mlp":
        return np.asarray(img, dtype=float).reshape(-1) / 255.0
    if method == "cnn":
        return np.asarray(img, dtype=float)
    if cfg.noisy:
        shots = cfg.shots or 1024
        rng = np.random.default_rng([cfg.noise.seed, index])
        return noisy_extract_features(img, method, cfg.noise, shots, rng, cfg.pool_gate).values
    return extract_features(img, method, cfg.shots, [cfg.seed, index],
                            pool_gate=cfg.pool_gate).values


def featurize(images, method: str, cfg: RunConfig, offset: int = 0):
    """``(features, per-image seconds)``; rows are in input order."""
    rows, times = [], []
    for k, img in enumerate(images):
        t0 = time.perf_counter()
        rows.append(encode_one(img, method, cfg, offset + k))
        times.append(time.perf_counter() - t0)
    X = np.stack(rows) if rows else np.zeros((0,))
    return X, np.asarray(times)


def make_estimator(method: str, cfg: RunConfig):
    if method == "cnn":
        return CNNClassifier(n_filters=cfg.filters, kernel_size=cfg.kernel, pool_size=cfg.pool,
                             hidden_layer_sizes=tuple(cfg.hidden), learning_rate=cfg.lr,
                             epochs=cfg.epochs, batch_size=cfg.batch, dropout_rate=cfg.dropout,
                             seed=cfg.seed, scale=255.0)
    return DenseClassifier(hidden_layer_sizes=tuple(cfg.hidden), learning_rate=cfg.lr,
                           epochs=cfg.epochs, batch_size=cfg.batch, dropout_rate=cfg.dropout,
                           seed=cfg.seed, standardize=method in QUANTUM_METHODS)


def method_feature_dim(method: str, side: int) -> int:
    if method in QUANTUM_METHODS:
        return feature_length(method, side)
    return side * side


def run_method(method: str, train_ds: Dataset, val_ds: Dataset, cfg: RunConfig,
               full_hash: str = ""):
    """Encode, train and evaluate one method; returns ``(BenchResult, estimator, Xtr, Xval)``.

    ``full_hash`` identifies the unsplit dataset in the result row.
    """
    result = BenchResult(method, train_ds.meta.get("source", "dataset"), full_hash,
                         len(train_ds) + len(val_ds), len(train_ds), len(val_ds),
                         method_feature_dim(method, train_ds.side), 0)
    Xtr, t_tr = featurize(train_ds.images, method, cfg, 0)
    Xva, t_va = featurize(val_ds.images, method, cfg, len(train_ds))
    encode_times = np.concatenate([t_tr, t_va])
    result.encode_time_per_image_s = float(encode_times.mean())
    est = make_estimator(method, cfg)
    est.fit(Xtr, train_ds.labels, Xva, val_ds.labels)
    t0 = time.perf_counter()
    probs = est.predict_proba(Xva)
    predict_s = time.perf_counter() - t0
    pred = est.classes_[probs.argmax(axis=1)]
    labels_idx = np.searchsorted(est.classes_, val_ds.labels)
    result.n_params = est.n_params_
    result.accuracy = float(np.mean(pred == val_ds.labels))
    result.final_loss = mean_cross_entropy(probs, labels_idx)
    result.train_accuracy = est.report_.final.train_accuracy
    result.train_runtime_s = est.report_.runtime_s
    result.predict_time_per_image_s = predict_s / max(1, len(val_ds))
    result.total_runtime_s = float(encode_times.sum()) + est.report_.runtime_s
    result.confusion = confusion_matrix(pred, val_ds.labels, val_ds.n_classes).tolist()
    return result, est, Xtr, Xva


def run_bench(cfg: RunConfig, ds: Dataset | None = None) -> list:
    """One :class:`BenchResult` per method on a shared dataset, split and seed.

    A failing method is reported in its row's ``error`` field and the
    remaining methods still run.
    """
    ds = prepare_dataset(cfg) if ds is None else ds
    train_ds, val_ds = split(ds, SplitSpec(cfg.split, cfg.seed))
    full_hash = dataset_hash(ds)
    results = []
    for method in cfg.methods:
        try:
            result = run_method(method, train_ds, val_ds, cfg, full_hash)[0]
        except (QHybridError, ValueError, MemoryError) as exc:
            result = BenchResult(method, train_ds.meta.get("source", "dataset"), full_hash,
                                 len(ds), len(train_ds), len(val_ds),
                                 method_feature_dim(method, ds.side), 0,
                                 error=f"{type(exc).__name__}: {exc}")
        results.append(result)
    return results


# ---------------------------------------------------------------- report formats

TABLE_COLUMNS = ("method", "n_samples", "feature_dim", "n_params", "accuracy", "final_loss",
                 "encode_time_per_image_s", "train_runtime_s", "predict_time_per_image_s", "error")


def result_row(r: BenchResult) -> dict:
    d = asdict(r)
    d.pop("confusion")
    return d


def results_to_csv(results) -> str:
    names = [f.name for f in fields(BenchResult) if f.name != "confusion"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                         for k, v in result_row(r).items()})
    return buf.getvalue()


def results_to_json(results) -> str:
    return json.dumps([asdict(r) for r in results], indent=2, sort_keys=True) + "\n"


def format_table(results) -> str:
    """Plain-text comparison table (one row per method)."""

    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    rows = [[cell(result_row(r)[c]) for c in TABLE_COLUMNS] for r in results]
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c)
              for i, c in enumerate(TABLE_COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(TABLE_COLUMNS, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"
