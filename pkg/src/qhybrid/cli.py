"""Command line entry point: ``qhybrid <command> [options]``.

Options can also come from a JSON file given with ``--config``; flags on the
command line override fields of that file. ``QHYBRID_OUT`` sets the default
output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .bench import ALL_METHODS, RunConfig
from .classifier import DenseClassifier, confusion_matrix, load_model, save_model
from .data import SplitSpec, dataset_hash, gamma_correct, generate_synthetic, read_gray_image
from .data import resize_area, split, split_indices, write_dataset, write_gray_image
from .encoders import (
    METHODS as QUANTUM_METHODS,
    FeatureSet,
    load_features,
    qcnn_features_to_image,
    save_features,
)
from .exceptions import QHybridError, ValidationError

OUT_ENV = "QHYBRID_OUT"
DEFAULT_OUT = "qhybrid_out"
# noisy runs need a finite shot count; used when --shots is left at 0
DEFAULT_NOISY_SHOTS = 1024


def _csv_list(kind):
    def parse(text):
        return [kind(v) for v in text.split(",") if v.strip()]
    return parse


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with run options")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int)
    common.add_argument("--side", type=int, help="image side after resizing (power of two)")
    common.add_argument("--gamma", type=float, help="gamma correction exponent")
    common.add_argument("--gamma-first", dest="gamma_first", action="store_true",
                        help="apply gamma before resizing instead of after")
    common.add_argument("--dataset", help="dataset root with one subdirectory per class")

    data = argparse.ArgumentParser(add_help=False, argument_default=S)
    g = data.add_argument_group("synthetic data (used when --dataset is absent)")
    g.add_argument("--classes", type=int)
    g.add_argument("--per-class", dest="per_class", type=int)
    g.add_argument("--blur", type=float, help="horizontal box blur width in pixels")
    g.add_argument("--pixel-noise", dest="pixel_noise", type=float,
                   help="uniform pixel noise amplitude as a fraction of 255")

    quantum = argparse.ArgumentParser(add_help=False, argument_default=S)
    quantum.add_argument("--shots", type=int, help="measurement shots; 0 means exact expectations")
    quantum.add_argument("--noise-p", dest="noise_p", type=float,
                         help="depolarizing probability after each gate")
    quantum.add_argument("--readout-p", dest="readout_p", type=float,
                         help="readout bit-flip probability")
    quantum.add_argument("--pool-gate", dest="pool_gate", choices=["CRY", "CRZ"])

    training = argparse.ArgumentParser(add_help=False, argument_default=S)
    training.add_argument("--split", type=float, help="training fraction")
    training.add_argument("--epochs", type=int)
    training.add_argument("--batch", type=int)
    training.add_argument("--lr", type=float)
    training.add_argument("--dropout", type=float)
    training.add_argument("--hidden", type=_csv_list(int), help="hidden layer sizes, e.g. 64,32")

    parser = argparse.ArgumentParser(prog="qhybrid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common, data], help="write a synthetic shape dataset")

    p = sub.add_parser("encode", parents=[common, data, quantum], help="encode images to features")
    p.add_argument("--method", choices=QUANTUM_METHODS, default=S)

    p = sub.add_parser("train", parents=[common, data, quantum, training],
                       help="train a classifier")
    p.add_argument("--method", choices=ALL_METHODS, default=S)
    p.add_argument("--features", default=S, help="feature file written by 'encode'")

    p = sub.add_parser("predict", parents=[common, quantum], help="classify one image")
    p.add_argument("--model", default=S, help="model file written by 'train'")
    p.add_argument("--image", default=S)
    p.add_argument("--method", choices=ALL_METHODS, default=S)

    p = sub.add_parser("bench", parents=[common, data, quantum, training],
                       help="compare methods on one dataset")
    p.add_argument("--methods", type=_csv_list(str), default=S,
                   help="comma-separated subset of " + ",".join(ALL_METHODS))
    p.add_argument("--method", choices=ALL_METHODS, default=S, help="run a single method")

    p = sub.add_parser("reconstruct", parents=[common, quantum],
                       help="encode an image and write the decoded result")
    p.add_argument("--image", default=S)
    p.add_argument("--method", choices=QUANTUM_METHODS, default=S)
    return parser


def resolve_config(args: argparse.Namespace):
    """``(RunConfig, explicit)``: defaults < config file < flags; ``explicit`` lists set keys."""
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    doc = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError(f"config {args.config} must hold a JSON object")
    cfg = RunConfig.from_dict(doc).merged(flags)
    explicit = set(doc) | set(flags)
    if "method" in explicit and "methods" not in explicit:
        cfg.methods = [cfg.method]
    return cfg, explicit


def output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _shots(cfg: RunConfig) -> RunConfig:
    if cfg.noisy and cfg.shots == 0:
        cfg.shots = DEFAULT_NOISY_SHOTS
    return cfg


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_confusion(path: Path, matrix, class_names) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *class_names])
        for name, row in zip(class_names, matrix):
            w.writerow([name, *(int(v) for v in row)])
    return path


def _timing_summary(times) -> dict:
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return {"count": 0, "mean_s": None, "median_s": None, "total_s": 0.0}
    return {"count": int(times.size), "mean_s": float(times.mean()),
            "median_s": float(np.median(times)), "total_s": float(times.sum())}


# ---------------------------------------------------------------- commands

def cmd_gen_data(cfg: RunConfig, explicit) -> int:
    out = output_dir(cfg)
    ds = generate_synthetic(cfg.classes, cfg.per_class, cfg.side, cfg.blur, cfg.pixel_noise,
                            cfg.seed)
    write_dataset(ds, out)
    print(f"wrote {len(ds)} images in {ds.n_classes} classes ({ds.side}x{ds.side}) to {out}")
    print(f"dataset_hash {dataset_hash(ds)}")
    return 0


def cmd_encode(cfg: RunConfig, explicit) -> int:
    if cfg.method not in QUANTUM_METHODS:
        raise ValidationError(f"encode needs a quantum method, got {cfg.method!r}")
    cfg = _shots(cfg)
    out = output_dir(cfg)
    ds = bench.prepare_dataset(cfg)
    X, times = bench.featurize(ds.images, cfg.method, cfg)
    meta = {"dataset_hash": dataset_hash(ds), "seed": cfg.seed, **cfg.encoding_settings()}
    path = save_features(out / f"features_{cfg.method}.qfeat",
                         FeatureSet(X, ds.labels, cfg.method, ds.side, ds.class_names, meta))
    timing = _timing_summary(times)
    _write_json(out / f"encode_timing_{cfg.method}.json", {"method": cfg.method, **timing})
    print(f"encoded {len(ds)} images with {cfg.method}: {X.shape[1]} features each -> {path}")
    print(f"encode time per image: mean {timing['mean_s']:.6f} s, median {timing['median_s']:.6f} s")
    return 0


def _model_metadata(cfg, method, side, class_names, ds_hash, est, encoding) -> dict:
    meta = {
        "method": method,
        "side": int(side),
        "seed": cfg.seed,
        "dataset_hash": ds_hash,
        "class_names": list(class_names),
        "classes": [int(c) for c in est.classes_],
        "encoding": encoding,
        "training": {"epochs": cfg.epochs, "batch": cfg.batch, "lr": cfg.lr,
                     "dropout": cfg.dropout, "hidden": list(cfg.hidden), "split": cfg.split},
    }
    if isinstance(est, DenseClassifier):
        meta["preprocessing"] = {"kind": "standardize", **est.preprocessing(),
                                 "input_divisor": 255.0 if method == "mlp" else 1.0}
    else:
        meta["preprocessing"] = {"kind": "divide", "input_divisor": float(est.scale)}
    return meta


def _train_from_features(cfg, explicit):
    fs = load_features(cfg.features)
    if "method" in explicit and cfg.method != fs.method:
        raise ValidationError(f"--method {cfg.method} does not match feature file method {fs.method}")
    if "side" in explicit and cfg.side != fs.side:
        raise ValidationError(f"--side {cfg.side} does not match feature file side {fs.side}")
    tr, va = split_indices(fs.labels, SplitSpec(cfg.split, cfg.seed))
    est = bench.make_estimator(fs.method, cfg)
    est.fit(fs.features[tr], fs.labels[tr], fs.features[va], fs.labels[va])
    n_classes = len(fs.class_names) or int(fs.labels.max()) + 1
    probs = est.predict_proba(fs.features[va])
    pred = est.classes_[probs.argmax(axis=1)]
    result = bench.BenchResult(
        fs.method, str(cfg.features), fs.meta.get("dataset_hash", ""), len(fs.labels), len(tr),
        len(va), fs.features.shape[1], est.n_params_,
        accuracy=float(np.mean(pred == fs.labels[va])),
        final_loss=est.report_.final.val_loss, train_accuracy=est.report_.final.train_accuracy,
        train_runtime_s=est.report_.runtime_s, total_runtime_s=est.report_.runtime_s,
        confusion=confusion_matrix(pred, fs.labels[va], n_classes).tolist())
    encoding = {k: fs.meta.get(k) for k in ("shots", "noise", "pool_gate", "gamma", "gamma_first")}
    encoding["seed"] = fs.meta.get("seed", cfg.seed)
    names = fs.class_names or [str(i) for i in range(n_classes)]
    return result, est, fs.method, fs.side, names, encoding


def cmd_train(cfg: RunConfig, explicit) -> int:
    cfg = _shots(cfg)
    out = output_dir(cfg)
    if cfg.features:
        result, est, method, side, names, encoding = _train_from_features(cfg, explicit)
    else:
        ds = bench.prepare_dataset(cfg)
        train_ds, val_ds = split(ds, SplitSpec(cfg.split, cfg.seed))
        method = cfg.method
        result, est, _, _ = bench.run_method(method, train_ds, val_ds, cfg, dataset_hash(ds))
        side, names = ds.side, ds.class_names
        encoding = {**cfg.encoding_settings(), "seed": cfg.seed}
    meta = _model_metadata(cfg, method, side, names, result.dataset_hash, est, encoding)
    _write_json(out / f"run_config_{method}.json", cfg.to_document())
    save_model(out / f"model_{method}.json", est.model_, meta)
    est.report_.to_csv(out / f"report_{method}.csv")
    write_confusion(out / f"confusion_{method}.csv", result.confusion, names)
    row = {k: v for k, v in bench.result_row(result).items() if k not in result.TIMING_FIELDS}
    _write_json(out / f"summary_{method}.json", row)
    _write_json(out / f"timing_{method}.json",
                {k: getattr(result, k) for k in result.TIMING_FIELDS})
    print(bench.format_table([result]), end="")
    print(f"model -> {out / f'model_{method}.json'}")
    return 0


def _preprocess(X: np.ndarray, pre: dict) -> np.ndarray:
    X = X / pre.get("input_divisor", 1.0)
    if pre.get("kind") == "standardize":
        X = (X - np.asarray(pre["input_mean"])) / np.asarray(pre["input_scale"])
    return X


def load_image_for(path, side: int, gamma=None, gamma_first: bool = False) -> np.ndarray:
    img = read_gray_image(path)
    if gamma is not None and gamma_first:
        img = gamma_correct(img, gamma)
    img = resize_area(img, side)
    if gamma is not None and not gamma_first:
        img = gamma_correct(img, gamma)
    return img


def cmd_predict(cfg: RunConfig, explicit) -> int:
    if not cfg.model or not cfg.image:
        raise ValidationError("predict needs --model and --image")
    model, meta = load_model(cfg.model)
    method, side = meta.get("method"), meta.get("side")
    if method is None or side is None:
        raise ValidationError(f"{cfg.model} lacks method/side metadata")
    if "method" in explicit and cfg.method != method:
        raise ValidationError(f"model was trained with method {method}, not {cfg.method}")
    if "side" in explicit and cfg.side != side:
        raise ValidationError(f"model expects side {side}, not {cfg.side}")
    enc = meta.get("encoding", {})
    noise = enc.get("noise") or {}
    run = RunConfig(method=method, side=side, seed=int(enc.get("seed", meta.get("seed", 0))),
                    shots=int(enc.get("shots") or 0), pool_gate=enc.get("pool_gate") or "CRY",
                    noise_p=float(noise.get("depolarizing_prob", 0.0)),
                    readout_p=float(noise.get("readout_flip_prob", 0.0)),
                    noise_seed=noise.get("seed"))
    img = load_image_for(cfg.image, side, enc.get("gamma"), bool(enc.get("gamma_first")))
    t0 = time.perf_counter()
    x = bench.encode_one(img, method, run)
    t1 = time.perf_counter()
    probs = model.predict_proba(_preprocess(x[None], meta.get("preprocessing", {})))[0]
    t2 = time.perf_counter()
    classes = meta.get("classes", list(range(len(probs))))
    names = meta.get("class_names") or [str(c) for c in classes]
    best = int(np.argmax(probs))
    print(f"class {names[classes[best]]}")
    for c, p in zip(classes, probs):
        print(f"p({names[c]}) = {p:.6f}")
    print(f"encode_time_s {t1 - t0:.6f}")
    print(f"inference_time_s {t2 - t1:.6f}")
    return 0


def cmd_bench(cfg: RunConfig, explicit) -> int:
    cfg = _shots(cfg)
    out = output_dir(cfg)
    ds = bench.prepare_dataset(cfg)
    results = bench.run_bench(cfg, ds)
    _write_json(out / "run_config.json", cfg.to_document())
    table = bench.format_table(results)
    (out / "bench.txt").write_text(table)
    (out / "bench.csv").write_text(bench.results_to_csv(results))
    (out / "bench.json").write_text(bench.results_to_json(results))
    for r in results:
        if r.confusion is not None:
            write_confusion(out / f"confusion_{r.method}.csv", r.confusion, ds.class_names)
    print(table, end="")
    failed = [r.method for r in results if r.error]
    if failed:
        print(f"failed methods: {', '.join(failed)}", file=sys.stderr)
    return 1 if failed else 0


def cmd_reconstruct(cfg: RunConfig, explicit) -> int:
    if not cfg.image:
        raise ValidationError("reconstruct needs --image")
    if cfg.method not in QUANTUM_METHODS:
        raise ValidationError(f"reconstruct needs a quantum method, got {cfg.method!r}")
    cfg = _shots(cfg)
    out = output_dir(cfg)
    img = load_image_for(cfg.image, cfg.side, cfg.gamma, cfg.gamma_first)
    f = bench.encode_one(img, cfg.method, cfg)
    stem = Path(cfg.image).stem
    if cfg.method == "qcnn":
        h, w = img.shape
        recon = qcnn_features_to_image(f, (h // 2, w // 2))
    elif cfg.method == "frqi":
        theta = np.arcsin(np.sqrt(np.clip(f, 0.0, 1.0)))
        recon = np.floor(theta / (np.pi / 2) * 255 + 0.5).clip(0, 255).astype(np.uint8)
        recon = recon.reshape(img.shape)
    else:
        recon = np.floor(f * 255 + 0.5).clip(0, 255).astype(np.uint8).reshape(img.shape)
    write_gray_image(out / f"{stem}_input.png", img)
    path = write_gray_image(out / f"{stem}_{cfg.method}.png", recon)
    print(f"reconstruction -> {path}")
    if recon.shape == img.shape:
        err = np.abs(recon.astype(int) - img.astype(int))
        print(f"max_abs_error {int(err.max())}")
        print(f"mean_abs_error {float(err.mean()):.6f}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "encode": cmd_encode,
    "train": cmd_train,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "reconstruct": cmd_reconstruct,
}


def main(argv=None) -> int:
    """Run one command; returns the process exit status (0 on success)."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg, explicit = resolve_config(args)
        return COMMANDS[args.command](cfg, explicit)
    except (QHybridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
