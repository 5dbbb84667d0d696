"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import csv
import io
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    frqi_amplitudes,
    numeric_gradient,
    qcnn_patch_expectation,
    relative_error,
    run_dense,
)
from qhybrid.bench import RunConfig, run_method
from qhybrid.classifier import (
    CnnModel,
    DenseClassifier,
    MlpModel,
    accuracy,
    confusion_matrix,
    cross_entropy,
)
from qhybrid.cli import main
from qhybrid.data import SplitSpec, gamma_correct, generate_synthetic, split
from qhybrid.encoders import (
    feature_length,
    frqi_decode,
    frqi_encode,
    neqr_decode,
    neqr_encode,
    qcnn_encode_image,
    qcnn_encode_patches,
)
from qhybrid.noise import NoiseSpec, noisy_encode_images
from qhybrid.statevector import QuantumCircuit, StateVector


def _random_gates(rng, n, count):
    kinds = ["RX", "RY", "RZ", "H", "X"] + (["CRZ", "CRY", "CX", "MCX", "MCRY"] if n > 1 else [])
    gates = []
    for _ in range(count):
        kind = kinds[rng.integers(len(kinds))]
        qubits = rng.permutation(n)
        n_controls = {"CRZ": 1, "CRY": 1, "CX": 1}.get(kind, 0)
        if kind in ("MCX", "MCRY"):
            n_controls = int(rng.integers(1, n))
        angle = float(rng.uniform(-2 * np.pi, 2 * np.pi)) if kind not in ("H", "X", "CX", "MCX") \
            else None
        gates.append((kind, int(qubits[0]), tuple(int(q) for q in qubits[1:1 + n_controls]), angle))
    return gates


def _circuit(n, gates):
    qc = QuantumCircuit(n)
    for g in gates:
        qc.add(*g)
    return qc


def _random_state(rng, n):
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, amps / np.linalg.norm(amps))


# ---------------------------------------------------------------- 1

def test_simulator_correctness(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    norm_err = adjoint_err = oracle_err = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        state = _random_state(rng, n)
        qc = _circuit(n, _random_gates(rng, n, int(rng.integers(1, 40))))
        out = qc.run(state)
        norm_err = max(norm_err, abs(out.norm() - 1.0))
        back = qc.inverse().run(out)
        adjoint_err = max(adjoint_err, float(np.max(np.abs(back.amplitudes - state.amplitudes))))
    for _ in range(300):
        n = int(rng.integers(1, 4))
        gates = _random_gates(rng, n, int(rng.integers(1, 15)))
        got = _circuit(n, gates).run().amplitudes
        oracle_err = max(oracle_err, float(np.max(np.abs(got - run_dense(n, gates)))))
    elapsed = time.perf_counter() - start
    ok = norm_err <= 1e-9 and adjoint_err <= 1e-10 and oracle_err <= 1e-12 and elapsed < 30
    assert criterion("simulator correctness", ok,
                     f"norm {norm_err:.1e} (<=1e-9), adjoint {adjoint_err:.1e} (<=1e-10), "
                     f"oracle {oracle_err:.1e} (<=1e-12), {elapsed:.1f}s (<30s)")


# ---------------------------------------------------------------- 2

def test_frqi_fidelity(criterion):
    rng = np.random.default_rng(7)
    norm_err, amp_err, mismatches = 0.0, 0.0, 0
    for side in (4, 8):
        for _ in range(100):
            img = rng.integers(0, 256, (side, side), dtype=np.uint8)
            state = frqi_encode(img)
            norm_err = max(norm_err, abs(state.norm() - 1.0))
            amp_err = max(amp_err, float(np.max(np.abs(state.amplitudes - frqi_amplitudes(img)))))
            mismatches += int(np.count_nonzero(frqi_decode(state, side) != img))
    ok = norm_err <= 1e-10 and mismatches == 0
    assert criterion("FRQI fidelity", ok,
                     f"200 images (100 each 4x4, 8x8): norm error {norm_err:.1e}, amplitude vs "
                     f"closed form {amp_err:.1e}, pixel mismatches {mismatches}")


# ---------------------------------------------------------------- 3

def test_neqr_exactness(criterion):
    rng = np.random.default_rng(8)
    mismatches, gate_err = 0, 0.0
    for k in range(100):
        side = (2, 4, 8)[k % 3]
        img = rng.integers(0, 256, (side, side), dtype=np.uint8)
        direct = neqr_encode(img)
        mismatches += int(np.count_nonzero(neqr_decode(direct, side) != img))
        gate = neqr_encode(img, mode="gate")
        gate_err = max(gate_err, float(np.max(np.abs(gate.amplitudes - direct.amplitudes))))
    ok = mismatches == 0 and gate_err <= 1e-10
    assert criterion("NEQR exactness", ok,
                     f"100 images (2x2..8x8): pixel mismatches {mismatches}, "
                     f"gate vs direct {gate_err:.1e} (<=1e-10)")


# ---------------------------------------------------------------- 4

def test_qcnn_feature_extraction(criterion):
    rng = np.random.default_rng(9)
    patches = rng.integers(0, 256, size=(1000, 4))
    values = qcnn_encode_patches(patches)
    oracle = np.array([qcnn_patch_expectation(p) for p in patches])
    err = float(np.max(np.abs(values - oracle)))
    in_range = bool(np.all((values >= -1) & (values <= 1)))
    zero = float(qcnn_encode_patches(np.zeros((1, 4), dtype=int))[0])
    ok = err <= 1e-10 and in_range and zero == 1.0
    assert criterion("QCNN feature extraction", ok,
                     f"1000 patches vs 16-dim oracle {err:.1e} (<=1e-10), in [-1,1]: {in_range}, "
                     f"all-zero patch -> {zero!r}")


# ---------------------------------------------------------------- 5

def test_gradient_correctness(criterion):
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(20):
        if k < 14:
            sizes = [int(rng.integers(2, 7)), *rng.integers(2, 8, size=int(rng.integers(1, 3))),
                     int(rng.integers(2, 5))]
            model = MlpModel.initialize(sizes, k, dropout_rate=0.25 if k % 2 else 0.0)
            X = rng.normal(size=(6, sizes[0]))
        else:
            model = CnnModel.initialize((6, 6), 3, n_filters=2, kernel_size=3, pool=2,
                                        hidden=(5,), seed=k)
            X = rng.normal(size=(4, 6, 6))
        # zero biases can put a pre-activation exactly on the ReLU kink, where
        # finite differences are meaningless; move off it
        for b in (model.head if k >= 14 else model).biases:
            b += rng.normal(scale=0.1, size=b.shape)
        if k >= 14:
            model.conv_bias += rng.normal(scale=0.1, size=model.conv_bias.shape)
        y = rng.integers(0, model.n_classes, len(X))
        masks = model.draw_masks(rng, len(X))
        _, grads, _ = model.loss_and_gradients(X, y, masks)
        params = model.params()
        for name, value in params.items():
            numeric = numeric_gradient(lambda: model.loss_and_gradients(X, y, masks)[0], value)
            worst = max(worst, relative_error(grads[name], numeric))
    assert criterion("gradient correctness", worst <= 1e-4,
                     f"20 models (14 MLP, 6 CNN): max relative error {worst:.1e} (<=1e-4)")


# ---------------------------------------------------------------- 6 and 7

@pytest.fixture(scope="module")
def end_to_end():
    ds = generate_synthetic(4, 200, 16, blur=2, noise=0.05, seed=0)
    train_ds, val_ds = split(ds, SplitSpec(0.7, 0))
    cfg = RunConfig(epochs=10, seed=0)
    start = time.perf_counter()
    results = {m: run_method(m, train_ds, val_ds, cfg)[:2] for m in ("qcnn", "cnn", "mlp")}
    return results, time.perf_counter() - start


def test_end_to_end_learning(criterion, end_to_end):
    results, elapsed = end_to_end
    q, c = results["qcnn"][0].accuracy, results["cnn"][0].accuracy
    ok = q >= 0.85 and c >= 0.90 and elapsed < 300
    order = "CNN > QCNN" if c > q else "QCNN >= CNN"
    assert criterion("end-to-end learning", ok,
                     f"QCNN->MLP val acc {q:.3f} (>=0.85), CNN {c:.3f} (>=0.90), 10 epochs, "
                     f"{elapsed:.1f}s (<300s); observed ordering {order}")


def test_dimensionality_reduction(criterion, end_to_end):
    results, _ = end_to_end
    counts_ok = all(feature_length("qcnn", s) == s * s // 4 for s in (2, 4, 8, 16, 32))
    img = np.zeros((16, 16), dtype=np.uint8)
    counts_ok &= len(qcnn_encode_image(img)) == 64
    hybrid, raw = results["qcnn"][1].n_params_, results["mlp"][1].n_params_
    ok = counts_ok and hybrid < raw
    assert criterion("dimensionality reduction", ok,
                     f"features = pixels/4 for sides 2..32: {counts_ok}; trainable params "
                     f"hybrid {hybrid} < raw-pixel MLP {raw} (hidden 64 both)")


# ---------------------------------------------------------------- 8

def test_noise_degradation(criterion):
    ds = generate_synthetic(4, 200, 16, blur=2, noise=0.05, seed=0)
    train_ds, val_ds = split(ds, SplitSpec(0.7, 0))
    levels = (0.0, 0.01, 0.05)
    means = []
    for level in levels:
        accs = []
        for seed in range(3):
            Xtr = noisy_encode_images(train_ds.images, "qcnn", NoiseSpec.level(level, seed), 128)
            Xva = noisy_encode_images(val_ds.images, "qcnn", NoiseSpec.level(level, seed + 100), 128)
            clf = DenseClassifier(seed=seed).fit(Xtr, train_ds.labels)
            accs.append(clf.score(Xva, val_ds.labels))
        means.append(float(np.mean(accs)))
    ok = means[0] >= means[1] >= means[2]
    detail = ", ".join(f"p={lv}: {m:.4f}" for lv, m in zip(levels, means))
    assert criterion("noise degradation", ok,
                     f"mean val acc over 3 seeds (QCNN, 128 shots) {detail}; monotone {ok}")


# ---------------------------------------------------------------- 9

def test_metric_identities(criterion):
    ce = cross_entropy(np.full(10, 0.1), 0)
    ce_ok = abs(ce - math.log(10)) <= 1e-9
    rng = np.random.default_rng(11)
    cm_ok = True
    for _ in range(100):
        n = int(rng.integers(1, 200))
        pred, true = rng.integers(0, 6, n), rng.integers(0, 6, n)
        cm = confusion_matrix(pred, true, 6)
        cm_ok &= np.trace(cm) / cm.sum() == accuracy(pred, true)
    values = np.arange(256, dtype=np.uint8).reshape(16, 16)
    identity_ok = np.array_equal(gamma_correct(values, 1.0), values)
    half = int(gamma_correct(np.array([[64]], dtype=np.uint8), 0.5)[0, 0])
    ok = ce_ok and cm_ok and identity_ok and half == 128
    assert criterion("metric identities", ok,
                     f"CE(uniform 10) - ln10 = {ce - math.log(10):.1e}; trace/total == accuracy "
                     f"on 100 draws: {cm_ok}; gamma 1 identity: {identity_ok}; gamma 0.5: 64 -> {half}")


# ---------------------------------------------------------------- 10

TIMING_KEYS = {"encode_time_per_image_s", "train_runtime_s", "predict_time_per_image_s",
               "total_runtime_s", "runtime_s"}


def _strip_timing(path: Path, data: bytes):
    name = path.name
    if "timing" in name:
        return None
    if name == "bench.csv":
        rows = list(csv.DictReader(io.StringIO(data.decode())))
        return [{k: v for k, v in r.items() if k not in TIMING_KEYS} for r in rows]
    if name == "bench.json":
        return [{k: v for k, v in r.items() if k not in TIMING_KEYS} for r in json.loads(data)]
    if name == "bench.txt":
        lines = data.decode().splitlines()
        header = lines[0].split()
        keep = [i for i, h in enumerate(header) if h not in TIMING_KEYS]
        return [[line.split()[i] for i in keep] for line in lines[:1] + lines[2:]]
    return data


def _cli_session(root: Path, capsys):
    out = root / "out"
    data = root / "data"
    steps = [
        ["gen-data", "--out", str(data), "--classes", "3", "--per-class", "8", "--side", "8",
         "--seed", "4"],
        ["encode", "--dataset", str(data), "--side", "8", "--method", "qcnn", "--out", str(out)],
        ["encode", "--dataset", str(data), "--side", "8", "--method", "frqi", "--shots", "64",
         "--noise-p", "0.01", "--readout-p", "0.02", "--out", str(out)],
        ["train", "--dataset", str(data), "--side", "8", "--method", "qcnn", "--epochs", "3",
         "--seed", "2", "--out", str(out)],
        ["train", "--features", str(out / "features_frqi.qfeat"), "--epochs", "2",
         "--out", str(out)],
        ["predict", "--model", str(out / "model_qcnn.json"),
         "--image", str(data / "vbar" / "vbar_00000.pgm")],
        ["bench", "--dataset", str(data), "--side", "8", "--epochs", "2", "--gamma", "0.5",
         "--out", str(out / "bench")],
        ["reconstruct", "--image", str(data / "cross" / "cross_00001.pgm"), "--method", "neqr",
         "--side", "8", "--out", str(out)],
    ]
    stdout = []
    for argv in steps:
        code = main(argv)
        text = capsys.readouterr().out
        if code != 0:
            raise AssertionError(f"{argv[0]} exited with {code}")
        if argv[0] in ("predict", "reconstruct", "encode", "gen-data"):
            stdout.append([ln for ln in text.splitlines() if "time" not in ln])
    files = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            stripped = _strip_timing(path, path.read_bytes())
            if stripped is not None:
                files[str(path.relative_to(root))] = stripped
    return files, stdout


def test_cli_reproducibility(criterion, tmp_path, capsys):
    import shutil

    root = tmp_path / "session"
    first = _cli_session(root, capsys)
    shutil.rmtree(root)
    second = _cli_session(root, capsys)
    differing = sorted(k for k in first[0] if first[0][k] != second[0].get(k))
    ok = first[0].keys() == second[0].keys() and not differing and first[1] == second[1]
    assert criterion("CLI reproducibility", ok,
                     f"{len(first[0])} non-timing output files compared across two runs of "
                     f"gen-data/encode/train/predict/bench/reconstruct; differing: "
                     f"{differing or 'none'}")
