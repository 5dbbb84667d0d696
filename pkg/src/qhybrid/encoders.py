"""Quantum image encodings and their measured feature vectors.

Three schemes turn a grayscale image (2-D ``uint8`` array, row-major) into
quantum states:

``qcnn``
    each non-overlapping 2x2 patch drives a 4-qubit circuit (RX encoding,
    a ring of controlled-RZ entanglers, pooling onto qubit 3) and yields one
    Pauli-Z expectation, so the feature map is a quarter of the pixel count.
``frqi``
    one colour qubit rotated by each pixel's angle, entangled with ``2n``
    position qubits: ``(1/2^n) sum_i (cos t_i |0> + sin t_i |1>) |i>``.
``neqr``
    eight intensity qubits hold each pixel's value in binary next to its
    position: ``(1/2^n) sum_{Y,X} |f(Y,X)> |YX>``.

Register layout for FRQI/NEQR: position qubits occupy the low bits (pixel
index ``y*side + x``) and the colour/intensity qubits sit above them, so a
basis index is ``colour * side**2 + position``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import MalformedStateError, ValidationError
from .statevector import (
    QuantumCircuit,
    StateVector,
    probabilities,
    run_batch,
    z_signs,
)
from .validation import check_image, check_images, check_intensities, check_side

__all__ = [
    "METHODS",
    "FeatureVector",
    "pixel_to_angle",
    "qcnn_patch_circuit",
    "qcnn_encode_patch",
    "qcnn_encode_patches",
    "qcnn_encode_image",
    "qcnn_features_to_image",
    "image_patches",
    "frqi_circuit",
    "frqi_encode",
    "frqi_decode",
    "neqr_circuit",
    "neqr_encode",
    "neqr_decode",
    "extract_features",
    "encode_images",
    "feature_length",
    "save_features",
    "load_features",
    "FeatureSet",
    "QCNNEncoder",
    "FRQIEncoder",
    "NEQREncoder",
]

METHODS = ("qcnn", "frqi", "neqr")

MAX_INTENSITY = 255
INTENSITY_BITS = 8

# QCNN patch circuit constants
QCNN_QUBITS = 4
RING_PAIRS = ((0, 1), (1, 2), (2, 3), (3, 0))  # (control, target)
RING_ANGLE = math.pi / 2
POOL_CONTROLS = (0, 1, 2)
POOL_ANGLE = math.pi / 2
READOUT_QUBIT = 3
POOL_GATES = ("CRY", "CRZ")

# states with less probability than this count as absent when decoding NEQR
NEQR_SUPPORT_TOL = 1e-9


@dataclass
class FeatureVector:
    values: np.ndarray
    method: str

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _method(method: str) -> str:
    m = str(method).lower()
    if m not in METHODS:
        raise ValidationError(f"unknown encoding method {method!r}; expected one of {METHODS}")
    return m


def pixel_to_angle(p):
    """Map intensities 0..255 linearly onto angles in ``[0, pi/2]``."""
    p = check_intensities(p)
    return p.astype(float) / MAX_INTENSITY * (math.pi / 2)


# ---------------------------------------------------------------- QCNN

def _qcnn_ops(angles: np.ndarray, pool_gate: str) -> list:
    if pool_gate not in POOL_GATES:
        raise ValidationError(f"pool_gate must be one of {POOL_GATES}, got {pool_gate!r}")
    ops = [("RX", q, (), angles[:, q]) for q in range(QCNN_QUBITS)]
    ops += [("CRZ", t, (c,), RING_ANGLE) for c, t in RING_PAIRS]
    ops += [(pool_gate, READOUT_QUBIT, (c,), POOL_ANGLE) for c in POOL_CONTROLS]
    return ops


def _check_patches(patches) -> np.ndarray:
    patches = np.asarray(patches)
    if patches.ndim == 1:
        patches = patches[None, :]
    if patches.ndim != 2 or patches.shape[1] != QCNN_QUBITS:
        raise ValidationError(f"QCNN patches must hold exactly 4 intensities, got shape {patches.shape}")
    return check_intensities(patches)


def qcnn_patch_circuit(patch, pool_gate: str = "CRY") -> QuantumCircuit:
    """Gate-level 4-qubit circuit for one patch ``[top-left, top-right, bottom-left, bottom-right]``."""
    angles = pixel_to_angle(_check_patches(patch))
    circuit = QuantumCircuit(QCNN_QUBITS)
    for kind, target, controls, angle in _qcnn_ops(angles, pool_gate):
        circuit.add(kind, target, controls, float(np.ravel(angle)[0]))
    return circuit


def qcnn_patch_states(patches, pool_gate: str = "CRY") -> np.ndarray:
    """Final 16-amplitude states for a stack of patches, shape ``(P, 16)``."""
    patches = _check_patches(patches)
    ops = _qcnn_ops(pixel_to_angle(patches), pool_gate)
    return run_batch(QCNN_QUBITS, ops, len(patches))


def qcnn_encode_patches(patches, pool_gate: str = "CRY") -> np.ndarray:
    """<Z> on the readout qubit for each row of ``patches`` (shape ``(P, 4)``)."""
    psi = qcnn_patch_states(patches, pool_gate)
    probs = psi.real ** 2 + psi.imag ** 2
    return np.clip(probs @ z_signs(QCNN_QUBITS, READOUT_QUBIT), -1.0, 1.0)


def qcnn_encode_patch(patch, pool_gate: str = "CRY") -> float:
    patch = np.asarray(patch)
    if patch.shape != (QCNN_QUBITS,):
        raise ValidationError(f"a QCNN patch has exactly 4 intensities, got shape {patch.shape}")
    return float(qcnn_encode_patches(patch, pool_gate)[0])


def image_patches(img) -> np.ndarray:
    """Non-overlapping 2x2 patches in row-major order, shape ``(h*w/4, 4)``."""
    img = check_image(img)
    h, w = img.shape
    if h % 2 or w % 2:
        raise ValidationError(f"QCNN needs even image dimensions, got {h}x{w}")
    blocks = img.reshape(h // 2, 2, w // 2, 2).transpose(0, 2, 1, 3)
    return blocks.reshape(-1, 4)


def qcnn_encode_image(img, pool_gate: str = "CRY") -> FeatureVector:
    return FeatureVector(qcnn_encode_patches(image_patches(img), pool_gate), "qcnn")


def qcnn_features_to_image(features, shape) -> np.ndarray:
    """Render QCNN features in [-1, 1] as a ``uint8`` image of ``shape``."""
    f = np.asarray(features, dtype=float).reshape(shape)
    return np.floor((f + 1.0) / 2.0 * MAX_INTENSITY + 0.5).clip(0, MAX_INTENSITY).astype(np.uint8)


# ---------------------------------------------------------------- shared FRQI/NEQR helpers

def _position_bits(side: int) -> int:
    return 2 * int(round(math.log2(side)))


def _pattern_ops(n_pos: int, pixels, body):
    """Gates that select each position pattern of ``pixels`` in turn.

    Controls fire on all-ones, so X gates flip the position qubits whose bit
    is 0 in the pixel index. Consecutive patterns only toggle the bits that
    differ, and the final toggle restores the register.
    """
    ops = []
    flipped = 0
    full = (1 << n_pos) - 1
    for i in pixels:
        want = ~i & full
        diff = flipped ^ want
        ops += [("X", q, (), None) for q in range(n_pos) if diff >> q & 1]
        flipped = want
        ops += body(i)
    ops += [("X", q, (), None) for q in range(n_pos) if flipped >> q & 1]
    return ops


def _circuit_from_ops(n_qubits: int, ops) -> QuantumCircuit:
    circuit = QuantumCircuit(n_qubits)
    for kind, target, controls, angle in ops:
        circuit.add(kind, target, controls, angle)
    return circuit


def _check_mode(mode: str) -> str:
    if mode not in ("gate", "direct"):
        raise ValidationError(f"mode must be 'gate' or 'direct', got {mode!r}")
    return mode


def _check_state_side(state: StateVector, side: int, extra_qubits: int, name: str) -> int:
    side = check_side(side)
    n_pos = _position_bits(side)
    if state.n_qubits != n_pos + extra_qubits:
        raise ValidationError(
            f"{name} state for side {side} needs {n_pos + extra_qubits} qubits, got {state.n_qubits}")
    return n_pos


# ---------------------------------------------------------------- FRQI

def frqi_circuit(img) -> QuantumCircuit:
    """Hadamards on the position qubits, then one multi-controlled RY(2*theta) per pixel."""
    img = check_image(img, square_pow2=True)
    n_pos = _position_bits(img.shape[0])
    color = n_pos
    angles = pixel_to_angle(img.reshape(-1))
    controls = tuple(range(n_pos))
    ops = [("H", q, (), None) for q in range(n_pos)]
    ops += _pattern_ops(n_pos, range(angles.size),
                        lambda i: [("MCRY", color, controls, 2.0 * float(angles[i]))])
    return _circuit_from_ops(n_pos + 1, ops)


def _frqi_amplitudes(images: np.ndarray) -> np.ndarray:
    n, side, _ = images.shape
    angles = pixel_to_angle(images.reshape(n, -1))
    scale = 1.0 / side
    return np.concatenate([np.cos(angles), np.sin(angles)], axis=1) * scale


def frqi_encode(img, mode: str = "direct") -> StateVector:
    """FRQI state of a square power-of-two image (``2n + 1`` qubits)."""
    img = check_image(img, square_pow2=True)
    n_qubits = _position_bits(img.shape[0]) + 1
    if _check_mode(mode) == "gate":
        return frqi_circuit(img).run()
    return StateVector(n_qubits, _frqi_amplitudes(img[None])[0])


def _frqi_split(probs: np.ndarray, n_pixels: int):
    # probs (..., 2 * n_pixels) -> P(colour=0, pos), P(colour=1, pos)
    return probs[..., :n_pixels], probs[..., n_pixels:]


def frqi_decode(state: StateVector, side: int) -> np.ndarray:
    """Recover intensities from the colour-qubit amplitudes at every position."""
    _check_state_side(state, side, 1, "FRQI")
    p0, p1 = _frqi_split(probabilities(state), side * side)
    theta = np.arctan2(np.sqrt(p1), np.sqrt(p0))
    pixels = np.floor(theta / (math.pi / 2) * MAX_INTENSITY + 0.5)
    return pixels.clip(0, MAX_INTENSITY).astype(np.uint8).reshape(side, side)


def _frqi_conditional(p0, p1) -> np.ndarray:
    total = p0 + p1
    out = np.zeros_like(total, dtype=float)
    np.divide(p1, total, out=out, where=total > 0)
    return out


# ---------------------------------------------------------------- NEQR

def neqr_circuit(img) -> QuantumCircuit:
    """Hadamards on the position qubits, then multi-controlled X per set intensity bit."""
    img = check_image(img, square_pow2=True)
    n_pos = _position_bits(img.shape[0])
    flat = img.reshape(-1).astype(int)
    controls = tuple(range(n_pos))

    def body(i):
        return [("MCX", n_pos + b, controls, None)
                for b in range(INTENSITY_BITS) if flat[i] >> b & 1]

    ops = [("H", q, (), None) for q in range(n_pos)]
    # zero-valued pixels need no gates, so their patterns are never selected
    ops += _pattern_ops(n_pos, np.flatnonzero(flat), body)
    return _circuit_from_ops(n_pos + INTENSITY_BITS, ops)


def neqr_encode(img, mode: str = "direct") -> StateVector:
    """NEQR state of a square power-of-two image (``2n + 8`` qubits)."""
    img = check_image(img, square_pow2=True)
    side = img.shape[0]
    n_pos = _position_bits(side)
    if _check_mode(mode) == "gate":
        return neqr_circuit(img).run()
    n_pixels = side * side
    amps = np.zeros(n_pixels << INTENSITY_BITS, dtype=complex)
    flat = img.reshape(-1).astype(np.int64)
    amps[(flat << n_pos) + np.arange(n_pixels)] = 1.0 / side
    return StateVector(n_pos + INTENSITY_BITS, amps)


def neqr_decode(state: StateVector, side: int) -> np.ndarray:
    """Exact intensity recovery: one supported bit pattern per position."""
    _check_state_side(state, side, INTENSITY_BITS, "NEQR")
    n_pixels = side * side
    probs = probabilities(state).reshape(1 << INTENSITY_BITS, n_pixels)
    support = probs > NEQR_SUPPORT_TOL
    n_support = support.sum(axis=0)
    if (n_support == 0).any():
        pos = int(np.flatnonzero(n_support == 0)[0])
        raise MalformedStateError(f"position {pos} has zero probability")
    if (n_support > 1).any():
        pos = int(np.flatnonzero(n_support > 1)[0])
        raise MalformedStateError(f"position {pos} carries several intensity patterns")
    return support.argmax(axis=0).astype(np.uint8).reshape(side, side)


# ---------------------------------------------------------------- features

def feature_length(method: str, side: int) -> int:
    method = _method(method)
    return side * side // 4 if method == "qcnn" else side * side


def _qcnn_sampled(p_one: np.ndarray, shots: int, rng) -> np.ndarray:
    ones = rng.binomial(shots, np.clip(p_one, 0.0, 1.0))
    return 1.0 - 2.0 * ones / shots


def _sampled_register(probs: np.ndarray, shots: int, rng) -> np.ndarray:
    counts = rng.multinomial(shots, probs / probs.sum())
    return counts.astype(float)


def _neqr_mean_intensity(weights: np.ndarray, n_pixels: int) -> np.ndarray:
    # weights over the full register -> expected intensity / 255 per position
    table = weights.reshape(1 << INTENSITY_BITS, n_pixels)
    total = table.sum(axis=0)
    mean = np.zeros(n_pixels)
    np.divide(np.arange(1 << INTENSITY_BITS) @ table, total, out=mean, where=total > 0)
    return mean / MAX_INTENSITY


def extract_features(img, method: str, shots: int = 0, seed: int = 0,
                     mode: str = "direct", pool_gate: str = "CRY") -> FeatureVector:
    """Encode ``img`` and read out a classical feature vector.

    ``qcnn``: <Z> of every patch. ``frqi``: P(colour=1 | position) per pixel.
    ``neqr``: intensity per position scaled to [0, 1]. With ``shots > 0`` the
    exact probabilities are replaced by frequencies from ``shots`` seeded
    measurements of the whole register; positions that receive no shots
    read as 0.
    """
    method = _method(method)
    if isinstance(shots, bool) or not isinstance(shots, (int, np.integer)) or shots < 0:
        raise ValidationError(f"shots must be a non-negative integer, got {shots!r}")
    rng = np.random.default_rng(seed) if shots else None
    if method == "qcnn":
        if mode == "gate" or shots:
            psi = qcnn_patch_states(image_patches(img), pool_gate)
            p_one = (psi.real ** 2 + psi.imag ** 2) @ (1.0 - z_signs(QCNN_QUBITS, READOUT_QUBIT)) / 2
            values = _qcnn_sampled(p_one, shots, rng) if shots else 1.0 - 2.0 * p_one
        else:
            values = qcnn_encode_image(img, pool_gate).values
        return FeatureVector(np.clip(values, -1.0, 1.0), method)

    img = check_image(img, square_pow2=True)
    n_pixels = img.size
    if method == "frqi":
        probs = probabilities(frqi_encode(img, mode))
        if shots:
            probs = _sampled_register(probs, shots, rng)
        p0, p1 = _frqi_split(probs, n_pixels)
        return FeatureVector(_frqi_conditional(p0, p1), method)

    state = neqr_encode(img, mode)
    if shots:
        weights = _sampled_register(probabilities(state), shots, rng)
        return FeatureVector(_neqr_mean_intensity(weights, n_pixels), method)
    side = img.shape[0]
    return FeatureVector(neqr_decode(state, side).reshape(-1) / MAX_INTENSITY, method)


def encode_images(images, method: str, shots: int = 0, seed: int = 0,
                  pool_gate: str = "CRY") -> np.ndarray:
    """Feature matrix for a stack of images, one row per image in input order.

    Row ``k`` is sampled with the generator seeded by ``(seed, k)``, so results
    do not depend on how the work is scheduled.
    """
    images = check_images(images)
    method = _method(method)
    n = len(images)
    if method == "qcnn" and not shots:
        patches = np.concatenate([image_patches(im) for im in images]) if n else np.zeros((0, 4))
        return qcnn_encode_patches(patches, pool_gate).reshape(n, -1)
    if method == "frqi" and not shots:
        check_image(images[0], square_pow2=True)
        amps = _frqi_amplitudes(images)
        probs = amps ** 2
        p0, p1 = _frqi_split(probs, images[0].size)
        return _frqi_conditional(p0, p1)
    rows = [extract_features(im, method, shots, [seed, k], pool_gate=pool_gate).values
            for k, im in enumerate(images)]
    return np.vstack(rows) if rows else np.zeros((0, feature_length(method, images.shape[1])))


# ---------------------------------------------------------------- persistence

FEATURE_FORMAT = "qhybrid-features"
FEATURE_FORMAT_VERSION = 1


@dataclass
class FeatureSet:
    features: np.ndarray
    labels: np.ndarray
    method: str
    side: int
    class_names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def save_features(path, fs: FeatureSet) -> Path:
    """Write a JSON header line followed by little-endian float64 rows."""
    path = Path(path)
    feats = np.ascontiguousarray(fs.features, dtype="<f8")
    if feats.ndim != 2:
        raise ValidationError("features must be a 2-D array")
    header = {
        "format": FEATURE_FORMAT,
        "format_version": FEATURE_FORMAT_VERSION,
        "method": fs.method,
        "side": int(fs.side),
        "feature_length": int(feats.shape[1]),
        "count": int(feats.shape[0]),
        "dtype": "<f8",
        "labels": [int(v) for v in fs.labels],
        "class_names": list(fs.class_names),
        "meta": fs.meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(feats.tobytes(order="C"))
    return path


def load_features(path) -> FeatureSet:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = fh.read()
    if header.get("format") != FEATURE_FORMAT:
        raise ValidationError(f"{path} is not a feature file")
    if header.get("format_version") != FEATURE_FORMAT_VERSION:
        raise ValidationError(f"unsupported feature file version {header.get('format_version')}")
    count, length = header["count"], header["feature_length"]
    feats = np.frombuffer(payload, dtype=header["dtype"])
    if feats.size != count * length:
        raise ValidationError(f"{path}: expected {count}x{length} values, found {feats.size}")
    return FeatureSet(
        features=feats.reshape(count, length).astype(float),
        labels=np.asarray(header["labels"], dtype=int),
        method=header["method"],
        side=header["side"],
        class_names=header["class_names"],
        meta=header.get("meta", {}),
    )


# ---------------------------------------------------------------- sklearn transformers

class _QuantumEncoder(TransformerMixin, BaseEstimator):
    """Stateless transformer from image stacks to measured quantum features.

    ``X`` may be ``(n, side, side)`` images or ``(n, side*side)`` flattened
    rows; values must be integers in [0, 255].
    """

    method = None

    def __init__(self, shots=0, seed=0):
        self.shots = shots
        self.seed = seed

    def _images(self, X):
        X = np.asarray(X)
        if X.ndim == 2:
            side = math.isqrt(X.shape[1])
            if side * side != X.shape[1]:
                raise ValidationError(f"cannot reshape {X.shape[1]} features into a square image")
            X = X.reshape(len(X), side, side)
        return check_images(X)

    def fit(self, X, y=None):
        images = self._images(X)
        self.side_ = images.shape[1]
        self.n_features_in_ = images.shape[1] * images.shape[2]
        self.n_features_out_ = feature_length(self.method, self.side_)
        return self

    def transform(self, X):
        images = self._images(X)
        if hasattr(self, "side_") and images.shape[1] != self.side_:
            raise ValidationError(f"fitted on side {self.side_}, got {images.shape[1]}")
        return encode_images(images, self.method, self.shots, self.seed, **self._extra())

    def _extra(self):
        return {}


class QCNNEncoder(_QuantumEncoder):
    method = "qcnn"

    def __init__(self, shots=0, seed=0, pool_gate="CRY"):
        super().__init__(shots=shots, seed=seed)
        self.pool_gate = pool_gate

    def _extra(self):
        return {"pool_gate": self.pool_gate}


class FRQIEncoder(_QuantumEncoder):
    method = "frqi"


class NEQREncoder(_QuantumEncoder):
    method = "neqr"
