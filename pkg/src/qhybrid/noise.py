"""Monte Carlo noise: depolarizing Pauli errors after gates and readout bit flips.

Every shot is one stochastic trajectory. After each gate, with probability
``p`` a uniformly chosen X, Y or Z hits the gate's target qubit. Measured
bits are then flipped independently with the readout probability.

Shots whose trajectory drew no Pauli error share the noiseless final state,
so they are sampled from it directly. Only trajectories with at least one
error are simulated individually, batched through
:func:`qhybrid.statevector.run_batch`. The output distribution is the same as
simulating every shot separately.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .encoders import (
    QCNN_QUBITS,
    READOUT_QUBIT,
    FeatureVector,
    _frqi_conditional,
    _frqi_split,
    _method,
    _neqr_mean_intensity,
    _qcnn_ops,
    frqi_circuit,
    image_patches,
    neqr_circuit,
    pixel_to_angle,
)
from .exceptions import ValidationError
from .statevector import PAULI_MATRICES, StateVector, apply_matrix_batch, circuit_ops, run_batch
from .validation import check_image, check_images, check_positive_int, check_probability

__all__ = [
    "NoiseSpec",
    "apply_depolarizing",
    "sample_noisy_outcomes",
    "noisy_extract_features",
    "noisy_encode_images",
]

# amplitudes simulated per chunk of erroneous trajectories
_CHUNK_AMPLITUDES = 1 << 21


@dataclass(frozen=True)
class NoiseSpec:
    depolarizing_prob: float = 0.0
    readout_flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_probability("depolarizing_prob", self.depolarizing_prob)
        check_probability("readout_flip_prob", self.readout_flip_prob)

    @classmethod
    def level(cls, p: float, seed: int = 0) -> "NoiseSpec":
        """Same probability for gate errors and readout flips."""
        return cls(p, p, seed)

    @property
    def is_noiseless(self) -> bool:
        return self.depolarizing_prob == 0 and self.readout_flip_prob == 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(float(d.get("depolarizing_prob", 0.0)), float(d.get("readout_flip_prob", 0.0)),
                   int(d.get("seed", 0)))


def apply_depolarizing(state: StateVector, qubit: int, p: float,
                       rng: np.random.Generator) -> StateVector:
    """One trajectory of the depolarizing channel on ``qubit``; returns a new state."""
    p = check_probability("p", p)
    if not 0 <= qubit < state.n_qubits:
        raise ValidationError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    out = state.copy()
    if rng.random() < p:
        code = int(rng.integers(1, 4))
        apply_matrix_batch(out.amplitudes[None, :], out.n_qubits, PAULI_MATRICES[code], qubit)
    return out


def _draw_paulis(rng, n_rows, n_ops, p) -> np.ndarray:
    if p <= 0:
        return np.zeros((n_rows, n_ops), dtype=np.int8)
    hit = rng.random((n_rows, n_ops)) < p
    codes = rng.integers(1, 4, size=(n_rows, n_ops), dtype=np.int8)
    return np.where(hit, codes, 0).astype(np.int8)


def _sample_rows(probs: np.ndarray, rng) -> np.ndarray:
    # one basis index per row by inverse CDF
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def sample_noisy_outcomes(n_qubits: int, ops, n_instances: int, shots: int,
                          p: float, rng: np.random.Generator) -> np.ndarray:
    """Basis-index outcomes of ``shots`` noisy trajectories per circuit instance.

    Returns an ``(n_instances, shots)`` integer array, before readout errors.
    """
    shots = check_positive_int("shots", shots)
    n_rows = n_instances * shots
    instance = np.repeat(np.arange(n_instances), shots)
    paulis = _draw_paulis(rng, n_rows, len(ops), p)
    dirty = paulis.any(axis=1)
    outcomes = np.empty(n_rows, dtype=np.int64)

    clean_psi = run_batch(n_qubits, ops, n_instances)
    clean_cdf = np.cumsum(clean_psi.real ** 2 + clean_psi.imag ** 2, axis=1)
    dim = clean_cdf.shape[1]
    clean_rows = np.flatnonzero(~dirty)
    u = rng.random(clean_rows.size)
    # rows are grouped by instance, so each instance's clean rows are contiguous
    bounds = np.searchsorted(instance[clean_rows], np.arange(n_instances + 1))
    for j in range(n_instances):
        lo, hi = bounds[j], bounds[j + 1]
        if hi > lo:
            cdf = clean_cdf[j]
            idx = np.searchsorted(cdf, u[lo:hi] * cdf[-1], side="right")
            outcomes[clean_rows[lo:hi]] = np.minimum(idx, dim - 1)

    dirty_rows = np.flatnonzero(dirty)
    chunk = max(1, _CHUNK_AMPLITUDES // dim)
    for start in range(0, dirty_rows.size, chunk):
        rows = dirty_rows[start:start + chunk]
        psi = run_batch(n_qubits, ops, rows.size, instance[rows], paulis[rows])
        outcomes[rows] = _sample_rows(psi.real ** 2 + psi.imag ** 2, rng)
    return outcomes.reshape(n_instances, shots)


def _flip_bits(outcomes: np.ndarray, qubits, q: float, rng) -> np.ndarray:
    if q <= 0:
        return outcomes
    mask = np.zeros(outcomes.shape, dtype=np.int64)
    for qubit in qubits:
        mask |= (rng.random(outcomes.shape) < q).astype(np.int64) << qubit
    return outcomes ^ mask


def noisy_extract_features(img, method: str, spec: NoiseSpec, shots: int,
                           rng: np.random.Generator | None = None,
                           pool_gate: str = "CRY") -> FeatureVector:
    """Sampled features of ``img`` under ``spec``; always shot-based.

    Uses ``rng`` if given, else a generator seeded with ``spec.seed``.
    """
    method = _method(method)
    shots = check_positive_int("shots", shots)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    p, q = spec.depolarizing_prob, spec.readout_flip_prob
    if method == "qcnn":
        patches = image_patches(img)
        ops = _qcnn_ops(pixel_to_angle(patches), pool_gate)
        out = sample_noisy_outcomes(QCNN_QUBITS, ops, len(patches), shots, p, rng)
        bits = (out >> READOUT_QUBIT) & 1
        bits = _flip_bits(bits, [0], q, rng)
        return FeatureVector(1.0 - 2.0 * bits.mean(axis=1), method)

    img = check_image(img, square_pow2=True)
    n_pixels = img.size
    circuit = frqi_circuit(img) if method == "frqi" else neqr_circuit(img)
    n = circuit.n_qubits
    out = sample_noisy_outcomes(n, circuit_ops(circuit), 1, shots, p, rng)[0]
    out = _flip_bits(out, range(n), q, rng)
    counts = np.bincount(out, minlength=1 << n).astype(float)
    if method == "frqi":
        p0, p1 = _frqi_split(counts, n_pixels)
        return FeatureVector(_frqi_conditional(p0, p1), method)
    return FeatureVector(_neqr_mean_intensity(counts, n_pixels), method)


def noisy_encode_images(images, method: str, spec: NoiseSpec, shots: int,
                        pool_gate: str = "CRY") -> np.ndarray:
    """Noisy feature matrix; image ``k`` uses the generator seeded by ``(spec.seed, k)``."""
    images = check_images(images)
    rows = [noisy_extract_features(im, method, spec, shots, np.random.default_rng([spec.seed, k]),
                                   pool_gate).values
            for k, im in enumerate(images)]
    return np.vstack(rows)
