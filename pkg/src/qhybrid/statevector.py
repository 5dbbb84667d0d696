"""Dense statevector simulation of small qubit registers.

Conventions used throughout the package:

* qubit 0 is the least-significant bit of the basis index, so for three
  qubits the index of ``|q2 q1 q0>`` is ``4*q2 + 2*q1 + q0``;
* rotations are ``R_P(theta) = exp(-i * theta * P / 2)`` for ``P`` in X, Y, Z;
* controlled gates act on their single target when every control bit is 1.
  Multi-controlled gates are applied directly to the amplitudes rather than
  decomposed into one- and two-qubit gates.

Every gate kind has exactly one target qubit. The batched kernel
:func:`apply_gate_batch` evolves a stack of states of shape ``(B, 2**n)`` and
accepts per-row rotation angles, which is what the encoders and the noise
model use to simulate many small circuits at once.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapacityError, ValidationError

__all__ = [
    "MAX_QUBITS",
    "GATE_KINDS",
    "Gate",
    "StateVector",
    "QuantumCircuit",
    "new_zero_state",
    "apply_gate",
    "apply_gate_batch",
    "apply_matrix_batch",
    "gate_matrix",
    "expectation_z",
    "probabilities",
    "sample_counts",
    "sample_outcomes",
    "run_batch",
    "PAULI_MATRICES",
]

# 2**24 complex128 amplitudes = 256 MiB; a gate needs about one extra copy.
MAX_QUBITS = 24

ROTATION_KINDS = frozenset({"RX", "RY", "RZ", "CRZ", "CRY", "MCRY"})
FIXED_KINDS = frozenset({"H", "X", "CX", "MCX"})
GATE_KINDS = ROTATION_KINDS | FIXED_KINDS

# minimum/maximum number of controls per kind
_N_CONTROLS = {
    "RX": (0, 0), "RY": (0, 0), "RZ": (0, 0), "H": (0, 0), "X": (0, 0),
    "CRZ": (1, 1), "CRY": (1, 1), "CX": (1, 1),
    "MCX": (0, None), "MCRY": (0, None),
}

_SQRT_HALF = 1.0 / np.sqrt(2.0)
_H = np.array([[_SQRT_HALF, _SQRT_HALF], [_SQRT_HALF, -_SQRT_HALF]], dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# indexed by the integer codes used for Pauli errors (0 = identity)
PAULI_MATRICES = (np.eye(2, dtype=complex), _X, _Y, _Z)


def _rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([np.stack([c, -1j * s], -1), np.stack([-1j * s, c], -1)], -2)


def _ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2).astype(complex)


def _rz(theta):
    e = np.exp(-0.5j * np.asarray(theta, dtype=float))
    zero = np.zeros_like(e)
    return np.stack([np.stack([e, zero], -1), np.stack([zero, np.conj(e)], -1)], -2)


_ROTATION_MATRIX = {
    "RX": _rx, "RY": _ry, "RZ": _rz,
    "CRZ": _rz, "CRY": _ry, "MCRY": _ry,
}


def gate_matrix(kind: str, angle=None) -> np.ndarray:
    """2x2 matrix acting on the target qubit of ``kind``.

    ``angle`` may be an array, in which case the result has shape
    ``angle.shape + (2, 2)``.
    """
    if kind in ROTATION_KINDS:
        if angle is None:
            raise ValidationError(f"{kind} requires an angle")
        return _ROTATION_MATRIX[kind](np.asarray(angle, dtype=float))
    if kind == "H":
        return _H.copy()
    if kind in ("X", "CX", "MCX"):
        return _X.copy()
    raise ValidationError(f"unknown gate kind {kind!r}")


@dataclass(frozen=True)
class Gate:
    """A single-target gate, optionally controlled on one or more qubits."""

    kind: str
    targets: tuple
    controls: tuple = ()
    angle: float | None = None

    def __post_init__(self):
        targets = tuple(int(t) for t in np.atleast_1d(self.targets))
        controls = tuple(int(c) for c in np.atleast_1d(self.controls)) if len(
            np.atleast_1d(self.controls)) else ()
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "controls", controls)
        if self.kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        if len(targets) != 1:
            raise ValidationError(f"{self.kind} takes exactly one target, got {targets}")
        lo, hi = _N_CONTROLS[self.kind]
        if len(controls) < lo or (hi is not None and len(controls) > hi):
            raise ValidationError(f"{self.kind} got {len(controls)} controls")
        if len(set(controls)) != len(controls):
            raise ValidationError(f"duplicate control qubits {controls}")
        if set(targets) & set(controls):
            raise ValidationError("targets and controls must be disjoint")
        if min(targets + controls) < 0:
            raise ValidationError("qubit indices must be non-negative")
        if self.kind in ROTATION_KINDS:
            if self.angle is None or not np.isfinite(self.angle):
                raise ValidationError(f"{self.kind} requires a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValidationError(f"{self.kind} takes no angle")

    @property
    def target(self) -> int:
        return self.targets[0]

    @property
    def qubits(self) -> tuple:
        return self.controls + self.targets

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.angle)

    def inverse(self) -> "Gate":
        if self.kind in ROTATION_KINDS:
            return Gate(self.kind, self.targets, self.controls, -self.angle)
        return self

    def check(self, n_qubits: int) -> None:
        if max(self.qubits) >= n_qubits:
            raise ValidationError(
                f"{self.kind} on qubits {self.qubits} is out of range for {n_qubits} qubits")


def _check_n_qubits(n_qubits) -> int:
    if isinstance(n_qubits, bool) or not isinstance(n_qubits, (int, np.integer)):
        raise ValidationError(f"n_qubits must be an integer, got {n_qubits!r}")
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    return int(n_qubits)


class StateVector:
    """Amplitudes of an ``n_qubits`` register (qubit 0 = least-significant bit)."""

    def __init__(self, n_qubits: int, amplitudes=None):
        self.n_qubits = _check_n_qubits(n_qubits)
        dim = 1 << self.n_qubits
        if amplitudes is None:
            amplitudes = np.zeros(dim, dtype=complex)
            amplitudes[0] = 1.0
        else:
            amplitudes = np.array(amplitudes, dtype=complex).reshape(-1)
            if amplitudes.size != dim:
                raise ValidationError(
                    f"expected {dim} amplitudes for {self.n_qubits} qubits, got {amplitudes.size}")
        self.amplitudes = amplitudes

    def __len__(self):
        return self.amplitudes.size

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def apply(self, gate: Gate) -> "StateVector":
        """Apply ``gate`` in place and return ``self``."""
        gate.check(self.n_qubits)
        apply_gate_batch(self.amplitudes[None, :], self.n_qubits, gate.kind,
                         gate.target, gate.controls, gate.angle)
        return self


def new_zero_state(n_qubits: int) -> StateVector:
    """``|0...0>`` on ``n_qubits`` qubits (at most :data:`MAX_QUBITS`)."""
    return StateVector(n_qubits)


def apply_matrix_batch(psi: np.ndarray, n_qubits: int, matrix, target: int,
                       controls=()) -> np.ndarray:
    """Apply a 2x2 ``matrix`` to ``target`` of every row of ``psi`` in place.

    ``psi`` has shape ``(B, 2**n_qubits)`` and must be C-contiguous.
    ``matrix`` is either ``(2, 2)`` or ``(B, 2, 2)`` for per-row matrices.
    """
    batch = psi.shape[0]
    tensor = psi.reshape((batch,) + (2,) * n_qubits)
    base = [slice(None)] * (n_qubits + 1)
    for c in controls:
        base[n_qubits - c] = 1
    idx0, idx1 = list(base), list(base)
    idx0[n_qubits - target] = 0
    idx1[n_qubits - target] = 1
    idx0, idx1 = tuple(idx0), tuple(idx1)
    a0 = tensor[idx0]
    a1 = tensor[idx1]
    matrix = np.asarray(matrix)
    if matrix.ndim == 3:
        shape = (batch,) + (1,) * (a0.ndim - 1)
        m00, m01 = matrix[:, 0, 0].reshape(shape), matrix[:, 0, 1].reshape(shape)
        m10, m11 = matrix[:, 1, 0].reshape(shape), matrix[:, 1, 1].reshape(shape)
    else:
        (m00, m01), (m10, m11) = matrix
    new0 = m00 * a0 + m01 * a1
    new1 = m10 * a0 + m11 * a1
    tensor[idx0] = new0
    tensor[idx1] = new1
    return psi


def apply_gate_batch(psi: np.ndarray, n_qubits: int, kind: str, target: int,
                     controls=(), angle=None) -> np.ndarray:
    """Batched in-place gate application; ``angle`` may be a ``(B,)`` array."""
    if kind in ("X", "CX", "MCX"):
        batch = psi.shape[0]
        tensor = psi.reshape((batch,) + (2,) * n_qubits)
        base = [slice(None)] * (n_qubits + 1)
        for c in controls:
            base[n_qubits - c] = 1
        idx0, idx1 = list(base), list(base)
        idx0[n_qubits - target] = 0
        idx1[n_qubits - target] = 1
        idx0, idx1 = tuple(idx0), tuple(idx1)
        saved = tensor[idx0].copy()
        tensor[idx0] = tensor[idx1]
        tensor[idx1] = saved
        return psi
    return apply_matrix_batch(psi, n_qubits, gate_matrix(kind, angle), target, controls)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return a new state equal to ``gate`` applied to ``state``."""
    return state.copy().apply(gate)


def _check_qubit(state: StateVector, qubit) -> int:
    if isinstance(qubit, bool) or not isinstance(qubit, (int, np.integer)):
        raise ValidationError(f"qubit index must be an integer, got {qubit!r}")
    if not 0 <= qubit < state.n_qubits:
        raise ValidationError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    return int(qubit)


def probabilities(state: StateVector) -> np.ndarray:
    """Born-rule probabilities ``|a_i|**2`` of every basis state."""
    amps = state.amplitudes
    return amps.real ** 2 + amps.imag ** 2


def z_signs(n_qubits: int, qubit: int) -> np.ndarray:
    """+1 where ``qubit`` is 0 in the basis index, -1 where it is 1."""
    bits = (np.arange(1 << n_qubits) >> qubit) & 1
    return 1.0 - 2.0 * bits


def expectation_z(state: StateVector, qubit: int) -> float:
    """<psi| Z_qubit |psi>."""
    qubit = _check_qubit(state, qubit)
    return float(np.dot(probabilities(state), z_signs(state.n_qubits, qubit)))


def _normalized(probs):
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    return probs / probs.sum()


def _check_shots(shots) -> int:
    if isinstance(shots, bool) or not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ValidationError(f"shots must be a positive integer, got {shots!r}")
    return int(shots)


def sample_counts(state: StateVector, shots: int, seed: int = 0) -> dict:
    """Measure every qubit ``shots`` times; returns ``{basis index: count}``."""
    shots = _check_shots(shots)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, _normalized(probabilities(state)))
    return {int(i): int(counts[i]) for i in np.flatnonzero(counts)}


def sample_outcomes(probs, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Per-shot basis indices drawn from ``probs`` (for readout-error models)."""
    shots = _check_shots(shots)
    return rng.choice(len(probs), size=shots, p=_normalized(probs))


@dataclass
class QuantumCircuit:
    """Ordered list of gates on a fixed number of qubits."""

    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        self.n_qubits = _check_n_qubits(self.n_qubits)
        for gate in self.gates:
            gate.check(self.n_qubits)

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def append(self, gate: Gate) -> "QuantumCircuit":
        gate.check(self.n_qubits)
        self.gates.append(gate)
        return self

    def add(self, kind, target, controls=(), angle=None) -> "QuantumCircuit":
        return self.append(Gate(kind, (target,), tuple(controls), angle))

    def inverse(self) -> "QuantumCircuit":
        return QuantumCircuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def gate_counts(self) -> dict:
        """Gate counts by kind; multi-controlled gates count once (not decomposed)."""
        return dict(Counter(g.kind for g in self.gates))

    def run(self, state: StateVector | None = None) -> StateVector:
        """Apply every gate in order to a copy of ``state`` (default ``|0...0>``)."""
        if state is None:
            state = new_zero_state(self.n_qubits)
        elif state.n_qubits != self.n_qubits:
            raise ValidationError(
                f"circuit has {self.n_qubits} qubits, state has {state.n_qubits}")
        else:
            state = state.copy()
        for gate in self.gates:
            state.apply(gate)
        return state


def run_batch(n_qubits: int, ops, n_rows: int, instance=None, pauli_errors=None) -> np.ndarray:
    """Simulate ``n_rows`` copies of one gate sequence from ``|0...0>``.

    ``ops`` is a sequence of ``(kind, target, controls, angle)`` tuples. An
    angle may be a 1-D array indexed by circuit instance, so rows can run the
    same gate structure with different angles; ``instance[r]`` picks the
    instance of row ``r`` (defaults to ``r``).

    ``pauli_errors`` is an optional ``(n_rows, len(ops))`` integer array. Code
    1, 2 or 3 applies X, Y or Z to that op's target right after the op, which
    is how noisy trajectories are realised; 0 leaves the row alone.

    Returns the final amplitudes with shape ``(n_rows, 2**n_qubits)``.
    """
    n_qubits = _check_n_qubits(n_qubits)
    if instance is None:
        instance = np.arange(n_rows)
    psi = np.zeros((n_rows, 1 << n_qubits), dtype=complex)
    psi[:, 0] = 1.0
    for k, (kind, target, controls, angle) in enumerate(ops):
        if angle is not None and np.ndim(angle) > 0:
            angle = np.asarray(angle)[instance]
        apply_gate_batch(psi, n_qubits, kind, target, controls, angle)
        if pauli_errors is None:
            continue
        column = pauli_errors[:, k]
        if not column.any():
            continue
        for code in (1, 2, 3):
            rows = np.flatnonzero(column == code)
            if rows.size:
                sub = psi[rows]
                apply_matrix_batch(sub, n_qubits, PAULI_MATRICES[code], target)
                psi[rows] = sub
    return psi


def circuit_ops(circuit: QuantumCircuit) -> list:
    """``(kind, target, controls, angle)`` tuples for :func:`run_batch`."""
    return [(g.kind, g.target, g.controls, g.angle) for g in circuit.gates]
