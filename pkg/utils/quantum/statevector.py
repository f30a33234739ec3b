"""
Dense statevector simulation: state preparation, gate application and projector expectations.

Basis indices are big-endian: qubit 0 is the most significant bit. The kernels below work on
arrays of shape (batch, 2**n) so that many circuits evolve together in one vectorized pass;
StateVector is the single-state view on top of them.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from ..errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

MAX_QUBITS = 12

Angles = Union[float, np.ndarray]


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    @classmethod
    def rx(cls, target: int, angle: float) -> "Gate":
        return cls(GateKind.RX, target, angle=angle)

    @classmethod
    def ry(cls, target: int, angle: float) -> "Gate":
        return cls(GateKind.RY, target, angle=angle)

    @classmethod
    def rz(cls, target: int, angle: float) -> "Gate":
        return cls(GateKind.RZ, target, angle=angle)

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls(GateKind.CNOT, target, control=control)


class ObservableKind(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class Observable:
    """|0><0| on one qubit (LOCAL) or |0...0><0...0| on the whole register (GLOBAL)."""

    kind: ObservableKind = ObservableKind.LOCAL
    qubit: int = 0

    @classmethod
    def local(cls, qubit: int = 0) -> "Observable":
        return cls(ObservableKind.LOCAL, qubit)

    @classmethod
    def global_projector(cls) -> "Observable":
        return cls(ObservableKind.GLOBAL, 0)

    def trace(self, n_qubits: int) -> float:
        """Tr[O] on n qubits."""
        if self.kind is ObservableKind.GLOBAL:
            return 1.0
        return float(2 ** (n_qubits - 1))

    def frobenius_norm(self, n_qubits: int) -> float:
        # projectors: ||O||_F^2 = Tr[O^2] = Tr[O]
        return float(np.sqrt(self.trace(n_qubits)))


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ShapeError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def batch(self) -> np.ndarray:
        """The amplitudes as a (1, 2**n) batch for the kernels."""
        return self.amplitudes.reshape(1, -1)


def check_qubit_count(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"qubit count must be in [1, {MAX_QUBITS}], got {n_qubits}")


def check_qubit(n_qubits: int, qubit: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit index {qubit} out of range for {n_qubits} qubits")


def zero_states(n_qubits: int, batch: int) -> np.ndarray:
    """A (batch, 2**n) array of |0...0> states."""
    check_qubit_count(n_qubits)
    psi = np.zeros((batch, 1 << n_qubits), dtype=np.complex128)
    psi[:, 0] = 1.0
    return psi


def new_zero_state(n_qubits: int) -> StateVector:
    return StateVector(n_qubits, zero_states(n_qubits, 1)[0])


def apply_rotation(psi: np.ndarray, n_qubits: int, kind: GateKind, target: int, angles: Angles) -> np.ndarray:
    """
    Apply RX/RY/RZ to `target` on every state of the batch.

    `angles` is a scalar or one angle per batch row. Amplitude pairs differing only in the target
    bit sit at stride 2**(n - target - 1); the (batch, high, 2, low) view exposes them directly.
    """
    check_qubit(n_qubits, target)
    batch = psi.shape[0]
    view = psi.reshape(batch, 1 << target, 2, 1 << (n_qubits - target - 1))
    half = 0.5 * np.broadcast_to(np.asarray(angles, dtype=np.float64), (batch,)).reshape(batch, 1, 1)
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    out = np.empty_like(view)

    if kind is GateKind.RY:
        c, s = np.cos(half), np.sin(half)
        out[:, :, 0, :] = c * a0 - s * a1
        out[:, :, 1, :] = s * a0 + c * a1
    elif kind is GateKind.RX:
        c, s = np.cos(half), -1j * np.sin(half)
        out[:, :, 0, :] = c * a0 + s * a1
        out[:, :, 1, :] = s * a0 + c * a1
    elif kind is GateKind.RZ:
        phase = np.exp(-1j * half)
        out[:, :, 0, :] = phase * a0
        out[:, :, 1, :] = np.conj(phase) * a1
    else:
        raise ValueError(f"{kind} is not a rotation gate")

    return out.reshape(batch, -1)


@lru_cache(maxsize=None)
def _cnot_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    index = np.arange(1 << n_qubits)
    control_bit = 1 << (n_qubits - 1 - control)
    target_bit = 1 << (n_qubits - 1 - target)
    permutation = np.where(index & control_bit, index ^ target_bit, index)
    permutation.setflags(write=False)
    return permutation


def apply_cnot(psi: np.ndarray, n_qubits: int, control: int, target: int) -> np.ndarray:
    check_qubit(n_qubits, control)
    check_qubit(n_qubits, target)
    if control == target:
        raise IndexError(f"CNOT control and target must differ (both {control})")
    return psi[:, _cnot_permutation(n_qubits, control, target)]


def apply_gate_batch(psi: np.ndarray, n_qubits: int, gate: Gate, angles: Optional[Angles] = None) -> np.ndarray:
    """Apply `gate` to a batch; `angles` overrides gate.angle with per-row values."""
    if gate.kind is GateKind.CNOT:
        return apply_cnot(psi, n_qubits, gate.control, gate.target)
    return apply_rotation(psi, n_qubits, gate.kind, gate.target, gate.angle if angles is None else angles)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return a fresh state; the input is left untouched."""
    return StateVector(state.n_qubits, apply_gate_batch(state.batch(), state.n_qubits, gate)[0])


def local_expectations(psi: np.ndarray, n_qubits: int) -> np.ndarray:
    """<|0><0|_q> for every qubit q of every state: shape (batch, n)."""
    probs = np.abs(psi) ** 2
    batch = probs.shape[0]
    out = np.empty((batch, n_qubits))
    for qubit in range(n_qubits):
        out[:, qubit] = probs.reshape(batch, 1 << qubit, 2, -1)[:, :, 0, :].sum(axis=(1, 2))
    return np.clip(out, 0.0, 1.0)


def global_expectation(psi: np.ndarray) -> np.ndarray:
    return np.clip(np.abs(psi[:, 0]) ** 2, 0.0, 1.0)


def expectations(psi: np.ndarray, n_qubits: int, observable: Observable) -> np.ndarray:
    """Expectation of `observable` for every state of the batch: shape (batch,)."""
    if observable.kind is ObservableKind.GLOBAL:
        return global_expectation(psi)
    check_qubit(n_qubits, observable.qubit)
    probs = np.abs(psi) ** 2
    p0 = probs.reshape(psi.shape[0], 1 << observable.qubit, 2, -1)[:, :, 0, :].sum(axis=(1, 2))
    return np.clip(p0, 0.0, 1.0)


def expect(state: StateVector, observable: Observable) -> float:
    return float(expectations(state.batch(), state.n_qubits, observable)[0])


def measure_all_local(state: StateVector) -> np.ndarray:
    """Quantum layer readout: one |0><0| marginal per qubit."""
    return local_expectations(state.batch(), state.n_qubits)[0]


def probabilities(state: StateVector) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def density_matrix(state: StateVector) -> np.ndarray:
    return np.outer(state.amplitudes, state.amplitudes.conj())
