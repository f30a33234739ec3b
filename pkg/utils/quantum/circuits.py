"""
Parameterized circuits of the quantum layer.

A layer is [encode, train, entangle]: RY(2 x_j) on every qubit, then RY(θ[2j]) and RZ(θ[2j+1])
on every qubit, then a CNOT entangler (nearest-neighbour chain or all pairs). The reference
circuit stacks L such layers, re-encoding x in each one; an ensemble member is a single layer.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, DegenerateInputError, ShapeError
from .statevector import (
    Gate,
    GateKind,
    Observable,
    ObservableKind,
    StateVector,
    apply_cnot,
    apply_gate,
    apply_rotation,
    check_qubit_count,
    local_expectations,
    new_zero_state,
    zero_states,
)

logger = logging.getLogger(__name__)


class Topology(str, Enum):
    NEAREST_NEIGHBOR = "nn"
    ALL_PAIRS = "allpairs"


@dataclass(frozen=True)
class AnsatzConfig:
    n_qubits: int
    depth: int = 1
    topology: Topology = Topology.NEAREST_NEIGHBOR
    observable: ObservableKind = ObservableKind.LOCAL

    def __post_init__(self):
        check_qubit_count(self.n_qubits)
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "observable", ObservableKind(self.observable))

    @property
    def params_per_layer(self) -> int:
        return 2 * self.n_qubits

    @property
    def n_params(self) -> int:
        return self.depth * self.params_per_layer

    def with_depth(self, depth: int) -> "AnsatzConfig":
        return replace(self, depth=depth)

    def entangler_pairs(self) -> List[Tuple[int, int]]:
        return entangler_pairs(self.n_qubits, self.topology)

    def default_observable(self) -> Observable:
        if self.observable is ObservableKind.GLOBAL:
            return Observable.global_projector()
        return Observable.local(0)


def entangler_pairs(n_qubits: int, topology: Topology) -> List[Tuple[int, int]]:
    """(control, target) pairs in application order."""
    if Topology(topology) is Topology.NEAREST_NEIGHBOR:
        return [(j, j + 1) for j in range(n_qubits - 1)]
    return [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]


def init_params(config: AnsatzConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform angles in [0, 2π)."""
    return rng.uniform(0.0, 2.0 * np.pi, size=config.n_params)


def as_vector(values, length: int, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.shape != (length,):
        raise ShapeError(f"{name} must have shape ({length},), got {array.shape}")
    return array


def as_batch(values, length: int, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 2 or array.shape[1] != length:
        raise ShapeError(f"{name} must have shape (batch, {length}), got {array.shape}")
    return array


def qubit_encode(x: Sequence[float]) -> StateVector:
    """⊗_j [cos(x_j)|0> + sin(x_j)|1>], prepared as RY(2 x_j) on |0...0>."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ShapeError(f"encoding input must be a nonempty vector, got shape {x.shape}")
    state = new_zero_state(x.size)
    for qubit, value in enumerate(x):
        state = apply_gate(state, Gate.ry(qubit, 2.0 * value))
    return state


def amplitude_encode(x: Sequence[float], n_qubits: int) -> StateVector:
    """Zero-pad x to 2**n entries and normalize by its Euclidean norm."""
    check_qubit_count(n_qubits)
    x = np.asarray(x, dtype=np.float64).ravel()
    dim = 1 << n_qubits
    if x.size > dim:
        raise ShapeError(f"{x.size} values do not fit in {n_qubits} qubits")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise DegenerateInputError("cannot amplitude-encode the all-zero vector")
    amplitudes = np.zeros(dim)
    amplitudes[: x.size] = x / norm
    return StateVector(n_qubits, amplitudes)


def layer_gates(x: Sequence[float], theta_layer: Sequence[float], topology: Topology) -> List[Gate]:
    """Gate list of one [encode, train, entangle] layer."""
    x = np.asarray(x, dtype=np.float64)
    n_qubits = x.size
    theta_layer = as_vector(theta_layer, 2 * n_qubits, "theta_layer")
    gates = [Gate.ry(j, 2.0 * x[j]) for j in range(n_qubits)]
    for j in range(n_qubits):
        gates.append(Gate.ry(j, theta_layer[2 * j]))
        gates.append(Gate.rz(j, theta_layer[2 * j + 1]))
    gates.extend(Gate.cnot(c, t) for c, t in entangler_pairs(n_qubits, topology))
    return gates


def circuit_gates(config: AnsatzConfig, theta: Sequence[float], x: Sequence[float]) -> List[Gate]:
    theta = as_vector(theta, config.n_params, "theta")
    x = as_vector(x, config.n_qubits, "x")
    per_layer = config.params_per_layer
    gates = []
    for layer in range(config.depth):
        gates.extend(layer_gates(x, theta[layer * per_layer:(layer + 1) * per_layer], config.topology))
    return gates


def apply_ansatz_layer(state: StateVector, x: Sequence[float], theta_layer: Sequence[float],
                       topology: Topology) -> StateVector:
    as_vector(x, state.n_qubits, "x")
    for gate in layer_gates(x, theta_layer, topology):
        state = apply_gate(state, gate)
    return state


def encoding_angles(xs: np.ndarray, depth: int) -> np.ndarray:
    """Per-occurrence RY angles (batch, depth, n): 2 x repeated in every layer."""
    xs = np.asarray(xs, dtype=np.float64)
    return np.repeat(2.0 * xs[:, None, :], depth, axis=1)


def circuit_states(config: AnsatzConfig, thetas: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """
    Final statevectors of a batch of circuits, shape (batch, 2**n).

    thetas: (batch, P) trainable angles. angles: (batch, depth, n) encoding RY angles, one per
    occurrence, so a single re-uploaded occurrence can be shifted on its own.
    """
    n, depth = config.n_qubits, config.depth
    thetas = as_batch(thetas, config.n_params, "thetas")
    batch = thetas.shape[0]
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (batch, depth, n):
        raise ShapeError(f"encoding angles must have shape {(batch, depth, n)}, got {angles.shape}")

    blocks = thetas.reshape(batch, depth, n, 2)
    pairs = config.entangler_pairs()
    psi = zero_states(n, batch)
    for layer in range(depth):
        for qubit in range(n):
            # consecutive RY rotations on one qubit compose additively
            psi = apply_rotation(psi, n, GateKind.RY, qubit, angles[:, layer, qubit] + blocks[:, layer, qubit, 0])
            psi = apply_rotation(psi, n, GateKind.RZ, qubit, blocks[:, layer, qubit, 1])
        for control, target in pairs:
            psi = apply_cnot(psi, n, control, target)
    return psi


def run_circuits(config: AnsatzConfig, thetas: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Batched readout (batch, n) with x re-uploaded in every layer."""
    xs = as_batch(xs, config.n_qubits, "xs")
    psi = circuit_states(config, thetas, encoding_angles(xs, config.depth))
    return local_expectations(psi, config.n_qubits)


def run_reference_circuit(config: AnsatzConfig, theta: Sequence[float], x: Sequence[float]) -> np.ndarray:
    theta = as_vector(theta, config.n_params, "theta")
    x = as_vector(x, config.n_qubits, "x")
    return run_circuits(config, theta[None, :], x[None, :])[0]


def run_depth1_circuit(config: AnsatzConfig, theta_layer: Sequence[float], x: Sequence[float]) -> np.ndarray:
    return run_reference_circuit(config.with_depth(1), theta_layer, x)
