"""
Parameter-shift gradients of circuit outputs, plus a central finite-difference oracle.

Every rotation used by the circuits is exp(-i θ P / 2) for a Pauli P, so
∂f/∂θ = ½ [f(θ + π/2) − f(θ − π/2)] exactly. Encoding gates apply RY(2 x_j) once per layer,
so ∂/∂x_j sums the shifts of every occurrence and carries the chain factor 2.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, ShapeError
from .circuits import AnsatzConfig, as_batch, as_vector, circuit_states, encoding_angles, run_reference_circuit
from .statevector import Observable, expectations, local_expectations

logger = logging.getLogger(__name__)

SHIFT = np.pi / 2
FINITE_DIFF_STEP = 1e-5

# upper bound on circuits evolved in one vectorized pass
MAX_BATCH_EVALUATIONS = 8192


@dataclass
class QuantumJacobians:
    d_output_d_theta: np.ndarray  # (n outputs, P)
    d_output_d_input: np.ndarray  # (n outputs, n inputs)


def _shifted(theta: np.ndarray, k: int, delta: float) -> np.ndarray:
    shifted = np.array(theta, dtype=np.float64, copy=True)
    shifted[k] += delta
    return shifted


def _check_index(k: int, size: int, name: str) -> None:
    if not 0 <= k < size:
        raise IndexError(f"{name} index {k} out of range for {size} entries")


def param_shift(evaluate: Callable[[np.ndarray], float], theta, k: int):
    """½[f(θ_k + π/2) − f(θ_k − π/2)]; vector-valued `evaluate` gives a vector of derivatives."""
    theta = np.asarray(theta, dtype=np.float64)
    _check_index(k, theta.size, "parameter")
    plus = np.asarray(evaluate(_shifted(theta, k, SHIFT)))
    minus = np.asarray(evaluate(_shifted(theta, k, -SHIFT)))
    result = 0.5 * (plus - minus)
    return float(result) if result.ndim == 0 else result


def finite_diff(evaluate: Callable[[np.ndarray], float], theta, k: int, h: float = FINITE_DIFF_STEP):
    """[f(θ_k + h) − f(θ_k − h)] / 2h."""
    if h <= 0:
        raise ConfigurationError(f"finite-difference step must be positive, got {h}")
    theta = np.asarray(theta, dtype=np.float64)
    _check_index(k, theta.size, "parameter")
    plus = np.asarray(evaluate(_shifted(theta, k, h)))
    minus = np.asarray(evaluate(_shifted(theta, k, -h)))
    result = (plus - minus) / (2.0 * h)
    return float(result) if result.ndim == 0 else result


def _jacobian_chunk(config: AnsatzConfig, thetas: np.ndarray, xs: np.ndarray):
    n, depth, n_params = config.n_qubits, config.depth, config.n_params
    occurrences = depth * n
    batch = thetas.shape[0]
    n_evals = 1 + 2 * n_params + 2 * occurrences

    # row 0 unshifted, then θ_k ± shift, then every encoding occurrence ± shift
    all_thetas = np.repeat(thetas[:, None, :], n_evals, axis=1)
    all_angles = np.repeat(encoding_angles(xs, depth)[:, None], n_evals, axis=1)

    k = np.arange(n_params)
    all_thetas[:, 1 + k, k] += SHIFT
    all_thetas[:, 1 + n_params + k, k] -= SHIFT

    occ = np.arange(occurrences)
    base = 1 + 2 * n_params
    all_angles[:, base + occ, occ // n, occ % n] += SHIFT
    all_angles[:, base + occurrences + occ, occ // n, occ % n] -= SHIFT

    psi = circuit_states(
        config,
        all_thetas.reshape(batch * n_evals, n_params),
        all_angles.reshape(batch * n_evals, depth, n),
    )
    outputs = local_expectations(psi, n).reshape(batch, n_evals, n)

    y = outputs[:, 0]
    d_theta = 0.5 * (outputs[:, 1:1 + n_params] - outputs[:, 1 + n_params:base])
    d_occ = 0.5 * (outputs[:, base:base + occurrences] - outputs[:, base + occurrences:])
    d_input = 2.0 * d_occ.reshape(batch, depth, n, n).sum(axis=1)
    return y, d_theta.transpose(0, 2, 1), d_input.transpose(0, 2, 1)


def circuit_jacobians(config: AnsatzConfig, thetas: np.ndarray, xs: np.ndarray
                      ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Outputs and Jacobians for a batch of (θ, x) pairs.

    Returns y (batch, n), d_theta (batch, n, P) and d_input (batch, n, n), from
    1 + 2P + 2·L·n circuit runs per row, all n local expectations read from each run.
    """
    thetas = as_batch(thetas, config.n_params, "thetas")
    xs = as_batch(xs, config.n_qubits, "xs")
    if thetas.shape[0] != xs.shape[0]:
        raise ShapeError(f"{thetas.shape[0]} parameter rows but {xs.shape[0]} inputs")

    n_evals = 1 + 2 * config.n_params + 2 * config.depth * config.n_qubits
    rows_per_chunk = max(1, MAX_BATCH_EVALUATIONS // n_evals)
    chunks = [
        _jacobian_chunk(config, thetas[start:start + rows_per_chunk], xs[start:start + rows_per_chunk])
        for start in range(0, thetas.shape[0], rows_per_chunk)
    ]
    return tuple(np.concatenate(parts, axis=0) for parts in zip(*chunks))


def quantum_jacobians(config: AnsatzConfig, theta, x) -> QuantumJacobians:
    theta = as_vector(theta, config.n_params, "theta")
    x = as_vector(x, config.n_qubits, "x")
    _, d_theta, d_input = circuit_jacobians(config, theta[None, :], x[None, :])
    return QuantumJacobians(d_output_d_theta=d_theta[0], d_output_d_input=d_input[0])


def input_grad(config: AnsatzConfig, theta, x, j: int) -> np.ndarray:
    """d(output)/d(x_j) as a vector over the n outputs."""
    _check_index(j, config.n_qubits, "input")
    return quantum_jacobians(config, theta, x).d_output_d_input[:, j]


def observable_gradients(config: AnsatzConfig, observable: Observable, thetas: np.ndarray, k: int,
                         angles: Optional[np.ndarray] = None) -> np.ndarray:
    """∂_k <O> for every row of `thetas` (encoding angles default to x = 0)."""
    thetas = as_batch(thetas, config.n_params, "thetas")
    _check_index(k, config.n_params, "parameter")
    batch = thetas.shape[0]
    if angles is None:
        angles = np.zeros((batch, config.depth, config.n_qubits))
    shifted = np.concatenate([thetas, thetas])
    shifted[:batch, k] += SHIFT
    shifted[batch:, k] -= SHIFT
    values = expectations(circuit_states(config, shifted, np.concatenate([angles, angles])),
                          config.n_qubits, observable)
    return 0.5 * (values[:batch] - values[batch:])


def gradient_deviation(analytic, numeric) -> float:
    """Absolute error, relative once the derivative exceeds one in magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / scale, initial=0.0))


def check_circuit_jacobians(config: AnsatzConfig, theta, x, h: float = FINITE_DIFF_STEP) -> Dict[str, float]:
    """Worst deviation of the shift-rule Jacobians from central finite differences."""
    theta = as_vector(theta, config.n_params, "theta")
    x = as_vector(x, config.n_qubits, "x")
    jacobians = quantum_jacobians(config, theta, x)

    def of_theta(t):
        return run_reference_circuit(config, t, x)

    def of_input(v):
        return run_reference_circuit(config, theta, v)

    numeric_theta = np.stack([finite_diff(of_theta, theta, k, h) for k in range(config.n_params)], axis=1)
    numeric_input = np.stack([finite_diff(of_input, x, j, h) for j in range(config.n_qubits)], axis=1)
    return {
        "circuit theta": gradient_deviation(jacobians.d_output_d_theta, numeric_theta),
        "encoding input": gradient_deviation(jacobians.d_output_d_input, numeric_input),
    }
