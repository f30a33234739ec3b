"""
Monte-Carlo diagnostics of the quantum layer: gradient statistics (barren plateaus),
concentration of the cost around Tr[O]/d, and the t=1 expressibility norm that bounds it.

Every estimate samples θ uniformly in [0, 2π) with the encoding input fixed at x = 0, so the
only randomness is the parameter draw. All statistics are deterministic given the seed.
"""

import logging
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .errors import ConfigurationError
from .quantum.circuits import AnsatzConfig, Topology, circuit_states
from .quantum.gradients import observable_gradients
from .quantum.statevector import Observable, ObservableKind, expectations
from .state import BoundCheck, ConcentrationStats, GradientStats

logger = logging.getLogger(__name__)

JACKKNIFE_BLOCKS = 10
BOUND_SIGMAS = 3.0

LAYER_MODELS = ("reference", "ensemble")


def sample_thetas(config: AnsatzConfig, samples: int, seed: int, members: int = 1) -> np.ndarray:
    """(samples, members, P) uniform angles; the whole draw is made up front so order never matters."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 2.0 * np.pi, size=(samples, members, config.n_params))


def _zero_angles(config: AnsatzConfig, rows: int) -> np.ndarray:
    return np.zeros((rows, config.depth, config.n_qubits))


def _summarize(grads: np.ndarray, k: int, **labels) -> GradientStats:
    samples = grads.size
    mean = float(grads.mean())
    var = float(grads.var(ddof=1))
    # standard error of the sample variance from the fourth central moment
    m4 = float(np.mean((grads - mean) ** 4))
    var_stderr = float(np.sqrt(max(m4 - var ** 2, 0.0) / samples))
    return GradientStats(
        k=k,
        samples=samples,
        grad_mean=mean,
        grad_var=var,
        stderr=float(np.sqrt(var / samples)),
        var_stderr=var_stderr,
        **labels,
    )


def _check_samples(samples: int, minimum: int) -> None:
    if samples < minimum:
        raise ConfigurationError(f"need at least {minimum} samples, got {samples}")


def gradient_stats(config: AnsatzConfig, observable: Observable, k: int, samples: int, seed: int) -> GradientStats:
    """Mean and variance of ∂_k <O> over uniformly drawn parameters."""
    _check_samples(samples, 2)
    thetas = sample_thetas(config, samples, seed)[:, 0]
    grads = observable_gradients(config, observable, thetas, k)
    return _summarize(grads, k, nq=config.n_qubits, layers=config.depth, seed=seed)


def _scan_configs(topology: Topology, observable: ObservableKind, n_range: Iterable[int], layers: int):
    for n in n_range:
        config = AnsatzConfig(n_qubits=n, depth=layers, topology=topology, observable=observable)
        yield config, config.default_observable()


def bp_scan(topology: Topology, observable: ObservableKind, n_range: Iterable[int], layers: int,
            samples: int, seed: int, k: int = 0) -> List[GradientStats]:
    """One GradientStats row per qubit count, all for parameter k (default: first trainable RY)."""
    rows = []
    for config, obs in _scan_configs(topology, observable, n_range, layers):
        stats = gradient_stats(config, obs, k, samples, seed)
        logger.info("bp nq=%d layers=%d: Var[d_%d f] = %.3e", config.n_qubits, layers, k, stats.grad_var)
        rows.append(stats)
    return rows


def layer_gradient_stats(model: str, config: AnsatzConfig, observable: Observable, samples: int, seed: int,
                         k: int = 0) -> GradientStats:
    """
    Gradient statistics of the quantum layer cost.

    reference: one depth-L circuit, cost <O>. ensemble: L depth-1 circuits with uniform weights,
    cost Σ_l <O>_l / L, differentiated with respect to parameter k of the first circuit.
    """
    _check_samples(samples, 2)
    if model == "reference":
        thetas = sample_thetas(config, samples, seed)[:, 0]
        grads = observable_gradients(config, observable, thetas, k)
    elif model == "ensemble":
        member = config.with_depth(1)
        thetas = sample_thetas(member, samples, seed, members=config.depth)[:, 0]
        grads = observable_gradients(member, observable, thetas, k) / config.depth
    else:
        raise ConfigurationError(f"unknown layer model {model!r}")
    return _summarize(grads, k, nq=config.n_qubits, layers=config.depth, model=model, seed=seed)


def layer_bp_scan(topology: Topology, observable: ObservableKind, n_range: Iterable[int], layers: int,
                  samples: int, seed: int, k: int = 0) -> List[GradientStats]:
    """Reference and ensemble layer gradient variance for every qubit count."""
    rows = []
    for config, obs in _scan_configs(topology, observable, n_range, layers):
        for model in LAYER_MODELS:
            stats = layer_gradient_stats(model, config, obs, samples, seed, k)
            logger.info("layer-bp %s nq=%d layers=%d: Var = %.3e", model, config.n_qubits, layers, stats.grad_var)
            rows.append(stats)
    return rows


# ---------------------------------------------------------------------------
# concentration and expressibility


def _mixture_sum(states: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Σ_s Σ_l w_l |ψ_sl><ψ_sl| for states of shape (S, members, d)."""
    scaled = states * np.sqrt(weights)[None, :, None]
    flat = scaled.reshape(-1, states.shape[-1])
    return flat.T @ flat.conj()


def _expressibility(states: np.ndarray, weights: np.ndarray) -> Tuple[float, float]:
    """
    ‖I/d − ρ̄‖_F with ρ̄ the sample mean of the (mixed) output states, and its delete-one-block
    jackknife standard error.
    """
    samples, _, dim = states.shape
    identity = np.eye(dim) / dim

    def norm(total: np.ndarray, count: int) -> float:
        return float(np.linalg.norm(identity - total / count))

    blocks = np.array_split(np.arange(samples), min(JACKKNIFE_BLOCKS, samples))
    block_sums = [_mixture_sum(states[block], weights) for block in blocks]
    total = sum(block_sums)
    value = norm(total, samples)
    if len(blocks) < 2:
        return value, 0.0

    leave_out = np.array([norm(total - part, samples - block.size) for block, part in zip(blocks, block_sums)])
    b = len(blocks)
    stderr = float(np.sqrt((b - 1) / b * np.sum((leave_out - leave_out.mean()) ** 2)))
    return value, stderr


def _layer_states(model: str, config: AnsatzConfig, samples: int, seed: int, frozen: bool
                  ) -> Tuple[np.ndarray, np.ndarray, AnsatzConfig]:
    """Output states (S, members, d) and mixing weights of the reference circuit or the ensemble."""
    if model == "reference":
        circuit, members = config, 1
    elif model == "ensemble":
        circuit, members = config.with_depth(1), config.depth
    else:
        raise ConfigurationError(f"unknown layer model {model!r}")

    if frozen:
        thetas = np.zeros((samples, members, circuit.n_params))
    else:
        thetas = sample_thetas(circuit, samples, seed, members=members)
    flat = thetas.reshape(samples * members, circuit.n_params)
    psi = circuit_states(circuit, flat, _zero_angles(circuit, flat.shape[0]))
    return psi.reshape(samples, members, -1), np.full(members, 1.0 / members), circuit


def _concentration(states: np.ndarray, weights: np.ndarray, n_qubits: int, observable: Observable,
                   **labels) -> ConcentrationStats:
    samples, members, dim = states.shape
    f = expectations(states.reshape(samples * members, dim), n_qubits, observable).reshape(samples, members) @ weights
    mean_f = float(f.mean())
    var_f = float(f.var(ddof=1)) if samples > 1 else 0.0
    target = observable.trace(n_qubits) / dim
    expressibility, expressibility_stderr = _expressibility(states, weights)
    return ConcentrationStats(
        samples=samples,
        mean_f=mean_f,
        var_f=var_f,
        stderr=float(np.sqrt(var_f / samples)),
        target=target,
        deviation=abs(mean_f - target),
        expressibility=expressibility,
        expressibility_stderr=expressibility_stderr,
        bound_rhs=observable.frobenius_norm(n_qubits) * expressibility,
        **labels,
    )


def _bound_sigma(stats: ConcentrationStats, observable: Observable, n_qubits: int) -> float:
    return float(np.hypot(stats.stderr, observable.frobenius_norm(n_qubits) * stats.expressibility_stderr))


def _warn_if_broken(stats: ConcentrationStats, observable: Observable, n_qubits: int) -> None:
    if stats.deviation > stats.bound_rhs + BOUND_SIGMAS * _bound_sigma(stats, observable, n_qubits):
        logger.warning(
            "concentration bound violated under the Frobenius reading: nq=%s layers=%s lhs=%.6f rhs=%.6f",
            stats.nq, stats.layers, stats.deviation, stats.bound_rhs,
        )


def concentration_stats(config: AnsatzConfig, observable: Observable, samples: int, seed: int,
                        frozen: bool = False) -> ConcentrationStats:
    """
    Spread of f = <O> over uniform θ, its distance from Tr[O]/d, and the expressibility bound.
    frozen=True evaluates the all-zero parameter vector in every sample.
    """
    _check_samples(samples, 1)
    states, weights, _ = _layer_states("reference", config, samples, seed, frozen)
    stats = _concentration(states, weights, config.n_qubits, observable,
                           nq=config.n_qubits, layers=config.depth, seed=seed)
    _warn_if_broken(stats, observable, config.n_qubits)
    return stats


def layer_concentration_stats(config: AnsatzConfig, observable: Observable, samples: int, seed: int
                              ) -> Dict[str, ConcentrationStats]:
    """concentration_stats for the reference layer and for the uniformly weighted ensemble layer."""
    _check_samples(samples, 1)
    result = {}
    for model in LAYER_MODELS:
        states, weights, _ = _layer_states(model, config, samples, seed, frozen=False)
        result[model] = _concentration(states, weights, config.n_qubits, observable,
                                       nq=config.n_qubits, layers=config.depth, seed=seed)
        logger.info("layer concentration %s nq=%d layers=%d: var_f=%.3e", model, config.n_qubits,
                    config.depth, result[model].var_f)
    return result


def expressibility_with_error(config: AnsatzConfig, samples: int, seed: int, frozen: bool = False
                              ) -> Tuple[float, float]:
    _check_samples(samples, 1)
    states, weights, _ = _layer_states("reference", config, samples, seed, frozen)
    return _expressibility(states, weights)


def expressibility_t1(config: AnsatzConfig, samples: int, seed: int, frozen: bool = False) -> float:
    """Â = ‖I/d − (1/S) Σ_s U_s|0><0|U_s†‖_F, in [0, √2]."""
    return expressibility_with_error(config, samples, seed, frozen)[0]


def verify_bound(config: AnsatzConfig, observable: Observable, samples: int, seed: int,
                 frozen: bool = False) -> BoundCheck:
    """|E[f] − Tr[O]/d| ≤ ‖O‖_F · Â, accepted up to three combined standard errors."""
    stats = concentration_stats(config, observable, samples, seed, frozen)
    sigma = _bound_sigma(stats, observable, config.n_qubits)
    return BoundCheck(
        lhs=stats.deviation,
        rhs=stats.bound_rhs,
        stderr=sigma,
        holds=stats.deviation <= stats.bound_rhs + BOUND_SIGMAS * sigma,
        nq=config.n_qubits,
        layers=config.depth,
        seed=seed,
    )


def observable_for(kind: ObservableKind, qubit: int = 0) -> Observable:
    if ObservableKind(kind) is ObservableKind.GLOBAL:
        return Observable.global_projector()
    return Observable.local(qubit)
