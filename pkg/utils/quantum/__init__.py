"""
Quantum package for the ensemble VQC library.
Contains the statevector simulator, the layered circuits and their parameter-shift gradients.
"""

from .statevector import (
    Gate,
    GateKind,
    Observable,
    ObservableKind,
    StateVector,
    apply_gate,
    density_matrix,
    expect,
    measure_all_local,
    new_zero_state,
    probabilities,
)
from .circuits import (
    AnsatzConfig,
    Topology,
    amplitude_encode,
    apply_ansatz_layer,
    circuit_states,
    init_params,
    qubit_encode,
    run_circuits,
    run_depth1_circuit,
    run_reference_circuit,
)
from .gradients import (
    QuantumJacobians,
    check_circuit_jacobians,
    circuit_jacobians,
    finite_diff,
    gradient_deviation,
    input_grad,
    observable_gradients,
    param_shift,
    quantum_jacobians,
)

__all__ = [
    'Gate',
    'GateKind',
    'Observable',
    'ObservableKind',
    'StateVector',
    'apply_gate',
    'density_matrix',
    'expect',
    'measure_all_local',
    'new_zero_state',
    'probabilities',
    'AnsatzConfig',
    'Topology',
    'amplitude_encode',
    'apply_ansatz_layer',
    'circuit_states',
    'init_params',
    'qubit_encode',
    'run_circuits',
    'run_depth1_circuit',
    'run_reference_circuit',
    'QuantumJacobians',
    'check_circuit_jacobians',
    'circuit_jacobians',
    'finite_diff',
    'gradient_deviation',
    'input_grad',
    'observable_gradients',
    'param_shift',
    'quantum_jacobians',
]
