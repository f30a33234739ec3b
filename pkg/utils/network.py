"""
Hybrid quantum-classical network.

dense (ReLU) -> quantum layer -> dense (softmax), trained with MSE and Adam. The quantum layer is
either the reference variant (one depth-L circuit with data re-uploading) or the ensemble
variant (L depth-1 circuits mixed by softmax-parameterized simplex weights).
"""

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, DataFormatError, ShapeError, VerificationError
from .quantum.circuits import AnsatzConfig, Topology, init_params, run_circuits
from .quantum.gradients import circuit_jacobians, gradient_deviation
from .state import EpochRecord

logger = logging.getLogger(__name__)

INPUT_DIM = 784
SIMPLEX_TOLERANCE = 1e-9

CHECKPOINT_FORMAT = "ensemble-vqc-checkpoint"
CHECKPOINT_VERSION = 1


class Activation(str, Enum):
    RELU = "relu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class QuantumLayerKind(str, Enum):
    REFERENCE = "reference"
    ENSEMBLE = "ensemble"


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _as_rows(x, width: int, name: str) -> Tuple[np.ndarray, bool]:
    """Promote a single vector to a one-row batch; report whether it was promoted."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.ndim != 2 or rows.shape[1] != width:
        raise ShapeError(f"{name} must have trailing dimension {width}, got shape {x.shape}")
    return rows, single


# ---------------------------------------------------------------------------
# classical layers


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(f"weights {self.weights.shape} and bias {self.bias.shape} do not match")

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: Activation, rng: np.random.Generator) -> "DenseLayer":
        """Uniform in [-1/sqrt(in_dim), 1/sqrt(in_dim)] for weights and bias."""
        bound = 1.0 / np.sqrt(in_dim)
        return cls(
            weights=rng.uniform(-bound, bound, size=(in_dim, out_dim)),
            bias=rng.uniform(-bound, bound, size=out_dim),
            activation=activation,
        )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class DenseCache:
    x: np.ndarray
    z: np.ndarray
    out: np.ndarray
    layer: DenseLayer
    single: bool


def dense_forward(layer: DenseLayer, x) -> Tuple[np.ndarray, DenseCache]:
    """φ(xW + b) for a vector or a batch of rows."""
    rows, single = _as_rows(x, layer.in_dim, "dense input")
    z = rows @ layer.weights + layer.bias
    if layer.activation is Activation.RELU:
        out = np.maximum(z, 0.0)
    elif layer.activation is Activation.SOFTMAX:
        out = softmax(z)
    else:
        out = z
    cache = DenseCache(rows, z, out, layer, single)
    return (out[0] if single else out), cache


def dense_backward(cache: DenseCache, upstream) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_W, grad_b); batch rows are summed into grad_W and grad_b."""
    g = np.asarray(upstream, dtype=np.float64).reshape(cache.out.shape)
    activation = cache.layer.activation
    if activation is Activation.RELU:
        gz = g * (cache.z > 0.0)
    elif activation is Activation.SOFTMAX:
        # (diag(p) - p p^T) g, row by row
        p = cache.out
        gz = p * (g - (g * p).sum(axis=1, keepdims=True))
    else:
        gz = g
    grad_w = cache.x.T @ gz
    grad_b = gz.sum(axis=0)
    grad_x = gz @ cache.layer.weights.T
    return (grad_x[0] if cache.single else grad_x), grad_w, grad_b


def mse_loss(pred, target) -> Tuple[float, np.ndarray]:
    """Mean over classes, then over samples; the gradient is that of the batch mean."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


# ---------------------------------------------------------------------------
# quantum layers


@dataclass
class SimplexWeights:
    logits: np.ndarray

    @classmethod
    def uniform(cls, size: int) -> "SimplexWeights":
        return cls(np.zeros(size))

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits)

    def check(self) -> None:
        p = self.weights
        if abs(p.sum() - 1.0) > SIMPLEX_TOLERANCE or p.min() <= 0.0:
            raise VerificationError(f"ensemble weights left the simplex: {p}")


def ensemble_combine(ys, weights: Union[SimplexWeights, np.ndarray]) -> np.ndarray:
    """Σ_l p_l y_l over the leading axis of `ys`."""
    ys = np.asarray(ys, dtype=np.float64)
    p = weights.weights if isinstance(weights, SimplexWeights) else np.asarray(weights, dtype=np.float64)
    if ys.ndim < 2 or ys.shape[0] != p.size:
        raise ShapeError(f"{p.size} weights for member outputs of shape {ys.shape}")
    return np.tensordot(p, ys, axes=1)


@dataclass
class QuantumCache:
    layer: "QuantumLayer"
    x: np.ndarray  # (B, n)
    member_outputs: np.ndarray  # (members, B, n)
    d_theta: Optional[np.ndarray]  # (members, B, n, P_member)
    d_input: Optional[np.ndarray]  # (members, B, n, n)
    single: bool


class QuantumLayer:
    """Shared plumbing; subclasses fix how circuits are laid out and combined."""

    kind: QuantumLayerKind
    config: AnsatzConfig  # configuration of ONE circuit evaluated by this layer

    @property
    def n_qubits(self) -> int:
        return self.config.n_qubits

    def _member_thetas(self) -> np.ndarray:
        raise NotImplementedError

    def _mixing(self) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> Dict[str, np.ndarray]:
        raise NotImplementedError

    def forward(self, x, with_jacobians: bool = True) -> Tuple[np.ndarray, QuantumCache]:
        rows, single = _as_rows(x, self.n_qubits, "quantum layer input")
        thetas = self._member_thetas()
        members, batch = thetas.shape[0], rows.shape[0]
        # every member sees the same input: one batched evaluation of members × batch circuits
        all_thetas = np.repeat(thetas, batch, axis=0)
        all_xs = np.tile(rows, (members, 1))
        if with_jacobians:
            y, d_theta, d_input = circuit_jacobians(self.config, all_thetas, all_xs)
            d_theta = d_theta.reshape(members, batch, self.n_qubits, -1)
            d_input = d_input.reshape(members, batch, self.n_qubits, self.n_qubits)
        else:
            y = run_circuits(self.config, all_thetas, all_xs)
            d_theta = d_input = None
        member_outputs = y.reshape(members, batch, self.n_qubits)
        out = ensemble_combine(member_outputs, self._mixing())
        cache = QuantumCache(self, rows, member_outputs, d_theta, d_input, single)
        return (out[0] if single else out), cache

    def backward(self, cache: QuantumCache, upstream) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        if cache.d_theta is None:
            raise ConfigurationError("backward needs a forward pass run with jacobians")
        g = np.asarray(upstream, dtype=np.float64).reshape(cache.x.shape)
        p = self._mixing()
        grad_x = np.einsum("l,bi,lbij->bj", p, g, cache.d_input)
        grad_theta = p[:, None] * np.einsum("bi,lbik->lk", g, cache.d_theta)
        grads = {"theta": grad_theta.reshape(self.parameters()["theta"].shape)}
        if self.kind is QuantumLayerKind.ENSEMBLE:
            # softmax Jacobian: dp_l/dz_m = p_l (δ_lm - p_m)
            s = np.einsum("bi,lbi->l", g, cache.member_outputs)
            grads["logits"] = p * (s - p @ s)
        return (grad_x[0] if cache.single else grad_x), grads


class ReferenceQuantumLayer(QuantumLayer):
    kind = QuantumLayerKind.REFERENCE

    def __init__(self, config: AnsatzConfig, theta: np.ndarray):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (config.n_params,):
            raise ShapeError(f"theta must have shape ({config.n_params},), got {theta.shape}")
        self.config = config
        self.theta = theta

    @classmethod
    def init(cls, config: AnsatzConfig, rng: np.random.Generator) -> "ReferenceQuantumLayer":
        return cls(config, init_params(config, rng))

    @property
    def depth(self) -> int:
        return self.config.depth

    def _member_thetas(self) -> np.ndarray:
        return self.theta[None, :]

    def _mixing(self) -> np.ndarray:
        return np.ones(1)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"theta": self.theta}


class EnsembleQuantumLayer(QuantumLayer):
    kind = QuantumLayerKind.ENSEMBLE

    def __init__(self, config: AnsatzConfig, thetas: np.ndarray, simplex: SimplexWeights):
        config = config.with_depth(1)
        thetas = np.asarray(thetas, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[1] != config.n_params:
            raise ShapeError(f"member parameters must have shape (L, {config.n_params}), got {thetas.shape}")
        if simplex.logits.shape != (thetas.shape[0],):
            raise ShapeError(f"{simplex.logits.size} logits for {thetas.shape[0]} circuits")
        self.config = config
        self.thetas = thetas
        self.simplex = simplex

    @classmethod
    def init(cls, config: AnsatzConfig, members: int, rng: np.random.Generator) -> "EnsembleQuantumLayer":
        member = config.with_depth(1)
        thetas = np.stack([init_params(member, rng) for _ in range(members)])
        return cls(member, thetas, SimplexWeights.uniform(members))

    @property
    def depth(self) -> int:
        return self.thetas.shape[0]

    def _member_thetas(self) -> np.ndarray:
        return self.thetas

    def _mixing(self) -> np.ndarray:
        return self.simplex.weights

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"theta": self.thetas, "logits": self.simplex.logits}


def quantum_layer_forward(layer: QuantumLayer, x) -> Tuple[np.ndarray, QuantumCache]:
    return layer.forward(x)


def quantum_layer_backward(cache: QuantumCache, upstream) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    return cache.layer.backward(cache, upstream)


def build_quantum_layer(kind: QuantumLayerKind, n_qubits: int, layers: int, topology: Topology,
                        rng: np.random.Generator) -> QuantumLayer:
    config = AnsatzConfig(n_qubits=n_qubits, depth=layers, topology=topology)
    if QuantumLayerKind(kind) is QuantumLayerKind.REFERENCE:
        return ReferenceQuantumLayer.init(config, rng)
    return EnsembleQuantumLayer.init(config, layers, rng)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Dict[str, np.ndarray], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = {name: np.zeros_like(p) for name, p in params.items()}
        state.v = {name: np.zeros_like(p) for name, p in params.items()}
        return state


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]
              ) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied to the parameter arrays in place."""
    if set(params) != set(grads):
        raise ShapeError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name, param in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != param.shape:
            raise ShapeError(f"{name}: gradient {grad.shape} vs parameter {param.shape}")
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad ** 2
        param -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# hybrid model


class HybridModel:
    def __init__(self, pre_layers: Sequence[DenseLayer], quantum: QuantumLayer, post_layers: Sequence[DenseLayer]):
        self.pre_layers = list(pre_layers)
        self.quantum = quantum
        self.post_layers = list(post_layers)
        if not self.pre_layers or not self.post_layers:
            raise ConfigurationError("the model needs at least one dense layer on each side of the quantum layer")
        if self.pre_layers[-1].out_dim != quantum.n_qubits or self.post_layers[0].in_dim != quantum.n_qubits:
            raise ShapeError(f"dense layers do not meet the {quantum.n_qubits}-qubit quantum layer")
        for stack in (self.pre_layers, self.post_layers):
            for before, after in zip(stack, stack[1:]):
                if before.out_dim != after.in_dim:
                    raise ShapeError(f"dense layer {before.out_dim} -> {after.in_dim} mismatch")

    @classmethod
    def build(cls, kind: QuantumLayerKind, n_qubits: int, layers: int, n_classes: int,
              topology: Topology = Topology.NEAREST_NEIGHBOR, seed: int = 0, input_dim: int = INPUT_DIM,
              pre_layers: int = 1, post_layers: int = 1) -> "HybridModel":
        """
        Classical and quantum parameters are drawn from one generator seeded with `seed`.
        Extra pre/post dense layers keep the width at n_qubits.
        """
        if n_classes < 2:
            raise ConfigurationError(f"need at least two classes, got {n_classes}")
        if pre_layers < 1 or post_layers < 1:
            raise ConfigurationError("pre_layers and post_layers must be >= 1")
        rng = np.random.default_rng(seed)
        pre = [DenseLayer.init(input_dim if i == 0 else n_qubits, n_qubits, Activation.RELU, rng)
               for i in range(pre_layers)]
        quantum = build_quantum_layer(kind, n_qubits, layers, topology, rng)
        post = [DenseLayer.init(n_qubits, n_qubits, Activation.RELU, rng) for _ in range(post_layers - 1)]
        post.append(DenseLayer.init(n_qubits, n_classes, Activation.SOFTMAX, rng))
        return cls(pre, quantum, post)

    @property
    def n_classes(self) -> int:
        return self.post_layers[-1].out_dim

    @property
    def input_dim(self) -> int:
        return self.pre_layers[0].in_dim

    def parameters(self) -> Dict[str, np.ndarray]:
        """Named views of every trainable array, in forward order."""
        params = {}
        for i, layer in enumerate(self.pre_layers):
            params[f"pre{i}.weights"] = layer.weights
            params[f"pre{i}.bias"] = layer.bias
        for name, array in self.quantum.parameters().items():
            params[f"quantum.{name}"] = array
        for i, layer in enumerate(self.post_layers):
            params[f"post{i}.weights"] = layer.weights
            params[f"post{i}.bias"] = layer.bias
        return params

    def predict(self, images) -> np.ndarray:
        out = np.asarray(images, dtype=np.float64)
        for layer in self.pre_layers:
            out, _ = dense_forward(layer, out)
        out, _ = self.quantum.forward(out, with_jacobians=False)
        for layer in self.post_layers:
            out, _ = dense_forward(layer, out)
        return out

    def loss_and_gradients(self, images, labels) -> Tuple[float, Dict[str, np.ndarray]]:
        out = np.asarray(images, dtype=np.float64)
        pre_caches, post_caches = [], []
        for layer in self.pre_layers:
            out, cache = dense_forward(layer, out)
            pre_caches.append(cache)
        out, quantum_cache = self.quantum.forward(out)
        for layer in self.post_layers:
            out, cache = dense_forward(layer, out)
            post_caches.append(cache)

        loss, g = mse_loss(out, labels)
        grads = {}
        for i in reversed(range(len(self.post_layers))):
            g, grads[f"post{i}.weights"], grads[f"post{i}.bias"] = dense_backward(post_caches[i], g)
        g, quantum_grads = self.quantum.backward(quantum_cache, g)
        for name, grad in quantum_grads.items():
            grads[f"quantum.{name}"] = grad
        for i in reversed(range(len(self.pre_layers))):
            g, grads[f"pre{i}.weights"], grads[f"pre{i}.bias"] = dense_backward(pre_caches[i], g)
        return loss, grads

    def loss(self, images, labels) -> float:
        return mse_loss(self.predict(images), labels)[0]

    def check_invariants(self) -> None:
        if isinstance(self.quantum, EnsembleQuantumLayer):
            self.quantum.simplex.check()


# ---------------------------------------------------------------------------
# training


def evaluate_accuracy(model, dataset: Dataset, chunk: int = 256) -> float:
    """Fraction of samples whose argmax prediction matches the one-hot label (ties -> lowest index)."""
    if len(dataset) == 0:
        raise ConfigurationError("cannot evaluate accuracy on an empty dataset")
    correct = 0
    for start in range(0, len(dataset), chunk):
        probs = np.asarray(model.predict(dataset.images[start:start + chunk]))
        correct += int(np.sum(probs.argmax(axis=1) == dataset.labels[start:start + chunk].argmax(axis=1)))
    return correct / len(dataset)


StepCallback = Callable[[int, HybridModel], None]


def train(model: HybridModel, dataset: Dataset, epochs: int, batch_size: int = 32, seed: int = 0,
          lr: float = 1e-3, test_set: Optional[Dataset] = None,
          step_callback: Optional[StepCallback] = None) -> List[EpochRecord]:
    """
    Mini-batch Adam on the batch-mean MSE. Returns one record per epoch; train_loss is the
    sample-weighted mean of the epoch's mini-batch losses and test_accuracy is measured on
    `test_set` (the training set when omitted) after the epoch.
    """
    if len(dataset) == 0:
        raise ConfigurationError("training dataset is empty")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    if dataset.n_classes != model.n_classes:
        raise ShapeError(f"dataset has {dataset.n_classes} classes, model outputs {model.n_classes}")

    evaluation = test_set if test_set is not None else dataset
    rng = np.random.default_rng(seed)
    params = model.parameters()
    state = AdamState.for_params(params, lr=lr)
    records = []

    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(dataset), batch_size):
            batch = order[start:start + batch_size]
            loss, grads = model.loss_and_gradients(dataset.images[batch], dataset.labels[batch])
            adam_step(state, params, grads)
            model.check_invariants()
            total += loss * batch.size
            logger.debug("epoch %d step %d loss %.6f", epoch, state.t, loss)
            if step_callback is not None:
                step_callback(state.t, model)

        record = EpochRecord(
            epoch=epoch,
            train_loss=total / len(dataset),
            test_accuracy=evaluate_accuracy(model, evaluation),
            wall_seconds=time.perf_counter() - started,
        )
        logger.info("epoch %d: loss %.5f accuracy %.4f (%.1fs)",
                    epoch, record.train_loss, record.test_accuracy, record.wall_seconds)
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# gradient check


def parameter_class(name: str) -> str:
    if name.startswith("pre"):
        return "pre-dense"
    if name.startswith("post"):
        return "post-dense"
    return {"quantum.theta": "quantum theta", "quantum.logits": "logits"}[name]


def check_gradients(model: HybridModel, images, labels, h: float = 1e-5, max_entries: Optional[int] = None,
                    seed: int = 0) -> Dict[str, float]:
    """
    Worst deviation between backpropagated gradients and central finite differences of the loss,
    per parameter class. Arrays larger than max_entries are checked on a random subset of entries.
    """
    if h <= 0:
        raise ConfigurationError(f"finite-difference step must be positive, got {h}")
    _, analytic = model.loss_and_gradients(images, labels)
    rng = np.random.default_rng(seed)
    deviations: Dict[str, float] = {}
    for name, param in model.parameters().items():
        flat = param.reshape(-1)
        if not np.shares_memory(flat, param):
            raise ShapeError(f"{name} is not contiguous")
        grad = analytic[name].reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            indices = np.arange(flat.size)
        else:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        worst = 0.0
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = model.loss(images, labels)
            flat[i] = original - h
            minus = model.loss(images, labels)
            flat[i] = original
            worst = max(worst, gradient_deviation(grad[i], (plus - minus) / (2.0 * h)))

        group = parameter_class(name)
        deviations[group] = max(deviations.get(group, 0.0), worst)
        logger.debug("gradcheck %s: %d entries, worst deviation %.3e", name, indices.size, worst)
    return deviations


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: HybridModel, path: Union[str, Path], **extra) -> Path:
    """
    NumPy .npz archive: one array per parameter name plus a JSON `meta` entry describing
    the architecture (see README, "Checkpoint format").
    """
    path = Path(path)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": model.quantum.kind.value,
        "topology": model.quantum.config.topology.value,
        "nq": model.quantum.n_qubits,
        "layers": model.quantum.depth,
        "n_classes": model.n_classes,
        "input_dim": model.input_dim,
        "pre_layers": len(model.pre_layers),
        "post_layers": len(model.post_layers),
        **extra,
    }
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **model.parameters())
    logger.debug("wrote checkpoint %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> HybridModel:
    with np.load(Path(path), allow_pickle=False) as archive:
        try:
            meta = json.loads(str(archive["meta"]))
        except (KeyError, ValueError) as e:
            raise DataFormatError(f"{path}: missing or unreadable checkpoint metadata") from e
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint {meta.get('format')} v{meta.get('version')}")
        model = HybridModel.build(
            QuantumLayerKind(meta["model"]), meta["nq"], meta["layers"], meta["n_classes"],
            topology=Topology(meta["topology"]), input_dim=meta["input_dim"],
            pre_layers=meta["pre_layers"], post_layers=meta["post_layers"],
        )
        for name, array in model.parameters().items():
            if name not in archive.files or archive[name].shape != array.shape:
                raise DataFormatError(f"{path}: parameter {name} missing or misshapen")
            array[...] = archive[name]
    return model
