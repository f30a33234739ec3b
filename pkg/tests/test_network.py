"""Dense layers, quantum layer variants, Adam, training and checkpoints."""

import numpy as np
import pytest

from utils.data import Dataset, one_hot
from utils.errors import ConfigurationError, DataFormatError, ShapeError, VerificationError
from utils.network import (
    Activation,
    AdamState,
    DenseLayer,
    EnsembleQuantumLayer,
    HybridModel,
    QuantumLayerKind,
    ReferenceQuantumLayer,
    SimplexWeights,
    adam_step,
    check_gradients,
    dense_backward,
    dense_forward,
    ensemble_combine,
    evaluate_accuracy,
    load_checkpoint,
    mse_loss,
    quantum_layer_backward,
    quantum_layer_forward,
    save_checkpoint,
    train,
)
from utils.quantum.circuits import AnsatzConfig, Topology, run_depth1_circuit, run_reference_circuit


def identity_layer(activation):
    return DenseLayer(np.eye(2), np.zeros(2), activation)


def small_model(kind, topology=Topology.NEAREST_NEIGHBOR, seed=0, input_dim=16, n_qubits=3, layers=2, n_classes=2):
    return HybridModel.build(kind, n_qubits, layers, n_classes, topology=topology, seed=seed, input_dim=input_dim)


class FixedOutputs:
    """Stands in for a model in evaluate_accuracy."""

    def __init__(self, outputs):
        self.outputs = np.asarray(outputs, dtype=float)

    def predict(self, images):
        return self.outputs[: len(images)]


class TestDenseLayer:
    def test_relu(self):
        out, _ = dense_forward(identity_layer(Activation.RELU), [-1.0, 2.0])
        np.testing.assert_allclose(out, [0.0, 2.0])

    def test_softmax_symmetry(self):
        out, _ = dense_forward(identity_layer(Activation.SOFTMAX), [0.0, 0.0])
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(0)
        layer = DenseLayer.init(5, 3, Activation.SOFTMAX, rng)
        out, _ = dense_forward(layer, rng.normal(size=(10, 5)) * 50)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_bias_only(self):
        layer = DenseLayer(np.zeros((3, 2)), np.array([1.0, 2.0]), Activation.IDENTITY)
        out, _ = dense_forward(layer, [5.0, -3.0, 0.1])
        np.testing.assert_allclose(out, [1.0, 2.0])

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            dense_forward(identity_layer(Activation.RELU), [1.0, 2.0, 3.0])

    def test_identity_backward(self):
        rng = np.random.default_rng(1)
        layer = DenseLayer.init(3, 2, Activation.IDENTITY, rng)
        x, g = rng.normal(size=3), rng.normal(size=2)
        _, cache = dense_forward(layer, x)
        grad_x, grad_w, grad_b = dense_backward(cache, g)
        np.testing.assert_allclose(grad_x, g @ layer.weights.T)
        np.testing.assert_allclose(grad_w, np.outer(x, g))
        np.testing.assert_allclose(grad_b, g)

    def test_relu_blocks_negative_preactivation(self):
        _, cache = dense_forward(identity_layer(Activation.RELU), [-1.0, 2.0])
        grad_x, _, _ = dense_backward(cache, [1.0, 1.0])
        np.testing.assert_allclose(grad_x, [0.0, 1.0])

    @pytest.mark.parametrize("activation", list(Activation))
    def test_backward_matches_finite_differences(self, activation):
        rng = np.random.default_rng(2)
        layer = DenseLayer.init(4, 3, activation, rng)
        x, probe = rng.normal(size=(2, 4)), rng.normal(size=(2, 3))

        def scalar(inputs):
            return float(np.sum(dense_forward(layer, inputs)[0] * probe))

        _, cache = dense_forward(layer, x)
        grad_x, grad_w, _ = dense_backward(cache, probe)
        h = 1e-6
        for index in np.ndindex(x.shape):
            plus, minus = x.copy(), x.copy()
            plus[index] += h
            minus[index] -= h
            assert grad_x[index] == pytest.approx((scalar(plus) - scalar(minus)) / (2 * h), abs=1e-6)
        for index in np.ndindex(layer.weights.shape):
            original = layer.weights[index]
            layer.weights[index] = original + h
            plus = scalar(x)
            layer.weights[index] = original - h
            minus = scalar(x)
            layer.weights[index] = original
            assert grad_w[index] == pytest.approx((plus - minus) / (2 * h), abs=1e-6)

    def test_init_bounds(self):
        layer = DenseLayer.init(16, 4, Activation.RELU, np.random.default_rng(3))
        assert np.all(np.abs(layer.weights) <= 0.25)


class TestLoss:
    def test_zero(self):
        assert mse_loss([0.3, 0.7], [0.3, 0.7])[0] == 0.0

    def test_opposite(self):
        assert mse_loss([1.0, 0.0], [0.0, 1.0])[0] == pytest.approx(1.0)

    def test_half(self):
        loss, grad = mse_loss([0.5, 0.5], [1.0, 0.0])
        assert loss == pytest.approx(0.25)
        np.testing.assert_allclose(grad, [-0.5, 0.5])

    def test_batch_gradient_scale(self):
        pred, target = np.full((4, 2), 0.5), np.tile([1.0, 0.0], (4, 1))
        _, grad = mse_loss(pred, target)
        np.testing.assert_allclose(grad, 2 * (pred - target) / 8)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss([0.5, 0.5], [1.0, 0.0, 0.0])


class TestEnsembleCombine:
    def test_equal_weights(self):
        out = ensemble_combine([[1.0, 0.0], [0.0, 1.0]], SimplexWeights.uniform(2))
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_one_hot_weights(self):
        ys = np.array([[0.1, 0.2], [0.7, 0.9], [0.4, 0.4]])
        np.testing.assert_allclose(ensemble_combine(ys, np.array([0.0, 1.0, 0.0])), ys[1])

    def test_identical_members(self):
        ys = np.tile([0.3, 0.6], (3, 1))
        weights = SimplexWeights(np.array([0.5, -1.0, 2.0]))
        np.testing.assert_allclose(ensemble_combine(ys, weights), [0.3, 0.6])

    def test_member_count_mismatch(self):
        with pytest.raises(ShapeError):
            ensemble_combine([[1.0], [0.0]], SimplexWeights.uniform(3))

    def test_simplex_check(self):
        SimplexWeights(np.array([3.0, -2.0, 0.1])).check()
        with pytest.raises(VerificationError):
            SimplexWeights(np.array([0.0, 800.0])).check()


class TestQuantumLayers:
    def test_single_member_ensemble_equals_reference(self):
        rng = np.random.default_rng(4)
        config = AnsatzConfig(n_qubits=3, depth=1)
        theta = rng.uniform(0, 2 * np.pi, 6)
        reference = ReferenceQuantumLayer(config, theta)
        ensemble = EnsembleQuantumLayer(config, theta[None, :], SimplexWeights.uniform(1))
        x = rng.uniform(0, 1, 3)
        np.testing.assert_allclose(quantum_layer_forward(ensemble, x)[0], quantum_layer_forward(reference, x)[0])

    def test_identity_reference(self):
        layer = ReferenceQuantumLayer(AnsatzConfig(n_qubits=3, depth=2), np.zeros(12))
        np.testing.assert_allclose(quantum_layer_forward(layer, np.zeros(3))[0], np.ones(3))

    def test_reference_matches_circuit(self):
        rng = np.random.default_rng(5)
        config = AnsatzConfig(n_qubits=3, depth=3, topology=Topology.ALL_PAIRS)
        layer = ReferenceQuantumLayer.init(config, rng)
        x = rng.uniform(0, 1, 3)
        np.testing.assert_allclose(layer.forward(x)[0], run_reference_circuit(config, layer.theta, x), atol=1e-14)

    def test_ensemble_output_within_member_envelope(self):
        rng = np.random.default_rng(6)
        layer = EnsembleQuantumLayer.init(AnsatzConfig(n_qubits=3, depth=4), 4, rng)
        layer.simplex.logits[:] = rng.normal(size=4)
        x = rng.uniform(0, 1, 3)
        members = np.array([run_depth1_circuit(layer.config, theta, x) for theta in layer.thetas])
        out = layer.forward(x)[0]
        assert np.all(out >= members.min(axis=0) - 1e-12)
        assert np.all(out <= members.max(axis=0) + 1e-12)
        np.testing.assert_allclose(out, layer.simplex.weights @ members, atol=1e-14)

    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(7)
        layer = EnsembleQuantumLayer.init(AnsatzConfig(n_qubits=2, depth=3), 3, rng)
        _, cache = layer.forward(rng.uniform(0, 1, (4, 2)))
        grad_x, grads = quantum_layer_backward(cache, np.zeros((4, 2)))
        assert not np.any(grad_x)
        assert not np.any(grads["theta"]) and not np.any(grads["logits"])

    def test_identical_members_have_zero_logit_gradient(self):
        rng = np.random.default_rng(8)
        theta = rng.uniform(0, 2 * np.pi, 4)
        layer = EnsembleQuantumLayer(AnsatzConfig(n_qubits=2), np.tile(theta, (3, 1)), SimplexWeights.uniform(3))
        _, cache = layer.forward(rng.uniform(0, 1, (5, 2)))
        _, grads = layer.backward(cache, rng.normal(size=(5, 2)))
        np.testing.assert_allclose(grads["logits"], 0.0, atol=1e-15)

    def test_backward_requires_jacobians(self):
        layer = ReferenceQuantumLayer(AnsatzConfig(n_qubits=2), np.zeros(4))
        _, cache = layer.forward(np.zeros(2), with_jacobians=False)
        with pytest.raises(ConfigurationError):
            layer.backward(cache, np.ones(2))

    def test_wrong_input_width(self):
        layer = ReferenceQuantumLayer(AnsatzConfig(n_qubits=2), np.zeros(4))
        with pytest.raises(ShapeError):
            layer.forward(np.zeros(3))


class TestAdam:
    def test_zero_gradient_first_step(self):
        params = {"w": np.array([0.4, -1.0])}
        state = AdamState.for_params(params)
        adam_step(state, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [0.4, -1.0])

    def test_first_step_magnitude(self):
        params = {"w": np.array([0.0])}
        state = AdamState.for_params(params)
        adam_step(state, params, {"w": np.array([1.0])})
        assert params["w"][0] == pytest.approx(-0.001 / (1 + 1e-8))

    def test_momentum_accumulates(self):
        params = {"w": np.array([0.0])}
        state = AdamState.for_params(params)
        adam_step(state, params, {"w": np.array([1.0])})
        first = -params["w"][0]
        adam_step(state, params, {"w": np.array([1.0])})
        assert -params["w"][0] > first

    def test_shape_mismatch(self):
        params = {"w": np.zeros(2)}
        with pytest.raises(ShapeError):
            adam_step(AdamState.for_params(params), params, {"w": np.zeros(3)})


class TestHybridModel:
    def test_parameter_names(self):
        names = set(small_model(QuantumLayerKind.ENSEMBLE).parameters())
        assert names == {"pre0.weights", "pre0.bias", "quantum.theta", "quantum.logits", "post0.weights", "post0.bias"}
        assert "quantum.logits" not in small_model(QuantumLayerKind.REFERENCE).parameters()

    def test_extra_dense_layers(self):
        model = HybridModel.build(QuantumLayerKind.REFERENCE, 3, 1, 2, seed=0, input_dim=16, pre_layers=2,
                                  post_layers=2)
        assert [layer.out_dim for layer in model.pre_layers] == [3, 3]
        assert [layer.out_dim for layer in model.post_layers] == [3, 2]
        out = model.predict(np.zeros((2, 16)))
        assert out.shape == (2, 2)

    def test_ensemble_starts_uniform(self):
        model = small_model(QuantumLayerKind.ENSEMBLE, layers=4)
        np.testing.assert_allclose(model.quantum.simplex.weights, 0.25)

    def test_same_seed_same_model(self):
        a, b = small_model(QuantumLayerKind.ENSEMBLE, seed=3), small_model(QuantumLayerKind.ENSEMBLE, seed=3)
        for name, array in a.parameters().items():
            np.testing.assert_array_equal(array, b.parameters()[name])

    def test_needs_two_classes(self):
        with pytest.raises(ConfigurationError):
            small_model(QuantumLayerKind.REFERENCE, n_classes=1)

    @pytest.mark.parametrize("kind", list(QuantumLayerKind))
    @pytest.mark.parametrize("topology", list(Topology))
    def test_end_to_end_gradients(self, kind, topology):
        rng = np.random.default_rng(9)
        model = small_model(kind, topology=topology, seed=11)
        if kind is QuantumLayerKind.ENSEMBLE:
            model.quantum.simplex.logits[:] = rng.normal(size=2)
        images = rng.uniform(0, 1, size=(3, 16))
        labels = np.eye(2)[[0, 1, 1]]
        deviations = check_gradients(model, images, labels, h=1e-5)
        expected = {"pre-dense", "quantum theta", "post-dense"}
        if kind is QuantumLayerKind.ENSEMBLE:
            expected.add("logits")
        assert set(deviations) == expected
        assert max(deviations.values()) < 1e-7


class TestEvaluateAccuracy:
    def labels(self, digits):
        return one_hot(np.asarray(digits), (0, 1))

    def test_perfect(self):
        labels = self.labels([0, 1, 1, 0])
        dataset = Dataset(np.zeros((4, 3)), labels, (0, 1))
        assert evaluate_accuracy(FixedOutputs(labels), dataset) == 1.0

    def test_complementary(self):
        labels = self.labels([0, 1, 1, 0])
        dataset = Dataset(np.zeros((4, 3)), labels, (0, 1))
        assert evaluate_accuracy(FixedOutputs(1.0 - labels), dataset) == 0.0

    def test_constant_output_on_balanced_set(self):
        dataset = Dataset(np.zeros((4, 3)), self.labels([0, 1, 0, 1]), (0, 1))
        assert evaluate_accuracy(FixedOutputs(np.full((4, 2), 0.5)), dataset) == 0.5

    def test_empty(self):
        dataset = Dataset(np.zeros((0, 3)), np.zeros((0, 2)), (0, 1))
        with pytest.raises(ConfigurationError):
            evaluate_accuracy(FixedOutputs(np.zeros((0, 2))), dataset)


class TestTrain:
    def test_zero_epochs(self, tiny_dataset):
        model = small_model(QuantumLayerKind.ENSEMBLE)
        before = {name: array.copy() for name, array in model.parameters().items()}
        assert train(model, tiny_dataset, epochs=0) == []
        for name, array in model.parameters().items():
            np.testing.assert_array_equal(array, before[name])

    def test_empty_dataset(self):
        empty = Dataset(np.zeros((0, 16)), np.zeros((0, 2)), (0, 1))
        with pytest.raises(ConfigurationError):
            train(small_model(QuantumLayerKind.REFERENCE), empty, epochs=1)

    def test_deterministic(self, tiny_dataset):
        curves = []
        for _ in range(2):
            model = small_model(QuantumLayerKind.ENSEMBLE, seed=5)
            curves.append([(r.train_loss, r.test_accuracy) for r in train(model, tiny_dataset, 3, batch_size=4,
                                                                           seed=5)])
        assert curves[0] == curves[1]

    def test_single_sample_overfits(self):
        image = np.random.default_rng(0).uniform(0, 1, size=(1, 16))
        dataset = Dataset(image, np.array([[1.0, 0.0]]), (0, 1))
        model = small_model(QuantumLayerKind.REFERENCE, seed=2)
        records = train(model, dataset, epochs=200, batch_size=1, seed=2, lr=0.01)
        assert records[-1].train_loss < 0.05
        assert records[-1].train_loss < records[0].train_loss

    def test_simplex_stays_valid_every_step(self, tiny_dataset):
        model = small_model(QuantumLayerKind.ENSEMBLE, layers=3)
        sums, minima = [], []

        def audit(step, current):
            p = current.quantum.simplex.weights
            sums.append(p.sum())
            minima.append(p.min())

        train(model, tiny_dataset, epochs=3, batch_size=2, lr=0.05, step_callback=audit)
        assert len(sums) == 12
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)
        assert min(minima) > 0.0

    def test_full_batch_loss_decreases(self, tiny_dataset):
        decreased = 0
        for seed in range(6):
            model = small_model(QuantumLayerKind.ENSEMBLE, seed=seed)
            records = train(model, tiny_dataset, epochs=50, batch_size=len(tiny_dataset), seed=seed, lr=0.01)
            decreased += records[-1].train_loss < records[0].train_loss
        assert decreased >= 5

    def test_class_count_mismatch(self, tiny_dataset):
        with pytest.raises(ShapeError):
            train(small_model(QuantumLayerKind.REFERENCE, n_classes=3), tiny_dataset, epochs=1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = small_model(QuantumLayerKind.ENSEMBLE, topology=Topology.ALL_PAIRS, seed=4)
        path = save_checkpoint(model, tmp_path / "model.npz", digits=[0, 1])
        restored = load_checkpoint(path)
        assert isinstance(restored.quantum, EnsembleQuantumLayer)
        assert restored.quantum.config.topology is Topology.ALL_PAIRS
        for name, array in model.parameters().items():
            np.testing.assert_array_equal(restored.parameters()[name], array)
        x = np.random.default_rng(0).uniform(0, 1, size=(2, 16))
        np.testing.assert_array_equal(restored.predict(x), model.predict(x))

    def test_foreign_archive(self, tmp_path):
        path = tmp_path / "other.npz"
        np.savez(path, weights=np.zeros(3))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)
