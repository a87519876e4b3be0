import tempfile
from pathlib import Path

import numpy as np
import pytest

from fairbound.errors import NumericalError, ValidationError
from fairbound.neural import (
    Gradients,
    Mlp,
    MlpConfig,
    MlpParams,
    adam_step,
    backward,
    forward,
    init,
    leaky_relu,
    load_mlp,
    param_count,
    save_mlp,
    sigmoid_cross_entropy,
    softmax_cross_entropy,
    squared_error,
    train_epochs,
)


def _config(dims=(3, 4, 2), **kwargs) -> MlpConfig:
    return MlpConfig(layer_dims=dims, **kwargs)


def _copy(params: MlpParams) -> MlpParams:
    return MlpParams([w.copy() for w in params.weights], [b.copy() for b in params.biases])


@pytest.mark.unit
class TestInit:
    """Parameter initialisation and config validation."""

    def test_same_seed_same_parameters(self):
        first, second = init(_config(seed=4)), init(_config(seed=4))
        for w1, w2 in zip(first.weights, second.weights):
            np.testing.assert_array_equal(w1, w2)

    def test_zero_hidden_width(self):
        with pytest.raises(ValidationError):
            _config(dims=(3, 0, 1))

    def test_needs_hidden_layer(self):
        with pytest.raises(ValidationError):
            _config(dims=(3, 1))

    def test_parameter_count(self):
        """[3, 10, 1] has 3*10 + 10 + 10*1 + 1 = 51 parameters."""
        assert param_count(init(_config(dims=(3, 10, 1)))) == 51

    @pytest.mark.parametrize("kwargs", [
        {"dropout_rate": 1.0}, {"leaky_slope": 0.0}, {"learning_rate": 0.0}, {"batch_size": 0},
    ])
    def test_invalid_hyperparameters(self, kwargs):
        with pytest.raises(ValidationError):
            _config(**kwargs)


@pytest.mark.unit
class TestForwardBackward:
    """Forward pass, leaky ReLU and reverse-mode gradients."""

    def test_zero_weights_output_bias(self):
        """All-zero weights pass only the output bias through."""
        config = _config()
        params = init(config)
        params = MlpParams([np.zeros_like(w) for w in params.weights], [np.zeros(4), np.array([0.3, -1.2])])
        out, _ = forward(params, config, np.random.default_rng(0).normal(size=(5, 3)))
        np.testing.assert_allclose(out, np.tile([0.3, -1.2], (5, 1)))

    def test_leaky_relu(self):
        assert leaky_relu(np.array([-1.0]), 0.01)[0] == pytest.approx(-0.01)
        assert leaky_relu(np.array([2.0]), 0.01)[0] == 2.0

    def test_inference_is_deterministic(self):
        config = _config(dropout_rate=0.5)
        params = init(config)
        x = np.ones((2, 3))
        np.testing.assert_array_equal(forward(params, config, x)[0], forward(params, config, x)[0])

    def test_training_dropout_needs_rng(self):
        config = _config(dropout_rate=0.5)
        with pytest.raises(ValidationError):
            forward(init(config), config, np.ones((2, 3)), training=True)

    def test_input_width_checked(self):
        config = _config()
        with pytest.raises(ValidationError):
            forward(init(config), config, np.ones((2, 4)))

    def test_non_finite_input(self):
        config = _config()
        with pytest.raises(NumericalError):
            forward(init(config), config, np.array([[np.nan, 0.0, 0.0]]))

    def test_zero_upstream(self):
        config = _config()
        params = init(config)
        out, cache = forward(params, config, np.ones((3, 3)))
        grads = backward(params, config, cache, np.zeros_like(out))
        assert all(not g.any() for g in grads.weights + grads.biases)

    def test_output_layer_closed_form(self):
        """For squared loss on one sample the output weight gradient is 2 (pred - target) * hidden input."""
        config = _config(dims=(2, 3, 1))
        params = init(config)
        x, target = np.array([[0.4, -0.7]]), np.array([1.5])
        out, cache = forward(params, config, x)
        _, d_out = squared_error(out, target)
        grads = backward(params, config, cache, d_out)
        expected = 2.0 * (out[0, 0] - target[0]) * cache.inputs[-1][0]
        np.testing.assert_allclose(grads.weights[-1][:, 0], expected)
        assert grads.biases[-1][0] == pytest.approx(2.0 * (out[0, 0] - target[0]))

    def test_gradient_matches_finite_differences(self):
        """Every parameter gradient agrees with central differences."""
        config = _config(dims=(3, 5, 4, 2), dropout_rate=0.0)
        params = init(config)
        rng = np.random.default_rng(1)
        x, labels = rng.normal(size=(6, 3)), rng.integers(0, 2, 6)

        def loss_at(p):
            return softmax_cross_entropy(forward(p, config, x)[0], labels)[0]

        out, cache = forward(params, config, x)
        grads = backward(params, config, cache, softmax_cross_entropy(out, labels)[1])
        eps = 1e-6
        for kind in ("weights", "biases"):
            for layer in range(params.n_layers):
                analytic = getattr(grads, kind)[layer]
                for idx in np.ndindex(analytic.shape):
                    plus, minus = _copy(params), _copy(params)
                    getattr(plus, kind)[layer][idx] += eps
                    getattr(minus, kind)[layer][idx] -= eps
                    numeric = (loss_at(plus) - loss_at(minus)) / (2 * eps)
                    assert abs(numeric - analytic[idx]) <= 1e-5 * max(1.0, abs(numeric))


@pytest.mark.unit
class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        params = init(_config())
        zero = Gradients([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
        updated = adam_step(params, zero, 0.01)
        for w0, w1 in zip(params.weights, updated.weights):
            np.testing.assert_array_equal(w0, w1)
        assert updated.step == 1

    def test_first_step_moves_by_learning_rate(self):
        """The bias-corrected first step is learning_rate * sign(g) per coordinate."""
        params = init(_config())
        rng = np.random.default_rng(2)
        grads = Gradients([rng.choice([-2.0, 0.5], size=w.shape) for w in params.weights],
                          [rng.choice([-1.0, 3.0], size=b.shape) for b in params.biases])
        updated = adam_step(params, grads, 0.01)
        for w0, w1, g in zip(params.weights, updated.weights, grads.weights):
            np.testing.assert_allclose(w0 - w1, 0.01 * np.sign(g), rtol=1e-6)

    def test_non_finite_gradient(self):
        params = init(_config())
        bad = Gradients([np.full_like(w, np.inf) for w in params.weights], [np.zeros_like(b) for b in params.biases])
        with pytest.raises(NumericalError):
            adam_step(params, bad, 0.01)


@pytest.mark.unit
class TestLosses:
    def test_sigmoid_cross_entropy_at_zero(self):
        loss, grad = sigmoid_cross_entropy(np.zeros((2, 1)), np.array([0, 1]))
        assert loss == pytest.approx(np.log(2.0))
        np.testing.assert_allclose(grad[:, 0], [0.25, -0.25])

    def test_squared_error(self):
        loss, grad = squared_error(np.array([[1.0], [2.0]]), np.array([0.0, 0.0]))
        assert loss == pytest.approx(2.5)
        np.testing.assert_allclose(grad[:, 0], [1.0, 2.0])


@pytest.mark.unit
class TestTrainingLoop:
    def _data(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(64, 3))
        return x, (x[:, 0] > 0).astype(float)

    def test_identical_runs(self):
        """Same seed and data give identical trajectories."""
        config = _config(dims=(3, 8, 1), batch_size=16, learning_rate=1e-2)
        x, y = self._data()
        runs = [
            train_epochs(init(config), config, x, y, sigmoid_cross_entropy, 3, np.random.default_rng(9))
            for _ in range(2)
        ]
        assert runs[0][1] == runs[1][1]
        np.testing.assert_array_equal(runs[0][0].weights[0], runs[1][0].weights[0])

    def test_loss_decreases(self):
        config = _config(dims=(3, 8, 1), batch_size=16, learning_rate=1e-2, dropout_rate=0.0)
        x, y = self._data()
        _, history = train_epochs(init(config), config, x, y, sigmoid_cross_entropy, 30, np.random.default_rng(0))
        assert history[-1] < history[0]

    def test_saved_network_predicts_alike(self):
        mlp = Mlp.create(_config())
        x = np.random.default_rng(4).normal(size=(3, 3))
        with tempfile.TemporaryDirectory() as temp_dir:
            loaded = load_mlp(save_mlp(mlp, Path(temp_dir) / "mlp.json"))
        np.testing.assert_allclose(loaded(x), mlp(x))
