"""Feed-forward networks with leaky ReLU, inverted dropout, exact backprop and Adam.

Parameters are plain numpy arrays held in `MlpParams`; every function returns
new arrays instead of mutating its inputs. Weight matrices have shape
(fan_in, fan_out) so a forward layer is `h @ W + b`.
"""
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpConfig:
    layer_dims: Tuple[int, ...]
    dropout_rate: float = 0.1
    leaky_slope: float = 0.01
    seed: int = 0
    learning_rate: float = 1e-4
    batch_size: int = 128

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 3:
            raise ValidationError(f"need input, at least one hidden and an output layer, got {dims}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"layer widths must be positive, got {dims}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.leaky_slope <= 0:
            raise ValidationError(f"leaky_slope must be positive, got {self.leaky_slope}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.batch_size) < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")

    @classmethod
    def for_task(cls, n_inputs: int, hidden: Sequence[int], n_outputs: int, **kwargs) -> "MlpConfig":
        return cls(layer_dims=(n_inputs, *hidden, n_outputs), **kwargs)

    def with_io(self, n_inputs: int, n_outputs: int) -> "MlpConfig":
        """Same hidden layers and hyperparameters, new input/output widths."""
        return replace(self, layer_dims=(n_inputs, *self.layer_dims[1:-1], n_outputs))

    @property
    def hidden(self) -> Tuple[int, ...]:
        return self.layer_dims[1:-1]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["layer_dims"] = list(self.layer_dims)
        return data


@dataclass
class MlpParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    m_w: List[np.ndarray] = field(default_factory=list)
    v_w: List[np.ndarray] = field(default_factory=list)
    m_b: List[np.ndarray] = field(default_factory=list)
    v_b: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not self.m_w:
            self.m_w = [np.zeros_like(w) for w in self.weights]
            self.v_w = [np.zeros_like(w) for w in self.weights]
            self.m_b = [np.zeros_like(b) for b in self.biases]
            self.v_b = [np.zeros_like(b) for b in self.biases]

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.weights + self.biases)


@dataclass
class ForwardCache:
    """Per-layer inputs, pre-activations and dropout masks of one forward pass."""

    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    masks: List[Optional[np.ndarray]]


def init(config: MlpConfig) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, zero Adam moments."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.layer_dims[:-1], config.layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights=weights, biases=biases)


def param_count(params: MlpParams) -> int:
    return int(sum(w.size for w in params.weights) + sum(b.size for b in params.biases))


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def forward(
    params: MlpParams,
    config: MlpConfig,
    inputs: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """Return the linear output layer and the cache needed by `backward`."""
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != config.layer_dims[0]:
        raise ValidationError(f"expected inputs of width {config.layer_dims[0]}, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite network input")
    use_dropout = training and config.dropout_rate > 0
    if use_dropout and rng is None:
        raise ValidationError("dropout in training mode needs a random generator")

    cache = ForwardCache(inputs=[], pre=[], masks=[])
    last = params.n_layers - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre.append(z)
        if layer == last:
            cache.masks.append(None)
            return z, cache
        h = leaky_relu(z, config.leaky_slope)
        mask = None
        if use_dropout:
            keep = 1.0 - config.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        cache.masks.append(mask)
    raise ValidationError("network has no layers")  # unreachable for a valid config


def backward(params: MlpParams, config: MlpConfig, cache: ForwardCache, upstream: np.ndarray) -> Gradients:
    """Reverse-mode gradients of sum(upstream * output) with respect to every parameter."""
    g = np.asarray(upstream, dtype=np.float64)
    if len(cache.inputs) != params.n_layers:
        raise ValidationError("forward cache does not belong to this network")
    expected = cache.pre[-1].shape
    if g.shape != expected:
        raise ValidationError(f"upstream gradient shape {g.shape} does not match output {expected}")

    grad_w: List[np.ndarray] = [np.empty(0)] * params.n_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * params.n_layers
    for layer in range(params.n_layers - 1, -1, -1):
        if layer < params.n_layers - 1:
            if cache.masks[layer] is not None:
                g = g * cache.masks[layer]
            g = g * np.where(cache.pre[layer] > 0, 1.0, config.leaky_slope)
        grad_w[layer] = cache.inputs[layer].T @ g
        grad_b[layer] = g.sum(axis=0)
        if layer > 0:
            g = g @ params.weights[layer].T
    return Gradients(grad_w, grad_b)


def adam_step(params: MlpParams, grads: Gradients, learning_rate: float) -> MlpParams:
    if not grads.is_finite():
        raise NumericalError("non-finite gradient")
    t = params.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t

    def _update(values, m, v, g):
        m_new = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v_new = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        step = learning_rate * (m_new / c1) / (np.sqrt(v_new / c2) + ADAM_EPS)
        return values - step, m_new, v_new

    new_w, new_mw, new_vw = zip(*(_update(*args) for args in zip(params.weights, params.m_w, params.v_w, grads.weights)))
    new_b, new_mb, new_vb = zip(*(_update(*args) for args in zip(params.biases, params.m_b, params.v_b, grads.biases)))
    return MlpParams(
        weights=list(new_w), biases=list(new_b),
        m_w=list(new_mw), v_w=list(new_vw), m_b=list(new_mb), v_b=list(new_vb),
        step=t,
    )


# Loss layer: each returns (mean loss, gradient with respect to the network output).

def sigmoid_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    x = np.asarray(logits, dtype=np.float64).reshape(len(logits), -1)[:, :1]
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    n = len(t)
    loss = float(np.mean(np.logaddexp(0.0, x) - t * x))
    return loss, (expit(x) - t) / n


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    x = np.asarray(logits, dtype=np.float64)
    idx = np.asarray(labels, dtype=np.int64)
    n = len(idx)
    picked = x[np.arange(n), idx]
    loss = float(np.mean(logsumexp(x, axis=1) - picked))
    grad = softmax(x, axis=1)
    grad[np.arange(n), idx] -= 1.0
    return loss, grad / n


def squared_error(outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    o = np.asarray(outputs, dtype=np.float64).reshape(len(outputs), -1)[:, :1]
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    diff = o - t
    return float(np.mean(diff**2)), 2.0 * diff / len(t)


LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]
ExtraGradFn = Callable[[MlpParams], Optional[Gradients]]


def train_epochs(
    params: MlpParams,
    config: MlpConfig,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss_fn: LossFn,
    epochs: int,
    rng: np.random.Generator,
    extra_grad: Optional[ExtraGradFn] = None,
) -> Tuple[MlpParams, List[float]]:
    """Shuffled minibatch Adam. `extra_grad` adds a penalty gradient per step.

    Returns the updated parameters and the mean minibatch loss per epoch.
    """
    n = len(inputs)
    history = []
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            out, cache = forward(params, config, inputs[batch], training=True, rng=rng)
            loss, d_out = loss_fn(out, targets[batch])
            if not np.isfinite(loss):
                raise NumericalError("loss diverged to a non-finite value; lower the learning rate")
            grads = backward(params, config, cache, d_out)
            if extra_grad is not None:
                penalty = extra_grad(params)
                if penalty is not None:
                    grads = grads + penalty
            params = adam_step(params, grads, config.learning_rate)
            total += loss * len(batch)
        history.append(total / n)
    return params, history


@dataclass
class Mlp:
    """A config and its parameters."""

    config: MlpConfig
    params: MlpParams

    @classmethod
    def create(cls, config: MlpConfig) -> "Mlp":
        return cls(config, init(config))

    def __call__(self, inputs: np.ndarray) -> np.ndarray:
        out, _ = forward(self.params, self.config, inputs, training=False)
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "layers": [
                {"weight": w.tolist(), "bias": b.tolist()}
                for w, b in zip(self.params.weights, self.params.biases)
            ],
            "step": self.params.step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        cfg = dict(data["config"])
        cfg["layer_dims"] = tuple(cfg["layer_dims"])
        config = MlpConfig(**cfg)
        weights = [np.asarray(layer["weight"], dtype=np.float64) for layer in data["layers"]]
        biases = [np.asarray(layer["bias"], dtype=np.float64) for layer in data["layers"]]
        for i, (w, b) in enumerate(zip(weights, biases)):
            fan_in, fan_out = config.layer_dims[i], config.layer_dims[i + 1]
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValidationError(f"layer {i} has shape {w.shape} but the config expects {(fan_in, fan_out)}")
        return cls(config, MlpParams(weights=weights, biases=biases, step=int(data.get("step", 0))))


def save_mlp(mlp: Mlp, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(mlp.to_dict(), indent=2))
    return path


def load_mlp(path: Union[str, Path]) -> Mlp:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"could not read network parameters from {path}: {exc}") from None
    return Mlp.from_dict(data)
