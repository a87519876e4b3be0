"""Predictor training: unconstrained baseline and augmented-Lagrangian fair training.

The fair objective for constraint vector c(theta) with thresholds gamma is

    L = loss - sum(lam * (gamma - c)) - sum((lam - lam_prev) ** 2 / (2 mu))

where each c entry is max(|upper|, |lower|) of one effect bound on E[f]. The
theta-gradient is grad(loss) + sum(lam * grad(c)); grad(c) flows from the
bound Jacobian through the output nonlinearity into the network.
"""
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from .bounds import ExpectedBounds, density_grid, expected_bounds_from_grid, grid_inputs
from .core import EFFECTS, Dataset, EffectBounds, VariableDomain
from .errors import NumericalError, ValidationError
from .estimation import DensityEstimator, ZGrid
from .neural import (
    Gradients,
    Mlp,
    MlpConfig,
    MlpParams,
    backward,
    forward,
    init,
    sigmoid_cross_entropy,
    softmax_cross_entropy,
    squared_error,
    train_epochs,
)

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = (32, 32)
DEFAULT_MAX_GRID = 1024


class Task(str, Enum):
    BINARY = "binary"
    REGRESSION = "regression"
    MULTICLASS = "multiclass"


class FairMode(str, Enum):
    SCALAR = "scalar-expectation"
    PER_CLASS = "per-class"


class UpdateRule(str, Enum):
    VERBATIM = "verbatim"
    ASCENT = "ascent"
    FIXED = "fixed"


def infer_task(domain: VariableDomain) -> Task:
    if not domain.is_discrete:
        return Task.REGRESSION
    return Task.BINARY if domain.cardinality == 2 else Task.MULTICLASS


@dataclass
class Predictor:
    """Network f_theta over features [a, z..., m]."""

    mlp: Mlp
    task: Task
    z_dim: int

    @classmethod
    def create(
        cls,
        task: Union[Task, str],
        z_dim: int,
        n_classes: int = 2,
        net_config: Optional[MlpConfig] = None,
        seed: int = 0,
    ) -> "Predictor":
        task = Task(task)
        n_out = n_classes if task is Task.MULTICLASS else 1
        base = net_config or MlpConfig.for_task(1, DEFAULT_HIDDEN, 1)
        config = replace(base.with_io(z_dim + 2, n_out), seed=seed)
        return cls(Mlp.create(config), task, int(z_dim))

    @property
    def n_classes(self) -> int:
        if self.task is Task.MULTICLASS:
            return self.mlp.config.layer_dims[-1]
        return 2 if self.task is Task.BINARY else 1

    def features(self, a: np.ndarray, z: np.ndarray, m: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[1] != self.z_dim:
            raise ValidationError(f"expected {self.z_dim} confounder columns, got {z.shape[1]}")
        return np.column_stack([np.asarray(a, dtype=np.float64), z, np.asarray(m, dtype=np.float64)])

    def outputs(self, raw: np.ndarray) -> np.ndarray:
        """Class probabilities (n, K); regression returns the value as a single column."""
        if self.task is Task.BINARY:
            p = expit(raw[:, 0])
            return np.column_stack([1.0 - p, p])
        if self.task is Task.MULTICLASS:
            return softmax(raw, axis=1)
        return raw[:, :1]

    def backprop_outputs(self, raw: np.ndarray, probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
        """Chain a gradient on `outputs(raw)` back to the raw network output."""
        if self.task is Task.BINARY:
            p = probs[:, 1]
            return ((d_probs[:, 1] - d_probs[:, 0]) * p * (1.0 - p))[:, None]
        if self.task is Task.MULTICLASS:
            inner = np.sum(d_probs * probs, axis=1, keepdims=True)
            return probs * (d_probs - inner)
        return d_probs[:, :1]

    def predict_outputs(self, a: np.ndarray, z: np.ndarray, m: np.ndarray, params: Optional[MlpParams] = None) -> np.ndarray:
        out, _ = forward(params or self.mlp.params, self.mlp.config, self.features(a, z, m), training=False)
        return self.outputs(out)

    def predict(self, a: np.ndarray, z: np.ndarray, m: np.ndarray) -> np.ndarray:
        """P(y=1) for binary tasks, class probabilities for multi-class, values for regression."""
        probs = self.predict_outputs(a, z, m)
        if self.task is Task.BINARY:
            return probs[:, 1]
        if self.task is Task.REGRESSION:
            return probs[:, 0]
        return probs

    def with_params(self, params: MlpParams) -> "Predictor":
        return Predictor(Mlp(self.mlp.config, params), self.task, self.z_dim)

    def to_dict(self) -> dict:
        return {"task": self.task.value, "z_dim": self.z_dim, "mlp": self.mlp.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "Predictor":
        return cls(Mlp.from_dict(data["mlp"]), Task(data["task"]), int(data["z_dim"]))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Predictor":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ValidationError(f"could not read predictor from {path}: {exc}") from None


def _expand(value: Union[float, Sequence[float]], n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ValidationError(f"{name} has {arr.size} entries but there are {n} constraints")
    return arr.copy()


@dataclass(frozen=True)
class LagrangianConfig:
    gamma: Union[float, Tuple[float, ...]] = 0.02
    lambda0: Union[float, Tuple[float, ...]] = 0.1
    mu0: Union[float, Tuple[float, ...]] = 0.02
    alpha: float = 1.5
    max_iterations: int = 20
    nested_epochs: int = 5
    epsilon: float = 1.0
    update_rule: UpdateRule = UpdateRule.VERBATIM
    ordering: str = "natural"

    def __post_init__(self):
        object.__setattr__(self, "update_rule", UpdateRule(self.update_rule))
        if np.any(np.asarray(self.gamma) < 0):
            raise ValidationError("fairness thresholds must be >= 0")
        if np.any(np.asarray(self.lambda0) < 0):
            raise ValidationError("lambda0 must be >= 0")
        if np.any(np.asarray(self.mu0) <= 0):
            raise ValidationError("mu0 must be > 0")
        if self.alpha <= 1:
            raise ValidationError(f"alpha must be > 1, got {self.alpha}")
        if self.max_iterations < 1 or self.nested_epochs < 1:
            raise ValidationError("max_iterations and nested_epochs must be >= 1")

    def thresholds(self, n: int) -> np.ndarray:
        return _expand(self.gamma, n, "gamma")


def update_multipliers(
    lam: np.ndarray,
    mu: np.ndarray,
    c: np.ndarray,
    gamma: np.ndarray,
    config: LagrangianConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """Multiplier and penalty update applied after each block of nested epochs."""
    lam, mu, c = (np.asarray(x, dtype=np.float64) for x in (lam, mu, c))
    if config.update_rule is UpdateRule.FIXED:
        return lam.copy(), mu.copy()
    if config.update_rule is UpdateRule.VERBATIM:
        new_lam = np.maximum(lam - c * mu, 0.0)
    else:
        new_lam = np.maximum(lam + mu * (c - np.asarray(gamma, dtype=np.float64)), 0.0)
    return new_lam, config.alpha * mu


def lagrangian_value(loss: float, c, lam, lam_prev, mu, gamma) -> float:
    c, lam, lam_prev, mu, gamma = (np.asarray(x, dtype=np.float64) for x in (c, lam, lam_prev, mu, gamma))
    return float(loss - np.sum(lam * (gamma - c)) - np.sum((lam - lam_prev) ** 2 / (2.0 * mu)))


def _output_functional(task: Task, n_classes: int, mode: FairMode) -> np.ndarray:
    """Matrix mapping the K output probabilities to the C constrained functionals."""
    if task is Task.REGRESSION:
        if mode is FairMode.PER_CLASS:
            raise ValidationError("per-class constraints need a classification task")
        return np.ones((1, 1))
    if mode is FairMode.PER_CLASS:
        return np.eye(n_classes)
    return np.arange(n_classes, dtype=np.float64)[:, None]


class ConstraintEvaluator:
    """Bounds of a predictor's constrained functionals on a fixed confounder grid."""

    def __init__(
        self,
        predictor: Predictor,
        g_a: DensityEstimator,
        g_m: DensityEstimator,
        z_grid: ZGrid,
        gamma_m: float,
        mode: Union[FairMode, str] = FairMode.SCALAR,
        a_i: int = 0,
        a_j: int = 1,
        ordering: str = "natural",
    ):
        self.predictor = predictor
        self.mode = FairMode(mode)
        self.gamma_m = float(gamma_m)
        self.a_i, self.a_j = a_i, a_j
        self.ordering = ordering
        self.z_grid = z_grid
        self.p_a, self.p_m = density_grid(g_a, g_m, z_grid)
        self.km = self.p_m.shape[-1]
        a, z, m = grid_inputs(z_grid.values, self.km)
        self.features = predictor.features(a, z, m)
        self.functional = _output_functional(predictor.task, predictor.n_classes, self.mode)

    @property
    def n_constraints(self) -> int:
        return len(EFFECTS) * self.functional.shape[1]

    def sample_indices(self, rng: np.random.Generator, max_grid: int) -> Optional[np.ndarray]:
        g = len(self.z_grid)
        if g <= max_grid:
            return None
        return np.sort(rng.choice(g, size=max_grid, replace=False))

    def _evaluate(self, params: MlpParams, idx: Optional[np.ndarray] = None):
        g = len(self.z_grid)
        weights, p_a, p_m = self.z_grid.weights, self.p_a, self.p_m
        feats = self.features
        if idx is not None:
            weights = weights[idx] / weights[idx].sum()
            p_a, p_m = p_a[idx], p_m[idx]
            rows = (idx[:, None] * 2 * self.km + np.arange(2 * self.km)[None, :]).reshape(-1)
            feats = feats[rows]
            g = len(idx)
        raw, cache = forward(params, self.predictor.mlp.config, feats, training=False)
        probs = self.predictor.outputs(raw)
        values = probs @ self.functional
        results = [
            expected_bounds_from_grid(
                values[:, col].reshape(g, 2, self.km), weights, p_a, p_m, self.gamma_m,
                self.a_i, self.a_j, self.ordering,
            )
            for col in range(values.shape[1])
        ]
        return results, raw, cache, probs

    def bounds(self, params: MlpParams) -> List[ExpectedBounds]:
        return self._evaluate(params)[0]

    def values(self, params: MlpParams) -> np.ndarray:
        """[c_DE, c_IE, c_SE] per constrained functional, concatenated."""
        return np.concatenate([eb.constraint_values() for eb in self.bounds(params)])

    def gradient(self, params: MlpParams, lam: np.ndarray, idx: Optional[np.ndarray] = None) -> Gradients:
        """Gradient of sum(lam * c) with respect to the network parameters."""
        results, raw, cache, probs = self._evaluate(params, idx)
        d_values = np.zeros((len(raw), len(results)))
        for col, eb in enumerate(results):
            grads = eb.constraint_gradients()
            for k, grad in enumerate(grads):
                d_values[:, col] += lam[len(EFFECTS) * col + k] * grad.reshape(-1)
        d_probs = d_values @ self.functional.T
        d_raw = self.predictor.backprop_outputs(raw, probs, d_probs)
        return backward(params, self.predictor.mlp.config, cache, d_raw)


@dataclass
class TrainReport:
    mode: str
    seed: int
    loss: List[float] = field(default_factory=list)
    constraints: List[List[float]] = field(default_factory=list)
    lam: List[List[float]] = field(default_factory=list)
    mu: List[List[float]] = field(default_factory=list)
    lagrangian: List[float] = field(default_factory=list)
    thresholds: List[float] = field(default_factory=list)
    final_bounds: List[dict] = field(default_factory=list)
    final_constraints: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _training_arrays(predictor: Predictor, data: Dataset):
    X = predictor.features(data.a, data.z, data.m)
    if predictor.task is Task.BINARY:
        if data.y_domain.cardinality != 2:
            raise ValidationError("binary task needs a binary outcome")
        return X, data.y.astype(np.float64), sigmoid_cross_entropy
    if predictor.task is Task.MULTICLASS:
        if not data.y_domain.is_discrete:
            raise ValidationError("multi-class task needs a discrete outcome")
        return X, data.y.astype(np.int64), softmax_cross_entropy
    return X, data.y.astype(np.float64), squared_error


def _full_loss(predictor: Predictor, params: MlpParams, X: np.ndarray, targets: np.ndarray, loss_fn) -> float:
    out, _ = forward(params, predictor.mlp.config, X, training=False)
    loss, _ = loss_fn(out, targets)
    if not np.isfinite(loss):
        raise NumericalError("prediction loss is not finite")
    return loss


def lagrangian_and_gradient(
    predictor: Predictor,
    params: MlpParams,
    data: Dataset,
    evaluator: ConstraintEvaluator,
    lam: np.ndarray,
    lam_prev: np.ndarray,
    mu: np.ndarray,
    gamma: np.ndarray,
) -> Tuple[float, Gradients]:
    """Full-batch Lagrangian and its parameter gradient (dropout off)."""
    X, targets, loss_fn = _training_arrays(predictor, data)
    out, cache = forward(params, predictor.mlp.config, X, training=False)
    loss, d_out = loss_fn(out, targets)
    c = evaluator.values(params)
    value = lagrangian_value(loss, c, lam, lam_prev, mu, gamma)
    grads = backward(params, predictor.mlp.config, cache, d_out) + evaluator.gradient(params, np.asarray(lam))
    return value, grads


def train_standard(
    data: Dataset,
    net_config: Optional[MlpConfig] = None,
    task: Optional[Union[Task, str]] = None,
    epochs: int = 20,
    seed: int = 0,
) -> Tuple[Predictor, TrainReport]:
    """Minimize the prediction loss only."""
    task = Task(task) if task is not None else infer_task(data.y_domain)
    predictor = Predictor.create(task, data.z.shape[1], max(data.y_domain.cardinality, 2), net_config, seed)
    X, targets, loss_fn = _training_arrays(predictor, data)
    rng = np.random.default_rng(seed)
    params, history = train_epochs(predictor.mlp.params, predictor.mlp.config, X, targets, loss_fn, epochs, rng)
    report = TrainReport(mode="standard", seed=seed, loss=history, iterations=epochs, converged=True)
    logger.info("standard training finished: loss %.4f after %d epochs", history[-1] if history else float("nan"), epochs)
    return predictor.with_params(params), report


def train_fair(
    data: Dataset,
    g_a: DensityEstimator,
    g_m: DensityEstimator,
    gamma_m: float,
    config: LagrangianConfig = LagrangianConfig(),
    mode: Union[FairMode, str] = FairMode.SCALAR,
    net_config: Optional[MlpConfig] = None,
    task: Optional[Union[Task, str]] = None,
    seed: int = 0,
    z_grid: Optional[ZGrid] = None,
    a_i: int = 0,
    a_j: int = 1,
    max_grid: int = DEFAULT_MAX_GRID,
) -> Tuple[Predictor, TrainReport]:
    """Train under max(|upper|, |lower|) <= gamma constraints on DE, IE and SE.

    gamma_m = 1 gives the baseline that assumes no unobserved confounding.
    Grids larger than `max_grid` are subsampled for each gradient step; the
    recorded constraints always use the whole grid.
    """
    if gamma_m < 1:
        raise ValidationError(f"gamma_m must be >= 1, got {gamma_m}")
    mode = FairMode(mode)
    task = Task(task) if task is not None else infer_task(data.y_domain)
    predictor = Predictor.create(task, data.z.shape[1], max(data.y_domain.cardinality, 2), net_config, seed)
    z_grid = z_grid or ZGrid.from_dataset(data)
    evaluator = ConstraintEvaluator(predictor, g_a, g_m, z_grid, gamma_m, mode, a_i, a_j, config.ordering)
    n_c = evaluator.n_constraints
    gamma = config.thresholds(n_c)
    lam = _expand(config.lambda0, n_c, "lambda0")
    mu = _expand(config.mu0, n_c, "mu0")
    lam_prev = lam.copy()

    X, targets, loss_fn = _training_arrays(predictor, data)
    rng = np.random.default_rng(seed)
    params = predictor.mlp.params
    report = TrainReport(mode=f"fair/{mode.value}", seed=seed, thresholds=gamma.tolist())

    def penalty(current: MlpParams) -> Gradients:
        return evaluator.gradient(current, lam, evaluator.sample_indices(rng, max_grid))

    loss = float("inf")
    for iteration in range(config.max_iterations):
        params, _ = train_epochs(params, predictor.mlp.config, X, targets, loss_fn, config.nested_epochs, rng, penalty)
        loss = _full_loss(predictor, params, X, targets, loss_fn)
        c = evaluator.values(params)
        report.loss.append(loss)
        report.constraints.append(c.tolist())
        report.lam.append(lam.tolist())
        report.mu.append(mu.tolist())
        report.lagrangian.append(lagrangian_value(loss, c, lam, lam_prev, mu, gamma))
        report.iterations = iteration + 1
        logger.info("iteration %d: loss %.4f, constraints %s", iteration + 1, loss, np.round(c, 4).tolist())
        if np.all(c <= gamma) and loss <= config.epsilon:
            break
        lam_prev = lam
        lam, mu = update_multipliers(lam, mu, c, gamma, config)

    final = evaluator.bounds(params)
    final_c = np.concatenate([eb.constraint_values() for eb in final])
    report.final_bounds = [eb.bounds.to_dict() for eb in final]
    report.final_constraints = final_c.tolist()
    report.converged = bool(np.all(final_c <= gamma) and loss <= config.epsilon)
    if not report.converged:
        logger.warning("fair training stopped after %d iterations without meeting the constraints", report.iterations)
    return predictor.with_params(params), report


def evaluate_constraints(
    predictor: Predictor,
    g_a: DensityEstimator,
    g_m: DensityEstimator,
    gamma_m: float,
    z_grid: ZGrid,
    mode: Union[FairMode, str] = FairMode.SCALAR,
    a_i: int = 0,
    a_j: int = 1,
    ordering: str = "natural",
) -> np.ndarray:
    evaluator = ConstraintEvaluator(predictor, g_a, g_m, z_grid, gamma_m, mode, a_i, a_j, ordering)
    return evaluator.values(predictor.mlp.params)


def predictor_bounds(
    predictor: Predictor,
    g_a: DensityEstimator,
    g_m: DensityEstimator,
    gamma_m: float,
    z_grid: ZGrid,
    mode: Union[FairMode, str] = FairMode.SCALAR,
    a_i: int = 0,
    a_j: int = 1,
    ordering: str = "natural",
) -> List[EffectBounds]:
    """Effect bounds on each constrained functional of a trained predictor."""
    evaluator = ConstraintEvaluator(predictor, g_a, g_m, z_grid, gamma_m, mode, a_i, a_j, ordering)
    return [eb.bounds for eb in evaluator.bounds(predictor.mlp.params)]
