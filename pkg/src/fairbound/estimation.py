"""Observational probability tables and the density estimators g_A, g_M.

Tables are indexed [z, a, m, y] where z is the position of a confounder cell
in `ObsTables.z_values` (observed cells only, in lexicographic order).
"""
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from .core import Dataset, VariableDomain
from .errors import NumericalError, OverlapError, ValidationError
from .neural import Mlp, MlpConfig, init, softmax_cross_entropy, train_epochs

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-9
DEFAULT_SMOOTHING = 0.5
DEFAULT_DENSITY_HIDDEN = (32, 32)


def _z_key(z_row: Sequence[float]) -> str:
    return ",".join(f"{int(v)}" if float(v).is_integer() else repr(float(v)) for v in z_row)


def _parse_z_key(key: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in key.split(","))


@dataclass
class ObsTables:
    z_values: np.ndarray
    p_z: np.ndarray
    p_a_given_z: np.ndarray
    p_m_given_za: np.ndarray
    y_domain: VariableDomain
    p_y_given_mza: Optional[np.ndarray] = None
    y_samples: Optional[Dict[Tuple[int, int, int], np.ndarray]] = None
    cell_counts: Optional[np.ndarray] = None
    smoothing: float = 0.0
    _index: Dict[Tuple[float, ...], int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.z_values = np.asarray(self.z_values, dtype=np.float64)
        if self.z_values.ndim == 1:
            self.z_values = self.z_values[:, None]
        self.p_z = np.asarray(self.p_z, dtype=np.float64)
        self.p_a_given_z = np.asarray(self.p_a_given_z, dtype=np.float64)
        self.p_m_given_za = np.asarray(self.p_m_given_za, dtype=np.float64)
        nz = len(self.z_values)
        if self.p_z.shape != (nz,) or self.p_a_given_z.shape != (nz, 2) or self.p_m_given_za.shape[:2] != (nz, 2):
            raise ValidationError("table shapes do not agree on the confounder cells")
        if self.y_domain.is_discrete:
            if self.p_y_given_mza is None:
                raise ValidationError("discrete outcome needs P(y|m,z,a)")
            self.p_y_given_mza = np.asarray(self.p_y_given_mza, dtype=np.float64)
            if self.p_y_given_mza.shape != (nz, 2, self.km, self.y_domain.cardinality):
                raise ValidationError(f"P(y|m,z,a) has shape {self.p_y_given_mza.shape}")
        elif not self.y_samples:
            raise ValidationError("continuous outcome needs per-cell outcome samples")
        self._check_normalized("P(z)", self.p_z, axis=0)
        self._check_normalized("P(a|z)", self.p_a_given_z)
        self._check_normalized("P(m|z,a)", self.p_m_given_za)
        if self.p_y_given_mza is not None:
            self._check_normalized("P(y|m,z,a)", self.p_y_given_mza)
        self._index = {tuple(row): i for i, row in enumerate(self.z_values.tolist())}

    @staticmethod
    def _check_normalized(name: str, table: np.ndarray, axis: int = -1):
        if np.any(table < 0) or np.any(table > 1 + NORMALIZATION_TOL):
            raise ValidationError(f"{name} has entries outside [0, 1]")
        if np.any(np.abs(table.sum(axis=axis) - 1.0) > NORMALIZATION_TOL):
            raise ValidationError(f"{name} does not sum to 1")

    @property
    def nz(self) -> int:
        return len(self.z_values)

    @property
    def km(self) -> int:
        return self.p_m_given_za.shape[2]

    @property
    def p_a(self) -> np.ndarray:
        return self.p_z @ self.p_a_given_z

    def z_index(self, z: Union[float, Sequence[float]]) -> int:
        key = tuple(float(v) for v in np.atleast_1d(z))
        try:
            return self._index[key]
        except KeyError:
            raise ValidationError(f"confounder value {key} was not observed") from None

    def sorted_samples(self, zi: int, a: int, m: int) -> np.ndarray:
        if self.y_samples is None:
            raise ValidationError("tables hold no outcome samples")
        return self.y_samples[(zi, a, m)]

    def joint(self) -> np.ndarray:
        """P(z, a, m, y) for a discrete outcome."""
        if self.p_y_given_mza is None:
            raise ValidationError("joint table needs a discrete outcome")
        return (self.p_z[:, None, None, None] * self.p_a_given_z[:, :, None, None]
                * self.p_m_given_za[:, :, :, None] * self.p_y_given_mza)

    def to_dict(self) -> Dict[str, Any]:
        cells: Dict[str, Any] = {}
        for zi, z_row in enumerate(self.z_values):
            zk = _z_key(z_row)
            for a in (0, 1):
                for m in range(self.km):
                    cell: Dict[str, Any] = {
                        "p_a_given_z": float(self.p_a_given_z[zi, a]),
                        "p_m_given_za": float(self.p_m_given_za[zi, a, m]),
                    }
                    if self.p_y_given_mza is not None:
                        cell["p_y_given_mza"] = self.p_y_given_mza[zi, a, m].tolist()
                    if self.y_samples is not None:
                        cell["y_samples"] = self.y_samples[(zi, a, m)].tolist()
                    if self.cell_counts is not None:
                        cell["count"] = int(self.cell_counts[zi, a, m])
                    cells[f"{a}|{zk}|{m}"] = cell
        return {
            "smoothing": self.smoothing,
            "y_domain": self.y_domain.to_dict(),
            "m_cardinality": self.km,
            "p_z": {_z_key(z_row): float(p) for z_row, p in zip(self.z_values, self.p_z)},
            "cells": cells,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ObsTables":
        try:
            y_domain = VariableDomain.parse(data["y_domain"])
            km = int(data["m_cardinality"])
            z_keys = list(data["p_z"].keys())
            z_values = np.array([_parse_z_key(k) for k in z_keys])
            nz = len(z_keys)
            p_z = np.array([data["p_z"][k] for k in z_keys])
            p_a = np.zeros((nz, 2))
            p_m = np.zeros((nz, 2, km))
            p_y = np.zeros((nz, 2, km, y_domain.cardinality)) if y_domain.is_discrete else None
            samples = None if y_domain.is_discrete else {}
            counts = np.zeros((nz, 2, km), dtype=np.int64)
            for zi, zk in enumerate(z_keys):
                for a in (0, 1):
                    for m in range(km):
                        cell = data["cells"][f"{a}|{zk}|{m}"]
                        p_a[zi, a] = cell["p_a_given_z"]
                        p_m[zi, a, m] = cell["p_m_given_za"]
                        if p_y is not None:
                            p_y[zi, a, m] = cell["p_y_given_mza"]
                        else:
                            samples[(zi, a, m)] = np.sort(np.asarray(cell["y_samples"], dtype=np.float64))
                        counts[zi, a, m] = cell.get("count", 0)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed tables document: {exc}") from None
        return cls(
            z_values=z_values, p_z=p_z, p_a_given_z=p_a, p_m_given_za=p_m, y_domain=y_domain,
            p_y_given_mza=p_y, y_samples=samples, cell_counts=counts,
            smoothing=float(data.get("smoothing", 0.0)),
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ObsTables":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"could not read tables from {path}: {exc}") from None


def _smoothed(counts: np.ndarray, smoothing: float) -> np.ndarray:
    k = counts.shape[-1]
    return (counts + smoothing) / (counts.sum(axis=-1, keepdims=True) + k * smoothing)


def fit_frequency_tables(data: Dataset, smoothing: float = DEFAULT_SMOOTHING) -> ObsTables:
    """Relative-frequency tables with `smoothing` pseudo-counts per conditional cell."""
    if smoothing < 0:
        raise ValidationError(f"smoothing must be >= 0, got {smoothing}")
    if data.z_is_continuous:
        raise ValidationError("frequency tables need discrete confounders; use the neural density backend")

    z_values, z_idx = np.unique(np.asarray(data.z, dtype=np.float64), axis=0, return_inverse=True)
    z_idx = np.asarray(z_idx).reshape(-1)
    nz, km = len(z_values), data.m_domain.cardinality
    n = data.n

    p_z = np.bincount(z_idx, minlength=nz) / n
    counts_za = np.zeros((nz, 2))
    np.add.at(counts_za, (z_idx, data.a), 1)
    if smoothing == 0:
        missing = np.argwhere(counts_za == 0)
        if missing.size:
            zi, a = missing[0]
            raise OverlapError(
                f"no records with a={a} for confounder {tuple(z_values[zi])}; bounds are undefined there",
                cell=(int(a), _z_key(z_values[zi])),
            )
    p_a = _smoothed(counts_za, smoothing)

    counts_zam = np.zeros((nz, 2, km))
    np.add.at(counts_zam, (z_idx, data.a, data.m), 1)
    p_m = _smoothed(counts_zam, smoothing)

    p_y = None
    samples = None
    if data.y_domain.is_discrete:
        ky = data.y_domain.cardinality
        counts_y = np.zeros((nz, 2, km, ky))
        np.add.at(counts_y, (z_idx, data.a, data.m, data.y), 1)
        if smoothing == 0:
            empty = np.argwhere(counts_y.sum(axis=-1) == 0)
            if empty.size:
                zi, a, m = empty[0]
                raise OverlapError(
                    "empty outcome cell with smoothing=0",
                    cell=(int(a), _z_key(z_values[zi]), int(m)),
                )
        p_y = _smoothed(counts_y, smoothing)
    else:
        samples = {}
        for zi in range(nz):
            for a in (0, 1):
                for m in range(km):
                    mask = (z_idx == zi) & (data.a == a) & (data.m == m)
                    cell = np.sort(data.y[mask])
                    if cell.size == 0:
                        if smoothing == 0:
                            raise OverlapError("empty outcome cell with smoothing=0", cell=(a, _z_key(z_values[zi]), m))
                        pooled = data.y[data.a == a]
                        cell = np.sort(pooled if pooled.size else data.y)
                        logger.warning("cell a=%d z=%s m=%d is empty; using pooled outcome samples", a, _z_key(z_values[zi]), m)
                    samples[(zi, a, m)] = cell

    tables = ObsTables(
        z_values=z_values, p_z=p_z, p_a_given_z=p_a, p_m_given_za=p_m, y_domain=data.y_domain,
        p_y_given_mza=p_y, y_samples=samples, cell_counts=counts_zam.astype(np.int64), smoothing=float(smoothing),
    )
    logger.info("fitted frequency tables: %d confounder cells, %d mediator values, n=%d", nz, km, n)
    return tables


class DensityTarget(str, Enum):
    A_GIVEN_Z = "a|z"
    M_GIVEN_ZA = "m|z,a"


class DensityEstimator(ABC):
    """Conditional distribution of A given Z (g_A) or M given Z and A (g_M)."""

    target: DensityTarget
    n_classes: int
    backend: str = ""

    @abstractmethod
    def predict_proba(self, z: np.ndarray, a: Optional[np.ndarray] = None) -> np.ndarray:
        """Return an (n, n_classes) array of probabilities for each query row."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Serializable form, read back by `density_from_dict`."""

    def _check_query(self, z: np.ndarray, a: Optional[np.ndarray]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if self.target is DensityTarget.M_GIVEN_ZA:
            if a is None:
                raise ValidationError("g_M queries need attribute values")
            a = np.asarray(a, dtype=np.int64).reshape(-1)
            if len(a) != len(z):
                raise ValidationError("z and a queries have different lengths")
            if np.any((a != 0) & (a != 1)):
                raise ValidationError("attribute values must be 0 or 1")
        return z, a


class FrequencyDensity(DensityEstimator):
    """Table lookup into fitted frequency tables."""

    backend = "frequency"

    def __init__(self, tables: ObsTables, target: Union[DensityTarget, str]):
        self.tables = tables
        self.target = DensityTarget(target)
        self.n_classes = 2 if self.target is DensityTarget.A_GIVEN_Z else tables.km

    def predict_proba(self, z: np.ndarray, a: Optional[np.ndarray] = None) -> np.ndarray:
        z, a = self._check_query(z, a)
        rows = np.array([self.tables.z_index(row) for row in z], dtype=np.int64)
        if self.target is DensityTarget.A_GIVEN_Z:
            return self.tables.p_a_given_z[rows].copy()
        return self.tables.p_m_given_za[rows, a].copy()

    def to_dict(self) -> Dict[str, Any]:
        return {"backend": self.backend, "target": self.target.value, "tables": self.tables.to_dict()}


class NeuralDensity(DensityEstimator):
    """Softmax classifier over the target's categories; inputs are [z..., a]."""

    backend = "neural"

    def __init__(self, mlp: Mlp, target: Union[DensityTarget, str], z_dim: int):
        self.mlp = mlp
        self.target = DensityTarget(target)
        self.z_dim = int(z_dim)
        self.n_classes = mlp.config.layer_dims[-1]

    def features(self, z: np.ndarray, a: Optional[np.ndarray]) -> np.ndarray:
        if z.shape[1] != self.z_dim:
            raise ValidationError(f"expected {self.z_dim} confounder columns, got {z.shape[1]}")
        if self.target is DensityTarget.M_GIVEN_ZA:
            return np.column_stack([z, a.astype(np.float64)])
        return z

    def predict_proba(self, z: np.ndarray, a: Optional[np.ndarray] = None) -> np.ndarray:
        z, a = self._check_query(z, a)
        return softmax(self.mlp(self.features(z, a)), axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {"backend": self.backend, "target": self.target.value, "z_dim": self.z_dim, "mlp": self.mlp.to_dict()}


def fit_neural_density(
    data: Dataset,
    target: Union[DensityTarget, str],
    net_config: Optional[MlpConfig] = None,
    seed: int = 0,
    epochs: int = 20,
) -> NeuralDensity:
    """Train a cross-entropy classifier for P(a|z) or P(m|z,a).

    Input and output widths of `net_config` are replaced to fit the target;
    its hidden layers and optimizer settings are kept.
    """
    target = DensityTarget(target)
    z = np.asarray(data.z, dtype=np.float64)
    if target is DensityTarget.A_GIVEN_Z:
        labels, k, features = data.a, 2, z
    else:
        labels, k = data.m, data.m_domain.cardinality
        features = np.column_stack([z, data.a.astype(np.float64)])
    base = net_config or MlpConfig.for_task(1, DEFAULT_DENSITY_HIDDEN, 1, learning_rate=1e-3)
    config = MlpConfig(
        layer_dims=(features.shape[1], *base.hidden, k),
        dropout_rate=base.dropout_rate, leaky_slope=base.leaky_slope, seed=seed,
        learning_rate=base.learning_rate, batch_size=base.batch_size,
    )
    rng = np.random.default_rng(seed)
    params, history = train_epochs(init(config), config, features, labels, softmax_cross_entropy, epochs, rng)
    logger.info("fitted neural density %s: final loss %.4f after %d epochs", target.value, history[-1] if history else float("nan"), epochs)
    return NeuralDensity(Mlp(config, params), target, z_dim=z.shape[1])


def query_density(est: DensityEstimator, z: np.ndarray, a: Optional[np.ndarray] = None) -> np.ndarray:
    """Probabilities for each query row, checked to be a distribution."""
    probs = est.predict_proba(z, a)
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise NumericalError(f"{est.target.value} estimator returned an invalid distribution")
    return probs


def density_from_dict(data: Dict[str, Any]) -> DensityEstimator:
    backend = data.get("backend")
    if backend == "frequency":
        return FrequencyDensity(ObsTables.from_dict(data["tables"]), data["target"])
    if backend == "neural":
        return NeuralDensity(Mlp.from_dict(data["mlp"]), data["target"], data["z_dim"])
    raise ValidationError(f"unknown density backend '{backend}'")


def save_density(est: DensityEstimator, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(est.to_dict(), indent=2))
    return path


def load_density(path: Union[str, Path]) -> DensityEstimator:
    try:
        return density_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"could not read density estimator from {path}: {exc}") from None


def fit_densities(
    data: Dataset,
    backend: str = "frequency",
    smoothing: float = DEFAULT_SMOOTHING,
    net_config: Optional[MlpConfig] = None,
    seed: int = 0,
    epochs: int = 20,
) -> Tuple[DensityEstimator, DensityEstimator]:
    """Fit (g_A, g_M). Continuous confounders always use the neural backend."""
    if backend not in ("frequency", "neural"):
        raise ValidationError(f"unknown density backend '{backend}'")
    if backend == "frequency" and data.z_is_continuous:
        logger.warning("continuous confounders: switching density backend to neural")
        backend = "neural"
    if backend == "frequency":
        tables = fit_frequency_tables(data, smoothing)
        return FrequencyDensity(tables, DensityTarget.A_GIVEN_Z), FrequencyDensity(tables, DensityTarget.M_GIVEN_ZA)
    g_a = fit_neural_density(data, DensityTarget.A_GIVEN_Z, net_config, seed=seed, epochs=epochs)
    g_m = fit_neural_density(data, DensityTarget.M_GIVEN_ZA, net_config, seed=seed + 1, epochs=epochs)
    return g_a, g_m


@dataclass(frozen=True)
class ZGrid:
    """Confounder support points with weights summing to one."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        weights = np.asarray(self.weights, dtype=np.float64)
        if len(values) == 0:
            raise ValidationError("confounder support is empty")
        if weights.shape != (len(values),) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValidationError("confounder weights must be non-negative and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_dataset(cls, data: Dataset) -> "ZGrid":
        values, counts = np.unique(np.asarray(data.z, dtype=np.float64), axis=0, return_counts=True)
        return cls(values, counts / counts.sum())

    @classmethod
    def from_tables(cls, tables: ObsTables) -> "ZGrid":
        return cls(tables.z_values, tables.p_z)
