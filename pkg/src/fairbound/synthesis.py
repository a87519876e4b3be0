"""Synthetic data from structural causal models with a tunable unobserved confounder.

Every Bernoulli draw is realized as `uniform < p` from a stored uniform, so the
structural equations can be replayed under interventions on A to obtain
ground-truth nested counterfactuals per record.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from .core import CounterfactualEffects, Dataset, Target, VariableDomain, read_dataset_csv, write_dataset_csv
from .errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

# U ~ Normal(phi, e^-4); e^-4 is the variance
LATENT_SD = math.exp(-2.0)
DEFAULT_SPLIT = (0.6, 0.2, 0.2)
CONTINUOUS_Z_DIM = 4


class Setting(str, Enum):
    U_DE = "u_de"
    U_IE = "u_ie"
    CONTINUOUS = "continuous"


_DISCRETE_DEFAULTS: Dict[str, float] = {
    "a_z": 5.0, "a_u": -1.0,
    "m_a": 4.0, "m_z": 2.0, "m_u": 0.0,
    "y_a": 3.0, "y_z": 1.0, "y_m": 2.0, "y_u": -1.0,
}

DEFAULT_COEFFICIENTS: Dict[Setting, Dict[str, Any]] = {
    Setting.U_DE: dict(_DISCRETE_DEFAULTS),
    Setting.U_IE: {**_DISCRETE_DEFAULTS, "m_u": -1.0, "y_u": 0.0},
    Setting.CONTINUOUS: {
        "z_offset": (0.5, 1.0, 1.5, 2.0), "z_se": -0.02,
        "a_ie": 0.1, "a_de": 0.1, "a_se": 0.05, "a_z": (0.25, 0.25, 0.25, -0.5),
        "m_z": (0.1, 0.1, 0.1, -0.5), "m_a": 2.0, "m_ie": -0.1,
        "y_z": (0.1, 0.1, 0.1, 0.1), "y_m": 1.0, "y_a": 2.0, "y_de": -0.1, "y_threshold": 2.0,
    },
}

_LATENTS = {
    Setting.U_DE: ("u",),
    Setting.U_IE: ("u",),
    Setting.CONTINUOUS: ("u_de", "u_ie", "u_se"),
}


@dataclass(frozen=True)
class ScmSpec:
    setting: Setting = Setting.U_DE
    phi: float = 2.0
    n: int = 20000
    seed: int = 0
    overlap_clip: Tuple[float, float] = (0.02, 0.98)
    coefficients: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))
        object.__setattr__(self, "overlap_clip", tuple(float(x) for x in self.overlap_clip))
        object.__setattr__(self, "coefficients", dict(self.coefficients))
        if self.phi < 0:
            raise ValidationError(f"phi must be >= 0, got {self.phi}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        lo, hi = self.overlap_clip
        if not 0.0 < lo < hi < 1.0:
            raise ValidationError(f"overlap_clip must satisfy 0 < lo < hi < 1, got {self.overlap_clip}")
        unknown = set(self.coefficients) - set(DEFAULT_COEFFICIENTS[self.setting])
        if unknown:
            raise ValidationError(f"unknown coefficients for {self.setting.value}: {sorted(unknown)}")

    def resolved_coefficients(self) -> Dict[str, Any]:
        coeffs = {**DEFAULT_COEFFICIENTS[self.setting], **self.coefficients}
        if self.setting is Setting.CONTINUOUS:
            for key in ("z_offset", "a_z", "m_z", "y_z"):
                coeffs[key] = np.asarray(coeffs[key], dtype=np.float64)
                if coeffs[key].shape != (CONTINUOUS_Z_DIM,):
                    raise ValidationError(f"coefficient {key} needs {CONTINUOUS_Z_DIM} entries")
        return coeffs

    def to_dict(self) -> Dict[str, Any]:
        coeffs = {k: list(v) if isinstance(v, (tuple, list, np.ndarray)) else v for k, v in self.coefficients.items()}
        return {
            "setting": self.setting.value, "phi": self.phi, "n": self.n, "seed": self.seed,
            "overlap_clip": list(self.overlap_clip), "coefficients": coeffs,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScmSpec":
        return cls(
            setting=data.get("setting", Setting.U_DE), phi=float(data.get("phi", 2.0)),
            n=int(data.get("n", 20000)), seed=int(data.get("seed", 0)),
            overlap_clip=tuple(data.get("overlap_clip", (0.02, 0.98))),
            coefficients=data.get("coefficients") or {},
        )


def _bernoulli(p: np.ndarray, noise: np.ndarray, clip: Tuple[float, float]) -> np.ndarray:
    return (noise < np.clip(p, *clip)).astype(np.int64)


@dataclass
class _Replay:
    z: np.ndarray
    a: np.ndarray
    m: np.ndarray
    y: np.ndarray
    probabilities: Dict[str, np.ndarray]


def _structural(
    spec: ScmSpec,
    exo: Mapping[str, np.ndarray],
    a_y: Optional[int] = None,
    a_m: Optional[int] = None,
) -> _Replay:
    """Run the structural equations; `a_y`/`a_m` set A in the Y and M equations."""
    c = spec.resolved_coefficients()
    clip = spec.overlap_clip
    if spec.setting is Setting.CONTINUOUS:
        u_de, u_ie, u_se = exo["u_de"], exo["u_ie"], exo["u_se"]
        z = c["z_offset"][None, :] + c["z_se"] * u_se[:, None] + exo["noise_z"]
        p_a = expit(c["a_ie"] * u_ie + c["a_de"] * u_de + c["a_se"] * u_se + z @ c["a_z"])
        a = _bernoulli(p_a, exo["noise_a"], clip)
        a_for_m = a if a_m is None else np.full_like(a, a_m)
        p_m = expit(z @ c["m_z"] + c["m_a"] * a_for_m + c["m_ie"] * u_ie)
        m = _bernoulli(p_m, exo["noise_m"], clip)
        a_for_y = a if a_y is None else np.full_like(a, a_y)
        score = z @ c["y_z"] + c["y_m"] * m + c["y_a"] * a_for_y + c["y_de"] * u_de
        y = (score >= c["y_threshold"]).astype(np.int64)
        return _Replay(z, a, m, y, {"a": np.clip(p_a, *clip), "m": np.clip(p_m, *clip)})

    u = exo["u"]
    p_z = np.full_like(u, 0.5)
    z = _bernoulli(p_z, exo["noise_z"], clip)
    p_a = expit(c["a_z"] * z + c["a_u"] * u)
    a = _bernoulli(p_a, exo["noise_a"], clip)
    a_for_m = a if a_m is None else np.full_like(a, a_m)
    p_m = expit(c["m_a"] * a_for_m + c["m_z"] * z + c["m_u"] * u)
    m = _bernoulli(p_m, exo["noise_m"], clip)
    a_for_y = a if a_y is None else np.full_like(a, a_y)
    p_y = expit(c["y_a"] * a_for_y + c["y_z"] * z + c["y_m"] * m + c["y_u"] * u)
    y = _bernoulli(p_y, exo["noise_y"], clip)
    probabilities = {name: np.clip(p, *clip) for name, p in (("z", p_z), ("a", p_a), ("m", p_m), ("y", p_y))}
    return _Replay(z[:, None], a, m, y, probabilities)


def _to_dataset(spec: ScmSpec, replay: _Replay) -> Dataset:
    if spec.setting is Setting.CONTINUOUS:
        z_domains = tuple(VariableDomain.continuous() for _ in range(CONTINUOUS_Z_DIM))
        z_names = tuple(f"z{j + 1}" for j in range(CONTINUOUS_Z_DIM))
        z = replay.z
    else:
        z_domains, z_names, z = (VariableDomain.binary(),), ("z",), replay.z.astype(np.int64)
    return Dataset(
        a=replay.a, z=z, m=replay.m, y=replay.y,
        a_domain=VariableDomain.binary(), z_domains=z_domains,
        m_domain=VariableDomain.binary(), y_domain=VariableDomain.binary(), z_names=z_names,
    )


@dataclass
class GeneratedData:
    spec: ScmSpec
    data: Dataset
    exogenous: Dict[str, np.ndarray]

    def splits(self, fractions: Tuple[float, float, float] = DEFAULT_SPLIT) -> Dict[str, np.ndarray]:
        return split_indices(self.data.n, self.spec.seed, fractions)

    def save(self, directory: Union[str, Path]) -> Path:
        """Write data.csv, exogenous.json and splits.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_dataset_csv(self.data, directory / "data.csv")
        names = list(self.exogenous)
        rows = {
            str(i): {name: self.exogenous[name][i].tolist() for name in names}
            for i in range(self.data.n)
        }
        (directory / "exogenous.json").write_text(json.dumps({"spec": self.spec.to_dict(), "rows": rows}))
        splits = {k: v.tolist() for k, v in self.splits().items()}
        (directory / "splits.json").write_text(json.dumps(splits))
        logger.info("wrote %d generated records to %s", self.data.n, directory)
        return directory


def load_generated(directory: Union[str, Path]) -> GeneratedData:
    directory = Path(directory)
    try:
        payload = json.loads((directory / "exogenous.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"could not read exogenous draws from {directory}: {exc}") from None
    spec = ScmSpec.from_dict(payload["spec"])
    rows = payload["rows"]
    order = sorted(rows, key=int)
    names = list(rows[order[0]]) if order else []
    exogenous = {name: np.asarray([rows[i][name] for i in order], dtype=np.float64) for name in names}
    data = read_dataset_csv(directory / "data.csv")
    if data.n != len(order):
        raise ValidationError(f"data.csv has {data.n} rows but exogenous.json has {len(order)}")
    # CSV inference cannot tell a constant column's cardinality; the generator's domains are fixed
    data = _to_dataset(spec, _Replay(data.z, data.a, data.m, data.y, {}))
    return GeneratedData(spec, data, exogenous)


def generate(spec: ScmSpec) -> GeneratedData:
    rng = np.random.default_rng(spec.seed)
    exo: Dict[str, np.ndarray] = {}
    for name in _LATENTS[spec.setting]:
        exo[name] = rng.normal(spec.phi, LATENT_SD, size=spec.n)
    if spec.setting is Setting.CONTINUOUS:
        exo["noise_z"] = rng.random((spec.n, CONTINUOUS_Z_DIM))
        exo["noise_a"] = rng.random(spec.n)
        exo["noise_m"] = rng.random(spec.n)
    else:
        for name in ("noise_z", "noise_a", "noise_m", "noise_y"):
            exo[name] = rng.random(spec.n)
    data = _to_dataset(spec, _structural(spec, exo))
    logger.debug("generated %d records (%s, phi=%s)", spec.n, spec.setting.value, spec.phi)
    return GeneratedData(spec, data, exo)


def replay(gen: GeneratedData) -> Dataset:
    """Recompute the observed columns from the stored exogenous draws."""
    return _to_dataset(gen.spec, _structural(gen.spec, gen.exogenous))


def realized_probabilities(gen: GeneratedData) -> Dict[str, np.ndarray]:
    """Clipped Bernoulli probabilities used for each record."""
    return _structural(gen.spec, gen.exogenous).probabilities


def oracle_effects(gen: GeneratedData, y: Target = 1, a_i: int = 0, a_j: int = 1) -> CounterfactualEffects:
    """Ground-truth DE, IE, SE by replaying each record under do(A=.) interventions."""
    if not isinstance(y, (int, np.integer)) or y not in (0, 1):
        raise ValidationError(f"generated outcomes are binary; target y must be 0 or 1, got {y!r}")
    observed_a = gen.data.a
    groups = {a: observed_a == a for a in (0, 1)}
    for a, mask in groups.items():
        if a in (a_i, a_j) and not mask.any():
            raise NumericalError(f"no generated records with A={a}")
    q = np.zeros((2, 2, 2))
    for a_y in (0, 1):
        for a_m in (0, 1):
            hit = _structural(gen.spec, gen.exogenous, a_y=a_y, a_m=a_m).y == y
            for a, mask in groups.items():
                q[a, a_y, a_m] = hit[mask].mean() if mask.any() else np.nan
    return CounterfactualEffects.from_nested(q, y, a_i, a_j)


def split_indices(
    n: int,
    seed: int,
    fractions: Tuple[float, float, float] = DEFAULT_SPLIT,
) -> Dict[str, np.ndarray]:
    """Disjoint train/validation/test index sets covering range(n)."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValidationError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    order = np.random.default_rng([seed, 1]).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": np.sort(order[:n_train]),
        "validation": np.sort(order[n_train:n_train + n_val]),
        "test": np.sort(order[n_train + n_val:]),
    }
