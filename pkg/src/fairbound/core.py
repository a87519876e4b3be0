"""Domain types shared across fairbound: variable domains, datasets, intervals
and effect bounds."""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DatasetError, NumericalError, ValidationError

logger = logging.getLogger(__name__)

ROLES = ("a", "z", "m", "y")
EFFECTS = ("de", "ie", "se")


class DomainKind(str, Enum):
    BINARY = "binary"
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class VariableDomain:
    """Value domain of a column. Discrete labels are the dense range 0..k-1."""

    kind: DomainKind
    cardinality: int = 0

    def __post_init__(self):
        kind = DomainKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is DomainKind.BINARY:
            object.__setattr__(self, "cardinality", 2)
        elif kind is DomainKind.CATEGORICAL:
            if int(self.cardinality) < 2:
                raise ValidationError(f"categorical domain needs cardinality >= 2, got {self.cardinality}")
            object.__setattr__(self, "cardinality", int(self.cardinality))
        else:
            object.__setattr__(self, "cardinality", 0)

    @classmethod
    def binary(cls) -> "VariableDomain":
        return cls(DomainKind.BINARY)

    @classmethod
    def categorical(cls, k: int) -> "VariableDomain":
        return cls(DomainKind.CATEGORICAL, k)

    @classmethod
    def continuous(cls) -> "VariableDomain":
        return cls(DomainKind.CONTINUOUS)

    @classmethod
    def parse(cls, text: Union[str, Mapping[str, Any], "VariableDomain"]) -> "VariableDomain":
        """Parse `binary`, `continuous`, `categorical(3)` or a to_dict() mapping."""
        if isinstance(text, VariableDomain):
            return text
        if isinstance(text, Mapping):
            return cls(DomainKind(text["kind"]), int(text.get("cardinality", 0)))
        raw = str(text).strip().lower()
        if raw in ("binary", "continuous"):
            return cls(DomainKind(raw))
        if raw.startswith("categorical"):
            inner = raw[len("categorical"):].strip("():= ")
            try:
                return cls.categorical(int(inner))
            except ValueError:
                pass
        raise ValidationError(f"unknown variable domain '{text}'")

    @property
    def is_discrete(self) -> bool:
        return self.kind is not DomainKind.CONTINUOUS

    @property
    def labels(self) -> Tuple[int, ...]:
        return tuple(range(self.cardinality))

    def contains(self, value: Any) -> bool:
        try:
            x = float(value)
        except (TypeError, ValueError):
            return False
        if not math.isfinite(x):
            return False
        if not self.is_discrete:
            return True
        return x.is_integer() and 0 <= x < self.cardinality

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "cardinality": self.cardinality}

    def __str__(self) -> str:
        if self.kind is DomainKind.CATEGORICAL:
            return f"categorical({self.cardinality})"
        return self.kind.value


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    domain: VariableDomain

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"column '{self.name}': role must be one of {ROLES}, got '{self.role}'")


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns hold A, M and Y. Every other column is a confounder."""

    a: str = "a"
    m: str = "m"
    y: str = "y"


def _readonly(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable (a, z, m, y) records. `z` is always two-dimensional (n, d)."""

    a: np.ndarray
    z: np.ndarray
    m: np.ndarray
    y: np.ndarray
    a_domain: VariableDomain
    z_domains: Tuple[VariableDomain, ...]
    m_domain: VariableDomain
    y_domain: VariableDomain
    z_names: Tuple[str, ...] = ("z",)
    names: Tuple[str, str, str] = ("a", "m", "y")

    def __post_init__(self):
        z = np.asarray(self.z)
        if z.ndim == 1:
            z = z[:, None]
        object.__setattr__(self, "a", _readonly(np.asarray(self.a, dtype=np.int64)))
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "m", _readonly(np.asarray(self.m, dtype=np.int64)))
        y_dtype = np.int64 if self.y_domain.is_discrete else np.float64
        object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=y_dtype)))
        object.__setattr__(self, "z_domains", tuple(self.z_domains))
        object.__setattr__(self, "z_names", tuple(self.z_names))
        n = len(self.a)
        if n < 1:
            raise DatasetError("dataset is empty")
        if not (len(self.z) == len(self.m) == len(self.y) == n):
            raise DatasetError("columns have different lengths")
        if self.z.shape[1] != len(self.z_domains) or len(self.z_names) != len(self.z_domains):
            raise DatasetError("confounder columns do not match their domains")
        if self.a_domain.kind is not DomainKind.BINARY:
            raise ValidationError("the sensitive attribute must be binary")
        if not self.m_domain.is_discrete:
            raise ValidationError("the mediator must be discrete")

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def z_is_continuous(self) -> bool:
        return any(not d.is_discrete for d in self.z_domains)

    @property
    def y_is_continuous(self) -> bool:
        return not self.y_domain.is_discrete

    @property
    def schema(self) -> List[ColumnSpec]:
        a_name, m_name, y_name = self.names
        cols = [ColumnSpec(a_name, "a", self.a_domain)]
        cols += [ColumnSpec(n, "z", d) for n, d in zip(self.z_names, self.z_domains)]
        cols += [ColumnSpec(m_name, "m", self.m_domain), ColumnSpec(y_name, "y", self.y_domain)]
        return cols

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            a=self.a[idx], z=self.z[idx], m=self.m[idx], y=self.y[idx],
            a_domain=self.a_domain, z_domains=self.z_domains, m_domain=self.m_domain,
            y_domain=self.y_domain, z_names=self.z_names, names=self.names,
        )

    def to_frame(self) -> pd.DataFrame:
        a_name, m_name, y_name = self.names
        data: Dict[str, Any] = {a_name: self.a}
        for j, (name, dom) in enumerate(zip(self.z_names, self.z_domains)):
            col = self.z[:, j]
            data[name] = col.astype(np.int64) if dom.is_discrete else col.astype(np.float64)
        data[m_name] = self.m
        data[y_name] = self.y
        return pd.DataFrame(data)


def validate_dataset(records: Iterable[Sequence[Any]], schema: Sequence[ColumnSpec]) -> Dataset:
    """Check raw rows against a column schema and build a Dataset.

    Rows are sequences ordered like `schema`. Exactly one column each must
    have role a, m and y; the remaining columns (at least one) are confounders.
    """
    schema = list(schema)
    roles = [c.role for c in schema]
    for role in ("a", "m", "y"):
        if roles.count(role) != 1:
            raise ValidationError(f"schema needs exactly one '{role}' column, found {roles.count(role)}")
    if roles.count("z") < 1:
        raise ValidationError("schema needs at least one confounder ('z') column")

    rows = list(records)
    if not rows:
        raise DatasetError("no records")
    width = len(schema)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"expected {width} values, got {len(row)}", row=i)

    values = np.empty((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            try:
                values[i, j] = np.nan if cell is None else float(cell)
            except (TypeError, ValueError):
                raise DatasetError(f"non-numeric value {cell!r}", row=i, column=schema[j].name) from None

    for j, col in enumerate(schema):
        column = values[:, j]
        missing = np.flatnonzero(~np.isfinite(column))
        if missing.size:
            raise DatasetError("missing or non-finite value", row=int(missing[0]), column=col.name)
        if col.domain.is_discrete:
            bad = np.flatnonzero((column != np.floor(column)) | (column < 0) | (column >= col.domain.cardinality))
            if bad.size:
                raise DatasetError(
                    f"value {column[bad[0]]:g} outside {col.domain}", row=int(bad[0]), column=col.name
                )

    by_role = {c.role: j for j, c in enumerate(schema) if c.role != "z"}
    z_idx = [j for j, c in enumerate(schema) if c.role == "z"]
    z_domains = tuple(schema[j].domain for j in z_idx)
    dataset = Dataset(
        a=values[:, by_role["a"]],
        z=values[:, z_idx],
        m=values[:, by_role["m"]],
        y=values[:, by_role["y"]],
        a_domain=schema[by_role["a"]].domain,
        z_domains=z_domains,
        m_domain=schema[by_role["m"]].domain,
        y_domain=schema[by_role["y"]].domain,
        z_names=tuple(schema[j].name for j in z_idx),
        names=(schema[by_role["a"]].name, schema[by_role["m"]].name, schema[by_role["y"]].name),
    )
    kinds = ", ".join(f"{c.name}={c.domain}" for c in schema)
    logger.debug("validated %d records: %s", dataset.n, kinds)
    return dataset


def _infer_domain(series: pd.Series, role: str) -> VariableDomain:
    if role == "a":
        return VariableDomain.binary()
    integral = pd.api.types.is_integer_dtype(series.dtype)
    if role == "m" and not integral:
        # a missing cell turns an integer column into floats
        numeric = pd.to_numeric(series, errors="coerce")
        integral = bool(numeric.notna().all() and (numeric == numeric.round()).all())
        if not integral:
            raise DatasetError("mediator column holds non-integer values", column=str(series.name))
    if integral:
        k = int(series.max()) + 1 if len(series) else 2
        return VariableDomain.binary() if k <= 2 else VariableDomain.categorical(k)
    return VariableDomain.continuous()


def read_dataset_csv(
    path: Union[str, Path],
    roles: ColumnRoles = ColumnRoles(),
    domains: Optional[Mapping[str, Union[str, VariableDomain]]] = None,
) -> Dataset:
    """Load a CSV into a Dataset. Undeclared domains are inferred from dtypes."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: no data") from None
    except pd.errors.ParserError as exc:
        # pandas reports the offending line, e.g. "Expected 4 fields in line 3, saw 5"
        raise DatasetError(f"{path}: malformed CSV: {exc}") from None

    columns = list(frame.columns)
    for role, name in (("a", roles.a), ("m", roles.m), ("y", roles.y)):
        if name not in columns:
            raise DatasetError(f"{path}: missing '{role}' column '{name}'")
    declared = {k: VariableDomain.parse(v) for k, v in (domains or {}).items()}
    role_of = {roles.a: "a", roles.m: "m", roles.y: "y"}

    schema = []
    for name in columns:
        role = role_of.get(name, "z")
        dom = declared.get(name)
        if dom is None:
            dom = _infer_domain(frame[name].dropna(), role)
        schema.append(ColumnSpec(str(name), role, dom))
    rows = frame.to_numpy(dtype=object)
    return validate_dataset(rows, schema)


def write_dataset_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False)
    return path


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise NumericalError(f"non-finite interval [{lo}, {hi}]")
        if lo > hi:
            raise ValidationError(f"interval lower end {lo} exceeds upper end {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, value: float) -> "Interval":
        return cls(value, value)

    @classmethod
    def ordered(cls, lo: float, hi: float, tol: float = 1e-12) -> "Interval":
        """Build [lo, hi], snapping inversions up to `tol` from round-off."""
        if lo > hi:
            if lo - hi > tol:
                raise NumericalError(f"bound inversion {lo} > {hi}")
            mid = 0.5 * (lo + hi)
            return cls(mid, mid)
        return cls(lo, hi)

    @classmethod
    def hull(cls, x: float, y: float) -> "Interval":
        return cls(min(x, y), max(x, y))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def max_abs(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol

    def issubset(self, other: "Interval", tol: float = 0.0) -> bool:
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol

    def to_dict(self) -> Dict[str, float]:
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class SensitivityParams:
    """Confounding budgets for the mediator and outcome mechanisms."""

    gamma_m: float = 1.0
    gamma_y: float = 1.0

    def __post_init__(self):
        for name in ("gamma_m", "gamma_y"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 1.0:
                raise ValidationError(f"{name} must be a finite value >= 1, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def uniform(cls, gamma: float) -> "SensitivityParams":
        return cls(gamma, gamma)


Target = Union[int, str]


@dataclass(frozen=True)
class EffectBounds:
    """Intervals on DE (conditioned on a_i), IE (conditioned on a_j) and SE."""

    de: Interval
    ie: Interval
    se: Interval
    de_naive: float
    ie_naive: float
    se_naive: float
    target_y: Target
    a_i: int
    a_j: int
    gamma_m: float
    gamma_y: float
    tv_naive: Optional[float] = None
    conditioning: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.conditioning:
            object.__setattr__(self, "conditioning", {
                "de": f"a={self.a_i}", "ie": f"a={self.a_j}", "se": "none",
            })

    def interval(self, effect: str) -> Interval:
        return getattr(self, effect)

    def naive(self, effect: str) -> float:
        return getattr(self, f"{effect}_naive")

    def max_abs(self) -> Dict[str, float]:
        return {e: self.interval(e).max_abs for e in EFFECTS}

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "gamma_m": self.gamma_m,
            "gamma_y": self.gamma_y,
            "a_i": self.a_i,
            "a_j": self.a_j,
            "y": self.target_y,
        }
        for e in EFFECTS:
            iv = self.interval(e)
            out[e] = {"lo": iv.lo, "hi": iv.hi, "naive": self.naive(e)}
        out["tv_naive"] = self.tv_naive
        out["conditioning"] = dict(self.conditioning)
        return out


@dataclass(frozen=True)
class CounterfactualEffects:
    """Point values of DE, IE, SE and their reversed counterparts.

    Built from nested counterfactual probabilities q[a, a_y, a_m] =
    P(y_{a_y, m_{a_m}} | A=a).
    """

    de: float
    ie: float
    se: float
    ie_rev: float
    se_rev: float
    tv: float
    target_y: Target
    a_i: int
    a_j: int

    @classmethod
    def from_nested(cls, q: np.ndarray, target_y: Target, a_i: int = 0, a_j: int = 1) -> "CounterfactualEffects":
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (2, 2, 2):
            raise ValidationError(f"nested counterfactual table must have shape (2, 2, 2), got {q.shape}")
        ai, aj = a_i, a_j
        ie_rev = q[ai, aj, ai] - q[ai, aj, aj]
        se_rev = q[ai, aj, aj] - q[aj, aj, aj]
        de = q[ai, aj, ai] - q[ai, ai, ai]
        return cls(
            de=float(de),
            ie=float(q[aj, ai, aj] - q[aj, ai, ai]),
            se=float(q[aj, ai, ai] - q[ai, ai, ai]),
            ie_rev=float(ie_rev),
            se_rev=float(se_rev),
            tv=float(de - ie_rev - se_rev),
            target_y=target_y,
            a_i=ai,
            a_j=aj,
        )

    def value(self, effect: str) -> float:
        return getattr(self, effect)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "y": self.target_y, "a_i": self.a_i, "a_j": self.a_j,
            "de": self.de, "ie": self.ie, "se": self.se,
            "ie_rev": self.ie_rev, "se_rev": self.se_rev, "tv": self.tv,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CounterfactualEffects":
        return cls(
            de=float(data["de"]), ie=float(data["ie"]), se=float(data["se"]),
            ie_rev=float(data["ie_rev"]), se_rev=float(data["se_rev"]), tv=float(data["tv"]),
            target_y=data["y"], a_i=int(data["a_i"]), a_j=int(data["a_j"]),
        )
