"""Distribution shifts under a sensitivity budget and closed-form effect bounds.

Every bound is a linear functional of three per-cell value arrays indexed
[z, a, m]: the outcome functional under the upper shift, under the lower shift,
and unshifted. `_LinearForm` holds the coefficients of such a functional, so
the same assembly serves data-level bounds (values from P(y|m,z,a)) and
predictor bounds (values f(a, z, m), where the coefficients are also the
Jacobian used for training).

Effect conventions for attribute values a_i, a_j:

    DE_{a_i,a_j}(y | a_i) = P(y_{a_j, m_{a_i}} | a_i) - P(y_{a_i} | a_i)
    IE_{a_i,a_j}(y | a_j) = P(y_{a_i, m_{a_j}} | a_j) - P(y_{a_i} | a_j)
    SE_{a_i,a_j}(y)       = P(y_{a_i} | a_j) - P(y | a_i)
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import EFFECTS, EffectBounds, Interval, SensitivityParams, Target
from .errors import NumericalError, ValidationError
from .estimation import DensityEstimator, ObsTables, ZGrid, query_density

logger = logging.getLogger(__name__)

MIN_ATTRIBUTE_PROB = 1e-6
PMF_TOL = 1e-8
ORDERINGS = ("natural", "value")
OBSERVED = "observed"


class ShiftDirection(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


UPPER = ShiftDirection.UPPER
LOWER = ShiftDirection.LOWER


@dataclass(frozen=True)
class ShiftedPmf:
    weights: np.ndarray
    tau: float
    w_lo: float
    w_hi: float
    direction: ShiftDirection


def shift_factors(treat_prob, gamma: float):
    """(w_lo, w_hi) = ((1 - 1/gamma) p + 1/gamma, (1 - gamma) p + gamma)."""
    p = np.asarray(treat_prob, dtype=np.float64)
    return (1.0 - 1.0 / gamma) * p + 1.0 / gamma, (1.0 - gamma) * p + gamma


def shift_threshold(gamma: float, direction: ShiftDirection) -> float:
    return gamma / (1.0 + gamma) if ShiftDirection(direction) is UPPER else 1.0 / (1.0 + gamma)


def _shift_ordered(pmf: np.ndarray, treat: np.ndarray, gamma: float, direction: ShiftDirection) -> np.ndarray:
    """Shift pmfs whose last axis is already in CDF order."""
    w_lo, w_hi = shift_factors(treat, gamma)
    w_lo, w_hi = w_lo[..., None], w_hi[..., None]
    tau = shift_threshold(gamma, direction)
    below, above = (w_lo, w_hi) if direction is UPPER else (w_hi, w_lo)
    cdf = np.cumsum(pmf, axis=-1)
    prev = cdf - pmf
    mass_below = np.minimum(np.clip(np.minimum(cdf, tau) - prev, 0.0, None), pmf)
    shifted = below * mass_below + above * (pmf - mass_below)
    return np.where(treat[..., None] >= 1.0, pmf, shifted)


def _shift_batch(
    pmf: np.ndarray,
    treat: np.ndarray,
    gamma: float,
    direction: ShiftDirection,
    order: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Vectorized shift over leading axes. `order[..., r]` is the r-th category in CDF order."""
    pmf = np.asarray(pmf, dtype=np.float64)
    if gamma == 1.0:
        return pmf.copy()
    treat = np.broadcast_to(np.asarray(treat, dtype=np.float64), pmf.shape[:-1])
    direction = ShiftDirection(direction)
    if order is None:
        return _shift_ordered(pmf, treat, gamma, direction)
    order = np.broadcast_to(order, pmf.shape)
    shifted = _shift_ordered(np.take_along_axis(pmf, order, axis=-1), treat, gamma, direction)
    return np.take_along_axis(shifted, np.argsort(order, axis=-1), axis=-1)


def _check_shift_args(treat_prob: float, gamma: float):
    if not 0.0 < treat_prob <= 1.0:
        raise ValidationError(f"attribute probability must lie in (0, 1], got {treat_prob}")
    if not np.isfinite(gamma) or gamma < 1.0:
        raise ValidationError(f"gamma must be a finite value >= 1, got {gamma}")


def shift_discrete(
    pmf: Sequence[float],
    treat_prob: float,
    gamma: float,
    direction: Union[ShiftDirection, str],
    ordering: Optional[Sequence[int]] = None,
) -> ShiftedPmf:
    """Upper or lower sensitivity shift of a categorical distribution.

    Mass below the threshold tau (in the given category order) is scaled by one
    factor and mass above by the other; a category straddling tau is split.
    """
    direction = ShiftDirection(direction)
    p = np.asarray(pmf, dtype=np.float64)
    _check_shift_args(treat_prob, gamma)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("pmf must be a non-empty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PMF_TOL:
        raise ValidationError(f"pmf is not normalized (sum {p.sum():.12g})")
    order = None
    if ordering is not None:
        order = np.asarray(ordering, dtype=np.int64)
        if sorted(order.tolist()) != list(range(p.size)):
            raise ValidationError(f"ordering {order.tolist()} is not a permutation of the categories")
    w_lo, w_hi = shift_factors(treat_prob, gamma)
    weights = _shift_batch(p, np.float64(treat_prob), gamma, direction, order)
    return ShiftedPmf(weights, shift_threshold(gamma, direction), float(w_lo), float(w_hi), direction)


def shift_continuous_weights(
    sorted_samples: Sequence[float],
    treat_prob: float,
    gamma: float,
    direction: Union[ShiftDirection, str],
) -> np.ndarray:
    """Per-sample importance weights (mean one) shifting the empirical outcome distribution."""
    s = np.asarray(sorted_samples, dtype=np.float64)
    _check_shift_args(treat_prob, gamma)
    if s.size == 0:
        raise ValidationError("no outcome samples")
    if np.any(np.diff(s) < 0):
        raise ValidationError("outcome samples must be sorted ascending")
    uniform = np.full(s.size, 1.0 / s.size)
    return s.size * _shift_batch(uniform, np.float64(treat_prob), gamma, ShiftDirection(direction))


# -- outcome functionals -----------------------------------------------------

def outcome_layout(target: Target, ky: int) -> Tuple[np.ndarray, np.ndarray]:
    """Functional values per category and the category order used for Y shifts."""
    if target == "expectation":
        return np.arange(ky, dtype=np.float64), np.arange(ky)
    y = int(target)
    if not 0 <= y < ky:
        raise ValidationError(f"outcome value {y} outside 0..{ky - 1}")
    values = np.zeros(ky)
    values[y] = 1.0
    order = np.array([k for k in range(ky) if k != y] + [y])
    return values, order


def _outcome_values(tables: ObsTables, target: Target, gamma_y: float) -> Dict[Any, np.ndarray]:
    """Per-cell outcome functional: unshifted and under both Y shifts, shape (nz, 2, km)."""
    treat = tables.p_a_given_z[:, :, None]
    if tables.y_domain.is_discrete:
        f, order = outcome_layout(target, tables.y_domain.cardinality)
        py = tables.p_y_given_mza
        treat = np.broadcast_to(treat, py.shape[:-1])
        return {
            OBSERVED: py @ f,
            UPPER: _shift_batch(py, treat, gamma_y, UPPER, order) @ f,
            LOWER: _shift_batch(py, treat, gamma_y, LOWER, order) @ f,
        }
    if target != "expectation":
        raise ValidationError("a continuous outcome only supports the 'expectation' target")
    shape = (tables.nz, 2, tables.km)
    out = {key: np.zeros(shape) for key in (OBSERVED, UPPER, LOWER)}
    for zi in range(tables.nz):
        for a in (0, 1):
            q = float(tables.p_a_given_z[zi, a])
            for m in range(tables.km):
                s = tables.sorted_samples(zi, a, m)
                out[OBSERVED][zi, a, m] = s.mean()
                for direction in (UPPER, LOWER):
                    w = shift_continuous_weights(s, q, gamma_y, direction)
                    out[direction][zi, a, m] = np.mean(s * w)
    return out


def _mediator_shifts(
    p_a_given_z: np.ndarray,
    p_m: np.ndarray,
    values: Dict[Any, np.ndarray],
    gamma_m: float,
    ordering: str,
) -> Dict[ShiftDirection, np.ndarray]:
    """Shifted P(m|z, a_m) for every outcome arm a_y: shape (..., nz, 2[a_y], 2[a_m], km).

    With value ordering, mediator cells are sorted by the outcome functional
    of the arm they are paired with.
    """
    if ordering not in ORDERINGS:
        raise ValidationError(f"ordering must be one of {ORDERINGS}, got '{ordering}'")
    km = p_m.shape[-1]
    target_shape = p_m.shape[:-2] + (2, 2, km)
    pm = np.broadcast_to(p_m[..., None, :, :], target_shape)
    treat = np.broadcast_to(p_a_given_z[..., None, :], target_shape[:-1])
    shifted = {}
    for direction in (UPPER, LOWER):
        order = None
        if ordering == "value":
            ranks = np.argsort(values[direction], axis=-1, kind="stable")
            order = np.broadcast_to(ranks[..., :, None, :], target_shape)
        shifted[direction] = _shift_batch(pm, treat, gamma_m, direction, order)
    return shifted


# -- linear forms ------------------------------------------------------------

@dataclass
class _LinearForm:
    """sum(upper * v_up + lower * v_lo + observed * v_obs) over the last three axes."""

    upper: np.ndarray
    lower: np.ndarray
    observed: np.ndarray

    def __add__(self, other: "_LinearForm") -> "_LinearForm":
        return _LinearForm(self.upper + other.upper, self.lower + other.lower, self.observed + other.observed)

    def __neg__(self) -> "_LinearForm":
        return _LinearForm(-self.upper, -self.lower, -self.observed)

    def __sub__(self, other: "_LinearForm") -> "_LinearForm":
        return self + (-other)

    def evaluate(self, values: Dict[Any, np.ndarray]) -> np.ndarray:
        total = self.upper * values[UPPER] + self.lower * values[LOWER] + self.observed * values[OBSERVED]
        return total.sum(axis=(-3, -2, -1))

    def jacobian(self) -> np.ndarray:
        """Gradient with respect to a single value array used in all three slots."""
        return self.upper + self.lower + self.observed


class Terms:
    """Coefficients of the counterfactual terms built from one set of tables."""

    def __init__(self, p_z, p_a_given_z, p_m, shifted: Dict[ShiftDirection, np.ndarray]):
        self.p_z = np.asarray(p_z, dtype=np.float64)
        self.pa = np.asarray(p_a_given_z, dtype=np.float64)
        self.pm = np.asarray(p_m, dtype=np.float64)
        self.shifted = shifted
        self.p_a = np.einsum("...z,...za->...a", self.p_z, self.pa)
        if np.any(self.p_a < MIN_ATTRIBUTE_PROB):
            raise NumericalError(f"attribute probability P(a) = {np.min(self.p_a):.3g} is too small to condition on")
        self.p_z_given_a = self.p_z[..., None] * self.pa / self.p_a[..., None, :]

    @classmethod
    def unshifted(cls, p_z, p_a_given_z, p_m) -> "Terms":
        p_m = np.asarray(p_m, dtype=np.float64)
        km = p_m.shape[-1]
        same = np.broadcast_to(p_m[..., None, :, :], p_m.shape[:-2] + (2, 2, km))
        return cls(p_z, p_a_given_z, p_m, {UPPER: same, LOWER: same})

    def _zeros(self) -> np.ndarray:
        return np.zeros(self.pm.shape)

    def _form(self, direction: ShiftDirection, coef: np.ndarray, observed: np.ndarray) -> _LinearForm:
        zero = self._zeros()
        if direction is UPPER:
            return _LinearForm(coef, zero, observed)
        return _LinearForm(zero, coef, observed)

    def _ratio(self, ai: int, aj: int) -> np.ndarray:
        return (self.p_a[..., ai] / self.p_a[..., aj])[..., None, None, None]

    def observed(self, a: int) -> _LinearForm:
        """E[Y | A = a]."""
        obs = self._zeros()
        obs[..., :, a, :] = self.p_z_given_a[..., :, a, None] * self.pm[..., :, a, :]
        zero = self._zeros()
        return _LinearForm(zero, zero.copy(), obs)

    def single(self, ai: int, aj: int, direction: ShiftDirection) -> _LinearForm:
        """Shifted P(y_{a_i} | a_j)."""
        if ai == aj:
            return self.observed(ai)
        coef = self._zeros()
        coef[..., :, ai, :] = (self.p_z[..., :, None] * self.shifted[direction][..., :, ai, ai, :]
                               / self.p_a[..., aj, None, None])
        return self._form(direction, coef, -self._ratio(ai, aj) * self.observed(ai).observed)

    def nested(self, ai: int, aj: int, direction: ShiftDirection) -> _LinearForm:
        """Shifted P(y_{a_i, m_{a_j}} | a_j).

        The observed part is weighted by P(z | a_i) rather than P(z | a_j),
        so the term collapses to the plug-in value when nothing is shifted.
        """
        if ai == aj:
            return self.observed(ai)
        coef = self._zeros()
        coef[..., :, ai, :] = (self.p_z[..., :, None] * self.shifted[direction][..., :, ai, aj, :]
                               / self.p_a[..., aj, None, None])
        obs = self._zeros()
        obs[..., :, ai, :] = -self.p_z_given_a[..., :, ai, None] * self.pm[..., :, aj, :]
        return self._form(direction, coef, self._ratio(ai, aj) * obs)


def effect_forms(terms: Terms, ai: int, aj: int) -> Dict[Tuple[str, ShiftDirection], _LinearForm]:
    e_ai = terms.observed(ai)
    return {
        ("de", UPPER): terms.nested(aj, ai, UPPER) - e_ai,
        ("de", LOWER): terms.nested(aj, ai, LOWER) - e_ai,
        ("ie", UPPER): terms.nested(ai, aj, UPPER) - terms.single(ai, aj, LOWER),
        ("ie", LOWER): terms.nested(ai, aj, LOWER) - terms.single(ai, aj, UPPER),
        ("se", UPPER): terms.single(ai, aj, UPPER) - e_ai,
        ("se", LOWER): terms.single(ai, aj, LOWER) - e_ai,
    }


def _check_arms(a_i: int, a_j: int, distinct: bool = True):
    for a in (a_i, a_j):
        if a not in (0, 1):
            raise ValidationError(f"attribute values must be 0 or 1, got {a}")
    if distinct and a_i == a_j:
        raise ValidationError("a_i and a_j must differ")


def _naive_values(v_obs: np.ndarray) -> Dict[Any, np.ndarray]:
    return {UPPER: v_obs, LOWER: v_obs, OBSERVED: v_obs}


def total_variation(de: float, ie_rev: float, se_rev: float) -> float:
    """TV_{a_i,a_j} = DE_{a_i,a_j}(y|a_i) - IE_{a_j,a_i}(y|a_i) - SE_{a_j,a_i}(y)."""
    return de - ie_rev - se_rev


def _naive_tv(naive_terms: Terms, v_obs: np.ndarray, ai: int, aj: int) -> np.ndarray:
    values = _naive_values(v_obs)
    forward = effect_forms(naive_terms, ai, aj)
    reverse = effect_forms(naive_terms, aj, ai)
    return total_variation(
        forward[("de", UPPER)].evaluate(values),
        reverse[("ie", UPPER)].evaluate(values),
        reverse[("se", UPPER)].evaluate(values),
    )


def _interval(lower: float, upper: float, ordering: str) -> Interval:
    # natural ordering does not order the endpoints for non-monotone integrands
    if ordering == "natural":
        return Interval.hull(lower, upper)
    return Interval.ordered(lower, upper, tol=1e-9)


def _data_terms(tables: ObsTables, params: SensitivityParams, target: Target, ordering: str):
    values = _outcome_values(tables, target, params.gamma_y)
    shifted = _mediator_shifts(tables.p_a_given_z, tables.p_m_given_za, values, params.gamma_m, ordering)
    return values, Terms(tables.p_z, tables.p_a_given_z, tables.p_m_given_za, shifted)


def bound_counterfactual_single(
    tables: ObsTables,
    params: SensitivityParams,
    y: Target,
    a_i: int,
    a_j: int,
    direction: Union[ShiftDirection, str],
    ordering: str = "natural",
) -> float:
    """Upper or lower bound on P(y_{a_i} | a_j)."""
    _check_arms(a_i, a_j, distinct=False)
    values, terms = _data_terms(tables, params, y, ordering)
    return float(terms.single(a_i, a_j, ShiftDirection(direction)).evaluate(values))


def bound_counterfactual_nested(
    tables: ObsTables,
    params: SensitivityParams,
    y: Target,
    a_i: int,
    a_j: int,
    direction: Union[ShiftDirection, str],
    ordering: str = "natural",
) -> float:
    """Upper or lower bound on P(y_{a_i, m_{a_j}} | a_j)."""
    _check_arms(a_i, a_j, distinct=False)
    values, terms = _data_terms(tables, params, y, ordering)
    return float(terms.nested(a_i, a_j, ShiftDirection(direction)).evaluate(values))


def bound_effects(
    tables: ObsTables,
    params: SensitivityParams,
    y: Target = 1,
    a_i: int = 0,
    a_j: int = 1,
    ordering: str = "natural",
) -> EffectBounds:
    """Bounds on DE, IE and SE together with their unconfounded plug-in values."""
    _check_arms(a_i, a_j)
    values, terms = _data_terms(tables, params, y, ordering)
    forms = effect_forms(terms, a_i, a_j)
    naive_terms = Terms.unshifted(tables.p_z, tables.p_a_given_z, tables.p_m_given_za)
    naive_forms = effect_forms(naive_terms, a_i, a_j)
    naive_vals = _naive_values(values[OBSERVED])

    intervals, naive = {}, {}
    for e in EFFECTS:
        hi = float(forms[(e, UPPER)].evaluate(values))
        lo = float(forms[(e, LOWER)].evaluate(values))
        intervals[e] = _interval(lo, hi, ordering)
        naive[e] = float(naive_forms[(e, UPPER)].evaluate(naive_vals))
    tv = float(_naive_tv(naive_terms, values[OBSERVED], a_i, a_j))
    logger.debug("bounds at gamma_m=%g gamma_y=%g: %s", params.gamma_m, params.gamma_y, intervals)
    return EffectBounds(
        de=intervals["de"], ie=intervals["ie"], se=intervals["se"],
        de_naive=naive["de"], ie_naive=naive["ie"], se_naive=naive["se"],
        target_y=y, a_i=a_i, a_j=a_j, gamma_m=params.gamma_m, gamma_y=params.gamma_y, tv_naive=tv,
    )


def bound_sweep(
    tables: ObsTables,
    gammas: Sequence[float],
    y: Target = 1,
    a_i: int = 0,
    a_j: int = 1,
    ordering: str = "natural",
) -> List[EffectBounds]:
    """Bounds for each gamma (used for both budgets) on a strictly ascending grid."""
    grid = [float(g) for g in gammas]
    if not grid:
        raise ValidationError("gamma grid is empty")
    if any(g < 1.0 for g in grid):
        raise ValidationError(f"gamma values must be >= 1, got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError(f"gamma grid must be strictly ascending, got {grid}")
    return [bound_effects(tables, SensitivityParams.uniform(g), y, a_i, a_j, ordering) for g in grid]


# -- predictor-substituted bounds -------------------------------------------

@dataclass
class ExpectedBounds:
    """Bounds on E[f] effects plus the Jacobian of each endpoint w.r.t. the grid values."""

    bounds: EffectBounds
    upper: Dict[str, float]
    lower: Dict[str, float]
    jacobian: Dict[Tuple[str, ShiftDirection], np.ndarray]

    def constraint_values(self) -> np.ndarray:
        return np.array([max(abs(self.upper[e]), abs(self.lower[e])) for e in EFFECTS])

    def constraint_gradients(self) -> List[np.ndarray]:
        """Gradient of max(|upper|, |lower|) per effect; ties use the upper branch."""
        grads = []
        for e in EFFECTS:
            up, lo = self.upper[e], self.lower[e]
            if abs(up) >= abs(lo):
                grads.append(np.sign(up) * self.jacobian[(e, UPPER)])
            else:
                grads.append(np.sign(lo) * self.jacobian[(e, LOWER)])
        return grads


def expected_bounds_from_grid(
    f_grid: np.ndarray,
    p_z: np.ndarray,
    p_a_given_z: np.ndarray,
    p_m_given_za: np.ndarray,
    gamma_m: float,
    a_i: int = 0,
    a_j: int = 1,
    ordering: str = "natural",
) -> ExpectedBounds:
    """Effect bounds with a fixed value array f[z, a, m] in place of every outcome term.

    Only the mediator shift remains; the result is linear in `f_grid` for a
    fixed ordering, so the Jacobians are exact.
    """
    _check_arms(a_i, a_j)
    if gamma_m < 1.0:
        raise ValidationError(f"gamma_m must be >= 1, got {gamma_m}")
    f = np.asarray(f_grid, dtype=np.float64)
    if f.shape != np.shape(p_m_given_za):
        raise ValidationError(f"predictor grid shape {f.shape} does not match P(m|z,a) {np.shape(p_m_given_za)}")
    values = _naive_values(f)
    shifted = _mediator_shifts(np.asarray(p_a_given_z), np.asarray(p_m_given_za), values, gamma_m, ordering)
    terms = Terms(p_z, p_a_given_z, p_m_given_za, shifted)
    forms = effect_forms(terms, a_i, a_j)
    naive_terms = Terms.unshifted(p_z, p_a_given_z, p_m_given_za)
    naive_forms = effect_forms(naive_terms, a_i, a_j)

    upper, lower, naive, intervals, jac = {}, {}, {}, {}, {}
    for e in EFFECTS:
        upper[e] = float(forms[(e, UPPER)].evaluate(values))
        lower[e] = float(forms[(e, LOWER)].evaluate(values))
        naive[e] = float(naive_forms[(e, UPPER)].evaluate(values))
        intervals[e] = Interval.hull(lower[e], upper[e])
        for direction in (UPPER, LOWER):
            jac[(e, direction)] = forms[(e, direction)].jacobian()
    bounds = EffectBounds(
        de=intervals["de"], ie=intervals["ie"], se=intervals["se"],
        de_naive=naive["de"], ie_naive=naive["ie"], se_naive=naive["se"],
        target_y="expectation", a_i=a_i, a_j=a_j, gamma_m=float(gamma_m), gamma_y=1.0,
        tv_naive=float(_naive_tv(naive_terms, f, a_i, a_j)),
    )
    return ExpectedBounds(bounds, upper, lower, jac)


ScoreFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def grid_inputs(z_values: np.ndarray, km: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened (a, z, m) query rows covering z_values x {0, 1} x 0..km-1 in [z, a, m] order."""
    g = len(z_values)
    zi, a, m = (idx.reshape(-1) for idx in np.indices((g, 2, km)))
    return a, np.asarray(z_values)[zi], m


def density_grid(g_a: DensityEstimator, g_m: DensityEstimator, z_grid: ZGrid) -> Tuple[np.ndarray, np.ndarray]:
    """P(a|z) with shape (g, 2) and P(m|z,a) with shape (g, 2, km) on the grid."""
    p_a = query_density(g_a, z_grid.values)
    g = len(z_grid)
    p_m = np.stack([query_density(g_m, z_grid.values, np.full(g, a)) for a in (0, 1)], axis=1)
    if np.any(p_m.sum(axis=-1) <= 0):
        raise NumericalError("mediator estimator returned zero probability everywhere")
    return p_a, p_m


def bound_effects_expected(
    predictor: Union[ScoreFn, Any],
    g_a: DensityEstimator,
    g_m: DensityEstimator,
    z_grid: ZGrid,
    gamma_m: float,
    a_i: int = 0,
    a_j: int = 1,
    ordering: str = "natural",
    output_index: Optional[int] = None,
) -> ExpectedBounds:
    """Bounds on the effects of a predictor's score E[f(a, z, m)].

    `predictor` is a callable `(a, z, m) -> scores` or an object with such a
    `predict` method. Multi-output scores need `output_index`.
    """
    if z_grid is None or len(z_grid) == 0:
        raise ValidationError("missing confounder support")
    p_a, p_m = density_grid(g_a, g_m, z_grid)
    km = p_m.shape[-1]
    a, z, m = grid_inputs(z_grid.values, km)
    score = getattr(predictor, "predict", predictor)
    out = np.asarray(score(a, z, m), dtype=np.float64)
    if out.ndim == 2:
        if output_index is None:
            if out.shape[1] != 1:
                raise ValidationError("multi-output predictor needs an output index")
            output_index = 0
        out = out[:, output_index]
    f_grid = out.reshape(len(z_grid), 2, km)
    return expected_bounds_from_grid(f_grid, z_grid.weights, p_a, p_m, gamma_m, a_i, a_j, ordering)


# -- FACE and path-specific individual bounds --------------------------------

@dataclass(frozen=True)
class FaceBounds:
    a_baseline: int
    per_attribute: Dict[int, Interval]
    naive: Dict[int, float]
    aface: Interval
    aface_naive: float
    gamma_m: float
    gamma_y: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma_m": self.gamma_m,
            "gamma_y": self.gamma_y,
            "a_baseline": self.a_baseline,
            "face": {str(a): {**iv.to_dict(), "naive": self.naive[a]} for a, iv in self.per_attribute.items()},
            "aface": {**self.aface.to_dict(), "naive": self.aface_naive},
        }


def bound_face(
    tables: ObsTables,
    params: SensitivityParams,
    a_baseline: int = 0,
    ordering: str = "natural",
) -> FaceBounds:
    """Bounds on E[Y_a] - E[Y_{a_0}] for every non-baseline a and their average (AFACE)."""
    _check_arms(a_baseline, a_baseline, distinct=False)
    values, terms = _data_terms(tables, params, "expectation", ordering)
    p_z = tables.p_z[:, None]

    def interventional(a: int, direction: Any) -> float:
        if direction == OBSERVED:
            dist, v = tables.p_m_given_za[:, a, :], values[OBSERVED][:, a, :]
        else:
            dist, v = terms.shifted[direction][:, a, a, :], values[direction][:, a, :]
        return float(np.sum(p_z * v * dist))

    per_attribute, naive = {}, {}
    for a in (0, 1):
        if a == a_baseline:
            continue
        hi = interventional(a, UPPER) - interventional(a_baseline, LOWER)
        lo = interventional(a, LOWER) - interventional(a_baseline, UPPER)
        per_attribute[a] = _interval(lo, hi, ordering)
        naive[a] = interventional(a, OBSERVED) - interventional(a_baseline, OBSERVED)
    aface = Interval(
        float(np.mean([iv.lo for iv in per_attribute.values()])),
        float(np.mean([iv.hi for iv in per_attribute.values()])),
    )
    return FaceBounds(
        a_baseline=a_baseline, per_attribute=per_attribute, naive=naive, aface=aface,
        aface_naive=float(np.mean(list(naive.values()))), gamma_m=params.gamma_m, gamma_y=params.gamma_y,
    )


def bound_individual_path(
    tables: ObsTables,
    params: SensitivityParams,
    z: Union[float, Sequence[float]],
    a_0: int,
    a_1: int,
    ordering: str = "natural",
) -> Interval:
    """Bounds on E[Y_{a_1 | A->M->Y} - Y_{a_0} | Z = z].

    Only the mediator is switched to a_1; the outcome mechanism stays at a_0.
    """
    _check_arms(a_0, a_1, distinct=False)
    zi = tables.z_index(z)
    values, terms = _data_terms(tables, params, "expectation", ordering)
    v_up, v_lo = values[UPPER][zi, a_0], values[LOWER][zi, a_0]
    s_up, s_lo = terms.shifted[UPPER][zi, a_0], terms.shifted[LOWER][zi, a_0]
    upper = float(v_up @ s_up[a_1] - v_lo @ s_lo[a_0])
    lower = float(v_lo @ s_lo[a_1] - v_up @ s_up[a_0])
    return _interval(lower, upper, ordering)
