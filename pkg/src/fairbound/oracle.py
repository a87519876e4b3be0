"""Brute-force search over discrete SCMs compatible with observed tables.

Candidates have latents U_IE (into A and M) and U_DE (into A and Y), each with
`latent_cardinality` values and a prior that may depend on Z. Every candidate
is built to reproduce the observed tables and to keep the latent posterior
ratios P(u | z, a) / P(u | z) inside the sensitivity box; acceptance re-checks
both by enumeration. The min/max effect over accepted candidates is an inner
approximation of the sharp interval.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .bounds import LOWER, OBSERVED, UPPER, Terms, bound_effects, effect_forms, outcome_layout, shift_factors
from .core import EFFECTS, CounterfactualEffects, EffectBounds, Interval, SensitivityParams, Target, VariableDomain
from .errors import NumericalError, SearchError, ValidationError
from .estimation import ObsTables

logger = logging.getLogger(__name__)

EFFECT_MODES = ("unnested", "counterfactual")
RATIO_TOL = 1e-9
CONTAINMENT_TOL = 1e-6
SINKHORN_ITERATIONS = 2000
SINKHORN_TOL = 1e-11
KAPPA_MARGIN = 0.999
MAX_KERNEL_SHARPNESS = 6.0


@dataclass
class DiscreteScm:
    """Conditional tables of a discrete SCM; every array may carry one leading batch axis.

    Shapes (without the batch axis):
        p_z           (nz,)
        p_ie          (nz, k)              P(u_ie | z)
        p_de          (nz, k)              P(u_de | z)
        p_a           (nz, k, k, 2)        P(a | z, u_ie, u_de)
        p_m           (nz, 2, k, km)       P(m | z, a, u_ie)
        p_y           (nz, 2, km, k, ky)   P(y | z, a, m, u_de)
    """

    p_z: np.ndarray
    p_ie: np.ndarray
    p_de: np.ndarray
    p_a: np.ndarray
    p_m: np.ndarray
    p_y: np.ndarray

    def check(self, tol: float = 1e-9):
        for name in ("p_z", "p_ie", "p_de", "p_a", "p_m", "p_y"):
            table = getattr(self, name)
            if np.any(table < -tol):
                raise ValidationError(f"{name} has negative entries")
            axis = 0 if name == "p_z" and table.ndim == 1 else -1
            if np.any(np.abs(table.sum(axis=axis) - 1.0) > tol):
                raise ValidationError(f"{name} is not normalized")

    def candidate(self, index: int) -> "DiscreteScm":
        return DiscreteScm(*(getattr(self, f)[index] for f in ("p_z", "p_ie", "p_de", "p_a", "p_m", "p_y")))

    def observational(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """P(z), P(a|z), P(m|z,a), P(y|z,a,m) implied by the mechanisms."""
        joint_u = self.p_ie[..., :, :, None] * self.p_de[..., :, None, :]
        p_a = np.einsum("...zid,...zida->...za", joint_u, self.p_a)
        post = np.einsum("...zid,...zida->...zaid", joint_u, self.p_a) / _safe(p_a)[..., None, None]
        p_idm = post[..., None] * self.p_m[..., :, :, :, None, :]
        p_dm = p_idm.sum(axis=-3)
        p_m = p_dm.sum(axis=-2)
        p_d_given_m = np.swapaxes(p_dm, -1, -2) / _safe(p_m)[..., None]
        p_y = np.einsum("...zamd,...zamdy->...zamy", p_d_given_m, self.p_y)
        return self.p_z, p_a, p_m, p_y

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name).tolist() for name in ("p_z", "p_ie", "p_de", "p_a", "p_m", "p_y")}


def _safe(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, 1.0)


def _outcome_functional(scm: DiscreteScm, target: Target) -> np.ndarray:
    values, _ = outcome_layout(target, scm.p_y.shape[-1])
    return scm.p_y @ values


def _nested_table(scm: DiscreteScm, target: Target) -> np.ndarray:
    """q[..., a, a_y, a_m] = P(y_{a_y, m_{a_m}} | A = a) by enumeration."""
    vy = _outcome_functional(scm, target)
    joint_u = scm.p_ie[..., :, :, None] * scm.p_de[..., :, None, :]
    weights = joint_u[..., None] * scm.p_a
    inner = np.einsum("...zcim,...zymd->...zcyid", scm.p_m, vy)
    q = np.einsum("...z,...zida,...zcyid->...ayc", scm.p_z, weights, inner)
    p_a = np.einsum("...z,...zida->...a", scm.p_z, weights)
    if np.any(p_a <= 0):
        raise NumericalError("an attribute value has zero probability in the SCM")
    return q / p_a[..., :, None, None]


def _unnested_values(scm: DiscreteScm, target: Target):
    """Interventional mediator law and outcome values plus the observed outcome values."""
    _, p_a, p_m, _ = scm.observational()
    vy = _outcome_functional(scm, target)
    s_do = np.einsum("...zi,...zaim->...zam", scm.p_ie, scm.p_m)
    v_do = np.einsum("...zd,...zamd->...zam", scm.p_de, vy)
    joint_u = scm.p_ie[..., :, :, None] * scm.p_de[..., :, None, :]
    post = np.einsum("...zid,...zida->...zaid", joint_u, scm.p_a) / _safe(p_a)[..., None, None]
    p_dm = np.einsum("...zaid,...zaim->...zadm", post, scm.p_m)
    v_obs = np.einsum("...zadm,...zamd->...zam", p_dm, vy) / _safe(p_m)
    return p_a, p_m, s_do, v_do, v_obs


def _unnested_effects(scm: DiscreteScm, target: Target, a_i: int, a_j: int) -> Dict[str, np.ndarray]:
    p_a, p_m, s_do, v_do, v_obs = _unnested_values(scm, target)
    km = p_m.shape[-1]
    shifted = np.broadcast_to(s_do[..., None, :, :], s_do.shape[:-2] + (2, 2, km))
    p_z = np.broadcast_to(scm.p_z, p_a.shape[:-1])
    terms = Terms(p_z, p_a, p_m, {UPPER: shifted, LOWER: shifted})
    values = {UPPER: v_do, LOWER: v_do, OBSERVED: v_obs}
    forward = effect_forms(terms, a_i, a_j)
    reverse = effect_forms(terms, a_j, a_i)
    out = {e: forward[(e, UPPER)].evaluate(values) for e in EFFECTS}
    out["ie_rev"] = reverse[("ie", UPPER)].evaluate(values)
    out["se_rev"] = reverse[("se", UPPER)].evaluate(values)
    return out


def _counterfactual_effects(scm: DiscreteScm, target: Target, a_i: int, a_j: int) -> Dict[str, np.ndarray]:
    q = _nested_table(scm, target)
    ai, aj = a_i, a_j
    return {
        "de": q[..., ai, aj, ai] - q[..., ai, ai, ai],
        "ie": q[..., aj, ai, aj] - q[..., aj, ai, ai],
        "se": q[..., aj, ai, ai] - q[..., ai, ai, ai],
        "ie_rev": q[..., ai, aj, ai] - q[..., ai, aj, aj],
        "se_rev": q[..., ai, aj, aj] - q[..., aj, aj, aj],
    }


def _batch_effects(scm: DiscreteScm, target: Target, a_i: int, a_j: int, mode: str) -> Dict[str, np.ndarray]:
    if mode == "counterfactual":
        return _counterfactual_effects(scm, target, a_i, a_j)
    return _unnested_effects(scm, target, a_i, a_j)


def evaluate_scm_effects(
    scm: DiscreteScm,
    y: Target = 1,
    a_i: int = 0,
    a_j: int = 1,
    mode: str = "counterfactual",
) -> CounterfactualEffects:
    """Exact DE, IE, SE of one SCM by summing over all variable and latent values.

    `counterfactual` evaluates the nested counterfactuals directly; `unnested`
    combines interventional and observed terms the way the closed-form bounds do.
    """
    if mode not in EFFECT_MODES:
        raise ValidationError(f"effect mode must be one of {EFFECT_MODES}, got '{mode}'")
    if scm.p_z.ndim != 1:
        raise ValidationError("evaluate_scm_effects takes a single SCM, not a batch")
    scm.check()
    values = _batch_effects(scm, y, a_i, a_j, mode)
    de, ie_rev, se_rev = (float(values[k]) for k in ("de", "ie_rev", "se_rev"))
    return CounterfactualEffects(
        de=de, ie=float(values["ie"]), se=float(values["se"]), ie_rev=ie_rev, se_rev=se_rev,
        tv=de - ie_rev - se_rev, target_y=y, a_i=a_i, a_j=a_j,
    )


# -- candidate construction ---------------------------------------------------

@dataclass(frozen=True)
class CompatSearchConfig:
    latent_cardinality: int = 2
    budget: int = 100_000
    seed: int = 0
    tolerance: float = 1e-3
    gamma_cap: Optional[float] = None
    refine_rounds: int = 0
    batch_size: int = 2048
    effect_mode: str = "counterfactual"

    def __post_init__(self):
        if self.budget < 1:
            raise ValidationError(f"search budget must be >= 1, got {self.budget}")
        if self.latent_cardinality < 2:
            raise ValidationError(f"latent cardinality must be >= 2, got {self.latent_cardinality}")
        if self.tolerance < 0:
            raise ValidationError("tolerance must be >= 0")
        if self.gamma_cap is not None and self.gamma_cap < 1:
            raise ValidationError(f"gamma_cap must be >= 1, got {self.gamma_cap}")
        if self.refine_rounds < 0 or self.batch_size < 1:
            raise ValidationError("refine_rounds must be >= 0 and batch_size >= 1")
        if self.effect_mode not in EFFECT_MODES:
            raise ValidationError(f"effect mode must be one of {EFFECT_MODES}, got '{self.effect_mode}'")


def _draw_raw(rng: np.random.Generator, size: int, nz: int, k: int, km: int, ky: int) -> Dict[str, np.ndarray]:
    """Unconstrained candidate parameters; `_build_candidates` maps them onto valid SCMs."""
    return {
        "prior_ie": rng.normal(size=(size, nz, k)),
        "prior_de": rng.normal(size=(size, nz, k)),
        "dir_ie": rng.normal(size=(size, nz, k)),
        "dir_de": rng.normal(size=(size, nz, k)),
        "level_ie": rng.random((size, nz)),
        "level_de": rng.random((size, nz)),
        "reach_ie": rng.random((size, nz)),
        "reach_de": rng.random((size, nz)),
        "kernel_m": rng.normal(size=(size, nz, 2, k, km)),
        "kernel_y": rng.normal(size=(size, nz, 2, km, k, ky)),
        "sharp_m": rng.uniform(0.0, MAX_KERNEL_SHARPNESS, size=size),
        "sharp_y": rng.uniform(0.0, MAX_KERNEL_SHARPNESS, size=size),
    }


def _perturb(raw: Dict[str, np.ndarray], index: int, count: int, rng: np.random.Generator, scale: float):
    out = {}
    for name, value in raw.items():
        base = np.repeat(value[index:index + 1], count, axis=0)
        noise = rng.normal(scale=scale, size=base.shape)
        if name.startswith(("level", "reach")):
            out[name] = np.clip(base + noise * 0.25, 0.0, 1.0)
        elif name.startswith("sharp"):
            out[name] = np.clip(base + noise, 0.0, MAX_KERNEL_SHARPNESS)
        else:
            out[name] = base + noise
    return out


def _centered_direction(raw_dir: np.ndarray, prior: np.ndarray) -> np.ndarray:
    d = raw_dir - np.sum(prior * raw_dir, axis=-1, keepdims=True)
    scale = np.max(np.abs(d), axis=-1, keepdims=True)
    return d / np.where(scale > 0, scale, 1.0)


def _max_step(d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Largest s >= 0 with lo <= s * d <= hi elementwise (lo <= 0 <= hi), reduced over the last axis."""
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(d > 0, hi / d, np.inf)
        down = np.where(d < 0, lo / d, np.inf)
    return np.min(np.minimum(up, down), axis=-1)


def _step_for_ratio(coef: np.ndarray, box_lo: np.ndarray, box_hi: np.ndarray) -> np.ndarray:
    """Largest s with box_lo <= 1 + s * coef <= box_hi; coef is (b, z, a, m, d), the box (b, z, a)."""
    lo = np.broadcast_to((box_lo - 1.0)[..., None, None], coef.shape)
    hi = np.broadcast_to((box_hi - 1.0)[..., None, None], coef.shape)
    flat = coef.shape[:2] + (-1,)
    return _max_step(coef.reshape(flat), lo.reshape(flat), hi.reshape(flat))


def _sinkhorn(kernel: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Coupling with the given row and column marginals, returned as row conditionals.

    Also returns, per leading batch entry, whether the row marginals were met.
    """
    plan = kernel.copy()
    batch_axes = tuple(range(1, plan.ndim - 1))
    for _ in range(SINKHORN_ITERATIONS):
        row_sum = plan.sum(axis=-1, keepdims=True)
        plan *= np.divide(rows[..., None], row_sum, out=np.zeros_like(row_sum), where=row_sum > 0)
        col_sum = plan.sum(axis=-2, keepdims=True)
        plan *= np.divide(cols[..., None, :], col_sum, out=np.zeros_like(col_sum), where=col_sum > 0)
        error = np.abs(plan.sum(axis=-1) - rows).max(axis=batch_axes)
        if np.all(error < SINKHORN_TOL):
            break
    row_sum = plan.sum(axis=-1, keepdims=True)
    conditional = np.divide(plan, row_sum, out=np.full_like(plan, 1.0 / plan.shape[-1]), where=row_sum > 0)
    return conditional, error < SINKHORN_TOL


def _ratio_box(p_treat: np.ndarray, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Allowed range of P(u | z, a) / P(u | z) for treatment probability P(a | z)."""
    w_lo, w_hi = shift_factors(p_treat, gamma)
    return 1.0 / w_hi, 1.0 / w_lo


def _build_candidates(
    raw: Dict[str, np.ndarray],
    tables: ObsTables,
    params: SensitivityParams,
    gamma_cap: Optional[float],
) -> Tuple[DiscreteScm, np.ndarray]:
    """Map raw parameters onto SCMs; the mask flags candidates whose couplings converged."""
    pa = tables.p_a_given_z
    p0, p1 = pa[:, 0], pa[:, 1]
    # a = 0 ratio is 1 - (p1 / p0) * shift; a = 1 ratio is 1 + shift
    a0_slope = -p1 / np.where(p0 > 0, p0, 1.0)

    def prior(logits):
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    pi_ie, pi_de = prior(raw["prior_ie"]), prior(raw["prior_de"])

    # U_IE shift: the same box bounds both attribute values
    cap_m = gamma_cap if gamma_cap is not None else params.gamma_m
    g = cap_m ** raw["level_ie"]
    hi = (g - 1.0) * p0 / (1.0 + p1 * (g - 1.0))
    lo = -(g - 1.0) * p0 / (1.0 + p0 * (g - 1.0))
    d_ie = _centered_direction(raw["dir_ie"], pi_ie)
    x = (raw["reach_ie"] ** 0.25 * _max_step(d_ie, lo[..., None], hi[..., None]))[..., None] * d_ie

    ratio_ie = np.stack([1.0 + a0_slope[:, None] * x, 1.0 + x], axis=-2)
    post_ie = pi_ie[..., None, :] * ratio_ie
    kernel_m = np.exp(raw["sharp_m"][:, None, None, None, None] * raw["kernel_m"])
    target_m = np.broadcast_to(tables.p_m_given_za, post_ie.shape[:-1] + (tables.km,))
    p_m, converged_m = _sinkhorn(kernel_m, post_ie, target_m)

    # P(u_de | z, a, m) / P(u_de | z) = 1 + slope_a * y * rho, rho = P(m | z, do a) / P(m | z, a)
    s_do = np.einsum("bzi,bzaim->bzam", pi_ie, p_m)
    s_obs = np.einsum("bzai,bzaim->bzam", post_ie, p_m)
    rho = s_do / _safe(s_obs)
    slope = np.stack([a0_slope, np.ones_like(a0_slope)], axis=-1)
    cap_y = gamma_cap if gamma_cap is not None else params.gamma_y
    gy = cap_y ** raw["level_de"]
    box_lo, box_hi = _ratio_box(pa[None, :, :], gy[..., None])
    d_de = _centered_direction(raw["dir_de"], pi_de)
    coef = (slope[None, :, :, None] * rho)[..., None] * d_de[:, :, None, None, :]
    step = _step_for_ratio(coef, box_lo, box_hi)

    # A's mechanism must stay a probability: 1 + x_i + y_d >= 0 and x_i + y_d <= p0 / p1
    x_min = x.min(axis=-1)
    x_max = x.max(axis=-1)
    upper_room = np.where(p1 > 0, p0 / np.where(p1 > 0, p1, 1.0), np.inf)[None, :] - x_max
    pos = _max_step(d_de, -(1.0 + x_min)[..., None], upper_room[..., None])
    step = np.minimum(step, KAPPA_MARGIN * pos)
    y = (raw["reach_de"] ** 0.25 * step)[..., None] * d_de

    shift = x[..., :, None] + y[..., None, :]
    r1 = 1.0 + shift
    r0 = 1.0 + a0_slope[None, :, None, None] * shift
    p_a = np.stack([p0[None, :, None, None] * r0, p1[None, :, None, None] * r1], axis=-1)
    p_a = np.clip(p_a, 0.0, None)
    p_a /= p_a.sum(axis=-1, keepdims=True)

    post = (pi_ie[..., :, None] * pi_de[..., None, :])[..., None, :, :] * np.moveaxis(p_a, -1, -3)
    post /= _safe(pa)[None, :, :, None, None]
    p_dm = np.einsum("bzaid,bzaim->bzamd", post, p_m)
    p_d_given_m = p_dm / _safe(p_dm.sum(axis=-1, keepdims=True))
    kernel_y = np.exp(raw["sharp_y"][:, None, None, None, None, None] * raw["kernel_y"])
    ky = tables.p_y_given_mza.shape[-1]
    target_y = np.broadcast_to(tables.p_y_given_mza, p_d_given_m.shape[:-1] + (ky,))
    p_y, converged_y = _sinkhorn(kernel_y, p_d_given_m, target_y)

    size = x.shape[0]
    p_z = np.broadcast_to(tables.p_z, (size, tables.nz)).copy()
    return DiscreteScm(p_z, pi_ie, pi_de, p_a, p_m, p_y), converged_m & converged_y


def _latent_ratios(scm: DiscreteScm) -> Tuple[np.ndarray, np.ndarray]:
    """P(u_ie | z, a) / P(u_ie | z) with shape (b, z, a, k) and
    P(u_de | z, a, m) / P(u_de | z) with shape (b, z, a, m, k)."""
    _, p_a, p_m, _ = scm.observational()
    joint_u = scm.p_ie[..., :, :, None] * scm.p_de[..., :, None, :]
    post = np.einsum("...zid,...zida->...zaid", joint_u, scm.p_a) / _safe(p_a)[..., None, None]
    ratio_ie = post.sum(axis=-1) / _safe(scm.p_ie)[..., None, :]
    p_dm = np.einsum("...zaid,...zaim->...zamd", post, scm.p_m)
    p_d_given_m = p_dm / _safe(p_m)[..., None]
    ratio_de = p_d_given_m / _safe(scm.p_de)[..., None, None, :]
    return ratio_ie, ratio_de


def _accept(scm: DiscreteScm, tables: ObsTables, params: SensitivityParams, tolerance: float):
    """Acceptance mask and observational total-variation distance per candidate."""
    p_z, p_a, p_m, p_y = scm.observational()
    joint = (p_z[..., :, None, None, None] * p_a[..., :, :, None, None]
             * p_m[..., :, :, :, None] * p_y)
    tv = 0.5 * np.abs(joint - tables.joint()).sum(axis=(-4, -3, -2, -1))
    ratio_ie, ratio_de = _latent_ratios(scm)
    lo_m, hi_m = _ratio_box(tables.p_a_given_z, params.gamma_m)
    lo_y, hi_y = _ratio_box(tables.p_a_given_z, params.gamma_y)
    ok_ie = np.all((ratio_ie >= lo_m[..., None] - RATIO_TOL) & (ratio_ie <= hi_m[..., None] + RATIO_TOL), axis=(-3, -2, -1))
    ok_de = np.all(
        (ratio_de >= lo_y[..., None, None] - RATIO_TOL) & (ratio_de <= hi_y[..., None, None] + RATIO_TOL),
        axis=(-4, -3, -2, -1),
    )
    finite = np.isfinite(tv)
    return finite & (tv <= tolerance) & ok_ie & ok_de, tv


@dataclass
class OracleReport:
    achieved: Dict[str, Interval]
    closed_form: EffectBounds
    accepted_count: int
    budget: int
    witnesses: Dict[str, DiscreteScm] = field(default_factory=dict)
    effect_mode: str = "counterfactual"

    @property
    def gaps(self) -> Dict[str, Dict[str, float]]:
        """Distance from each achieved endpoint to the closed-form one (positive inside)."""
        return {
            e: {"lo": self.achieved[e].lo - self.closed_form.interval(e).lo,
                "hi": self.closed_form.interval(e).hi - self.achieved[e].hi}
            for e in EFFECTS
        }

    def contained_effects(self, tol: float = CONTAINMENT_TOL) -> Dict[str, bool]:
        return {e: self.achieved[e].issubset(self.closed_form.interval(e), tol) for e in EFFECTS}

    @property
    def contained(self) -> bool:
        return all(self.contained_effects().values())

    def to_dict(self, include_witnesses: bool = False) -> Dict[str, Any]:
        out = {
            "achieved": {e: self.achieved[e].to_dict() for e in EFFECTS},
            "closed_form": self.closed_form.to_dict(),
            "gaps": self.gaps,
            "accepted_count": self.accepted_count,
            "budget": self.budget,
            "contained": self.contained,
            "contained_effects": self.contained_effects(),
            "effect_mode": self.effect_mode,
        }
        if include_witnesses:
            out["witnesses"] = {key: scm.to_dict() for key, scm in self.witnesses.items()}
        return out


class _Tracker:
    """Running min/max per effect with the raw parameters that attained them."""

    def __init__(self):
        self.lo = {e: np.inf for e in EFFECTS}
        self.hi = {e: -np.inf for e in EFFECTS}
        self.raw: Dict[str, Dict[str, np.ndarray]] = {}
        self.scm: Dict[str, DiscreteScm] = {}
        self.accepted = 0

    def update(self, raw, scm: DiscreteScm, effects: Dict[str, np.ndarray], mask: np.ndarray):
        idx = np.flatnonzero(mask)
        self.accepted += len(idx)
        if len(idx) == 0:
            return
        for e in EFFECTS:
            vals = effects[e][idx]
            lo, hi = int(np.argmin(vals)), int(np.argmax(vals))
            if vals[lo] < self.lo[e]:
                self.lo[e] = float(vals[lo])
                self._keep(f"{e}_lo", raw, scm, idx[lo])
            if vals[hi] > self.hi[e]:
                self.hi[e] = float(vals[hi])
                self._keep(f"{e}_hi", raw, scm, idx[hi])

    def _keep(self, key: str, raw, scm: DiscreteScm, b: int):
        self.raw[key] = {name: arr[b:b + 1].copy() for name, arr in raw.items()}
        self.scm[key] = scm.candidate(b)


def search_effect_range(
    tables: ObsTables,
    params: SensitivityParams,
    y: Target = 1,
    a_i: int = 0,
    a_j: int = 1,
    config: CompatSearchConfig = CompatSearchConfig(),
) -> OracleReport:
    """Min/max DE, IE, SE over sampled SCMs compatible with `tables` under `params`."""
    if not tables.y_domain.is_discrete or tables.p_y_given_mza is None:
        raise ValidationError("the compatibility search needs a discrete outcome")
    if a_i == a_j:
        raise ValidationError("a_i and a_j must differ")
    closed_form = bound_effects(tables, params, y, a_i, a_j, ordering="value")
    rng = np.random.default_rng(config.seed)
    dims = (tables.nz, config.latent_cardinality, tables.km, tables.p_y_given_mza.shape[-1])
    tracker = _Tracker()

    def run(raw):
        scm, converged = _build_candidates(raw, tables, params, config.gamma_cap)
        mask, _ = _accept(scm, tables, params, config.tolerance)
        mask &= converged
        if mask.any():
            effects = _batch_effects(scm, y, a_i, a_j, config.effect_mode)
            mask &= np.all([np.isfinite(effects[e]) for e in EFFECTS], axis=0)
            tracker.update(raw, scm, effects, mask)

    remaining = config.budget
    while remaining > 0:
        size = min(config.batch_size, remaining)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            run(_draw_raw(rng, size, *dims))
        remaining -= size

    for round_ in range(config.refine_rounds):
        scale = 0.5 / (round_ + 1)
        per_witness = max(1, config.batch_size // max(len(tracker.raw), 1))
        for key in list(tracker.raw):
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                run(_perturb(tracker.raw[key], 0, per_witness, rng, scale))

    if tracker.accepted == 0:
        raise SearchError(
            f"no compatible SCM among {config.budget} candidates; loosen the tolerance or raise the budget"
        )
    achieved = {e: Interval(tracker.lo[e], tracker.hi[e]) for e in EFFECTS}
    report = OracleReport(achieved, closed_form, tracker.accepted, config.budget, dict(tracker.scm), config.effect_mode)
    logger.info("accepted %d of %d candidates; contained=%s", tracker.accepted, config.budget, report.contained)
    return report


def random_tables(
    rng: np.random.Generator,
    nz: int = 2,
    km: int = 2,
    ky: int = 2,
    min_prob: float = 0.05,
) -> ObsTables:
    """Random strictly positive tables for fuzzing the search against the closed form."""
    if not 0 < min_prob < 0.5:
        raise ValidationError("min_prob must lie in (0, 0.5)")

    def pmf(shape, k):
        raw = rng.dirichlet(np.ones(k), size=shape or None)
        return (1 - k * min_prob) * raw + min_prob if k * min_prob < 1 else np.full(shape + (k,), 1.0 / k)

    return ObsTables(
        z_values=np.arange(nz, dtype=np.float64),
        p_z=pmf((), nz),
        p_a_given_z=pmf((nz,), 2),
        p_m_given_za=pmf((nz, 2), km),
        y_domain=VariableDomain.binary() if ky == 2 else VariableDomain.categorical(ky),
        p_y_given_mza=pmf((nz, 2, km), ky),
    )
