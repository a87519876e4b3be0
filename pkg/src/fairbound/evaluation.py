"""Prediction quality, fairness score and the weighted fairness utility."""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .core import EFFECTS, Dataset, EffectBounds
from .errors import ValidationError
from .training import Predictor, Task

logger = logging.getLogger(__name__)

DEFAULT_OMEGA = 0.5


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based ROC AUC; tied scores share their average rank."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be vectors of equal length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be binary")
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC AUC needs at least one label of each class")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def mse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValidationError(f"predictions {p.shape} and targets {t.shape} differ in shape")
    if p.size == 0:
        raise ValidationError("mse of empty input")
    return float(np.mean((p - t) ** 2))


def fairness_score(bounds: Sequence[EffectBounds]) -> float:
    """Mean over effects of max(|upper|, |lower|), averaged over classes when several bounds are given."""
    if not bounds:
        raise ValidationError("fairness score needs at least one set of bounds")
    per_class = [np.mean([b.interval(e).max_abs for e in EFFECTS]) for b in bounds]
    return float(np.mean(per_class))


def fairness_utility(r: float, bounds, omega: float = DEFAULT_OMEGA) -> float:
    """omega * R - (1 - omega) * F."""
    if not 0.0 <= omega <= 1.0:
        raise ValidationError(f"omega must lie in [0, 1], got {omega}")
    if isinstance(bounds, EffectBounds):
        bounds = [bounds]
    return float(omega * r - (1.0 - omega) * fairness_score(bounds))


@dataclass
class EvalReport:
    metric: str
    r: float
    fairness: float
    utility: float
    omega: float
    max_abs: Dict[str, float]
    roc_auc: Optional[float] = None
    mse: Optional[float] = None
    gamma_m: Optional[float] = None
    n: int = 0
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_frame(self) -> pd.DataFrame:
        """One-row frame with flattened per-effect columns, for aggregation across seeds."""
        row = {k: v for k, v in self.to_dict().items() if k not in ("max_abs", "extra")}
        row.update({f"max_abs_{e}": v for e, v in self.max_abs.items()})
        row.update(self.extra)
        return pd.DataFrame([row])


def _prediction_quality(predictor: Predictor, data: Dataset) -> Dict[str, float]:
    preds = predictor.predict(data.a, data.z, data.m)
    if predictor.task is Task.REGRESSION:
        err = mse(preds, data.y)
        return {"metric": "mse", "r": -err, "mse": err}
    if predictor.task is Task.BINARY:
        auc = roc_auc(preds, data.y)
        return {"metric": "roc_auc", "r": auc, "roc_auc": auc}
    # one-vs-rest macro average over classes present in the data
    aucs: List[float] = []
    for k in range(preds.shape[1]):
        labels = (data.y == k).astype(int)
        if 0 < labels.sum() < len(labels):
            aucs.append(roc_auc(preds[:, k], labels))
    if not aucs:
        raise ValidationError("ROC AUC needs at least two outcome classes in the evaluation data")
    auc = float(np.mean(aucs))
    return {"metric": "roc_auc", "r": auc, "roc_auc": auc}


def evaluate_predictor(
    predictor: Predictor,
    data: Dataset,
    bounds: Sequence[EffectBounds],
    omega: float = DEFAULT_OMEGA,
) -> EvalReport:
    """Prediction quality on `data` combined with the fairness score of `bounds`.

    R is the ROC AUC for classifiers and the negative MSE for regression.
    """
    bounds = list(bounds)
    quality = _prediction_quality(predictor, data)
    fairness = fairness_score(bounds)
    max_abs = {e: float(np.mean([b.interval(e).max_abs for b in bounds])) for e in EFFECTS}
    report = EvalReport(
        metric=quality["metric"],
        r=quality["r"],
        fairness=fairness,
        utility=fairness_utility(quality["r"], bounds, omega),
        omega=omega,
        max_abs=max_abs,
        roc_auc=quality.get("roc_auc"),
        mse=quality.get("mse"),
        gamma_m=bounds[0].gamma_m if bounds else None,
        n=data.n,
    )
    logger.info("%s=%.4f fairness=%.4f utility=%.4f", report.metric, abs(report.r), fairness, report.utility)
    return report
