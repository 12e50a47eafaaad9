"""AUC and group-fairness metrics measured against a reference group.

Demographic parity is the Wasserstein-1 distance between the score
distributions of two groups, so it does not depend on a decision threshold.
Thresholded parity is the special case of scores that are already 0/1.
Groups that lack the class a rate needs are reported as skipped, never
imputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .dataset import GroupSpec
from .models import Prediction

METRICS = ("EOF", "DP", "AAO")


class MetricError(ValueError):
    pass


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counting 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes (single-class input)")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def wasserstein1(u, v) -> float:
    """Exact W1 distance between two empirical distributions on the line,
    the integral of |F_u - F_v| over the merged support."""
    u = np.sort(np.asarray(u, dtype=np.float64))
    v = np.sort(np.asarray(v, dtype=np.float64))
    if not len(u) or not len(v):
        raise MetricError("Wasserstein distance of an empty sample")
    support = np.sort(np.concatenate([u, v]))
    widths = np.diff(support)
    cdf_u = np.searchsorted(u, support[:-1], side="right") / len(u)
    cdf_v = np.searchsorted(v, support[:-1], side="right") / len(v)
    return float(np.sum(np.abs(cdf_u - cdf_v) * widths))


@dataclass(frozen=True)
class GroupOutcome:
    group: str
    n: int
    positives: int
    tpr: float | None
    fpr: float | None
    auc: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _labels_of(pred) -> np.ndarray:
    return pred.labels if isinstance(pred, Prediction) else np.asarray(pred)


def _reference(ref) -> str:
    return ref.reference if isinstance(ref, GroupSpec) else str(ref)


def _group_order(groups: np.ndarray) -> list[str]:
    uniq, first = np.unique(groups, return_index=True)
    return [str(g) for g in uniq[np.argsort(first, kind="stable")]]


def group_outcomes(pred, labels, groups, scores=None) -> dict[str, GroupOutcome]:
    """Confusion-matrix rates (and AUC when scores are given) per group."""
    yhat = _labels_of(pred)
    labels = np.asarray(labels)
    groups = np.asarray(groups).astype(str)
    if scores is None and isinstance(pred, Prediction):
        scores = pred.scores
    out = {}
    for g in _group_order(groups):
        sel = groups == g
        y, p = labels[sel], yhat[sel]
        n_pos = int((y == 1).sum())
        n_neg = int(sel.sum()) - n_pos
        tpr = int(((p == 1) & (y == 1)).sum()) / n_pos if n_pos else None
        fpr = int(((p == 1) & (y == 0)).sum()) / n_neg if n_neg else None
        g_auc = auc(np.asarray(scores)[sel], y) if scores is not None and n_pos and n_neg else None
        out[g] = GroupOutcome(g, int(sel.sum()), n_pos, tpr, fpr, g_auc)
    return out


def _get_ref(outcomes: Mapping[str, GroupOutcome], ref: str) -> GroupOutcome:
    if ref not in outcomes:
        raise MetricError(f"reference group {ref!r} does not occur in the data")
    return outcomes[ref]


def equal_opportunity(pred, labels, groups, ref) -> tuple[dict[str, float], dict[str, str]]:
    """TPR_i - TPR_ref for every non-reference group with a positive."""
    r = _reference(ref)
    outcomes = group_outcomes(pred, labels, groups)
    ref_out = _get_ref(outcomes, r)
    if ref_out.tpr is None:
        raise MetricError(f"reference group {r!r} has no positives")
    values, skipped = {}, {}
    for g, o in outcomes.items():
        if g == r:
            continue
        if o.tpr is None:
            skipped[g] = "no positives"
        else:
            values[g] = o.tpr - ref_out.tpr
    return values, skipped


def demographic_parity(scores, groups, ref) -> dict[str, float]:
    """W1 distance between each group's scores and the reference's scores."""
    r = _reference(ref)
    scores = np.asarray(scores.scores if isinstance(scores, Prediction) else scores, dtype=np.float64)
    groups = np.asarray(groups).astype(str)
    ref_scores = scores[groups == r]
    if not len(ref_scores):
        raise MetricError(f"reference group {r!r} is empty")
    return {g: wasserstein1(scores[groups == g], ref_scores) for g in _group_order(groups) if g != r}


def average_absolute_odds(pred, labels, groups, ref) -> tuple[dict[str, float], dict[str, str]]:
    """(|FPR_i - FPR_ref| + |TPR_i - TPR_ref|) / 2 per non-reference group."""
    r = _reference(ref)
    outcomes = group_outcomes(pred, labels, groups)
    ref_out = _get_ref(outcomes, r)
    if ref_out.tpr is None or ref_out.fpr is None:
        raise MetricError(f"reference group {r!r} lacks positives or negatives")
    values, skipped = {}, {}
    for g, o in outcomes.items():
        if g == r:
            continue
        if o.tpr is None or o.fpr is None:
            skipped[g] = "no positives" if o.tpr is None else "no negatives"
        else:
            values[g] = 0.5 * (abs(o.fpr - ref_out.fpr) + abs(o.tpr - ref_out.tpr))
    return values, skipped


def aggregate(values: Mapping[str, float]) -> float:
    """Unweighted sum of absolute per-group values."""
    if not values:
        raise MetricError("every group was skipped")
    return float(sum(abs(v) for v in values.values()))


@dataclass(frozen=True)
class FairnessReport:
    reference: str
    outcomes: dict[str, GroupOutcome]
    eof: dict[str, float]
    dp: dict[str, float]
    aao: dict[str, float]
    skipped: dict[str, dict[str, str]] = field(default_factory=dict)

    def per_group(self, metric: str) -> dict[str, float]:
        return {"EOF": self.eof, "DP": self.dp, "AAO": self.aao}[metric]

    def total(self, metric: str) -> float | None:
        values = self.per_group(metric)
        return aggregate(values) if values else None

    def max_violation(self, metric: str) -> float | None:
        values = self.per_group(metric)
        return max(abs(v) for v in values.values()) if values else None

    @property
    def l_eof(self) -> float | None:
        return self.total("EOF")

    @property
    def l_dp(self) -> float | None:
        return self.total("DP")

    @property
    def l_aao(self) -> float | None:
        return self.total("AAO")


def fairness_report(pred: Prediction, labels, groups, ref) -> FairnessReport:
    r = _reference(ref)
    eof, eof_skip = equal_opportunity(pred, labels, groups, r)
    aao, aao_skip = average_absolute_odds(pred, labels, groups, r)
    dp = demographic_parity(pred.scores, groups, r)
    return FairnessReport(
        r,
        group_outcomes(pred, labels, groups),
        eof,
        dp,
        aao,
        {m: s for m, s in (("EOF", eof_skip), ("AAO", aao_skip)) if s},
    )
