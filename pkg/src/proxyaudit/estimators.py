"""True-label, thresholded and weighted estimators of group means and disparity.

All sums run through :mod:`proxyaudit.kernels` (compensated, record order),
so reports are stable under record permutation to ~1e-15.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from proxyaudit import kernels
from proxyaudit.domain import (
    NA,
    ConfigurationError,
    Dataset,
    EstimationError,
    ProxyDistribution,
    ThresholdPolicy,
    require_valid,
)

TRUE_LABEL = "true_label"
THRESHOLDED = "thresholded"
WEIGHTED = "weighted"


@dataclass(frozen=True)
class EstimateReport:
    estimator_kind: str
    adv: str
    dis: str
    per_class_mean: dict[str, float]
    disparity: float
    classified_count: dict[str, int] = field(default_factory=dict)
    unclassified_count: int = 0
    record_count: int = 0
    q: float | None = None

    @property
    def unclassified_fraction(self) -> float:
        return self.unclassified_count / self.record_count if self.record_count else 0.0


def _check_pair(dataset: Dataset, adv: str, dis: str) -> tuple[int, int]:
    if adv == dis:
        raise ConfigurationError(f"advantaged and disadvantaged class must differ (both {adv!r})")
    return dataset.universe.index(adv), dataset.universe.index(dis)


def threshold_assign(proxy: ProxyDistribution, policy: ThresholdPolicy, labels=None):
    """Label whose probability strictly exceeds ``policy.q``, else :data:`NA`.

    ``labels`` names the proxy entries; without it the entry index is returned.
    """
    if not isinstance(policy, ThresholdPolicy):
        raise ConfigurationError(f"expected a ThresholdPolicy, got {policy!r}")
    probs = proxy.probs if isinstance(proxy, ProxyDistribution) else tuple(proxy)
    hits = [j for j, p in enumerate(probs) if p > policy.q]
    if not hits:
        return NA
    # q >= 0.5 on a simplex leaves room for one winner at most
    assert len(hits) == 1, hits
    return labels[hits[0]] if labels is not None else hits[0]


def assign_indices(dataset: Dataset, policy: ThresholdPolicy) -> np.ndarray:
    """Per-record thresholded class index; -1 marks NA."""
    if not isinstance(policy, ThresholdPolicy):
        raise ConfigurationError(f"expected a ThresholdPolicy, got {policy!r}")
    return kernels.threshold_assign(dataset.proxies, policy.q)


def _require_labels(dataset: Dataset) -> None:
    if not dataset.has_true_labels:
        raise EstimationError("true labels required")


def _group_means(dataset: Dataset, groups: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = len(dataset.universe)
    sums = kernels.group_sums(dataset.outcomes, groups, k)
    counts = kernels.group_counts(groups, k)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts
    return means, counts


def true_group_means(dataset: Dataset) -> dict[str, float]:
    """Mean outcome of every class under the recorded true labels."""
    require_valid(dataset)
    _require_labels(dataset)
    means, counts = _group_means(dataset, dataset.true_index)
    labels = dataset.universe.labels
    for j, c in enumerate(counts):
        if c == 0:
            raise EstimationError(f"empty group {labels[j]!r}: no records carry this true class")
    return {lab: float(means[j]) for j, lab in enumerate(labels)}


def true_label_estimate(dataset: Dataset, adv: str, dis: str) -> EstimateReport:
    ia, ib = _check_pair(dataset, adv, dis)
    require_valid(dataset)
    _require_labels(dataset)
    means, counts = _group_means(dataset, dataset.true_index)
    labels = dataset.universe.labels
    for j in (ia, ib):
        if counts[j] == 0:
            raise EstimationError(f"empty group {labels[j]!r}: no records carry this true class")
    return EstimateReport(
        estimator_kind=TRUE_LABEL,
        adv=adv,
        dis=dis,
        per_class_mean={lab: float(means[j]) for j, lab in enumerate(labels) if counts[j]},
        disparity=float(means[ia] - means[ib]),
        classified_count={lab: int(counts[j]) for j, lab in enumerate(labels)},
        record_count=len(dataset),
    )


def true_disparity(dataset: Dataset, adv: str, dis: str) -> float:
    return true_label_estimate(dataset, adv, dis).disparity


def thresholded_estimate(dataset: Dataset, policy: ThresholdPolicy, adv: str, dis: str) -> EstimateReport:
    """Hard-assignment estimator; NA records are excluded from every mean."""
    ia, ib = _check_pair(dataset, adv, dis)
    require_valid(dataset)
    assigned = assign_indices(dataset, policy)
    means, counts = _group_means(dataset, assigned)
    labels = dataset.universe.labels
    for j in (ia, ib):
        if counts[j] == 0:
            raise EstimationError(f"empty imputed group under q={policy.q:g}: no record assigned to {labels[j]!r}")
    return EstimateReport(
        estimator_kind=THRESHOLDED,
        adv=adv,
        dis=dis,
        per_class_mean={lab: float(means[j]) for j, lab in enumerate(labels) if counts[j]},
        disparity=float(means[ia] - means[ib]),
        classified_count={lab: int(counts[j]) for j, lab in enumerate(labels)},
        unclassified_count=int(np.count_nonzero(assigned < 0)),
        record_count=len(dataset),
        q=policy.q,
    )


def weighted_means(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Proxy-weighted mean outcome per class and the total proxy mass per class."""
    num, den = kernels.weighted_column_sums(dataset.outcomes, dataset.proxies)
    with np.errstate(invalid="ignore", divide="ignore"):
        return num / den, den


def weighted_estimate(dataset: Dataset, adv: str, dis: str) -> EstimateReport:
    """Soft estimator: each record's outcome weighted by its class probability."""
    ia, ib = _check_pair(dataset, adv, dis)
    require_valid(dataset)
    means, mass = weighted_means(dataset)
    labels = dataset.universe.labels
    for j in (ia, ib):
        if not mass[j] > 0.0:
            raise EstimationError(f"zero total proxy mass for {labels[j]!r}")
    return EstimateReport(
        estimator_kind=WEIGHTED,
        adv=adv,
        dis=dis,
        per_class_mean={lab: float(means[j]) for j, lab in enumerate(labels) if mass[j] > 0.0},
        disparity=float(means[ia] - means[ib]),
        record_count=len(dataset),
    )
