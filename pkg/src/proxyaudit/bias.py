"""Exact plug-in bias quantities for the weighted and thresholded estimators.

The dataset is the population: every probability below is a record frequency
and every expectation a record average. Under that reading the asymptotic
bias formulas become finite identities, which is what the checks here rely on.

For more than two classes the thresholded decomposition pairs ``u`` with one
designated counterpart; records of other classes enter only through
"assigned to something other than ``u``". The identity is then approximate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from proxyaudit import kernels
from proxyaudit.domain import ConfigurationError, Dataset, EstimationError, ThresholdPolicy, require_valid
from proxyaudit.estimators import assign_indices, weighted_means

ZERO_TOL = 1e-12

OVERESTIMATE = "overestimate"
UNDERESTIMATE = "underestimate"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class BiasDecomposition:
    group: str
    counterpart: str
    q: float
    delta1: float
    delta2: float
    c1: float
    c2: float
    c3: float
    theoretical_bias: float
    observed_bias: float
    # False when the term's conditioning event is empty; its C weights are then
    # zero and the term is carried as 0.0
    delta1_defined: bool = True
    delta2_defined: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConditionReport:
    q: float
    adv: str
    dis: str
    # the four sign quantities: delta1(adv), -delta1(dis), -delta2(adv), delta2(dis)
    values: tuple[float, float, float, float]
    holds: tuple[bool, bool, bool, bool]
    converse_holds: tuple[bool, bool, bool, bool]
    direction: str

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class COrderingReport:
    group: str
    counterpart: str
    q: float
    multiclass: bool
    c1: float
    c2: float
    c3: float
    p_true_given_assigned: float  # P(A=u | Â=u)
    p_counterpart_given_assigned: float  # P(A=u^c | Â=u)
    p_assigned_given_true: float  # P(Â=u | A=u)
    p_true: float  # P(A=u)
    p_assigned: float  # P(Â=u)
    p_other_and_assigned: float  # P(A not in {u, u^c}, Â=u)
    precision_condition: bool  # P(A=u|Â=u) > P(A=u^c|Â=u)
    coverage_condition: bool  # P(A=u) > P(Â=u), or its multiclass relaxation
    c2_gt_c3: bool
    c2_gt_c1: bool
    c2_minus_c1: float
    identity_rhs: float  # P(A=u|Â=u) - P(Â=u|A=u)
    identity_residual: float

    def as_dict(self) -> dict:
        return asdict(self)


QUADRANTS = ("neg_neg", "neg_pos", "pos_neg", "pos_pos", "boundary")


@dataclass(frozen=True)
class CovarianceQuadrants:
    """Record mass by sign of (cov with adv membership, cov with dis membership).

    Quadrant names give the adv sign first. Keys where either covariance is
    within ``ZERO_TOL`` of zero go to ``boundary``.
    """

    adv: str
    dis: str
    mass: dict[str, float]
    key_count: dict[str, int]

    def as_dict(self) -> dict:
        return asdict(self)


# helpers ------------------------------------------------------------------


def _require_labels(dataset: Dataset) -> None:
    require_valid(dataset)
    if not dataset.has_true_labels:
        raise EstimationError("true labels required")


def _require_keys(dataset: Dataset) -> None:
    if not dataset.has_keys:
        raise EstimationError("proxy keys required on every record")


def _counterpart(dataset: Dataset, u: str, counterpart: str | None) -> str:
    labels = dataset.universe.labels
    if counterpart is None:
        if len(labels) != 2:
            raise ConfigurationError(f"name the counterpart of {u!r}: universe has {len(labels)} classes")
        counterpart = labels[1 - dataset.universe.index(u)]
    if counterpart == u:
        raise ConfigurationError(f"counterpart of {u!r} must be a different class")
    dataset.universe.index(counterpart)
    return counterpart


def _mean_where(dataset: Dataset, mask: np.ndarray, event: str) -> float:
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise EstimationError(f"empty conditioning event: {event}")
    total = kernels.group_sums(dataset.outcomes, np.where(mask, 0, -1), 1)[0]
    return float(total / count)


def _key_moments(dataset: Dataset, u: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per key: record count, outcome sum, class-u count, class-u outcome sum."""
    keys = dataset.key_index
    m = len(dataset.key_names)
    is_u = (dataset.true_index == u).astype(np.float64)
    n = kernels.group_counts(keys, m).astype(np.float64)
    s = kernels.group_sums(dataset.outcomes, keys, m)
    nu = kernels.group_sums(is_u, keys, m)
    su = kernels.group_sums(is_u * dataset.outcomes, keys, m)
    return n, s, nu, su


def _key_covariances(dataset: Dataset, u: int) -> tuple[np.ndarray, np.ndarray]:
    n, s, nu, su = _key_moments(dataset, u)
    present = n > 0
    cov = np.zeros_like(n)
    cov[present] = su[present] / n[present] - (nu[present] / n[present]) * (s[present] / n[present])
    return cov, n


# weighted estimator --------------------------------------------------------


def conditional_covariance_mean(dataset: Dataset, u: str) -> float:
    """Record-weighted average over keys of the within-key covariance of 1{A=u} and Y."""
    _require_labels(dataset)
    _require_keys(dataset)
    cov, n = _key_covariances(dataset, dataset.universe.index(u))
    return float(kernels.group_sums(cov * n, np.zeros(len(n), dtype=np.intp), 1)[0] / len(dataset))


def weighted_bias_theoretical(dataset: Dataset, u: str) -> float:
    """Bias of the weighted mean for ``u``: minus the mean conditional covariance over P(A=u)."""
    _require_labels(dataset)
    share = np.count_nonzero(dataset.true_index == dataset.universe.index(u)) / len(dataset)
    if share == 0:
        raise EstimationError(f"empty class {u!r}")
    return -conditional_covariance_mean(dataset, u) / share


def weighted_bias_observed(dataset: Dataset, u: str) -> float:
    _require_labels(dataset)
    j = dataset.universe.index(u)
    means, mass = weighted_means(dataset)
    if not mass[j] > 0:
        raise EstimationError(f"zero total proxy mass for {u!r}")
    mask = dataset.true_index == j
    return float(means[j]) - _mean_where(dataset, mask, f"A={u}")


# thresholded estimator -----------------------------------------------------


def delta_terms(
    dataset: Dataset, policy: ThresholdPolicy, u: str, counterpart: str | None = None
) -> tuple[float, float]:
    """Within-range (first) and across-range (second) outcome-mean discrepancies for ``u``."""
    _require_labels(dataset)
    uc = _counterpart(dataset, u, counterpart)
    iu, iuc = dataset.universe.index(u), dataset.universe.index(uc)
    high = dataset.proxies[:, iu] > policy.q
    is_u = dataset.true_index == iu
    is_uc = dataset.true_index == iuc
    q = policy.q
    top_u = _mean_where(dataset, high & is_u, f"P(A={u}|Z)>{q:g}, A={u}")
    top_uc = _mean_where(dataset, high & is_uc, f"P(A={u}|Z)>{q:g}, A={uc}")
    low_u = _mean_where(dataset, ~high & is_u, f"P(A={u}|Z)<={q:g}, A={u}")
    return top_uc - top_u, low_u - top_u


def _c_probabilities(dataset: Dataset, policy: ThresholdPolicy, u: str, uc: str) -> dict[str, float]:
    iu, iuc = dataset.universe.index(u), dataset.universe.index(uc)
    assigned = assign_indices(dataset, policy) == iu
    is_u = dataset.true_index == iu
    is_uc = dataset.true_index == iuc
    n = len(dataset)
    n_u = int(np.count_nonzero(is_u))
    n_hat = int(np.count_nonzero(assigned))
    if n_u == 0:
        raise EstimationError(f"empty class {u!r}")
    if n_hat == 0:
        raise EstimationError(f"empty imputed group under q={policy.q:g}: no record assigned to {u!r}")
    both = int(np.count_nonzero(assigned & is_u))
    missed = n_u - both
    uc_hat = int(np.count_nonzero(assigned & is_uc))
    other_hat = n_hat - both - uc_hat
    return dict(
        p_true_given_assigned=both / n_hat,
        p_counterpart_given_assigned=uc_hat / n_hat,
        p_assigned_given_true=both / n_u,
        p_not_assigned_given_true=missed / n_u,
        p_true=n_u / n,
        p_assigned=n_hat / n,
        p_other_and_assigned=other_hat / n,
    )


def c_terms(
    dataset: Dataset, policy: ThresholdPolicy, u: str, counterpart: str | None = None
) -> tuple[float, float, float]:
    """Misclassification weights of the thresholded-bias decomposition for ``u``."""
    _require_labels(dataset)
    uc = _counterpart(dataset, u, counterpart)
    p = _c_probabilities(dataset, policy, u, uc)
    c1 = p["p_assigned_given_true"] * p["p_counterpart_given_assigned"]
    c2 = p["p_true_given_assigned"] * p["p_not_assigned_given_true"]
    c3 = p["p_not_assigned_given_true"] * p["p_counterpart_given_assigned"]
    return c1, c2, c3


def thresholded_bias_theoretical(
    dataset: Dataset, policy: ThresholdPolicy, u: str, counterpart: str | None = None
) -> BiasDecomposition:
    """Decomposed and observed bias of the thresholded mean for ``u``.

    A delta term whose conditioning event is empty carries zero weight (its C
    factors vanish) and is stored as 0.0 with its ``defined`` flag cleared.
    At least one record of ``u`` must be assigned to ``u``.
    """
    _require_labels(dataset)
    uc = _counterpart(dataset, u, counterpart)
    iu, iuc = dataset.universe.index(u), dataset.universe.index(uc)
    c1, c2, c3 = c_terms(dataset, policy, u, uc)
    high = dataset.proxies[:, iu] > policy.q
    is_u = dataset.true_index == iu
    q = policy.q
    top_u = _mean_where(dataset, high & is_u, f"P(A={u}|Z)>{q:g}, A={u}")
    uc_mask = high & (dataset.true_index == iuc)
    low_mask = ~high & is_u
    d1_defined = bool(uc_mask.any())
    d2_defined = bool(low_mask.any())
    d1 = _mean_where(dataset, uc_mask, "") - top_u if d1_defined else 0.0
    d2 = _mean_where(dataset, low_mask, "") - top_u if d2_defined else 0.0
    theoretical = d1 * c1 - d2 * c2 + (d1 - d2) * c3
    est = _mean_where(dataset, high, f"Â={u}")
    true = _mean_where(dataset, is_u, f"A={u}")
    return BiasDecomposition(
        group=u,
        counterpart=uc,
        q=policy.q,
        delta1=d1,
        delta2=d2,
        c1=c1,
        c2=c2,
        c3=c3,
        theoretical_bias=theoretical,
        observed_bias=est - true,
        delta1_defined=d1_defined,
        delta2_defined=d2_defined,
    )


def _direction(values: tuple[float, ...], tol: float) -> tuple[tuple[bool, ...], tuple[bool, ...], str]:
    holds = tuple(v >= -tol for v in values)
    converse = tuple(v <= tol for v in values)
    if all(holds) and any(v > tol for v in values):
        return holds, converse, OVERESTIMATE
    if all(converse) and any(v < -tol for v in values):
        return holds, converse, UNDERESTIMATE
    return holds, converse, INDETERMINATE


def check_conditions(
    dataset: Dataset, policy: ThresholdPolicy, adv: str, dis: str, tol: float = ZERO_TOL
) -> ConditionReport:
    """Sufficient sign conditions for over/underestimation by the thresholded estimator.

    Values within ``tol`` of zero count as equalities, never as strict.
    """
    d1a, d2a = delta_terms(dataset, policy, adv, dis)
    d1b, d2b = delta_terms(dataset, policy, dis, adv)
    values = (d1a, -d1b, -d2a, d2b)
    holds, converse, direction = _direction(values, tol)
    return ConditionReport(
        q=policy.q, adv=adv, dis=dis, values=values, holds=holds, converse_holds=converse, direction=direction
    )


def check_c_orderings(
    dataset: Dataset,
    policy: ThresholdPolicy,
    u: str,
    counterpart: str | None = None,
    multiclass: bool | None = None,
) -> COrderingReport:
    """Realized C-term orderings next to the probability conditions that predict them.

    ``identity_rhs`` is P(A=u|Â=u) - P(Â=u|A=u), which equals C2 - C1 exactly
    when every record belongs to ``u`` or its counterpart.
    """
    _require_labels(dataset)
    uc = _counterpart(dataset, u, counterpart)
    if multiclass is None:
        multiclass = len(dataset.universe) > 2
    p = _c_probabilities(dataset, policy, u, uc)
    c1 = p["p_assigned_given_true"] * p["p_counterpart_given_assigned"]
    c2 = p["p_true_given_assigned"] * p["p_not_assigned_given_true"]
    c3 = p["p_not_assigned_given_true"] * p["p_counterpart_given_assigned"]
    if multiclass:
        coverage = p["p_true"] + p["p_other_and_assigned"] > p["p_assigned"]
    else:
        coverage = p["p_true"] > p["p_assigned"]
    rhs = p["p_true_given_assigned"] - p["p_assigned_given_true"]
    return COrderingReport(
        group=u,
        counterpart=uc,
        q=policy.q,
        multiclass=bool(multiclass),
        c1=c1,
        c2=c2,
        c3=c3,
        p_true_given_assigned=p["p_true_given_assigned"],
        p_counterpart_given_assigned=p["p_counterpart_given_assigned"],
        p_assigned_given_true=p["p_assigned_given_true"],
        p_true=p["p_true"],
        p_assigned=p["p_assigned"],
        p_other_and_assigned=p["p_other_and_assigned"],
        precision_condition=p["p_true_given_assigned"] > p["p_counterpart_given_assigned"],
        coverage_condition=bool(coverage),
        c2_gt_c3=c2 > c3,
        c2_gt_c1=c2 > c1,
        c2_minus_c1=c2 - c1,
        identity_rhs=rhs,
        identity_residual=(c2 - c1) - rhs,
    )


def covariance_quadrants(dataset: Dataset, adv: str, dis: str) -> CovarianceQuadrants:
    _require_labels(dataset)
    _require_keys(dataset)
    cov_a, n = _key_covariances(dataset, dataset.universe.index(adv))
    cov_b, _ = _key_covariances(dataset, dataset.universe.index(dis))
    bucket = np.full(len(n), 4, dtype=np.intp)
    signed = (np.abs(cov_a) > ZERO_TOL) & (np.abs(cov_b) > ZERO_TOL)
    bucket[signed] = 2 * (cov_a[signed] > 0) + (cov_b[signed] > 0)
    total = float(len(dataset))
    mass = kernels.group_sums(n, bucket, 5) / total
    counts = kernels.group_counts(bucket[n > 0], 5)
    return CovarianceQuadrants(
        adv=adv,
        dis=dis,
        mass={name: float(mass[i]) for i, name in enumerate(QUADRANTS)},
        key_count={name: int(counts[i]) for i, name in enumerate(QUADRANTS)},
    )


@dataclass(frozen=True)
class BiasPoint:
    q: float
    observed: float
    theoretical: float
    adv: BiasDecomposition
    dis: BiasDecomposition


def theoretical_vs_observed(
    dataset: Dataset, policies: list[ThresholdPolicy], adv: str, dis: str
) -> list[BiasPoint]:
    """Observed disparity bias next to the decomposition's prediction, one point per threshold."""
    out = []
    for policy in policies:
        da = thresholded_bias_theoretical(dataset, policy, adv, dis)
        db = thresholded_bias_theoretical(dataset, policy, dis, adv)
        out.append(
            BiasPoint(
                q=policy.q,
                observed=da.observed_bias - db.observed_bias,
                theoretical=da.theoretical_bias - db.theoretical_bias,
                adv=da,
                dis=db,
            )
        )
    return out
