"""Probabilistic proxy construction.

Two routes: per-geounit class composition (every record in a unit gets the
unit's proportions), and a naive-Bayes combiner that multiplies a prior by
per-feature class likelihoods. BISG is the combiner with a surname table and
a geography table.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from proxyaudit.domain import DataError, Dataset, LabelUniverse, ProxyDistribution

log = logging.getLogger(__name__)

#: Composition rows within this distance of summing to one are rescaled.
#: Census tables rounded to two decimals over four classes can miss by 0.02.
COMPOSITION_SUM_TOL = 0.02
LIKELIHOOD_SUM_TOL = 1e-6


class UnknownKeyError(DataError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class CompositionTable:
    """Class proportions per geographic unit, rows already on the simplex."""

    universe: LabelUniverse
    rows: Mapping[str, ProxyDistribution]

    def __post_init__(self) -> None:
        for key, dist in self.rows.items():
            if len(dist) != len(self.universe):
                raise DataError(f"composition row {key!r} has {len(dist)} entries, expected {len(self.universe)}")
            bad = dist.problems()
            if bad:
                raise DataError(f"composition row {key!r}: {'; '.join(bad)}")

    @classmethod
    def from_raw(
        cls, universe: LabelUniverse, rows: Mapping[str, Sequence[float]], tol: float = COMPOSITION_SUM_TOL
    ) -> "CompositionTable":
        return cls(universe, {k: ProxyDistribution.normalized(v, tol) for k, v in rows.items()})

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, key: object) -> bool:
        return key in self.rows


@dataclass(frozen=True)
class LikelihoodTable:
    """P(feature value | class) for one feature, as a vector in universe order per value."""

    feature: str
    universe: LabelUniverse
    likelihoods: Mapping[str, tuple[float, ...]]
    normalized: bool = field(init=False)

    def __post_init__(self) -> None:
        k = len(self.universe)
        for value, vec in self.likelihoods.items():
            if len(vec) != k or any(not math.isfinite(x) or x < 0 for x in vec):
                raise DataError(f"{self.feature}={value!r}: likelihoods must be {k} nonnegative numbers")
        if self.likelihoods:
            cols = np.array(list(self.likelihoods.values()), dtype=np.float64)
            totals = cols.sum(axis=0)
            ok = bool(np.all(np.abs(totals - 1.0) <= LIKELIHOOD_SUM_TOL))
        else:
            ok = False
        # unnormalized tables are fine for the posterior: only ratios across classes matter
        object.__setattr__(self, "normalized", ok)

    def lookup(self, value: str) -> tuple[float, ...]:
        try:
            return self.likelihoods[value]
        except KeyError:
            raise DataError(f"no likelihood entry for {self.feature}={value!r}") from None


def proxy_from_composition(table: CompositionTable, geo_key: str) -> ProxyDistribution:
    try:
        return table.rows[geo_key]
    except KeyError:
        raise UnknownKeyError(f"geo key {geo_key!r} not in composition table") from None


def naive_bayes_posterior(
    prior: ProxyDistribution, tables: Sequence[LikelihoodTable], observed: Mapping[str, str]
) -> ProxyDistribution:
    """Posterior class distribution assuming features are independent given the class."""
    post = np.array(prior.probs, dtype=np.float64)
    by_name = {t.feature: t for t in tables}
    for name, value in observed.items():
        if name not in by_name:
            raise DataError(f"no likelihood table for feature {name!r}")
        lik = np.array(by_name[name].lookup(value), dtype=np.float64)
        if lik.shape != post.shape:
            raise DataError(f"feature {name!r} table covers {lik.size} classes, prior has {post.size}")
        post = post * lik
        peak = post.max()
        if peak > 0:
            post = post / peak  # keep many-feature products away from underflow
    total = math.fsum(post.tolist())
    if not total > 0:
        raise DataError("contradictory evidence: every class has zero posterior mass")
    return ProxyDistribution(tuple(post / total))


@dataclass(frozen=True)
class RawRecord:
    """One ingested decision row before a proxy is attached."""

    outcome: float
    geo_key: str
    true_class: str | None = None
    covariate: float | None = None


@dataclass(frozen=True)
class AttachResult:
    dataset: Dataset
    dropped: int
    dropped_keys: tuple[str, ...] = ()


def attach_proxy(rows: Iterable[RawRecord], table: CompositionTable, drop_unmatched: bool = False) -> AttachResult:
    """Give every row its geounit's composition as proxy.

    Rows whose key is missing from ``table`` raise unless ``drop_unmatched``
    is set, in which case they are counted and a warning is logged.
    """
    universe = table.universe
    k = len(universe)
    outcomes, proxies, labels, keys, covs = [], [], [], [], []
    dropped: list[str] = []
    for row in rows:
        dist = table.rows.get(row.geo_key)
        if dist is None:
            if not drop_unmatched:
                raise UnknownKeyError(f"geo key {row.geo_key!r} not in composition table")
            dropped.append(row.geo_key)
            continue
        if row.true_class is not None and row.true_class not in universe:
            raise DataError(f"true class {row.true_class!r} not in universe {universe.labels}")
        outcomes.append(row.outcome)
        proxies.append(dist.probs)
        labels.append(row.true_class)
        keys.append(row.geo_key)
        covs.append(np.nan if row.covariate is None else row.covariate)
    if dropped:
        log.warning("dropped %d row(s) with geo keys missing from the composition table", len(dropped))
    n = len(outcomes)
    proxies_arr = np.array(proxies, dtype=np.float64).reshape(n, k)
    ds = Dataset.from_arrays(universe, np.array(outcomes, dtype=np.float64), proxies_arr, labels, keys, covs)
    return AttachResult(ds, len(dropped), tuple(sorted(set(dropped))))


def key_class_frequencies(dataset: Dataset) -> np.ndarray:
    """Empirical class distribution within each proxy key (rows follow ``key_names``)."""
    if not dataset.has_true_labels or not dataset.has_keys:
        raise DataError("plug-in proxies need a true label and a proxy key on every record")
    k = len(dataset.universe)
    m = len(dataset.key_names)
    counts = np.zeros((m, k))
    np.add.at(counts, (dataset.key_index, dataset.true_index), 1.0)
    with np.errstate(invalid="ignore"):
        return counts / counts.sum(axis=1, keepdims=True)


def plugin_proxy(dataset: Dataset) -> Dataset:
    """Replace every proxy by the class frequencies of its key group."""
    freqs = key_class_frequencies(dataset)
    return dataset.replace(proxies=freqs[dataset.key_index])


def likelihoods_from_composition(table: CompositionTable, population: Mapping[str, float] | None = None) -> LikelihoodTable:
    """Geography likelihood table P(geo | class) implied by a composition table.

    With per-unit ``population`` counts this is the proper conditional; without,
    units are weighted equally (ratios across classes still match the table).
    """
    keys = list(table.rows)
    weights = np.array([1.0 if population is None else float(population[key]) for key in keys])
    comp = np.array([table.rows[key].probs for key in keys])
    joint = comp * weights[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = joint / joint.sum(axis=0, keepdims=True)
    cond = np.nan_to_num(cond)
    return LikelihoodTable("geo", table.universe, {key: tuple(cond[i]) for i, key in enumerate(keys)})


def class_marginals(table: CompositionTable, population: Mapping[str, float] | None = None) -> ProxyDistribution:
    """Overall class shares implied by the table (units weighted by ``population``, else equally)."""
    keys = list(table.rows)
    weights = np.array([1.0 if population is None else float(population[key]) for key in keys])
    joint = np.array([table.rows[key].probs for key in keys]) * weights[:, None]
    totals = joint.sum(axis=0)
    return ProxyDistribution(tuple(totals / totals.sum()))
