"""Seeded population generators and parameter sweeps.

Random draws use numpy's ``Generator`` on PCG64 (``np.random.default_rng``):
normals via ``Generator.normal`` (ziggurat), Bernoulli outcomes as
``random() < p``. Replication ``r`` of a sweep uses
``base_seed XOR splitmix64(r)``, so every grid point sees the same
replication seeds.

Class counts inside each neighbourhood are the exact expected integers, not
multinomial draws. Every generator has a derandomized variant whose outcome
is the conditional success probability given (neighbourhood, class) instead
of a Bernoulli draw.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from proxyaudit import _io
from proxyaudit.bias import delta_terms
from proxyaudit.domain import ConfigurationError, Dataset, LabelUniverse, ThresholdPolicy
from proxyaudit.estimators import thresholded_estimate, true_disparity, weighted_estimate
from proxyaudit.proxy import plugin_proxy

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
BINARY = LabelUniverse(("a", "b"))
INCOME_VARIANCE = 0.25
DECILE_CENTER = 5.5
_HERMITE_NODES = 80


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(base_seed: int, rep: int) -> int:
    return (int(base_seed) & MASK64) ^ splitmix64(int(rep))


def logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class NeighborhoodSpec:
    key: str
    population: int
    adv_fraction: float
    income_mean_by_class: dict[str, float]
    income_variance: float = INCOME_VARIANCE

    def __post_init__(self) -> None:
        if self.population < 1:
            raise ConfigurationError(f"{self.key}: population must be at least 1")
        if not 0.0 <= self.adv_fraction <= 1.0:
            raise ConfigurationError(f"{self.key}: adv_fraction must lie in [0, 1]")
        if self.income_variance < 0:
            raise ConfigurationError(f"{self.key}: negative income variance")

    @property
    def adv_count(self) -> int:
        count = self.population * self.adv_fraction
        if abs(count - round(count)) > 1e-9:
            raise ConfigurationError(f"{self.key}: population x fraction is not an integer ({count})")
        return int(round(count))


@dataclass(frozen=True)
class OutcomePolicy:
    """How outcomes follow from covariates.

    ``logistic_income``: P(Y=1|X) = logistic(lam * (X - center)).
    ``table_rate``: fixed rate per (key, class).
    ``logistic_decile``: P(Y=1|Z=z) = logistic(z - center) on the decile index.
    """

    kind: str
    lam: float = 1.0
    center: float = 2.0
    rates: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("logistic_income", "table_rate", "logistic_decile"):
            raise ConfigurationError(f"unknown outcome policy {self.kind!r}")
        if self.kind == "logistic_income" and not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam!r}")
        for cell, rate in self.rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ConfigurationError(f"rate {rate!r} for {cell} outside [0, 1]")

    def probability(self, x):
        if self.kind == "logistic_income":
            return logistic(self.lam * (np.asarray(x) - self.center))
        if self.kind == "logistic_decile":
            return logistic(np.asarray(x) - self.center)
        raise ConfigurationError("table_rate outcomes depend on (key, class), not a covariate")

    def expected_given_normal(self, mean: float, variance: float) -> float:
        """E[P(Y=1|X)] for X ~ Normal(mean, variance), by Gauss-Hermite quadrature."""
        if variance == 0:
            return float(self.probability(mean))
        nodes, weights = np.polynomial.hermite_e.hermegauss(_HERMITE_NODES)
        vals = self.probability(mean + math.sqrt(variance) * nodes)
        return float(math.fsum((weights * vals).tolist()) / math.sqrt(2.0 * math.pi))


# toy populations -----------------------------------------------------------

_TOY_APPROVALS = {
    # (key, class): (count, approvals)
    "toy1": {("high", "a"): (70, 70), ("high", "b"): (30, 30), ("low", "a"): (30, 0), ("low", "b"): (70, 0)},
    "toy2": {("high", "a"): (70, 49), ("high", "b"): (30, 24), ("low", "a"): (30, 6), ("low", "b"): (70, 21)},
}
_TOY_PROXY = {"high": (0.7, 0.3), "low": (0.3, 0.7)}


def toy_population(which: str) -> Dataset:
    """The two 200-applicant, two-neighbourhood example populations."""
    if which not in _TOY_APPROVALS:
        raise ConfigurationError(f"unknown toy population {which!r}; choose toy1 or toy2")
    outcomes, proxies, labels, keys = [], [], [], []
    for (key, cls), (count, approved) in _TOY_APPROVALS[which].items():
        for i in range(count):
            outcomes.append(1.0 if i < approved else 0.0)
            proxies.append(_TOY_PROXY[key])
            labels.append(cls)
            keys.append(key)
    return Dataset.from_arrays(BINARY, outcomes, proxies, labels, keys)


# Monte-Carlo experiments ------------------------------------------------------

_EXPERIMENT_LAYOUT = (("z1", 3000, 0.2, 1.0), ("z2", 4000, 0.5, 2.0), ("z3", 5000, 0.8, 3.0))


def experiment_neighborhoods(kind: str, d: float = 0.0) -> list[NeighborhoodSpec]:
    """``intra``: class-dependent income means (base +/- d); ``inter``: means by neighbourhood only."""
    if kind == "intra":
        if not -0.5 <= d <= 0.5:
            raise ConfigurationError(f"d must lie in [-0.5, 0.5], got {d!r}")
        shift = d
    elif kind == "inter":
        shift = 0.0
    else:
        raise ConfigurationError(f"unknown experiment {kind!r}; choose intra or inter")
    return [
        NeighborhoodSpec(key, pop, frac, {"a": base + shift, "b": base - shift})
        for key, pop, frac, base in _EXPERIMENT_LAYOUT
    ]


def population_from_specs(
    specs: Sequence[NeighborhoodSpec],
    policy: OutcomePolicy,
    seed: int | None,
    derandomized: bool = False,
) -> Dataset:
    outcomes, proxies, labels, keys, incomes = [], [], [], [], []
    rng = None if derandomized else np.random.default_rng(int(seed) & MASK64)
    for spec in specs:
        n_a = spec.adv_count
        # count ratios, so the proxy is bit-identical to the plug-in frequencies
        proxy = [n_a / spec.population, (spec.population - n_a) / spec.population]
        for cls, count in (("a", n_a), ("b", spec.population - n_a)):
            if count == 0:
                continue
            mean = spec.income_mean_by_class[cls]
            if derandomized:
                x = np.full(count, mean)
                y = np.full(count, policy.expected_given_normal(mean, spec.income_variance))
            else:
                x = rng.normal(mean, math.sqrt(spec.income_variance), size=count)
                y = (rng.random(count) < policy.probability(x)).astype(np.float64)
            incomes.append(x)
            outcomes.append(y)
            proxies.append(np.tile(proxy, (count, 1)))
            labels.extend([cls] * count)
            keys.extend([spec.key] * count)
    return Dataset.from_arrays(
        BINARY,
        np.concatenate(outcomes),
        np.concatenate(proxies),
        labels,
        keys,
        np.concatenate(incomes),
    )


def experiment_population(
    kind: str, lam: float, seed: int | None, d: float = 0.0, derandomized: bool = False
) -> Dataset:
    """Three-neighbourhood population (3000/4000/5000 people, 20/50/80% class a)."""
    policy = OutcomePolicy("logistic_income", lam=float(lam), center=2.0)
    if seed is None and not derandomized:
        raise ConfigurationError("a seed is required unless derandomized")
    return population_from_specs(experiment_neighborhoods(kind, d), policy, seed, derandomized)


@dataclass(frozen=True)
class SweepResult:
    kind: str
    grid_value: float
    q: float
    base_seed: int
    seeds: tuple[int, ...]
    true: np.ndarray
    thresholded: np.ndarray
    weighted: np.ndarray
    delta1_a: np.ndarray
    delta1_b: np.ndarray
    delta2_a: np.ndarray
    delta2_b: np.ndarray

    @property
    def reps(self) -> int:
        return len(self.seeds)

    @property
    def thresholded_bias(self) -> np.ndarray:
        return self.thresholded - self.true

    @property
    def weighted_bias(self) -> np.ndarray:
        return self.weighted - self.true

    @staticmethod
    def stderr(values: np.ndarray) -> float:
        if len(values) < 2:
            return float("nan")
        return float(np.std(values, ddof=1) / math.sqrt(len(values)))

    def summary(self) -> dict[str, float]:
        out = {"grid_value": self.grid_value, "reps": self.reps}
        for name in ("true", "thresholded", "weighted", "delta1_a", "delta1_b", "delta2_a", "delta2_b"):
            out[f"mean_{name}"] = float(np.mean(getattr(self, name)))
        for name in ("thresholded_bias", "weighted_bias"):
            vals = getattr(self, name)
            out[f"mean_{name}"] = float(np.mean(vals))
            out[f"se_{name}"] = self.stderr(vals)
        return out


def replicate(dataset: Dataset, policy: ThresholdPolicy) -> dict[str, float]:
    """True, thresholded and weighted disparity plus the four delta terms on one population."""
    d1a, d2a = delta_terms(dataset, policy, "a", "b")
    d1b, d2b = delta_terms(dataset, policy, "b", "a")
    return dict(
        true=true_disparity(dataset, "a", "b"),
        thresholded=thresholded_estimate(dataset, policy, "a", "b").disparity,
        weighted=weighted_estimate(dataset, "a", "b").disparity,
        delta1_a=d1a,
        delta1_b=d1b,
        delta2_a=d2a,
        delta2_b=d2b,
    )


def sweep(
    kind: str,
    grid: Sequence[float],
    reps: int = 30,
    q: float = 0.75,
    base_seed: int = 0,
    lam: float = 1.0,
    d: float = 0.0,
) -> list[SweepResult]:
    """Run ``reps`` populations per grid value; the grid is d for ``intra`` and lambda for ``inter``."""
    if reps < 1:
        raise ConfigurationError("reps must be at least 1")
    policy = ThresholdPolicy(q)
    seeds = tuple(replication_seed(base_seed, r) for r in range(reps))
    results = []
    for value in grid:
        value = float(value)
        cols: dict[str, list[float]] = {}
        for s in seeds:
            if kind == "intra":
                ds = experiment_population("intra", lam, s, d=value)
            elif kind == "inter":
                ds = experiment_population("inter", value, s)
            else:
                raise ConfigurationError(f"unknown sweep kind {kind!r}")
            for name, v in replicate(ds, policy).items():
                cols.setdefault(name, []).append(v)
        results.append(
            SweepResult(
                kind=kind,
                grid_value=value,
                q=policy.q,
                base_seed=int(base_seed),
                seeds=seeds,
                **{name: np.array(vals) for name, vals in cols.items()},
            )
        )
    return results


SWEEP_COLUMNS = (
    "kind", "grid_value", "rep", "seed", "delta", "delta_q", "delta_w",
    "delta1_a", "delta1_b", "delta2_a", "delta2_b",
)
SUMMARY_COLUMNS = (
    "grid_value", "reps", "mean_true", "mean_thresholded", "mean_weighted",
    "mean_thresholded_bias", "se_thresholded_bias", "mean_weighted_bias", "se_weighted_bias",
    "mean_delta1_a", "mean_delta1_b", "mean_delta2_a", "mean_delta2_b",
)


def write_sweep_csv(results: Sequence[SweepResult], path) -> Path:
    rows = []
    for res in results:
        for r, seed in enumerate(res.seeds):
            rows.append((
                res.kind, res.grid_value, r, seed, res.true[r], res.thresholded[r], res.weighted[r],
                res.delta1_a[r], res.delta1_b[r], res.delta2_a[r], res.delta2_b[r],
            ))
    return _io.write_csv(path, SWEEP_COLUMNS, rows)


def write_summary_csv(results: Sequence[SweepResult], path) -> Path:
    rows = []
    for res in results:
        s = res.summary()
        rows.append([s[c] for c in SUMMARY_COLUMNS])
    return _io.write_csv(path, SUMMARY_COLUMNS, rows)


# semi-synthetic decile construction --------------------------------------------


def income_deciles(incomes: Sequence[float]) -> np.ndarray:
    """Decile index 1..10 of each income (ties at a cut point go up)."""
    x = np.asarray(incomes, dtype=np.float64)
    cuts = np.quantile(x, np.arange(1, 10) / 10.0)
    z = 1 + np.searchsorted(cuts, x, side="right")
    used = len(np.unique(z))
    if used < 10:
        log.warning("income ties collapse deciles: only %d distinct decile groups", used)
    return z


def semisynthetic_decile(
    incomes: Sequence[float],
    labels: Sequence[str],
    universe: LabelUniverse,
    seed: int | None,
    derandomized: bool = False,
) -> Dataset:
    """Income deciles as the proxy key, outcomes depending on the decile only.

    The proxy is each decile's empirical class mix, so outcomes are independent
    of class given the key by construction.
    """
    if len(incomes) < 10:
        raise ConfigurationError("need at least 10 records to form deciles")
    if len(labels) != len(incomes):
        raise ConfigurationError("incomes and labels differ in length")
    z = income_deciles(incomes)
    p = OutcomePolicy("logistic_decile", center=DECILE_CENTER).probability(z)
    if derandomized:
        y = p.astype(np.float64)
    else:
        if seed is None:
            raise ConfigurationError("a seed is required unless derandomized")
        rng = np.random.default_rng(int(seed) & MASK64)
        y = (rng.random(len(z)) < p).astype(np.float64)
    keys = [str(int(v)) for v in z]
    placeholder = np.full((len(z), len(universe)), 1.0 / len(universe))
    ds = Dataset.from_arrays(universe, y, placeholder, list(labels), keys, np.asarray(incomes, dtype=np.float64))
    return plugin_proxy(ds)


MORTGAGE_UNIVERSE = LabelUniverse(("hispanic", "white", "black", "api"))
_INCOME_SHARES = (0.15, 0.65, 0.12, 0.08)
_LOG_INCOME_MEAN = (4.15, 4.45, 4.05, 4.55)  # log thousands of dollars
_LOG_INCOME_SD = 0.6


def synthetic_incomes(n: int, seed: int) -> tuple[np.ndarray, list[str]]:
    """Applicant incomes with class-dependent lognormal distributions."""
    if n < 10:
        raise ConfigurationError("n must be at least 10")
    rng = np.random.default_rng(int(seed) & MASK64)
    cls = rng.choice(len(_INCOME_SHARES), size=n, p=_INCOME_SHARES)
    incomes = np.exp(rng.normal(np.take(_LOG_INCOME_MEAN, cls), _LOG_INCOME_SD))
    labels = [MORTGAGE_UNIVERSE.labels[c] for c in cls]
    return incomes, labels


def semisynthetic_population(n: int, seed: int, derandomized: bool = False) -> Dataset:
    incomes, labels = synthetic_incomes(n, seed)
    return semisynthetic_decile(incomes, labels, MORTGAGE_UNIVERSE, replication_seed(seed, 1), derandomized)


# HMDA-shaped fixture ----------------------------------------------------------

HMDA_RACE_NAMES = {
    "hispanic": "Hispanic or Latino",
    "white": "White",
    "black": "Black or African American",
    "api": "Asian",
}
HMDA_COLUMNS = (
    "activity_year", "lei", "state_code", "county_code", "census_tract",
    "action_taken", "derived_race", "income",
)


def write_hmda_fixture(directory, n: int = 10_000, seed: int = 0, n_tracts: int = 60) -> dict[str, Path]:
    """Write a synthetic HMDA-shaped records file, its tract composition table and a column config.

    The fixture deliberately contains rows the default coding skips (withdrawn
    or incomplete applications, unavailable race), a few malformed rows and
    tracts absent from the composition table.
    """
    directory = Path(directory)
    rng = np.random.default_rng(int(seed) & MASK64)
    labels = MORTGAGE_UNIVERSE.labels
    tracts = []
    comp_rows = []
    for t in range(n_tracts):
        state, county = f"{1 + t % 3:02d}", f"{1 + 2 * (t % 7):03d}"
        tract = f"{20100 + 100 * t:06d}"
        mix = rng.dirichlet([0.6, 2.0, 0.7, 0.3])
        rounded = np.round(mix, 2)
        gap = 1.0 - rounded.sum()
        rounded[int(np.argmax(rounded))] += round(gap, 2) if abs(gap) > 0.02 else 0.0
        wealth = rng.normal(0.0, 1.0) + 1.2 * (mix[1] + mix[3] - 0.5)
        tracts.append((state, county, tract, mix, wealth))
        comp_rows.append([state + county + tract] + [f"{v:.2f}" for v in rounded])
    rows = []
    for i in range(n):
        state, county, tract, mix, wealth = tracts[int(rng.integers(n_tracts))]
        c = int(rng.choice(4, p=mix))
        gap = (0.0, 0.3, -0.5, 0.2)[c]
        p_ok = float(logistic(0.8 + 0.9 * wealth + gap))
        action = 1 if rng.random() < p_ok else 3
        u = rng.random()
        if u < 0.04:
            action = int(rng.choice([4, 5, 6]))
        race = HMDA_RACE_NAMES[labels[c]] if rng.random() > 0.03 else "Race Not Available"
        income = f"{math.exp(rng.normal(4.3 + 0.3 * wealth, 0.5)):.0f}"
        rows.append(["2012", f"LEI{i % 97:04d}", state, county, tract, str(action), race, income])
    # dirt: a few malformed and unmatched rows at fixed positions
    for j in range(0, n, max(1, n // 5)):
        rows[j][5] = "x"
    for j in range(7, n, max(1, n // 4)):
        rows[j][4] = "999999"
    directory.mkdir(parents=True, exist_ok=True)
    records = _io.write_csv(directory / "hmda_records.csv", HMDA_COLUMNS, rows)
    composition = _io.write_csv(directory / "tract_composition.csv", ("geo_key",) + labels, comp_rows)
    config_lines = [
        "[columns]",
        "outcome = action_taken",
        "geo = state_code, county_code, census_tract",
        "geo_separator =",
        "class = derived_race",
        "",
        "[outcome_coding]",
        "1 = 1",
        "2 = 1",
        "3 = 0",
        "",
        "[options]",
        "skip_unmapped_outcome = true",
        "skip_unmapped_class = true",
        "",
        "[class_coding]",
    ] + [f"{name} = {lab}" for lab, name in HMDA_RACE_NAMES.items()] + [""]
    config = _io.atomic_write_text(directory / "hmda.ini", "\n".join(config_lines))
    return {"records": records, "composition": composition, "config": config}


def read_sweep_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
