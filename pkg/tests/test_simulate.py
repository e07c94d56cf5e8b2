import logging

import numpy as np
import pytest

from proxyaudit.bias import OVERESTIMATE, check_conditions, conditional_covariance_mean
from proxyaudit.domain import ConfigurationError, ThresholdPolicy
from proxyaudit.estimators import assign_indices, true_disparity, weighted_estimate
from proxyaudit.proxy import plugin_proxy
from proxyaudit.simulate import (
    MORTGAGE_UNIVERSE,
    SWEEP_COLUMNS,
    OutcomePolicy,
    experiment_neighborhoods,
    experiment_population,
    income_deciles,
    read_sweep_csv,
    replication_seed,
    semisynthetic_decile,
    semisynthetic_population,
    splitmix64,
    sweep,
    synthetic_incomes,
    toy_population,
    write_sweep_csv,
)


def _cell_counts(ds):
    out = {}
    for k, c in zip(ds.key_index, ds.true_index):
        key = (ds.key_names[k], ds.universe.labels[c])
        out[key] = out.get(key, 0) + 1
    return out


def test_toy_cell_counts():
    for which in ("toy1", "toy2"):
        counts = _cell_counts(toy_population(which))
        assert counts == {("high", "a"): 70, ("high", "b"): 30, ("low", "a"): 30, ("low", "b"): 70}


def test_toy_unknown():
    with pytest.raises(ConfigurationError):
        toy_population("toy3")


def test_splitmix_reference_values():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert replication_seed(7, 0) == 7 ^ splitmix64(0)
    assert len({replication_seed(0, r) for r in range(1000)}) == 1000


def test_experiment_class_counts_exact():
    ds = experiment_population("inter", 1.0, seed=3)
    counts = _cell_counts(ds)
    assert counts == {
        ("z1", "a"): 600, ("z1", "b"): 2400,
        ("z2", "a"): 2000, ("z2", "b"): 2000,
        ("z3", "a"): 4000, ("z3", "b"): 1000,
    }
    # configured fractions coincide with the plug-in proxy
    assert np.array_equal(plugin_proxy(ds).proxies, ds.proxies)


def test_inter_assignment_map():
    ds = experiment_population("inter", 2.0, seed=11)
    idx = assign_indices(ds, ThresholdPolicy(0.75))
    by_key = {ds.key_names[k]: set(idx[ds.key_index == k].tolist()) for k in range(3)}
    assert by_key == {"z1": {1}, "z2": {-1}, "z3": {0}}


def test_intra_at_zero_matches_inter_specs():
    assert experiment_neighborhoods("intra", 0.0) == experiment_neighborhoods("inter")
    a = experiment_population("intra", 1.0, seed=5, d=0.0)
    b = experiment_population("inter", 1.0, seed=5)
    assert np.array_equal(a.outcomes, b.outcomes)


def test_experiment_rejects_bad_parameters():
    with pytest.raises(ConfigurationError):
        experiment_population("intra", 1.0, seed=1, d=0.6)
    with pytest.raises(ConfigurationError):
        experiment_population("inter", 0.0, seed=1)
    with pytest.raises(ConfigurationError):
        experiment_population("sideways", 1.0, seed=1)
    with pytest.raises(ConfigurationError):
        sweep("inter", [1.0], reps=0)


def test_experiment_deterministic():
    a = experiment_population("intra", 1.5, seed=99, d=-0.25)
    b = experiment_population("intra", 1.5, seed=99, d=-0.25)
    assert np.array_equal(a.outcomes, b.outcomes) and np.array_equal(a.covariates, b.covariates)
    c = experiment_population("intra", 1.5, seed=100, d=-0.25)
    assert not np.array_equal(a.outcomes, c.outcomes)


def test_expected_given_normal_against_sampling():
    pol = OutcomePolicy("logistic_income", lam=1.3, center=2.0)
    draws = np.random.default_rng(0).normal(1.0, 0.5, size=2_000_000)
    assert pol.expected_given_normal(1.0, 0.25) == pytest.approx(float(pol.probability(draws).mean()), abs=1e-3)
    assert pol.expected_given_normal(2.0, 0.25) == pytest.approx(0.5, abs=1e-14)


def test_derandomized_inter_has_zero_covariance():
    ds = experiment_population("inter", 1.2, seed=None, derandomized=True)
    for u in "ab":
        assert conditional_covariance_mean(ds, u) == pytest.approx(0.0, abs=1e-15)
    w = weighted_estimate(ds, "a", "b")
    assert w.disparity == pytest.approx(true_disparity(ds, "a", "b"), abs=1e-12)


def test_derandomized_intra_negative_d_overestimates():
    ds = experiment_population("intra", 1.0, seed=None, d=-0.4, derandomized=True)
    rep = check_conditions(ds, ThresholdPolicy(0.75), "a", "b")
    assert all(rep.holds) and rep.direction == OVERESTIMATE


def test_sweep_rerun_identical(tmp_path):
    a = sweep("inter", [0.5, 1.5], reps=1, base_seed=42)
    b = sweep("inter", [0.5, 1.5], reps=1, base_seed=42)
    pa, pb = write_sweep_csv(a, tmp_path / "a.csv"), write_sweep_csv(b, tmp_path / "b.csv")
    assert pa.read_bytes() == pb.read_bytes()
    rows = read_sweep_csv(pa)
    assert len(rows) == 2 and tuple(rows[0]) == SWEEP_COLUMNS
    assert int(rows[0]["seed"]) == replication_seed(42, 0)


def test_income_deciles_range():
    z = income_deciles(np.random.default_rng(1).lognormal(size=1000))
    assert set(z.tolist()) == set(range(1, 11))
    assert np.bincount(z)[1:].tolist() == [100] * 10


def test_income_deciles_ties_warn(caplog):
    with caplog.at_level(logging.WARNING, logger="proxyaudit.simulate"):
        z = income_deciles([1.0] * 50 + [2.0] * 50)
    assert set(z.tolist()) <= set(range(1, 11))
    assert any("collapse" in r.getMessage() for r in caplog.records)


def test_semisynthetic_small_input_rejected():
    with pytest.raises(ConfigurationError):
        semisynthetic_decile([1.0] * 5, ["white"] * 5, MORTGAGE_UNIVERSE, seed=1)


def test_semisynthetic_structure():
    incomes, labels = synthetic_incomes(5000, seed=4)
    ds = semisynthetic_decile(incomes, labels, MORTGAGE_UNIVERSE, seed=8)
    assert sorted(int(k) for k in ds.key_names) == list(range(1, 11))
    assert np.array_equal(plugin_proxy(ds).proxies, ds.proxies)
    # classes do differ in income, so the deciles carry class information
    assert np.ptp(ds.proxies[:, MORTGAGE_UNIVERSE.index("api")]) > 0.05


def test_semisynthetic_derandomized_exact():
    ds = semisynthetic_population(20_000, seed=3, derandomized=True)
    for adv, dis in (("white", "black"), ("api", "hispanic")):
        w = weighted_estimate(ds, adv, dis).disparity
        assert abs(w - true_disparity(ds, adv, dis)) < 1e-12
