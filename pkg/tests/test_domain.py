import pickle

import numpy as np
import pytest

from proxyaudit.domain import (
    NA,
    AuditRecord,
    ConfigurationError,
    DataError,
    Dataset,
    LabelUniverse,
    ProxyDistribution,
    ThresholdPolicy,
    require_valid,
    validate,
)
from proxyaudit.simulate import toy_population

AB = LabelUniverse(("a", "b"))


def _rec(y, p, a=None, z=None):
    return AuditRecord(y, ProxyDistribution(p), a, z)


def test_universe_rules():
    with pytest.raises(ConfigurationError):
        LabelUniverse(("a",))
    with pytest.raises(ConfigurationError):
        LabelUniverse(("a", "a"))
    with pytest.raises(ConfigurationError):
        LabelUniverse(("a", ""))
    u = LabelUniverse(("white", "black", "hispanic", "api"))
    assert u.index("hispanic") == 2 and "api" in u and "NA" not in u


def test_na_is_not_a_label():
    assert repr(NA) == "NA"
    assert NA not in AB
    assert pickle.loads(pickle.dumps(NA)) is NA


@pytest.mark.parametrize("q", [0.5, 0.75, 0.999])
def test_policy_accepts(q):
    assert ThresholdPolicy(q).q == q


@pytest.mark.parametrize("q", [0.49, 1.0, 1.2, -0.1])
def test_policy_rejects(q):
    with pytest.raises(ConfigurationError):
        ThresholdPolicy(q)


def test_validate_toy_is_clean():
    assert validate(toy_population("toy1")) == []
    assert validate(toy_population("toy2")) == []


def test_validate_flags_simplex_violation_at_record_3():
    recs = [_rec(1.0, (0.5, 0.5), "a") for _ in range(5)]
    recs[3] = _rec(1.0, (0.7, 0.5), "a")
    found = validate(Dataset.from_records(AB, recs))
    assert len(found) == 1
    assert found[0].index == 3 and "sum" in found[0].message


def test_validate_flags_unknown_true_class():
    recs = [_rec(0.0, (0.4, 0.6), "a"), _rec(1.0, (0.4, 0.6), "zz")]
    found = validate(Dataset.from_records(AB, recs))
    assert [v.index for v in found] == [1]
    assert "zz" in found[0].message


def test_validate_flags_length_and_outcome():
    recs = [_rec(0.0, (0.4, 0.6)), _rec(1.5, (0.4, 0.6)), _rec(1.0, (0.2, 0.3, 0.5))]
    found = validate(Dataset.from_records(AB, recs))
    assert sorted(v.index for v in found) == [1, 2]


def test_require_valid_raises():
    ds = Dataset.from_records(AB, [_rec(1.0, (0.9, 0.3))])
    with pytest.raises(DataError, match="record 0"):
        require_valid(ds)


def test_normalized_proxy():
    p = ProxyDistribution.normalized([0.3, 0.7000004])
    assert sum(p.probs) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DataError):
        ProxyDistribution.normalized([0.3, 0.8])


def test_dataset_is_read_only_and_order_preserving():
    ds = toy_population("toy2")
    with pytest.raises(ValueError):
        ds.outcomes[0] = 0.5
    recs = ds.records
    assert len(recs) == 200
    again = Dataset.from_records(ds.universe, recs)
    assert np.array_equal(again.outcomes, ds.outcomes)
    assert np.array_equal(again.proxies, ds.proxies)
    assert [r.true_class for r in again.records] == [r.true_class for r in recs]
    assert [r.proxy_key for r in again.records] == [r.proxy_key for r in recs]
