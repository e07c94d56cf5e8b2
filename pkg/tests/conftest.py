from __future__ import annotations

import numpy as np
import pytest

from proxyaudit.domain import Dataset, LabelUniverse

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_population(
    rng: np.random.Generator,
    n_classes: int = 2,
    plugin: bool = False,
    n_keys: tuple[int, int] = (2, 8),
    key_size: tuple[int, int] = (3, 40),
) -> Dataset:
    """Random tract structure, class mixes, proxies and binary outcomes.

    Proxies are drawn per key independently of the true class mix unless
    ``plugin``; outcome rates vary by (key, class).
    """
    labels = tuple("abcdefgh"[:n_classes])
    universe = LabelUniverse(labels)
    m = int(rng.integers(n_keys[0], n_keys[1] + 1))
    outcomes, proxies, classes, keys = [], [], [], []
    for z in range(m):
        size = int(rng.integers(key_size[0], key_size[1] + 1))
        mix = rng.dirichlet(np.full(n_classes, 0.8))
        proxy = rng.dirichlet(np.full(n_classes, 0.5))
        rates = rng.random(n_classes)
        for _ in range(size):
            c = int(rng.choice(n_classes, p=mix))
            outcomes.append(float(rng.random() < rates[c]))
            proxies.append(proxy)
            classes.append(labels[c])
            keys.append(f"k{z}")
    ds = Dataset.from_arrays(universe, outcomes, np.array(proxies), classes, keys)
    if plugin:
        from proxyaudit.proxy import plugin_proxy

        ds = plugin_proxy(ds)
    return ds


def as_oracle_records(ds: Dataset) -> list[tuple]:
    return [
        (float(ds.outcomes[i]), tuple(float(p) for p in ds.proxies[i]), int(ds.true_index[i]),
         ds.key_names[ds.key_index[i]] if ds.key_index[i] >= 0 else None)
        for i in range(len(ds))
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
