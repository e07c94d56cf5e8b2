"""Core data types shared across the package.

A :class:`Dataset` is stored column-wise (numpy arrays, read-only) because every
estimator is an aggregate over records. :class:`AuditRecord` is the row view
used for construction and inspection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9
RENORMALIZE_TOL = 1e-6

# true_index codes for records without a usable class label
MISSING = -1
UNKNOWN = -2


class ProxyAuditError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ProxyAuditError, ValueError):
    """Invalid parameters or configuration."""


class DataError(ProxyAuditError):
    """Input data is missing, malformed or inconsistent."""


class SchemaError(DataError):
    """An input file does not have the expected columns."""


class EstimationError(ProxyAuditError):
    """An estimator or bias term is undefined on the given data."""


class _NAType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NA"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (_NAType, ())


#: Unclassified assignment. Never a member of any label universe.
NA = _NAType()


@dataclass(frozen=True)
class LabelUniverse:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ConfigurationError("a label universe needs at least two classes")
        for lab in labels:
            if not isinstance(lab, str) or not lab:
                raise ConfigurationError(f"class labels must be nonempty strings, got {lab!r}")
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"duplicate class labels in {labels}")
        object.__setattr__(self, "_pos", {lab: i for i, lab in enumerate(labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: object) -> bool:
        return label in self._pos

    def index(self, label: str) -> int:
        try:
            return self._pos[label]
        except KeyError:
            raise ConfigurationError(f"unknown class label {label!r}; universe is {self.labels}") from None


@dataclass(frozen=True)
class ProxyDistribution:
    """Probability vector over a label universe, in universe order."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    def __len__(self) -> int:
        return len(self.probs)

    def problems(self, tol: float = SIMPLEX_TOL) -> list[str]:
        out = []
        for j, p in enumerate(self.probs):
            if not math.isfinite(p) or p < 0.0 or p > 1.0:
                out.append(f"entry {j} = {p!r} outside [0, 1]")
        total = math.fsum(self.probs)
        if not out and abs(total - 1.0) > tol:
            out.append(f"entries sum to {total!r}, not 1")
        return out

    @classmethod
    def normalized(cls, probs: Sequence[float], tol: float = RENORMALIZE_TOL) -> "ProxyDistribution":
        """Rescale ``probs`` to sum to one when the gap is within ``tol``."""
        vals = [float(p) for p in probs]
        if any(not math.isfinite(p) or p < 0.0 for p in vals):
            raise DataError(f"proxy entries must be finite and nonnegative: {vals}")
        total = math.fsum(vals)
        if abs(total - 1.0) > tol:
            raise DataError(f"proxy sums to {total!r}; gap exceeds {tol:g}")
        return cls(tuple(p / total for p in vals))


@dataclass(frozen=True)
class AuditRecord:
    outcome: float
    proxy: ProxyDistribution
    true_class: str | None = None
    proxy_key: str | None = None
    covariate: float | None = None


@dataclass(frozen=True)
class ThresholdPolicy:
    q: float

    def __post_init__(self) -> None:
        q = float(self.q)
        if not (0.5 <= q < 1.0):
            raise ConfigurationError(f"threshold q must lie in [0.5, 1), got {self.q!r}")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class Violation:
    index: int
    message: str

    def __str__(self) -> str:
        return f"record {self.index}: {self.message}"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Dataset:
    """Immutable collection of audit records over a fixed label universe.

    Treated as the whole population by the bias computations: every
    probability and expectation is a plain frequency over these records.
    """

    __slots__ = (
        "universe",
        "outcomes",
        "proxies",
        "true_index",
        "key_index",
        "key_names",
        "covariates",
        "_unknown_labels",
        "_bad_rows",
        "_violations",
        "_records",
    )

    def __init__(
        self,
        universe: LabelUniverse,
        outcomes: np.ndarray,
        proxies: np.ndarray,
        true_index: np.ndarray | None = None,
        key_index: np.ndarray | None = None,
        key_names: Sequence[str] = (),
        covariates: np.ndarray | None = None,
        *,
        _unknown_labels: dict[int, object] | None = None,
        _bad_rows: dict[int, str] | None = None,
    ) -> None:
        n = len(outcomes)
        self.universe = universe
        self.outcomes = _readonly(np.array(outcomes, dtype=np.float64).reshape(n))
        self.proxies = _readonly(np.array(proxies, dtype=np.float64).reshape(n, len(universe)))
        ti = np.full(n, MISSING, dtype=np.intp) if true_index is None else np.array(true_index, dtype=np.intp)
        ki = np.full(n, MISSING, dtype=np.intp) if key_index is None else np.array(key_index, dtype=np.intp)
        cv = np.full(n, np.nan) if covariates is None else np.array(covariates, dtype=np.float64)
        if ti.shape != (n,) or ki.shape != (n,) or cv.shape != (n,):
            raise ConfigurationError("column lengths disagree")
        self.true_index = _readonly(ti)
        self.key_index = _readonly(ki)
        self.key_names = tuple(key_names)
        if ki.size and ki.max() >= len(self.key_names):
            raise ConfigurationError("key index refers past the key table")
        self.covariates = _readonly(cv)
        self._unknown_labels = dict(_unknown_labels or {})
        self._bad_rows = dict(_bad_rows or {})
        self._violations = None
        self._records = None

    # construction -------------------------------------------------------

    @classmethod
    def from_records(cls, universe: LabelUniverse, records: Iterable[AuditRecord]) -> "Dataset":
        records = list(records)
        k = len(universe)
        n = len(records)
        outcomes = np.empty(n)
        proxies = np.full((n, k), np.nan)
        true_index = np.full(n, MISSING, dtype=np.intp)
        covariates = np.full(n, np.nan)
        keys: dict[str, int] = {}
        key_index = np.full(n, MISSING, dtype=np.intp)
        unknown: dict[int, object] = {}
        bad: dict[int, str] = {}
        for i, rec in enumerate(records):
            outcomes[i] = rec.outcome
            probs = rec.proxy.probs if isinstance(rec.proxy, ProxyDistribution) else tuple(rec.proxy)
            if len(probs) == k:
                proxies[i] = probs
            else:
                bad[i] = f"proxy has {len(probs)} entries, universe has {k}"
            if rec.true_class is not None:
                if rec.true_class in universe:
                    true_index[i] = universe.index(rec.true_class)
                else:
                    true_index[i] = UNKNOWN
                    unknown[i] = rec.true_class
            if rec.proxy_key is not None:
                key_index[i] = keys.setdefault(rec.proxy_key, len(keys))
            if rec.covariate is not None:
                covariates[i] = rec.covariate
        return cls(
            universe, outcomes, proxies, true_index, key_index, tuple(keys), covariates,
            _unknown_labels=unknown, _bad_rows=bad,
        )

    @classmethod
    def from_arrays(
        cls,
        universe: LabelUniverse,
        outcomes,
        proxies,
        true_class: Sequence[str | None] | None = None,
        proxy_keys: Sequence[str | None] | None = None,
        covariates=None,
    ) -> "Dataset":
        """Build from columns; ``true_class`` and ``proxy_keys`` hold labels/keys (``None`` = absent)."""
        n = len(outcomes)
        true_index = None
        unknown: dict[int, object] = {}
        if true_class is not None:
            true_index = np.full(n, MISSING, dtype=np.intp)
            for i, lab in enumerate(true_class):
                if lab is None:
                    continue
                if lab in universe:
                    true_index[i] = universe.index(lab)
                else:
                    true_index[i] = UNKNOWN
                    unknown[i] = lab
        key_index, names = None, ()
        if proxy_keys is not None:
            key_index, names = factorize_keys(proxy_keys)
        return cls(universe, outcomes, proxies, true_index, key_index, names, covariates, _unknown_labels=unknown)

    def replace(self, **columns) -> "Dataset":
        """Copy with some columns swapped (``outcomes``, ``proxies``, ...)."""
        fields = dict(
            universe=self.universe,
            outcomes=self.outcomes,
            proxies=self.proxies,
            true_index=self.true_index,
            key_index=self.key_index,
            key_names=self.key_names,
            covariates=self.covariates,
        )
        fields.update(columns)
        return Dataset(**fields, _unknown_labels=self._unknown_labels)

    def take(self, order: Sequence[int]) -> "Dataset":
        """Records reordered (or subset) by position; the key table is kept."""
        order = np.asarray(order, dtype=np.intp)
        return Dataset(
            self.universe,
            self.outcomes[order],
            self.proxies[order],
            self.true_index[order],
            self.key_index[order],
            self.key_names,
            self.covariates[order],
        )

    # views ----------------------------------------------------------------

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, classes={self.universe.labels}, keys={len(self.key_names)})"

    @property
    def has_true_labels(self) -> bool:
        return bool(len(self)) and bool((self.true_index >= 0).all())

    @property
    def has_keys(self) -> bool:
        return bool(len(self)) and bool((self.key_index >= 0).all())

    @property
    def records(self) -> tuple[AuditRecord, ...]:
        if self._records is None:
            labels = self.universe.labels
            out = []
            for i in range(len(self)):
                ti = int(self.true_index[i])
                ki = int(self.key_index[i])
                cv = float(self.covariates[i])
                out.append(
                    AuditRecord(
                        outcome=float(self.outcomes[i]),
                        proxy=ProxyDistribution(tuple(self.proxies[i])),
                        true_class=labels[ti] if ti >= 0 else self._unknown_labels.get(i),
                        proxy_key=self.key_names[ki] if ki >= 0 else None,
                        covariate=None if math.isnan(cv) else cv,
                    )
                )
            self._records = tuple(out)
        return self._records

    def proxy_for(self, label: str) -> np.ndarray:
        return self.proxies[:, self.universe.index(label)]


def factorize_keys(keys: Sequence[str | None]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Integer codes in order of first appearance; ``None`` maps to -1."""
    table: dict[str, int] = {}
    codes = np.empty(len(keys), dtype=np.intp)
    for i, key in enumerate(keys):
        codes[i] = MISSING if key is None else table.setdefault(str(key), len(table))
    return codes, tuple(table)


def validate(dataset: Dataset) -> list[Violation]:
    """Every invariant violation in ``dataset``; empty iff it is valid."""
    found: list[tuple[int, str]] = []
    y = dataset.outcomes
    for i in np.flatnonzero(~np.isfinite(y) | (y < 0.0) | (y > 1.0)):
        found.append((int(i), f"outcome {y[i]!r} outside [0, 1]"))
    for i, msg in dataset._bad_rows.items():
        found.append((i, msg))
    p = dataset.proxies
    finite = np.isfinite(p).all(axis=1)
    in_range = finite & ((p >= 0.0) & (p <= 1.0)).all(axis=1)
    row_sum = np.where(finite, p.sum(axis=1), np.nan)
    suspicious = np.flatnonzero(~in_range | (np.abs(row_sum - 1.0) > SIMPLEX_TOL / 2))
    for i in suspicious:
        i = int(i)
        if i in dataset._bad_rows:
            continue
        for msg in ProxyDistribution(tuple(p[i])).problems():
            found.append((i, "proxy " + msg))
    for i in np.flatnonzero(dataset.true_index == UNKNOWN):
        found.append((int(i), f"true class {dataset._unknown_labels.get(int(i))!r} not in universe"))
    found.sort(key=lambda t: t[0])
    return [Violation(i, m) for i, m in found]


def require_valid(dataset: Dataset) -> None:
    """Raise :class:`DataError` if ``dataset`` has any violation (result cached)."""
    if dataset._violations is None:
        dataset._violations = tuple(validate(dataset))
    if dataset._violations:
        shown = "; ".join(str(v) for v in dataset._violations[:3])
        more = len(dataset._violations) - 3
        raise DataError(f"invalid dataset: {shown}" + (f" (+{more} more)" if more > 0 else ""))
