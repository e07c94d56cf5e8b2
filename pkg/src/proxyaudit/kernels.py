"""Backend selection for the hot aggregation loops.

The compiled extension is used when it imports; set ``PROXYAUDIT_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

import numpy as np

from proxyaudit import _pykernels

if os.environ.get("PROXYAUDIT_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from proxyaudit import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"


def available_backends() -> dict[str, object]:
    out: dict[str, object] = {"python": _pykernels}
    try:
        from proxyaudit import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out


def group_sums(values, groups, n_groups: int) -> np.ndarray:
    return _impl.group_sums(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(groups, dtype=np.intp),
        int(n_groups),
    )


def weighted_column_sums(values, weights) -> tuple[np.ndarray, np.ndarray]:
    return _impl.weighted_column_sums(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )


def threshold_assign(probs, q: float) -> np.ndarray:
    return _impl.threshold_assign(np.ascontiguousarray(probs, dtype=np.float64), float(q))


def group_counts(groups, n_groups: int) -> np.ndarray:
    groups = np.asarray(groups, dtype=np.intp)
    return np.bincount(groups[groups >= 0], minlength=n_groups)[:n_groups]
