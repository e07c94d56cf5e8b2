"""Disparity estimation when the protected class is only known through a probabilistic proxy."""

__version__ = "0.1.0"

from proxyaudit.domain import (  # noqa: E402
    NA,
    AuditRecord,
    ConfigurationError,
    DataError,
    Dataset,
    EstimationError,
    LabelUniverse,
    ProxyAuditError,
    ProxyDistribution,
    SchemaError,
    ThresholdPolicy,
    validate,
)
from proxyaudit.estimators import (  # noqa: E402
    EstimateReport,
    threshold_assign,
    thresholded_estimate,
    true_disparity,
    true_group_means,
    true_label_estimate,
    weighted_estimate,
)

__all__ = [
    "NA",
    "AuditRecord",
    "ConfigurationError",
    "DataError",
    "Dataset",
    "EstimateReport",
    "EstimationError",
    "LabelUniverse",
    "ProxyAuditError",
    "ProxyDistribution",
    "SchemaError",
    "ThresholdPolicy",
    "threshold_assign",
    "thresholded_estimate",
    "true_disparity",
    "true_group_means",
    "true_label_estimate",
    "validate",
    "weighted_estimate",
]
