"""Spectra, ERPs and cluster-based permutation statistics."""
from .cluster import (
    Cluster,
    ClusterTestConfig,
    ClusterTestResult,
    cluster_permutation_test,
    dependent_t,
)
from .contrasts import alpha_contrast, alpha_detected, erp_contrast, n170_detected, p300_detected
from .erp import ErpResult, erp_average
from .spectral import PsdResult, band_power, welch_psd

__all__ = [
    "Cluster", "ClusterTestConfig", "ClusterTestResult", "cluster_permutation_test", "dependent_t",
    "alpha_contrast", "alpha_detected", "erp_contrast", "n170_detected", "p300_detected",
    "ErpResult", "erp_average", "PsdResult", "band_power", "welch_psd",
]
