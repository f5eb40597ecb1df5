"""Die-link discovery for coin images.

Two pairwise distances between coin images (an SSIM-based one after
similarity registration, and a Procrustes-based one after homography
registration of edge maps), single-linkage clustering with thresholds
transferred across datasets, and evaluation against die labels.
"""

from .cluster import Partition, loo_threshold, optimal_threshold, single_linkage_threshold
from .distance import (DistanceMatrix, DistanceParams, distance_matrix, procrustes_based_distance,
                       ssim_distance)
from .manifest import Manifest, ManifestError, ingest

__version__ = "0.1.0"

__all__ = [
    "DistanceMatrix", "DistanceParams", "Manifest", "ManifestError", "Partition",
    "distance_matrix", "ingest", "loo_threshold", "optimal_threshold",
    "procrustes_based_distance", "single_linkage_threshold", "ssim_distance",
]
