"""4-DoF visual tracking: correlation-filter (RSST) and RANSAC/IC (RKLT) trackers."""
from .geom import DofModel, SimilarityParams
from .rklt import RkltConfig, RkltTracker, TrackingLost
from .rsst import RsstConfig, RsstTracker

__all__ = ["DofModel", "SimilarityParams", "RkltConfig", "RkltTracker", "RsstConfig", "RsstTracker",
           "TrackingLost"]
__version__ = "0.1.0"
