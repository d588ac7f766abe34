from .cookiesync import detect_cookie_sync
from .geo import GeoTable, geo_lookup
from .interests import EmptyProfile, IabMap, InterestProfile, infer_interests
from .useragent import DeviceProfile, parse_user_agent
from .vector import (
    DAYS,
    FEATURE_GROUPS,
    OTHER,
    TOD_BUCKETS,
    CoreFeatures,
    FeatureVector,
    MissingGeo,
    References,
    UserAggregates,
    UserContext,
    build_features,
    project,
    tod_bucket,
)

__all__ = [
    "CoreFeatures", "DAYS", "DeviceProfile", "EmptyProfile", "FEATURE_GROUPS", "FeatureVector",
    "GeoTable", "IabMap", "InterestProfile", "MissingGeo", "OTHER", "References", "TOD_BUCKETS",
    "UserAggregates", "UserContext", "build_features", "detect_cookie_sync", "geo_lookup",
    "infer_interests", "parse_user_agent", "project", "tod_bucket",
]
