"""Urban attractor classification from origin-destination flows."""

__version__ = "0.1.0"

from .exceptions import DataValidationError
from .ingest import (
    ODMatrix,
    POIRecord,
    POITable,
    RoadGraphSpec,
    Zone,
    ZoneSet,
    load_od,
    load_pois,
    load_roadnet,
    load_zones,
)
from .roadnet import RoadGraph, ZoneAnchor, DistanceColumn, snap_zones, distances_to
from .features import (
    AttractionFeatures,
    FlowOriginSet,
    build_feature_vectors,
    distance_stats,
    inflow,
    spatial_dispersion,
)
from .clustering import (
    AttractorClustering,
    MergeTree,
    correlation_distance,
    cut,
    hac_complete,
    label_archetypes,
    select_k,
    variance_curve,
)
from .poisig import (
    ContingencyTable,
    SignificanceRanking,
    build_table,
    fet_one_sided,
    fet_point_probability,
    rank_types,
)
from .synth import SynthConfig, generate

__all__ = [
    "AttractionFeatures",
    "AttractorClustering",
    "ContingencyTable",
    "DataValidationError",
    "DistanceColumn",
    "FlowOriginSet",
    "MergeTree",
    "ODMatrix",
    "POIRecord",
    "POITable",
    "RoadGraph",
    "RoadGraphSpec",
    "SignificanceRanking",
    "SynthConfig",
    "Zone",
    "ZoneAnchor",
    "ZoneSet",
    "build_feature_vectors",
    "build_table",
    "correlation_distance",
    "cut",
    "distance_stats",
    "distances_to",
    "fet_one_sided",
    "fet_point_probability",
    "generate",
    "hac_complete",
    "inflow",
    "label_archetypes",
    "load_od",
    "load_pois",
    "load_roadnet",
    "load_zones",
    "rank_types",
    "select_k",
    "snap_zones",
    "spatial_dispersion",
    "variance_curve",
]
