"""Per-zone attraction features: inflow, spatial dispersion of origins, road-distance statistics."""
from __future__ import annotations

import csv
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataValidationError
from .ingest import ODMatrix, ZoneSet
from .roadnet import DistanceColumn

SD_FORMULAS = ("standard", "as_printed")

FEATURE_COLUMNS = (
    "zone_id",
    "inflow",
    "inflow_per_m2",
    "sd_m",
    "mu_m",
    "sigma_m",
    "xc",
    "yc",
    "excluded_trips",
)


@dataclass(frozen=True)
class FlowOrigin:
    zone_id: str
    w: float
    point: tuple[float, float]
    road_dist_m: float | None = None


@dataclass(frozen=True)
class FlowOriginSet:
    """Origins of the trips arriving at one destination, self-loop excluded."""

    dest_zone: str
    origins: tuple[FlowOrigin, ...]

    def __post_init__(self):
        seen = set()
        for o in self.origins:
            if not o.w > 0:
                raise ValueError(f"origin {o.zone_id!r} has non-positive weight {o.w}")
            if o.zone_id in seen:
                raise ValueError(f"duplicate origin {o.zone_id!r}")
            seen.add(o.zone_id)

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def weights(self) -> np.ndarray:
        return np.array([o.w for o in self.origins], dtype=float)

    @property
    def points(self) -> np.ndarray:
        return np.array([o.point for o in self.origins], dtype=float).reshape(-1, 2)

    @property
    def road_distances(self) -> np.ndarray:
        return np.array([np.nan if o.road_dist_m is None else o.road_dist_m for o in self.origins], dtype=float)

    @classmethod
    def from_arrays(cls, dest_zone, w, xy, road_dist=None) -> "FlowOriginSet":
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        w = np.asarray(w, dtype=float)
        if road_dist is None:
            road_dist = [None] * len(w)
        origins = tuple(
            FlowOrigin(
                f"o{i}",
                float(wi),
                (float(p[0]), float(p[1])),
                None if d is None or (isinstance(d, float) and math.isnan(d)) else float(d),
            )
            for i, (wi, p, d) in enumerate(zip(w, xy, road_dist))
        )
        return cls(dest_zone, origins)


def flow_origins(
    od: ODMatrix,
    zones: ZoneSet,
    dest: str,
    column: DistanceColumn | None = None,
) -> FlowOriginSet:
    incoming = od.column(dest)
    origins = []
    for o in sorted(incoming):
        if o == dest:
            continue
        d = None if column is None else column.dist_m.get(o)
        origins.append(FlowOrigin(o, incoming[o], zones[o].centroid, d))
    return FlowOriginSet(dest, tuple(origins))


def inflow(od: ODMatrix, dest: str) -> float:
    """Total trips arriving at ``dest`` from other zones."""
    return math.fsum(t for o, t in od.column(dest).items() if o != dest)


def weighted_standard_distance(w, xy, formula: str = "standard") -> tuple[float, tuple[float, float]]:
    """Weighted standard distance of points about their weighted mean center.

    ``formula="as_printed"`` divides the root of the weighted squared deviations
    by the total weight instead of taking the root of their weighted mean.
    """
    if formula not in SD_FORMULAS:
        raise ValueError(f"sd_formula must be one of {SD_FORMULAS}, got {formula!r}")
    w = np.asarray(w, dtype=float)
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(w) == 0:
        return math.nan, (math.nan, math.nan)
    total = w.sum()
    xc = float(np.dot(w, xy[:, 0]) / total)
    yc = float(np.dot(w, xy[:, 1]) / total)
    ss = float(np.dot(w, (xy[:, 0] - xc) ** 2) + np.dot(w, (xy[:, 1] - yc) ** 2))
    if formula == "standard":
        sd = math.sqrt(ss / total)
    else:
        sd = math.sqrt(ss) / total
    return sd, (xc, yc)


def spatial_dispersion(origins: FlowOriginSet, formula: str = "standard") -> tuple[float, tuple[float, float]]:
    """(sd, center of mass) of the origins; NaNs when the set is empty."""
    return weighted_standard_distance(origins.weights, origins.points, formula)


def distance_stats(origins: FlowOriginSet) -> tuple[float, float, float]:
    """Trip-weighted mean and population standard deviation of road distances.

    Origins without a road distance are skipped; their weight is returned as
    ``excluded_trips``. Mean and deviation are NaN when nothing is reachable.
    """
    w = origins.weights
    d = origins.road_distances
    ok = ~np.isnan(d)
    excluded = math.fsum(w[~ok].tolist())
    if not ok.any():
        return math.nan, math.nan, excluded
    w, d = w[ok], d[ok]
    total = w.sum()
    mu = float(np.dot(w, d) / total)
    var = float(np.dot(w, (d - mu) ** 2) / total)
    return mu, math.sqrt(var), excluded


@dataclass(frozen=True)
class AttractionFeatures:
    zone_id: str
    inflow: float
    inflow_per_m2: float
    sd: float
    mu: float
    sigma: float
    center_of_mass: tuple[float, float]
    excluded_trips: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.inflow, self.sd, self.mu, self.sigma], dtype=float)


@dataclass(frozen=True)
class FeatureTable:
    """Feature rows for classifiable zones plus the roster of zones left out (with reason)."""

    rows: tuple[AttractionFeatures, ...]
    unclassified: Mapping[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def zone_ids(self) -> list[str]:
        return [r.zone_id for r in self.rows]

    def matrix(self) -> np.ndarray:
        """(n, 4) array of ``[inflow, sd, mu, sigma]`` rows."""
        return np.array([r.vector for r in self.rows], dtype=float).reshape(-1, 4)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FEATURE_COLUMNS)
            for r in self.rows:
                w.writerow([
                    r.zone_id,
                    repr(r.inflow),
                    repr(r.inflow_per_m2),
                    repr(r.sd),
                    repr(r.mu),
                    repr(r.sigma),
                    repr(r.center_of_mass[0]),
                    repr(r.center_of_mass[1]),
                    repr(r.excluded_trips),
                ])

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        rows = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in FEATURE_COLUMNS:
                if col not in header:
                    raise DataValidationError(f"{path}: missing column {col!r}")
            for line, rec in enumerate(reader, start=2):
                try:
                    vals = {k: float(rec[k]) for k in FEATURE_COLUMNS[1:]}
                except (TypeError, ValueError):
                    raise DataValidationError(f"{path}: row {line}: non-numeric feature value") from None
                rows.append(AttractionFeatures(
                    rec["zone_id"],
                    vals["inflow"],
                    vals["inflow_per_m2"],
                    vals["sd_m"],
                    vals["mu_m"],
                    vals["sigma_m"],
                    (vals["xc"], vals["yc"]),
                    vals["excluded_trips"],
                ))
        rows.sort(key=lambda r: r.zone_id)
        return cls(tuple(rows), {})


def zone_features(
    od: ODMatrix,
    zones: ZoneSet,
    dest: str,
    column: DistanceColumn | None,
    sd_formula: str = "standard",
) -> AttractionFeatures:
    origins = flow_origins(od, zones, dest, column)
    total = math.fsum(o.w for o in origins.origins)
    sd, center = spatial_dispersion(origins, sd_formula)
    mu, sigma, excluded = distance_stats(origins)
    return AttractionFeatures(dest, total, total / zones[dest].area, sd, mu, sigma, center, excluded)


def build_feature_vectors(
    od: ODMatrix,
    zones: ZoneSet,
    columns: Mapping[str, DistanceColumn],
    min_inflow: float = 1.0,
    sd_formula: str = "standard",
) -> FeatureTable:
    """Feature rows (zone id ascending) for every zone with enough inflow to describe.

    Zones under ``min_inflow`` or with no road-reachable origin go to the
    ``unclassified`` roster instead.
    """
    rows = []
    unclassified = {}
    for zid in sorted(zones):
        total = inflow(od, zid)
        if total == 0 or total < min_inflow:
            unclassified[zid] = "below_min_inflow"
            continue
        f = zone_features(od, zones, zid, columns.get(zid), sd_formula)
        if math.isnan(f.mu):
            unclassified[zid] = "no_reachable_origin"
            continue
        rows.append(f)
    return FeatureTable(tuple(rows), unclassified)

