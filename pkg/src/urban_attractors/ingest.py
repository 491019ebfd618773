"""Readers for the four input datasets: zones, OD trips, road network and POIs.

All coordinates are planar meters. Lon/lat inputs can be brought into a local
planar frame with :func:`equirectangular` passed as ``projection``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon, mapping, shape

from .exceptions import DataValidationError

logger = logging.getLogger(__name__)

Point = tuple[float, float]
Projection = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]

EARTH_RADIUS_M = 6_371_008.8


def equirectangular(lat0: float, lon0: float) -> Projection:
    """Local equirectangular projection of lon/lat degrees to meters about (lat0, lon0)."""
    k = math.cos(math.radians(lat0))

    def project(lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        x = EARTH_RADIUS_M * np.radians(lon - lon0) * k
        y = EARTH_RADIUS_M * np.radians(lat - lat0)
        return x, y

    return project


@dataclass(frozen=True)
class Zone:
    id: str
    geometry: Polygon | MultiPolygon
    centroid: Point

    @property
    def area(self) -> float:
        return float(self.geometry.area)

    @property
    def rings(self) -> list[list[Point]]:
        polys = self.geometry.geoms if isinstance(self.geometry, MultiPolygon) else [self.geometry]
        out = []
        for poly in polys:
            out.append([tuple(c) for c in poly.exterior.coords])
            out.extend([tuple(c) for c in r.coords] for r in poly.interiors)
        return out


class ZoneSet(Mapping):
    """Ordered, immutable collection of zones keyed by id (file order preserved)."""

    def __init__(self, zones: Iterable[Zone]):
        self._zones: dict[str, Zone] = {}
        for z in zones:
            if z.id in self._zones:
                raise DataValidationError(f"duplicate zone id {z.id!r}")
            self._zones[z.id] = z

    def __getitem__(self, key: str) -> Zone:
        return self._zones[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._zones)

    def __len__(self) -> int:
        return len(self._zones)

    def __repr__(self) -> str:
        return f"ZoneSet(n={len(self)})"

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._zones)

    @cached_property
    def centroids(self) -> np.ndarray:
        """(n, 2) centroid array in file order."""
        return np.array([z.centroid for z in self._zones.values()], dtype=float).reshape(-1, 2)

    @cached_property
    def _tree(self) -> shapely.STRtree:
        return shapely.STRtree([z.geometry for z in self._zones.values()])

    def locate(self, xy: np.ndarray) -> tuple[list[str | None], int]:
        """Containing zone for each point; first match in file order wins.

        Returns the zone ids (None where no polygon contains the point) and the
        number of points that matched more than one polygon.
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        ids = self.ids
        result: list[str | None] = [None] * len(xy)
        if len(xy) == 0:
            return result, 0
        pts = shapely.points(xy)
        pidx, gidx = self._tree.query(pts, predicate="intersects")
        best = np.full(len(xy), -1, dtype=np.int64)
        hits = np.zeros(len(xy), dtype=np.int64)
        for p, g in zip(pidx.tolist(), gidx.tolist()):
            hits[p] += 1
            if best[p] < 0 or g < best[p]:
                best[p] = g
        for i, g in enumerate(best.tolist()):
            if g >= 0:
                result[i] = ids[g]
        return result, int(np.count_nonzero(hits > 1))


def _check_rings(geom, index: int) -> None:
    polys = geom.geoms if isinstance(geom, MultiPolygon) else [geom]
    for poly in polys:
        for ring in [poly.exterior, *poly.interiors]:
            if len(set(ring.coords)) < 3:
                raise DataValidationError(f"feature {index}: polygon ring has fewer than 3 vertices")
    if geom.is_empty or geom.area <= 0:
        raise DataValidationError(f"feature {index}: polygon has zero area")


def load_zones(path, projection: Projection | None = None) -> ZoneSet:
    """Read a GeoJSON FeatureCollection of (Multi)Polygons carrying an ``id`` property."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise DataValidationError(f"{path}: expected a GeoJSON FeatureCollection")

    zones = []
    seen: set[str] = set()
    for i, feat in enumerate(doc["features"]):
        props = feat.get("properties") or {}
        if props.get("id") is None:
            raise DataValidationError(f"feature {i}: missing 'id' property")
        zid = str(props["id"])
        if zid in seen:
            raise DataValidationError(f"feature {i}: duplicate zone id {zid!r}")
        seen.add(zid)
        gj = feat.get("geometry") or {}
        if gj.get("type") not in ("Polygon", "MultiPolygon"):
            raise DataValidationError(f"feature {i} ({zid}): geometry type {gj.get('type')!r} is not a polygon")
        try:
            geom = shape(gj)
        except Exception as exc:
            raise DataValidationError(f"feature {i} ({zid}): malformed geometry ({exc})") from exc
        if projection is not None:
            geom = shapely.transform(geom, lambda c: np.column_stack(projection(c[:, 0], c[:, 1])))
        _check_rings(geom, i)
        c = geom.centroid
        zones.append(Zone(zid, geom, (float(c.x), float(c.y))))
    zs = ZoneSet(zones)
    logger.info("loaded %d zones from %s", len(zs), path)
    return zs


def write_zones(zones: ZoneSet, path, properties: Mapping[str, Mapping] | None = None) -> None:
    """Write zones back out as GeoJSON, optionally attaching extra per-zone properties."""
    feats = []
    for zid, z in zones.items():
        props = {"id": zid}
        if properties and zid in properties:
            props.update(properties[zid])
        feats.append({"type": "Feature", "properties": props, "geometry": mapping(z.geometry)})
    doc = {"type": "FeatureCollection", "features": feats}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def _open_csv(path, required: tuple[str, ...]):
    fh = open(path, encoding="utf-8", newline="")
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise DataValidationError(f"{path}: missing column(s) {', '.join(missing)}")
    return fh, reader


def _parse_float(value: str, what: str, line: int, path) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"{path}: row {line}: malformed {what} {value!r}") from None
    if not math.isfinite(x):
        raise DataValidationError(f"{path}: row {line}: non-finite {what} {value!r}")
    return x


@dataclass(frozen=True)
class ODMatrix:
    """Sparse trip counts ``(origin, dest) -> trips`` for one time window."""

    entries: Mapping[tuple[str, str], float]
    zone_ids: tuple[str, ...]
    window: str = ""
    duplicates: int = 0

    def __post_init__(self):
        known = set(self.zone_ids)
        for (o, d), t in self.entries.items():
            if t < 0:
                raise DataValidationError(f"negative trips for ({o}, {d})")
            if o not in known or d not in known:
                raise DataValidationError(f"OD pair ({o}, {d}) references an unknown zone")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total(self) -> float:
        return math.fsum(self.entries.values())

    @cached_property
    def by_dest(self) -> dict[str, dict[str, float]]:
        """Incoming trips grouped by destination: ``dest -> {origin: trips}``."""
        out: dict[str, dict[str, float]] = {}
        for (o, d), t in self.entries.items():
            out.setdefault(d, {})[o] = t
        return out

    def column(self, dest: str) -> dict[str, float]:
        return self.by_dest.get(dest, {})

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["origin_id", "dest_id", "trips"])
            for (o, d) in sorted(self.entries):
                w.writerow([o, d, repr(float(self.entries[(o, d)]))])


def load_od(path, zones: ZoneSet | Iterable[str], window: str | None = None) -> ODMatrix:
    """Read ``origin_id,dest_id,trips``; zero rows are dropped and duplicate pairs summed."""
    zone_ids = tuple(zones.ids if isinstance(zones, ZoneSet) else zones)
    known = set(zone_ids)
    entries: dict[tuple[str, str], float] = {}
    duplicates = 0
    unknown: set[str] = set()
    fh, reader = _open_csv(path, ("origin_id", "dest_id", "trips"))
    with fh:
        for line, row in enumerate(reader, start=2):
            o, d = row["origin_id"], row["dest_id"]
            trips = _parse_float(row["trips"], "trips", line, path)
            if trips < 0:
                raise DataValidationError(f"{path}: row {line}: negative trips {trips}")
            for z in (o, d):
                if z not in known:
                    unknown.add(z)
            if trips == 0:
                continue
            key = (o, d)
            if key in entries:
                duplicates += 1
                entries[key] += trips
            else:
                entries[key] = trips
    if unknown:
        listed = ", ".join(sorted(unknown)[:20])
        more = f" (+{len(unknown) - 20} more)" if len(unknown) > 20 else ""
        raise DataValidationError(f"{path}: unknown zone id(s): {listed}{more}")
    if duplicates:
        logger.warning("%s: %d duplicate (origin, dest) rows summed", path, duplicates)
    return ODMatrix(entries, zone_ids, window if window is not None else Path(path).stem, duplicates)


@dataclass(frozen=True)
class POIRecord:
    id: str
    poi_type: str
    location: Point
    zone_id: str | None


@dataclass(frozen=True)
class POITable:
    records: tuple[POIRecord, ...]
    overlaps: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def assigned(self) -> tuple[POIRecord, ...]:
        return tuple(r for r in self.records if r.zone_id is not None)

    @property
    def n_unassigned(self) -> int:
        return sum(r.zone_id is None for r in self.records)

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return tuple(sorted({r.poi_type for r in self.records}))


def load_pois(path, zones: ZoneSet, projection: Projection | None = None) -> POITable:
    """Read ``poi_id,poi_type,x,y`` and resolve each POI to its containing zone."""
    ids, types, xy = [], [], []
    fh, reader = _open_csv(path, ("poi_id", "poi_type", "x", "y"))
    with fh:
        for line, row in enumerate(reader, start=2):
            t = (row["poi_type"] or "").strip()
            if not t:
                raise DataValidationError(f"{path}: row {line}: empty poi_type")
            x = _parse_float(row["x"], "x coordinate", line, path)
            y = _parse_float(row["y"], "y coordinate", line, path)
            ids.append(row["poi_id"])
            types.append(t)
            xy.append((x, y))
    pts = np.array(xy, dtype=float).reshape(-1, 2)
    if projection is not None and len(pts):
        pts = np.column_stack(projection(pts[:, 0], pts[:, 1]))
    zone_of, overlaps = zones.locate(pts)
    if overlaps:
        logger.warning("%s: %d POIs fall in more than one zone; first zone in file order used", path, overlaps)
    records = tuple(
        POIRecord(i, t, (float(p[0]), float(p[1])), z) for i, t, p, z in zip(ids, types, pts, zone_of)
    )
    table = POITable(records, overlaps)
    if table.n_unassigned:
        logger.warning("%s: %d POIs outside every zone, excluded", path, table.n_unassigned)
    return table


@dataclass(frozen=True)
class RoadGraphSpec:
    nodes: Mapping[str, Point]
    edges: tuple[tuple[str, str, float, bool], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for k, (u, v, length, _) in enumerate(self.edges):
            if u == v:
                raise DataValidationError(f"edge {k}: self-loop at node {u!r}")
            if u not in self.nodes or v not in self.nodes:
                raise DataValidationError(f"edge {k}: endpoint not in node table ({u!r}, {v!r})")
            if not length > 0 or not math.isfinite(length):
                raise DataValidationError(f"edge {k}: length must be positive, got {length}")

    def to_csv(self, nodes_path, edges_path) -> None:
        with open(nodes_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "x", "y"])
            for nid, (x, y) in self.nodes.items():
                w.writerow([nid, repr(float(x)), repr(float(y))])
        with open(edges_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "v", "length_m", "oneway"])
            for u, v, length, oneway in self.edges:
                w.writerow([u, v, repr(float(length)), int(oneway)])


def load_roadnet(nodes_path, edges_path, projection: Projection | None = None) -> RoadGraphSpec:
    """Read the node table ``node_id,x,y`` and edge table ``u,v,length_m,oneway``."""
    nodes: dict[str, Point] = {}
    fh, reader = _open_csv(nodes_path, ("node_id", "x", "y"))
    with fh:
        for line, row in enumerate(reader, start=2):
            nid = row["node_id"]
            if nid in nodes:
                raise DataValidationError(f"{nodes_path}: row {line}: duplicate node id {nid!r}")
            nodes[nid] = (
                _parse_float(row["x"], "x coordinate", line, nodes_path),
                _parse_float(row["y"], "y coordinate", line, nodes_path),
            )
    if projection is not None and nodes:
        arr = np.array(list(nodes.values()))
        px, py = projection(arr[:, 0], arr[:, 1])
        nodes = {k: (float(x), float(y)) for k, x, y in zip(nodes, px, py)}

    edges = []
    fh, reader = _open_csv(edges_path, ("u", "v", "length_m", "oneway"))
    with fh:
        for line, row in enumerate(reader, start=2):
            flag = (row["oneway"] or "").strip()
            if flag not in ("0", "1"):
                raise DataValidationError(f"{edges_path}: row {line}: oneway must be 0 or 1, got {flag!r}")
            u, v = row["u"], row["v"]
            length = _parse_float(row["length_m"], "length_m", line, edges_path)
            if u == v:
                raise DataValidationError(f"{edges_path}: row {line}: self-loop at {u!r}")
            for n in (u, v):
                if n not in nodes:
                    raise DataValidationError(f"{edges_path}: row {line}: unknown node {n!r}")
            if length <= 0:
                raise DataValidationError(f"{edges_path}: row {line}: length_m must be positive")
            edges.append((u, v, length, flag == "1"))
    return RoadGraphSpec(nodes, tuple(edges))
