"""Seeded synthetic city with planted Global / Downtown / Residential attractors."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import box

from .exceptions import DataValidationError
from .ingest import ODMatrix, POIRecord, POITable, RoadGraphSpec, Zone, ZoneSet, write_zones

POI_TYPES = (
    "bank", "cafe", "clinic", "embassy", "factory", "fuel_station", "government_office",
    "gym", "hospital", "hotel", "kindergarten", "library", "mall", "mosque", "museum",
    "office", "park", "pharmacy", "restaurant", "school", "supermarket", "university",
    "warehouse",
)

DEFAULT_PLANT = {
    "Global": (("factory", 5.0), ("embassy", 5.0), ("university", 5.0), ("hospital", 5.0)),
    "Downtown": (("bank", 5.0), ("office", 5.0), ("hotel", 5.0), ("mall", 5.0)),
    "Residential": (),
}

# (low, high) total inflow per zone before flow_scale
INFLOW_RANGE = {"Residential": (1.0, 10.0), "Downtown": (50.0, 100.0), "Global": (100.0, 200.0)}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_zones: int = 400
    grid_extent_m: float = 20_000.0
    n_global: int = 12
    downtown_radius_m: float = 3_000.0
    flow_scale: float = 50.0
    downtown_decay_m: float = 800.0
    residential_decay_m: float = 1_200.0
    road_pitch_m: float | None = None
    poi_types: tuple[str, ...] = POI_TYPES
    poi_rate: float = 1.0
    poi_plant: dict = field(default_factory=lambda: dict(DEFAULT_PLANT))
    window: str = "synthetic_0700_1000"

    def __post_init__(self):
        if self.n_zones < 1:
            raise ValueError("n_zones must be positive")
        if self.n_global < 1:
            raise ValueError("n_global must be at least 1")
        if self.n_global > self.n_zones:
            raise ValueError(f"n_global ({self.n_global}) exceeds n_zones ({self.n_zones})")
        if not self.downtown_radius_m < self.grid_extent_m:
            raise ValueError("downtown_radius_m must be smaller than grid_extent_m")
        if not self.flow_scale > 0:
            raise ValueError("flow_scale must be positive")


@dataclass(frozen=True)
class SynthCity:
    config: SynthConfig
    zones: ZoneSet
    od: ODMatrix
    roadnet: RoadGraphSpec
    pois: POITable
    ground_truth: dict[str, str]

    def write(self, out_dir) -> dict[str, Path]:
        """Write every dataset in the ingest file formats; returns the paths written."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "zones": out / "zones.geojson",
            "od": out / "od.csv",
            "nodes": out / "nodes.csv",
            "edges": out / "edges.csv",
            "pois": out / "pois.csv",
            "ground_truth": out / "ground_truth.csv",
        }
        write_zones(self.zones, paths["zones"])
        self.od.to_csv(paths["od"])
        self.roadnet.to_csv(paths["nodes"], paths["edges"])
        with open(paths["pois"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["poi_id", "poi_type", "x", "y"])
            for r in self.pois.records:
                w.writerow([r.id, r.poi_type, repr(r.location[0]), repr(r.location[1])])
        with open(paths["ground_truth"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["zone_id", "archetype"])
            for zid in sorted(self.ground_truth):
                w.writerow([zid, self.ground_truth[zid]])
        return paths


def _grid(cfg: SynthConfig):
    cols = math.ceil(math.sqrt(cfg.n_zones))
    rows = math.ceil(cfg.n_zones / cols)
    pitch = cfg.grid_extent_m / cols
    width = len(str(cfg.n_zones - 1))
    cells = []
    for k in range(cfg.n_zones):
        r, c = divmod(k, cols)
        cells.append((f"z{k:0{width}d}", r, c))
    return cells, rows, cols, pitch


def _lattice(cfg: SynthConfig, cells, cols, pitch, centroids) -> RoadGraphSpec:
    if cfg.road_pitch_m is None:
        nodes = {}
        index = {}
        for (zid, r, c), (x, y) in zip(cells, centroids):
            nid = f"n{r:04d}_{c:04d}"
            nodes[nid] = (float(x), float(y))
            index[(r, c)] = nid
        edges = []
        for (r, c), nid in index.items():
            for nr, nc in ((r, c + 1), (r + 1, c)):
                if (nr, nc) in index:
                    edges.append((nid, index[(nr, nc)], float(pitch), False))
        return RoadGraphSpec(nodes, tuple(edges))

    xmin, ymin = centroids.min(axis=0)
    xmax, ymax = centroids.max(axis=0)
    step = cfg.road_pitch_m
    nx = int(math.floor((xmax - xmin) / step + 1e-9)) + 1
    ny = int(math.floor((ymax - ymin) / step + 1e-9)) + 1
    nodes = {}
    for j in range(ny):
        for i in range(nx):
            nodes[f"n{j:04d}_{i:04d}"] = (float(xmin + i * step), float(ymin + j * step))
    edges = []
    for j in range(ny):
        for i in range(nx):
            if i + 1 < nx:
                edges.append((f"n{j:04d}_{i:04d}", f"n{j:04d}_{i + 1:04d}", float(step), False))
            if j + 1 < ny:
                edges.append((f"n{j:04d}_{i:04d}", f"n{j + 1:04d}_{i:04d}", float(step), False))
    return RoadGraphSpec(nodes, tuple(edges))


def generate(config: SynthConfig | None = None) -> SynthCity:
    """Build a synthetic city; identical configs give identical cities."""
    cfg = config or SynthConfig()
    if cfg.n_global > cfg.n_zones:
        raise DataValidationError(f"n_global ({cfg.n_global}) exceeds n_zones ({cfg.n_zones})")
    rng = np.random.default_rng(cfg.seed)
    cells, rows, cols, pitch = _grid(cfg)
    zones = []
    centroids = np.empty((len(cells), 2))
    for k, (zid, r, c) in enumerate(cells):
        poly = box(c * pitch, r * pitch, (c + 1) * pitch, (r + 1) * pitch)
        cx, cy = (c + 0.5) * pitch, (r + 0.5) * pitch
        centroids[k] = (cx, cy)
        zones.append(Zone(zid, poly, (cx, cy)))
    zoneset = ZoneSet(zones)
    ids = [z.id for z in zones]

    center = np.array([cols * pitch / 2.0, rows * pitch / 2.0])
    from_center = np.hypot(*(centroids - center).T)
    downtown = from_center <= cfg.downtown_radius_m
    candidates = np.flatnonzero(~downtown)
    if len(candidates) < cfg.n_global:
        raise DataValidationError("not enough zones outside downtown to place the Global attractors")
    glob = np.zeros(len(ids), dtype=bool)
    glob[rng.choice(candidates, size=cfg.n_global, replace=False)] = True
    kind = np.where(glob, "Global", np.where(downtown, "Downtown", "Residential"))
    truth = dict(zip(ids, kind.tolist()))

    entries: dict[tuple[str, str], float] = {}
    for k, dest in enumerate(ids):
        archetype = kind[k]
        lo, hi = INFLOW_RANGE[archetype]
        total = int(round(rng.uniform(lo, hi) * cfg.flow_scale))
        dist = np.hypot(*(centroids - centroids[k]).T)
        if archetype == "Global":
            weights = np.ones(len(ids))
        elif archetype == "Downtown":
            weights = np.exp(-dist / cfg.downtown_decay_m)
        else:
            weights = np.exp(-dist / cfg.residential_decay_m)
        weights[k] = 0.0
        if weights.sum() == 0 or total == 0:
            continue
        trips = rng.multinomial(total, weights / weights.sum())
        for j in np.flatnonzero(trips):
            entries[(ids[j], dest)] = float(trips[j])
    od = ODMatrix(entries, tuple(ids), cfg.window)

    roadnet = _lattice(cfg, cells, cols, pitch, centroids)

    plant = {a: dict(v) for a, v in cfg.poi_plant.items()}
    records = []
    margin = pitch * 0.01
    for k, zid in enumerate(ids):
        boost = plant.get(kind[k], {})
        x0, y0 = centroids[k] - pitch / 2.0
        for t in cfg.poi_types:
            count = rng.poisson(cfg.poi_rate * boost.get(t, 1.0))
            for _ in range(count):
                x = x0 + rng.uniform(margin, pitch - margin)
                y = y0 + rng.uniform(margin, pitch - margin)
                records.append(POIRecord(f"p{len(records):06d}", t, (float(x), float(y)), zid))
    return SynthCity(cfg, zoneset, od, roadnet, POITable(tuple(records)), truth)
