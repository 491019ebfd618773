"""End-to-end run: OD flows -> attraction features -> clusters -> POI significance."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import shutil
import tempfile
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .clustering import AttractorClustering, label_archetypes
from .exceptions import DataValidationError
from .features import SD_FORMULAS, FeatureTable, build_feature_vectors
from .ingest import ODMatrix, ZoneSet, equirectangular, load_od, load_pois, load_roadnet, load_zones, write_zones
from .poisig import rank_all, write_significance
from .roadnet import (
    DistanceColumn,
    RoadGraph,
    cache_key,
    compute_columns,
    load_distance_cache,
    save_distance_cache,
    snap_zones,
)

logger = logging.getLogger(__name__)

FEATURES_CSV = "features.csv"
CLUSTERS_CSV = "clusters.csv"
CLUSTERS_GEOJSON = "clusters.geojson"
VARIANCE_CSV = "variance_curve.csv"
MERGES_CSV = "merges.csv"
POI_CSV = "poi_significance.csv"
MANIFEST = "run_manifest.json"


class ConfigError(ValueError):
    """Invalid configuration or command-line usage."""


@dataclass
class PipelineConfig:
    zones: str | None = None
    od: str | None = None
    nodes: str | None = None
    edges: str | None = None
    pois: str | None = None
    max_snap_m: float = 5000.0
    min_inflow: float = 1.0
    elbow_tau: float = 0.05
    k_override: int | None = None
    k_max: int = 10
    sd_formula: str = "standard"
    variance_scaling: str = "zscore"
    standardize_features: bool = False
    output_dir: str = "out"
    threads: int | None = None
    skip_poi: bool = False
    distance_cache: str | None = None
    lonlat_origin: list[float] | None = None

    # keys that never influence output content
    RUNTIME_KEYS = ("output_dir", "threads", "distance_cache")

    @classmethod
    def from_mapping(cls, values: Mapping) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**dict(values))

    def validate(self, stage: str = "run") -> "PipelineConfig":
        needed = {
            "run": ["zones", "od", "nodes", "edges"],
            "features": ["zones", "od", "nodes", "edges"],
            "poi-sig": ["pois", "zones"],
        }.get(stage, [])
        if stage == "run" and not self.skip_poi:
            needed.append("pois")
        for key in needed:
            if getattr(self, key) is None:
                raise ConfigError(f"missing required input '{key}'")
        for key in ("zones", "od", "nodes", "edges", "pois"):
            path = getattr(self, key)
            if path is None or (key == "pois" and self.skip_poi):
                continue
            if not Path(path).is_file():
                raise ConfigError(f"input '{key}' not found: {path}")
        checks = [
            (self.max_snap_m > 0, "max_snap_m must be positive"),
            (self.min_inflow >= 0, "min_inflow must be non-negative"),
            (0 < self.elbow_tau < 1, "elbow_tau must be in (0, 1)"),
            (self.k_max >= 1, "k_max must be at least 1"),
            (self.k_override is None or self.k_override >= 1, "k_override must be at least 1"),
            (self.sd_formula in SD_FORMULAS, f"sd_formula must be one of {SD_FORMULAS}"),
            (self.variance_scaling in ("zscore", "raw"), "variance_scaling must be 'zscore' or 'raw'"),
            (self.threads is None or self.threads >= 1, "threads must be at least 1"),
            (self.lonlat_origin is None or len(self.lonlat_origin) == 2, "lonlat_origin is [lat, lon]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    @property
    def projection(self):
        if self.lonlat_origin is None:
            return None
        return equirectangular(*self.lonlat_origin)

    def echo(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name in self.RUNTIME_KEYS or f.name in ("zones", "od", "nodes", "edges", "pois"):
                continue
            out[f.name] = getattr(self, f.name)
        return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class FeatureStage:
    table: FeatureTable
    zones: ZoneSet
    od: ODMatrix
    unreachable_pairs: int
    unreachable_trips: float
    n_nodes: int


def run_features(cfg: PipelineConfig) -> FeatureStage:
    proj = cfg.projection
    zones = load_zones(cfg.zones, proj)
    od = load_od(cfg.od, zones)
    graph = RoadGraph.from_spec(load_roadnet(cfg.nodes, cfg.edges, proj))
    anchors = snap_zones(zones, graph, cfg.max_snap_m)
    dests = [z for z in sorted(zones) if od.column(z)]

    columns: dict[str, DistanceColumn] = {}
    key = None
    if cfg.distance_cache:
        key = cache_key(graph, anchors)
        cached = load_distance_cache(cfg.distance_cache, key) or {}
        for d in dests:
            if d in cached:
                origins = sorted(od.column(d))
                present = {o: cached[d][o] for o in origins if o in cached[d]}
                columns[d] = DistanceColumn(d, present, tuple(o for o in origins if o not in cached[d]))
    todo = [d for d in dests if d not in columns]
    if todo:
        logger.info("computing %d road-distance columns on %r", len(todo), graph)
        columns.update(compute_columns(todo, anchors, graph, od, cfg.threads))
        if cfg.distance_cache:
            save_distance_cache(cfg.distance_cache, columns, key)

    table = build_feature_vectors(od, zones, columns, cfg.min_inflow, cfg.sd_formula)
    pairs = 0
    trips = 0.0
    for d, col in columns.items():
        lost = [o for o in col.unreachable if o != d]
        pairs += len(lost)
        trips += math.fsum(od.column(d)[o] for o in lost)
    return FeatureStage(table, zones, od, pairs, trips, len(graph))


@dataclass
class ClusterStage:
    zone_ids: list[str]
    labels: list[int]
    names: dict[int, str]
    estimator: AttractorClustering

    @property
    def archetypes(self) -> dict[str, str]:
        return {z: self.names[c] for z, c in zip(self.zone_ids, self.labels)}

    def classes(self) -> dict[str, str]:
        """Zone -> class key used for POI testing; unnamed clusters keep their index."""
        return {z: class_key(c, self.names[c]) for z, c in zip(self.zone_ids, self.labels)}


def class_key(cluster: int, archetype: str) -> str:
    return archetype if archetype != "Other" else f"cluster_{cluster}"


def run_clustering(table: FeatureTable, cfg: PipelineConfig) -> ClusterStage:
    if len(table) < 2:
        raise DataValidationError(f"need at least 2 classifiable zones, got {len(table)}")
    est = AttractorClustering(
        n_clusters=cfg.k_override,
        k_max=cfg.k_max,
        elbow_tau=cfg.elbow_tau,
        variance_scaling=cfg.variance_scaling,
        standardize_features=cfg.standardize_features,
    ).fit(table.matrix())
    names = label_archetypes(est.labels_, table.rows, est.n_clusters_)
    return ClusterStage(table.zone_ids, est.labels_.tolist(), names, est)


def write_cluster_outputs(stage: ClusterStage, out: Path, zones: ZoneSet | None = None) -> list[str]:
    written = [CLUSTERS_CSV, VARIANCE_CSV, MERGES_CSV]
    with open(out / CLUSTERS_CSV, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone_id", "cluster", "archetype"])
        for z, c in zip(stage.zone_ids, stage.labels):
            w.writerow([z, c, stage.names[c]])
    with open(out / VARIANCE_CSV, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "within_over_total", "between_over_total"])
        for k, r in stage.estimator.variance_curve_:
            w.writerow([k, repr(r), repr(1.0 - r)])
    with open(out / MERGES_CSV, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cluster_a", "cluster_b", "distance", "new_cluster", "size"])
        for step, m in enumerate(stage.estimator.tree_.merges):
            w.writerow([step, m.cluster_a, m.cluster_b, repr(m.distance), m.new_cluster, m.size])
    if zones is not None:
        props = {z: {"cluster": None, "archetype": "Unclassified"} for z in zones}
        for z, c in zip(stage.zone_ids, stage.labels):
            if z in props:
                props[z] = {"cluster": c, "archetype": stage.names[c]}
        write_zones(zones, out / CLUSTERS_GEOJSON, props)
        written.append(CLUSTERS_GEOJSON)
    return written


def read_clusters(path) -> dict[str, str]:
    """Zone -> class key from a clusters.csv written by the cluster stage."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for col in ("zone_id", "cluster", "archetype"):
            if col not in (reader.fieldnames or []):
                raise DataValidationError(f"{path}: missing column {col!r}")
        for line, row in enumerate(reader, start=2):
            try:
                c = int(row["cluster"])
            except (TypeError, ValueError):
                raise DataValidationError(f"{path}: row {line}: column 'cluster' is not an integer") from None
            out[row["zone_id"]] = class_key(c, row["archetype"])
    return out


def run_poisig(pois_path, zones: ZoneSet, classes: Mapping[str, str], out_path, projection=None) -> dict:
    pois = load_pois(pois_path, zones, projection)
    rankings = rank_all(pois, classes)
    write_significance(out_path, rankings)
    return {"pois": len(pois), "pois_unassigned": pois.n_unassigned, "poi_overlaps": pois.overlaps}


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage and write artifacts plus ``run_manifest.json`` to ``cfg.output_dir``.

    Outputs are staged in a scratch directory and moved in only on success,
    so a failing run leaves no partial artifacts behind.
    """
    cfg.validate("run")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        feats = run_features(cfg)
        feats.table.to_csv(staging / FEATURES_CSV)
        written = [FEATURES_CSV]
        clusters = run_clustering(feats.table, cfg)
        written += write_cluster_outputs(clusters, staging, feats.zones)
        counts = {
            "zones": len(feats.zones),
            "road_nodes": feats.n_nodes,
            "od_entries": len(feats.od),
            "od_duplicates_merged": feats.od.duplicates,
            "od_total_trips": feats.od.total,
            "classified_zones": len(feats.table),
            "unclassified_zones": len(feats.table.unclassified),
            "unreachable_pairs": feats.unreachable_pairs,
            "unreachable_trips": feats.unreachable_trips,
            "k": clusters.estimator.n_clusters_,
        }
        if not cfg.skip_poi:
            counts.update(run_poisig(cfg.pois, feats.zones, clusters.classes(), staging / POI_CSV, cfg.projection))
            written.append(POI_CSV)

        inputs = {}
        for key in ("zones", "od", "nodes", "edges", "pois"):
            path = getattr(cfg, key)
            if path is not None and (key != "pois" or not cfg.skip_poi):
                inputs[key] = {"file": Path(path).name, "sha256": sha256_file(path)}
        manifest = {
            "tool": "urban-attractors",
            "version": __version__,
            "window": feats.od.window,
            "config": cfg.echo(),
            "inputs": inputs,
            "outputs": {name: sha256_file(staging / name) for name in sorted(written)},
            "counts": counts,
            "unclassified": dict(sorted(feats.table.unclassified.items())),
            "archetypes": {str(c): n for c, n in sorted(clusters.names.items())},
        }
        with open(staging / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name in [*written, MANIFEST]:
            shutil.move(str(staging / name), str(out / name))
        if cfg.skip_poi and (out / POI_CSV).exists():
            (out / POI_CSV).unlink()
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return manifest
