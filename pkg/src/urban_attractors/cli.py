"""Command-line entry point: ``urban-attractors {run,features,cluster,poi-sig,synth}``.

Exit codes: 0 ok, 1 usage/config, 2 data validation, 3 internal error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .exceptions import DataValidationError
from .features import FeatureTable
from .ingest import load_zones
from .pipeline import (
    FEATURES_CSV,
    POI_CSV,
    ConfigError,
    PipelineConfig,
    read_clusters,
    run_clustering,
    run_features,
    run_pipeline,
    run_poisig,
    write_cluster_outputs,
)
from .synth import SynthConfig, generate

logger = logging.getLogger("urban_attractors")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _opt(parser, name, **kw):
    """Register ``--some-key`` together with its config-file spelling ``--some_key``."""
    flags = [f"--{name.replace('_', '-')}"]
    if "_" in name:
        flags.append(f"--{name}")
    flags += kw.pop("aliases", [])
    parser.add_argument(*flags, dest=name, default=argparse.SUPPRESS, **kw)


def _input_opts(p):
    _opt(p, "zones", help="zone polygons (GeoJSON)")
    _opt(p, "od", help="OD trips CSV origin_id,dest_id,trips")
    _opt(p, "nodes", help="road nodes CSV node_id,x,y")
    _opt(p, "edges", help="road edges CSV u,v,length_m,oneway")


def _feature_opts(p):
    _opt(p, "max_snap_m", type=float, help="max centroid-to-node snap distance (m)")
    _opt(p, "min_inflow", type=float, help="zones with less inflow are left unclassified")
    _opt(p, "sd_formula", choices=["standard", "as_printed"])
    _opt(p, "threads", type=int, help="worker pool size for road-distance columns")
    _opt(p, "distance_cache", help="CSV cache of road distances")
    _opt(p, "lonlat_origin", type=float, nargs=2, metavar=("LAT", "LON"),
         help="inputs are lon/lat degrees; project about this origin")


def _cluster_opts(p):
    _opt(p, "k_override", type=int, aliases=["--k"], help="fixed number of clusters")
    _opt(p, "k_max", type=int, help="largest k on the variance curve")
    _opt(p, "elbow_tau", type=float, help="relative drop treated as flat")
    _opt(p, "variance_scaling", choices=["zscore", "raw"])
    _opt(p, "standardize_features", action="store_true", help="z-score features before correlation distance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="urban-attractors", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"urban-attractors {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config", help="YAML config file")
    _input_opts(p)
    _opt(p, "pois", help="POI CSV poi_id,poi_type,x,y")
    _opt(p, "skip_poi", action="store_true", help="skip the POI significance stage")
    _feature_opts(p)
    _cluster_opts(p)
    _opt(p, "output_dir", aliases=["-o"])

    p = sub.add_parser("features", help="compute features.csv")
    p.add_argument("--config")
    _input_opts(p)
    _feature_opts(p)
    _opt(p, "output_dir", aliases=["-o"])

    p = sub.add_parser("cluster", help="cluster a features.csv")
    p.add_argument("--config")
    p.add_argument("--features", required=True, help="features.csv from the features stage")
    _opt(p, "zones", help="zone polygons; enables clusters.geojson")
    _cluster_opts(p)
    _opt(p, "output_dir", aliases=["-o"])

    p = sub.add_parser("poi-sig", help="rank POI types per attractor class")
    p.add_argument("--config")
    _opt(p, "pois")
    _opt(p, "zones")
    p.add_argument("--clusters", required=True, help="clusters.csv from the cluster stage")
    _opt(p, "lonlat_origin", type=float, nargs=2, metavar=("LAT", "LON"))
    _opt(p, "output_dir", aliases=["-o"])

    p = sub.add_parser("synth", help="write a synthetic city")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-zones", type=int, default=SynthConfig.n_zones)
    p.add_argument("--n-global", type=int, default=SynthConfig.n_global)
    p.add_argument("--grid-extent-m", type=float, default=SynthConfig.grid_extent_m)
    p.add_argument("--downtown-radius-m", type=float, default=SynthConfig.downtown_radius_m)
    p.add_argument("--flow-scale", type=float, default=SynthConfig.flow_scale)
    p.add_argument("--road-pitch-m", type=float, default=None)
    return parser


def _config(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: expected a mapping of keys to values")
        values.update(loaded)
    skip = {"command", "verbose", "config", "features", "clusters"}
    values.update({k: v for k, v in vars(args).items() if k not in skip})
    try:
        return PipelineConfig.from_mapping(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args):
    cfg = _config(args)
    manifest = run_pipeline(cfg)
    logger.info("k=%s, outputs in %s", manifest["counts"]["k"], cfg.output_dir)


def _cmd_features(args):
    cfg = _config(args).validate("features")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = run_features(cfg)
    stage.table.to_csv(out / FEATURES_CSV)
    logger.info("%d zones classified, %d unclassified", len(stage.table), len(stage.table.unclassified))


def _cmd_cluster(args):
    cfg = _config(args).validate("cluster")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = FeatureTable.from_csv(args.features)
    stage = run_clustering(table, cfg)
    zones = load_zones(cfg.zones, cfg.projection) if cfg.zones else None
    write_cluster_outputs(stage, out, zones)
    logger.info("k=%d", stage.estimator.n_clusters_)


def _cmd_poisig(args):
    cfg = _config(args).validate("poi-sig")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    zones = load_zones(cfg.zones, cfg.projection)
    run_poisig(cfg.pois, zones, read_clusters(args.clusters), out / POI_CSV, cfg.projection)


def _cmd_synth(args):
    try:
        cfg = SynthConfig(
            seed=args.seed,
            n_zones=args.n_zones,
            n_global=args.n_global,
            grid_extent_m=args.grid_extent_m,
            downtown_radius_m=args.downtown_radius_m,
            flow_scale=args.flow_scale,
            road_pitch_m=args.road_pitch_m,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    generate(cfg).write(args.out)


COMMANDS = {
    "run": _cmd_run,
    "features": _cmd_features,
    "cluster": _cmd_cluster,
    "poi-sig": _cmd_poisig,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
