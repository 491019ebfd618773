import json
from pathlib import Path

import pytest

from urban_attractors.synth import SynthConfig, generate


def square(x0, y0, side):
    return [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side], [x0, y0]]


def write_geojson(path, polygons):
    """polygons: {id: exterior ring}"""
    feats = [
        {"type": "Feature", "properties": {"id": zid}, "geometry": {"type": "Polygon", "coordinates": [ring]}}
        for zid, ring in polygons.items()
    ]
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": feats}))
    return path


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def row_city(tmp_path):
    """Three 1 km squares in a row (A, B, C) joined by a two-way road through their centroids."""
    zones = write_geojson(tmp_path / "zones.geojson", {
        "A": square(0, 0, 1000), "B": square(1000, 0, 1000), "C": square(2000, 0, 1000),
    })
    od = write_csv(tmp_path / "od.csv", ["origin_id", "dest_id", "trips"], [
        ("A", "C", 1), ("B", "C", 3), ("C", "C", 10), ("A", "B", 2), ("C", "B", 2), ("B", "A", 4),
    ])
    nodes = write_csv(tmp_path / "nodes.csv", ["node_id", "x", "y"], [
        ("a", 500, 500), ("b", 1500, 500), ("c", 2500, 500),
    ])
    edges = write_csv(tmp_path / "edges.csv", ["u", "v", "length_m", "oneway"], [
        ("a", "b", 1000, 0), ("b", "c", 1000, 0),
    ])
    pois = write_csv(tmp_path / "pois.csv", ["poi_id", "poi_type", "x", "y"], [
        ("p1", "restaurant", 2500, 500), ("p2", "restaurant", 500, 500),
        ("p3", "school", 2400, 400), ("p4", "school", 1500, 500),
    ])
    return {"zones": zones, "od": od, "nodes": nodes, "edges": edges, "pois": pois, "dir": tmp_path}


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    generate(SynthConfig(seed=3)).write(out)
    return out


def inputs_args(d):
    d = Path(d)
    return ["--zones", str(d / "zones.geojson"), "--od", str(d / "od.csv"),
            "--nodes", str(d / "nodes.csv"), "--edges", str(d / "edges.csv")]
