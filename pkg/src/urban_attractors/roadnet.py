"""Road graph, zone snapping and shortest-path distance columns.

Each destination gets one Dijkstra run over the edge-reversed graph, which
yields the road distance from every origin to that destination at once.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
import logging
import math
from collections.abc import Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import DataValidationError
from .ingest import ODMatrix, RoadGraphSpec, ZoneSet

logger = logging.getLogger(__name__)

DEFAULT_MAX_SNAP_M = 5000.0


class RoadGraph:
    """Immutable weighted digraph with a precomputed transpose.

    Nodes are indexed in ascending id order; ``adjacency[i]`` is a tuple of
    ``(neighbor_index, length_m)`` pairs.
    """

    def __init__(self, node_coords: Mapping[str, tuple[float, float]], edges: Iterable[tuple[str, str, float]]):
        self.node_ids: tuple[str, ...] = tuple(sorted(node_coords))
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}
        self.coords = np.array([node_coords[n] for n in self.node_ids], dtype=float).reshape(-1, 2)
        fwd: list[list[tuple[int, float]]] = [[] for _ in self.node_ids]
        rev: list[list[tuple[int, float]]] = [[] for _ in self.node_ids]
        n_edges = 0
        for u, v, w in edges:
            if not w > 0:
                raise DataValidationError(f"edge ({u}, {v}) has non-positive length {w}")
            i, j = self.index[u], self.index[v]
            fwd[i].append((j, float(w)))
            rev[j].append((i, float(w)))
            n_edges += 1
        self.adjacency = tuple(tuple(a) for a in fwd)
        self.reverse_adjacency = tuple(tuple(a) for a in rev)
        self.n_edges = n_edges

    @classmethod
    def from_spec(cls, spec: RoadGraphSpec) -> "RoadGraph":
        directed = []
        for u, v, length, oneway in spec.edges:
            directed.append((u, v, length))
            if not oneway:
                directed.append((v, u, length))
        return cls(spec.nodes, directed)

    def __len__(self) -> int:
        return len(self.node_ids)

    def __repr__(self) -> str:
        return f"RoadGraph(nodes={len(self)}, edges={self.n_edges})"

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for nid, (x, y) in zip(self.node_ids, self.coords.tolist()):
            h.update(f"{nid},{x!r},{y!r}\n".encode())
        for i, nbrs in enumerate(self.adjacency):
            for j, w in sorted(nbrs):
                h.update(f"{i}>{j}:{w!r}\n".encode())
        return h.hexdigest()


def dijkstra(adjacency, source: int) -> list[float]:
    """Single-source shortest path lengths with a binary heap; ``inf`` marks unreachable nodes."""
    dist = [math.inf] * len(adjacency)
    dist[source] = 0.0
    done = [False] * len(adjacency)
    heap = [(0.0, source)]
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                push(heap, (nd, v))
    return dist


@dataclass(frozen=True)
class ZoneAnchor:
    zone_id: str
    node_id: str
    snap_distance_m: float


def snap_zones(zones: ZoneSet, graph: RoadGraph, max_snap_m: float = DEFAULT_MAX_SNAP_M) -> dict[str, ZoneAnchor]:
    """Attach each zone centroid to its Euclidean-nearest node (ties go to the smallest node id)."""
    if len(graph) == 0:
        raise DataValidationError("road graph has no nodes")
    anchors = {}
    xy = graph.coords
    for zid in zones:
        cx, cy = zones[zid].centroid
        d2 = (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2
        # node_ids are sorted, so argmin's first-occurrence rule is the id tie-break
        k = int(np.argmin(d2))
        dist = math.sqrt(float(d2[k]))
        if dist > max_snap_m:
            raise DataValidationError(
                f"zone {zid!r}: nearest road node {graph.node_ids[k]!r} is {dist:.1f} m away (max_snap_m={max_snap_m})"
            )
        anchors[zid] = ZoneAnchor(zid, graph.node_ids[k], dist)
    return anchors


def anchors_hash(anchors: Mapping[str, ZoneAnchor]) -> str:
    h = hashlib.sha256()
    for zid in sorted(anchors):
        h.update(f"{zid}->{anchors[zid].node_id}\n".encode())
    return h.hexdigest()


@dataclass(frozen=True)
class DistanceColumn:
    """Road distances from origin zones to one destination zone."""

    dest_zone: str
    dist_m: Mapping[str, float]
    unreachable: tuple[str, ...] = ()

    @property
    def n_unreachable(self) -> int:
        return len(self.unreachable)


def distances_to(
    dest: str,
    anchors: Mapping[str, ZoneAnchor],
    graph: RoadGraph,
    od: ODMatrix | None = None,
) -> DistanceColumn:
    """Shortest road distance from each origin anchor to ``dest``'s anchor.

    With ``od`` given only origins sending trips to ``dest`` are kept;
    otherwise every anchored zone is an origin.
    """
    if dest not in anchors:
        raise KeyError(f"destination {dest!r} has no anchor")
    dist = dijkstra(graph.reverse_adjacency, graph.index[anchors[dest].node_id])
    origins = sorted(od.column(dest)) if od is not None else sorted(anchors)
    present, missing = {}, []
    for o in origins:
        d = dist[graph.index[anchors[o].node_id]]
        if math.isinf(d):
            missing.append(o)
        else:
            present[o] = d
    return DistanceColumn(dest, present, tuple(missing))


def compute_columns(
    dests: Iterable[str],
    anchors: Mapping[str, ZoneAnchor],
    graph: RoadGraph,
    od: ODMatrix | None = None,
    threads: int | None = None,
) -> dict[str, DistanceColumn]:
    """Distance columns for many destinations, optionally on a worker pool.

    Columns share no mutable state, so results do not depend on ``threads``.
    """
    dests = list(dests)
    if threads is not None and threads > 1 and len(dests) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(lambda d: distances_to(d, anchors, graph, od), dests))
    else:
        cols = [distances_to(d, anchors, graph, od) for d in dests]
    return {c.dest_zone: c for c in cols}


def cache_key(graph: RoadGraph, anchors: Mapping[str, ZoneAnchor]) -> str:
    return hashlib.sha256((graph.content_hash() + anchors_hash(anchors)).encode()).hexdigest()


def save_distance_cache(path, columns: Mapping[str, DistanceColumn], key: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# key={key}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dest_id", "origin_id", "dist_m"])
        for dest in sorted(columns):
            col = columns[dest]
            for o in sorted(col.dist_m):
                w.writerow([dest, o, repr(col.dist_m[o])])


def load_distance_cache(path, key: str) -> dict[str, dict[str, float]] | None:
    """Cached ``dest -> {origin: dist}`` or None when missing or built for another graph/anchoring."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        return None
    with fh:
        first = fh.readline().strip()
        if first != f"# key={key}":
            logger.info("distance cache %s is stale, recomputing", path)
            return None
        out: dict[str, dict[str, float]] = {}
        for row in csv.DictReader(fh):
            out.setdefault(row["dest_id"], {})[row["origin_id"]] = float(row["dist_m"])
    return out
