"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
"""
import filecmp
import functools
import math
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

sys.path.insert(0, str(Path(__file__).parent))

from oracles import (  # noqa: E402
    floyd_warshall,
    hypergeom_tails_by_margin,
    multiset_stats,
    naive_complete_linkage,
    two_pass_dispersion,
)
from urban_attractors.clustering import (  # noqa: E402
    AttractorClustering,
    cut,
    hac_complete,
    label_archetypes,
    pairwise_correlation_distances,
    variance_curve,
)
from urban_attractors.features import FlowOriginSet, build_feature_vectors, distance_stats, spatial_dispersion  # noqa: E402
from urban_attractors.ingest import POIRecord, POITable, Zone, ZoneSet  # noqa: E402
from urban_attractors.pipeline import PipelineConfig, run_pipeline  # noqa: E402
from urban_attractors.poisig import (  # noqa: E402
    ContingencyTable,
    fet_one_sided,
    fet_one_sided_exact,
    rank_all,
    rank_types,
)
from urban_attractors.roadnet import RoadGraph, compute_columns, distances_to, snap_zones  # noqa: E402
from urban_attractors.synth import DEFAULT_PLANT, SynthConfig, generate  # noqa: E402
from shapely.geometry import box  # noqa: E402


def report(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
    print(line, flush=True)
    return line


# 1 ---------------------------------------------------------------------------

def check_shortest_paths(n_graphs=120, seed=0):
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(n_graphs):
        n = int(rng.integers(2, 51))
        p = rng.uniform(0.03, 0.3)
        edges = [(u, v, float(rng.integers(1, 1000)))
                 for u in range(n) for v in range(n) if u != v and rng.random() < p]
        ids = [f"n{i:02d}" for i in range(n)]
        graph = RoadGraph({nid: (float(i), 0.0) for i, nid in enumerate(ids)},
                          [(ids[u], ids[v], w) for u, v, w in edges])
        zones = ZoneSet(Zone(f"z{i:02d}", box(i - 0.1, -0.1, i + 0.1, 0.1), (float(i), 0.0)) for i in range(n))
        anchors = snap_zones(zones, graph, max_snap_m=0.5)
        ref = floyd_warshall(n, edges)
        for v in range(n):
            col = distances_to(f"z{v:02d}", anchors, graph)
            got = np.full(n, np.inf)
            for zid, d in col.dist_m.items():
                got[int(zid[1:])] = d
            mismatches += int(not np.array_equal(got, ref[:, v]))
    elapsed = time.perf_counter() - t0
    return mismatches == 0 and elapsed < 10, f"{n_graphs} digraphs, {mismatches} column mismatches, {elapsed:.1f}s"


# 2 ---------------------------------------------------------------------------

def check_fet(n_max=60):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for n in range(n_max + 1):
        for r1 in range(n + 1):
            for c1 in range(n + 1):
                for a, exact in hypergeom_tails_by_margin(n, r1, c1).items():
                    p = fet_one_sided(ContingencyTable(a, r1 - a, c1 - a, n - r1 - c1 + a))
                    worst = max(worst, abs(p - float(exact)) / float(exact))
                    count += 1
    elapsed = time.perf_counter() - t0
    spots = (fet_one_sided_exact(ContingencyTable(3, 1, 1, 3)) == Fraction(17, 70)
             and fet_one_sided_exact(ContingencyTable(1, 1, 1, 1)) == Fraction(5, 6))
    ok = worst <= 1e-12 and spots and elapsed < 30
    return ok, f"{count} tables, worst rel err {worst:.1e}, rational spots {'ok' if spots else 'wrong'}, {elapsed:.1f}s"


# 3 ---------------------------------------------------------------------------

def check_hac(n_sets=50, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for i in range(n_sets):
        n = int(rng.integers(2, 101))
        if i % 3 == 0:
            X = rng.integers(0, 3, size=(n, 4)).astype(float)  # many exact ties
        else:
            X = rng.lognormal(size=(n, 4))
        tree = hac_complete(X)
        got = [(m.cluster_a, m.cluster_b, m.distance) for m in tree.merges]
        bad += int(got != naive_complete_linkage(pairwise_correlation_distances(X)))
    return bad == 0, f"{n_sets} feature sets, {bad} merge-sequence mismatches"


# 4 ---------------------------------------------------------------------------

def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def check_dispersion(n_inputs=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst_oracle, worst_inv = 0.0, 0.0
    for _ in range(n_inputs):
        n = int(rng.integers(2, 40))
        w = rng.integers(1, 5000, n) / 1000.0
        xy = rng.uniform(-20_000, 20_000, (n, 2))
        d = rng.uniform(0, 30_000, n)
        origins = FlowOriginSet.from_arrays("d", w, xy, d)
        sd, _ = spatial_dispersion(origins)
        mu, sigma, _ = distance_stats(origins)
        ref_sd, _ = two_pass_dispersion(w, xy.tolist())
        ref_mu, ref_sigma = multiset_stats(w, d)
        worst_oracle = max(worst_oracle, _rel(sd, ref_sd), _rel(mu, ref_mu), _rel(sigma, ref_sigma))

        shift = rng.uniform(-1e5, 1e5, 2)
        scale = rng.uniform(0.01, 100)
        wk = rng.uniform(0.01, 100)
        sd_t, _ = spatial_dispersion(FlowOriginSet.from_arrays("d", w, xy + shift))
        sd_s, _ = spatial_dispersion(FlowOriginSet.from_arrays("d", w, xy * scale))
        moved = FlowOriginSet.from_arrays("d", w * wk, xy, d * scale)
        sd_w, _ = spatial_dispersion(moved)
        mu_s, sigma_s, _ = distance_stats(moved)
        worst_inv = max(worst_inv, _rel(sd_t, sd), _rel(sd_s, sd * scale), _rel(sd_w, sd),
                        _rel(mu_s, mu * scale), _rel(sigma_s, sigma * scale))
    ok = worst_oracle <= 1e-6 and worst_inv <= 1e-9
    return ok, f"{n_inputs} inputs, worst oracle rel err {worst_oracle:.1e}, worst invariant rel err {worst_inv:.1e}"


# 5, 6, 8 share the seed sweep --------------------------------------------------

def _features(city, threads=None):
    graph = RoadGraph.from_spec(city.roadnet)
    anchors = snap_zones(city.zones, graph)
    dests = [z for z in sorted(city.zones) if city.od.column(z)]
    columns = compute_columns(dests, anchors, graph, city.od, threads)
    return build_feature_vectors(city.od, city.zones, columns)


@functools.lru_cache(maxsize=None)
def synth_sweep(n_seeds=20):
    runs = []
    for seed in range(n_seeds):
        t0 = time.perf_counter()
        city = generate(SynthConfig(seed=seed))
        table = _features(city)
        est = AttractorClustering().fit(table.matrix())
        labels3 = cut(est.tree_, 3)
        names = label_archetypes(labels3, table.rows, 3)
        truth = [city.ground_truth[z] for z in table.zone_ids]
        ari = adjusted_rand_score(truth, labels3)
        majority = {}
        for c in set(labels3.tolist()):
            members = [t for t, lab in zip(truth, labels3) if lab == c]
            majority[c] = max(sorted(set(members)), key=members.count)
        runs.append({
            "seed": seed,
            "k": est.n_clusters_,
            "ari": ari,
            "labels_ok": names == majority,
            "curve": est.variance_curve_,
            "city": city,
            "classes": {z: names[c] for z, c in zip(table.zone_ids, labels3)},
            "seconds": time.perf_counter() - t0,
        })
    return runs


def check_recovery():
    runs = synth_sweep()
    k3 = sum(r["k"] == 3 for r in runs)
    good = [r for r in runs if r["ari"] >= 0.9]
    labels_ok = all(r["labels_ok"] for r in good)
    slowest = max(r["seconds"] for r in runs)
    ok = k3 >= 18 and len(good) >= 18 and labels_ok and slowest < 60
    return ok, (f"select_k=3 in {k3}/20, ARI>=0.9 in {len(good)}/20, labels match planted in "
                f"{sum(r['labels_ok'] for r in good)}/{len(good)}, slowest seed {slowest:.1f}s")


def check_poi_significance(null_trials=100):
    planted = {t for t, _ in DEFAULT_PLANT["Global"]}
    ranked_first = 0
    runs = synth_sweep()
    for r in runs:
        top = rank_types(r["city"].pois, r["classes"], "Global").rows[:len(planted)]
        ranked_first += int({t.poi_type for t in top} == planted and all(t.p_value < 0.01 for t in top))

    significant = total = 0
    for trial in range(null_trials):
        rng = np.random.default_rng(10_000 + trial)
        city = runs[trial % len(runs)]["city"]
        zones = sorted(city.zones)
        records = []
        for z in zones:
            for t in city.config.poi_types:
                for _ in range(rng.poisson(city.config.poi_rate)):
                    records.append(POIRecord(f"p{len(records)}", t, city.zones[z].centroid, z))
        for ranking in rank_all(POITable(tuple(records)), runs[trial % len(runs)]["classes"]):
            for row in ranking.rows:
                significant += int(row.p_value < 0.01)
                total += 1
    frac = significant / total
    ok = ranked_first == len(runs) and frac <= 0.05
    return ok, (f"planted Global types ranked first with p<0.01 in {ranked_first}/{len(runs)} cities, "
                f"null false-positive rate {frac:.2%} over {null_trials} trials")


# 7 ---------------------------------------------------------------------------

SCALE_CONFIG = SynthConfig(seed=0, n_zones=1492, n_global=40, grid_extent_m=39_000.0,
                           road_pitch_m=39_000.0 / 39 * 38 / 66)


def check_scale():
    city = generate(SCALE_CONFIG)
    n_nodes = len(city.roadnet.nodes)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        paths = city.write(tmp / "in")
        times = []
        for name, threads in (("a", 1), ("b", 2)):
            cfg = PipelineConfig(zones=str(paths["zones"]), od=str(paths["od"]), nodes=str(paths["nodes"]),
                                 edges=str(paths["edges"]), pois=str(paths["pois"]),
                                 output_dir=str(tmp / name), threads=threads)
            t0 = time.perf_counter()
            manifest = run_pipeline(cfg)
            times.append(time.perf_counter() - t0)
        names = sorted(p.name for p in (tmp / "a").iterdir())
        same = all(filecmp.cmp(tmp / "a" / f, tmp / "b" / f, shallow=False) for f in names)
    ok = same and max(times) < 600 and len(names) == 7
    return ok, (f"{len(city.zones)} zones, {n_nodes} road nodes, k={manifest['counts']['k']}, "
                f"runs {times[0]:.1f}s/{times[1]:.1f}s, {len(names)} files byte-identical={same}")


# 8 ---------------------------------------------------------------------------

def check_variance_curves(n_random=200, seed=0):
    curves = [r["curve"] for r in synth_sweep()]
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        n = int(rng.integers(2, 80))
        X = rng.integers(0, 4, size=(n, 4)).astype(float) if i % 2 else rng.lognormal(size=(n, 4)) * 1e3
        tree = hac_complete(X)
        for scaling in ("zscore", "raw"):
            curves.append(variance_curve(X, tree, k_max=min(10, n), scaling=scaling))
    bad = 0
    for curve in curves:
        r = [v for _, v in curve]
        bad += int(r[0] != 1.0 or any(b > a for a, b in zip(r, r[1:])) or [k for k, _ in curve] != list(
            range(1, len(r) + 1)))
    return bad == 0, f"{len(curves)} curves, {bad} violations"


CRITERIA = [
    (1, "reverse Dijkstra equals Floyd-Warshall", check_shortest_paths),
    (2, "one-sided Fisher exact test vs exact enumeration", check_fet),
    (3, "complete-linkage merges equal naive reference", check_hac),
    (4, "dispersion and distance statistics vs oracles", check_dispersion),
    (5, "planted archetype recovery", check_recovery),
    (6, "planted POI significance and null calibration", check_poi_significance),
    (7, "1492-zone pipeline runtime and determinism", check_scale),
    (8, "variance curve starts at 1 and never increases", check_variance_curves),
]


@pytest.mark.parametrize("number,title,check", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, check, capsys):
    passed, detail = check()
    with capsys.disabled():
        print()
        report(number, title, passed, detail)
    assert passed, detail


if __name__ == "__main__":
    results = [report(n, title, *check()) for n, title, check in CRITERIA]
    sys.exit(0 if all(r.startswith("[PASS]") for r in results) else 1)
