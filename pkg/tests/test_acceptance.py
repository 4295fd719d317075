"""Acceptance suite: one PASS/FAIL line per criterion at the agreed tolerances.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.
"""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

import oracles
from transitpat import cleanse, cluster, geo, kde, nna, report, synthetic
from transitpat.cleanse import CleanseReport, DepotZone
from transitpat.ingest import VehicleObservation

# Published summary statistics of the original stop network.
PUB_R_A, PUB_R_E, PUB_N, PUB_Z = 110.225, 642.191, 3142, -97.691


def test_ac01_nni_arithmetic(verdict):
    r = nna.nni(PUB_R_A, PUB_R_E)
    verdict("AC01 nni(110.225, 642.191)", abs(r - 0.172) <= 5e-4, f"R = {r:.5f} (0.172 ± 0.0005)")


def test_ac02_log_space_p(verdict):
    lp = nna.log10_two_tailed_p(PUB_Z)
    ok = abs(lp - (-2074.44)) <= 0.15 and math.isfinite(lp)
    verdict("AC02 two-tailed p at z=-97.691", ok,
            f"log10 p = {lp:.3f} (-2074.44 ± 0.15), p = {nna.format_log10_p(lp)}")


def test_ac03_z_transparency(verdict):
    out = nna.statistic_from_summary(PUB_R_A, PUB_R_E, PUB_N)
    needed = {"rho", "area", "sigma_rE", "R", "z", "log10_p_two_tailed"}
    ok = abs(out["z"] - (-88.8)) <= 0.2 and needed <= set(out)
    verdict("AC03 z from published summaries", ok,
            f"z = {out['z']:.3f} (-88.8 ± 0.2); rho = {out['rho']:.4e}, "
            f"sigma = {out['sigma_rE']:.4f}, published z = {PUB_Z}")


def test_ac04_csr_calibration(verdict):
    t0 = time.perf_counter()
    rs, rejections = [], 0
    for seed in range(20):
        xy = np.random.default_rng(seed).uniform(0, 10_000, size=(5000, 2))
        res = nna.analyse_points(xy, "convex_hull")
        rs.append(res.R)
        rejections += res.significant and res.z < 0
    elapsed = time.perf_counter() - t0
    mean_r = float(np.mean(rs))
    ok = 0.98 <= mean_r <= 1.04 and rejections / 20 < 0.05 and elapsed < 10
    verdict("AC04 CSR calibration", ok,
            f"mean R = {mean_r:.4f} [0.98, 1.04], clustering rejected in {rejections}/20 "
            f"seeds (< 5%), {elapsed:.2f} s (< 10 s)")


def test_ac05_lattice(verdict):
    t0 = time.perf_counter()
    n = 40
    xy = np.array([(i + (j % 2) / 2, j * math.sqrt(3) / 2) for j in range(n) for i in range(n)])
    r = nna.analyse_points(xy).R
    elapsed = time.perf_counter() - t0
    verdict("AC05 40x40 triangular lattice", 2.0 <= r <= 2.2 and elapsed < 1,
            f"R = {r:.4f} [2.0, 2.2], limit 2.1491, {elapsed:.3f} s (< 1 s)")


def test_ac06_kde_point_value_and_mass(verdict):
    t0 = time.perf_counter()
    grid = kde.GridSpec(-5.5, -5.5, 1.0, 1.0, 11, 11)
    v = kde.estimate_density([(0.0, 0.0)], [1.0], grid, 1.0, 1.0).values[5, 5]
    point_err = abs(v - 1 / (2 * math.pi))
    masses = []
    for seed in range(5):
        rng = np.random.default_rng(600 + seed)
        h = float(rng.uniform(0.5, 2.0))
        side = 60.0
        pts = rng.uniform(4 * h, side - 4 * h, size=(200, 2))
        w = rng.uniform(0, 10, size=200)
        cells = int(math.ceil(side / (h / 3)))
        g = kde.GridSpec(0.0, 0.0, side / cells, side / cells, cells, cells)
        masses.append(kde.estimate_density(pts, w, g, h).integral())
    elapsed = time.perf_counter() - t0
    ok = point_err <= 1e-12 and all(0.98 <= m <= 1.0 for m in masses) and elapsed < 5
    verdict("AC06 KDE point value and mass", ok,
            f"|f(0) - 1/2pi| = {point_err:.1e} (<= 1e-12), mass in "
            f"[{min(masses):.6f}, {max(masses):.6f}] within [0.98, 1.0], {elapsed:.2f} s (< 5 s)")


def test_ac07_bandwidth_sweep(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(70)
    pts = np.vstack([rng.normal(0, 50, (40, 2)), rng.normal(0, 50, (40, 2)) + [800, 0]])
    hs = [kde.km_to_m(h) for h in kde.SWEEP_BANDWIDTHS_KM]
    grid = kde.grid_for_points(pts, max(hs))
    entries = kde.bandwidth_sweep(pts, None, grid, hs)
    maxima = [e.summary["local_maxima"] for e in entries]
    peaks = [e.summary["max"] for e in entries]
    elapsed = time.perf_counter() - t0
    ok = (maxima[0] == 2 and maxima[-1] == 1 and oracles.is_non_increasing(peaks, rel=0)
          and elapsed < 5)
    verdict("AC07 bandwidth sweep", ok,
            f"local maxima by h (m) {dict(zip(hs, maxima))}, peak non-increasing: "
            f"{oracles.is_non_increasing(peaks, rel=0)}, {elapsed:.2f} s (< 5 s)")


def test_ac08_kmeans_oracle(verdict, monkeypatch):
    real = cluster.lloyd
    descents, violations = [0], []

    def checked(*args, **kwargs):
        out = real(*args, **kwargs)
        descents[0] += 1
        if not oracles.is_non_increasing(out[4]):
            violations.append(out[4])
        return out

    monkeypatch.setattr(cluster, "lloyd", checked)
    t0 = time.perf_counter()
    fixtures, mismatches = 0, []
    for n in range(2, 9):
        for k in range(1, min(3, n) + 1):
            for seed in range(3):
                rng = np.random.default_rng(800 + 100 * n + 10 * k + seed)
                x = rng.normal(size=(n, 2)) * rng.uniform(0.3, 3.0, size=2)
                if seed == 2:
                    x[: n // 2] = x[0]  # repeated points
                opt, _ = oracles.best_partition(x, k)
                m = cluster.kmeans(x, k, seed=seed, restarts=20)
                fixtures += 1
                if oracles.partition_cost(x.tolist(), m.labels.tolist()) != opt:
                    mismatches.append((n, k, seed))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and not violations and elapsed < 10
    verdict("AC08 k-means exhaustive oracle", ok,
            f"{fixtures - len(mismatches)}/{fixtures} fixtures at the global optimum, "
            f"{len(violations)} non-monotone of {descents[0]} Lloyd descents, "
            f"{elapsed:.2f} s (< 10 s)")


def test_ac09_standardization(verdict, city):
    rng = np.random.default_rng(90)
    fixtures = [
        np.column_stack([rng.uniform(55.8, 56.0, 500), rng.uniform(-3.4, -3.0, 500),
                         rng.integers(0, 300, 500), np.full(500, 7.0)]),
        rng.normal(1e6, 1e-1, size=(50, 3)),
        rng.exponential(5.0, size=(1000, 2)),
        cluster.build_feature_matrix(city.stops, [
            cluster.StopUsage(s.stop_id, i % 17) for i, s in enumerate(city.stops)]),
    ]
    worst_mean = worst_std = 0.0
    constant_ok = True
    for x in fixtures:
        f = cluster.zscore(x)
        for j in range(x.shape[1]):
            col = f.matrix[:, j]
            if (x[:, j] == x[0, j]).all():
                constant_ok &= bool(f.constant_columns[j]) and bool((col == 0).all())
                continue
            worst_mean = max(worst_mean, abs(col.mean()))
            worst_std = max(worst_std, abs(col.std() - 1))
    ok = worst_mean < 1e-9 and worst_std < 1e-9 and constant_ok
    verdict("AC09 standardization", ok,
            f"max |mean| = {worst_mean:.1e}, max |std - 1| = {worst_std:.1e} (< 1e-9), "
            f"constant columns flagged and zeroed: {constant_ok}")


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_ac10_end_to_end(verdict, city, tmp_path):
    files = synthetic.write_city(city, tmp_path / "inputs")
    t0 = time.perf_counter()
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        report.run_pipeline(report.PipelineConfig(out_dir=str(out), k=3, seed=42, **files))
        outs.append(out)
    elapsed = time.perf_counter() - t0

    first = outs[0]
    r = json.loads((first / "nna.json").read_text())["R"]
    meta = json.loads((first / "kde.json").read_text())
    ref = report.stop_reference(city.stops)
    hub = next(s for s in city.stops if s.stop_id == city.hub_stop_id)
    hub_xy = geo.project(hub.latitude, hub.longitude, ref)
    hub_cell = (math.floor((hub_xy.x - meta["origin_x"]) / meta["cell_width"]),
                math.floor((hub_xy.y - meta["origin_y"]) / meta["cell_height"]))
    cell_off = max(abs(a - b) for a, b in zip(hub_cell, meta["argmax_cell"]))
    rows = read_rows(first / "clusters.csv")
    ari = adjusted_rand_score([city.labels[r_["stop_id"]] for r_ in rows],
                              [int(r_["cluster"]) for r_ in rows])

    def contents(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}

    identical = contents(outs[0]) == contents(outs[1])
    ok = r < 0.8 and cell_off <= 1 and ari == 1.0 and identical and elapsed < 30
    verdict("AC10 synthetic city end to end", ok,
            f"R = {r:.3f} (< 0.8), KDE argmax {cell_off} cell(s) from hub (<= 1), "
            f"ARI = {ari:.3f} (1.0), outputs byte-identical: {identical}, "
            f"{elapsed:.1f} s for two runs (< 30 s)")


def test_ac11_cleanse_audit(verdict, city):
    zone = DepotZone("d", 55.96, -3.18, 200.0)

    def obs(i, **kw):
        base = dict(vehicle_id=f"v{i}", latitude=55.95, longitude=-3.19, timestamp=1700000000 + i,
                    service_name="26", heading=45.0, destination="Town", next_stop="S1")
        base.update(kw)
        return VehicleObservation(**base)

    rows = ([obs(i) for i in range(10)]
            + [obs(100 + i, heading=None) for i in range(3)]
            + [obs(200 + i, latitude=55.96, longitude=-3.18) for i in range(2)]
            + [obs(300, next_stop=None), obs(301, destination=None)]
            + [obs(400, service_name="N/A"), obs(401, destination="Not in Service"),
               obs(402, service_name=None)])
    _, small = cleanse.cleanse(rows, [zone])
    _, big = cleanse.cleanse(city.observations, city.depots)
    inj = city.injected
    expected_big = CleanseReport(len(city.observations), inj["null_heading"], inj["depot"],
                                 inj["inactive_route"], inj["unserviced"],
                                 len(city.observations) - sum(inj.values()))
    ok = (small == CleanseReport(20, 3, 2, 2, 3, 10) and big == expected_big
          and small.is_consistent() and big.is_consistent())
    verdict("AC11 cleanse audit", ok,
            f"fixture {small.to_dict()}; synthetic city removed "
            f"{[big.removed_null_heading, big.removed_depot, big.removed_inactive_route, big.removed_unserviced]}"
            f" of {big.input_count}, conservation holds: {small.is_consistent() and big.is_consistent()}")
