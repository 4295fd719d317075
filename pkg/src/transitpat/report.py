"""Pipeline orchestration and export of results for external plotting.

A run executes five stages in order (cleanse, usage, nna, kde, cluster) on a
stored snapshot file and stop list, writes every output into one directory
and records a manifest of inputs, parameters, outputs, timings and warnings.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import cleanse as cleanse_mod
from . import cluster as cluster_mod
from . import geo, kde, nna, usage
from .formats import read_stops, write_csv, write_json, write_usage
from .ingest import Stop, read_observations, write_observations

logger = logging.getLogger(__name__)

STAGES = ("cleanse", "usage", "nna", "kde", "cluster")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class ConsistencyError(ValueError):
    pass


@dataclass
class PipelineConfig:
    snapshots: str
    stops: str
    out_dir: str
    depots: str | None = None
    endpoint: str | None = None
    area_method: str = "convex_hull"
    histogram_bins: int = nna.DEFAULT_BINS
    alpha: float = nna.DEFAULT_ALPHA
    bandwidth: float = kde.DEFAULT_BANDWIDTH_M
    sweep: list = field(default_factory=list)
    grid: int = kde.DEFAULT_GRID_SIZE
    k: int = cluster_mod.DEFAULT_K
    seed: int = cluster_mod.DEFAULT_SEED
    restarts: int = cluster_mod.DEFAULT_RESTARTS
    k_range: list = field(default_factory=lambda: list(range(1, 9)))
    top_services: int = 10
    max_assign_distance: float | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def validate(self) -> None:
        for name in ("snapshots", "stops") + (("depots",) if self.depots else ()):
            if not Path(getattr(self, name)).exists():
                raise FileNotFoundError(f"{name} path does not exist: {getattr(self, name)}")
        if self.area_method not in geo.AREA_METHODS:
            raise ValueError(f"area_method must be one of {geo.AREA_METHODS}")
        if not self.bandwidth > 0 or any(h <= 0 for h in self.sweep):
            raise ValueError("bandwidths must be positive")
        if self.grid < 1 or self.histogram_bins < 1:
            raise ValueError("grid and histogram_bins must be positive")
        if self.k < 1 or self.restarts < 1:
            raise ValueError("k and restarts must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def emit_geojson(stops: Sequence[Stop], stop_usage: Sequence[usage.StopUsage],
                 table: Sequence[cluster_mod.ClusteredStop]) -> dict:
    """One Point feature per stop with its usage count and cluster."""
    counts = {u.stop_id: u.vehicle_count for u in stop_usage}
    clusters = {row.stop_id: row.cluster for row in table}
    ids = [s.stop_id for s in stops]
    if set(ids) != set(counts) or set(ids) != set(clusters):
        raise ConsistencyError("stop ids differ between stops, usage and cluster tables")
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.longitude, s.latitude]},
                "properties": {
                    "stop_id": s.stop_id,
                    "name": s.name,
                    "vehicle_count": counts[s.stop_id],
                    "cluster": clusters[s.stop_id],
                },
            }
            for s in stops
        ],
    }


def write_density(path: Path, density: kde.DensityGrid) -> list[Path]:
    """CSV of cell centres with density and intensity, plus a JSON metadata sidecar."""
    xc, yc = density.grid.x_centers, density.grid.y_centers
    inten = density.intensity
    rows = ((float(xc[i]), float(yc[j]), float(density.values[i, j]), float(inten[i, j]))
            for j in range(density.ny) for i in range(density.nx))
    write_csv(path, ["cell_x_center", "cell_y_center", "density", "intensity"], rows)
    sidecar = path.with_suffix(".json")
    write_json(sidecar, density.metadata())
    return [path, sidecar]


def stop_reference(stops: Sequence[Stop]) -> tuple[float, float]:
    return geo.reference_point((s.latitude, s.longitude) for s in stops)


def run_kde(stops: Sequence[Stop], stop_usage: Sequence[usage.StopUsage], bandwidth: float,
            grid_size: int = kde.DEFAULT_GRID_SIZE, sweep: Sequence[float] = (),
            reference: tuple[float, float] | None = None):
    """Usage-weighted density of stops; returns ``(main grid, sweep entries, reference)``."""
    if reference is None:
        reference = stop_reference(stops)
    counts = {u.stop_id: u.vehicle_count for u in stop_usage}
    xy = geo.project_array([(s.latitude, s.longitude) for s in stops], reference)
    weights = [counts.get(s.stop_id, 0) for s in stops]
    spec = kde.grid_for_points(xy, max([bandwidth, *sweep]), grid_size)
    main = kde.estimate_density(xy, weights, spec, bandwidth, bandwidth)
    entries = kde.bandwidth_sweep(xy, weights, spec, sweep) if sweep else []
    return main, entries, reference


def write_cluster_outputs(out_dir: Path, stops, stop_usage, model, feats, table,
                          prefix: str = "") -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    p_csv = out_dir / f"{prefix}clusters.csv"
    write_csv(p_csv, ["stop_id", "lat", "lon", "count", "cluster"],
              ((r.stop_id, r.latitude, r.longitude, r.vehicle_count, r.cluster) for r in table))
    p_model = out_dir / f"{prefix}cluster_model.json"
    write_json(p_model, cluster_mod.model_to_dict(model, feats))
    p_summary = out_dir / f"{prefix}cluster_summary.json"
    write_json(p_summary, cluster_mod.cluster_summary(model, table))
    p_geo = out_dir / f"{prefix}stops.geojson"
    write_json(p_geo, emit_geojson(stops, stop_usage, table))
    return [p_csv, p_model, p_summary, p_geo]


def _sweep_name(h: float) -> str:
    return f"kde_h{h:g}m.csv"


def run_pipeline(config: PipelineConfig) -> dict:
    """Run all stages and return the manifest (also written as ``manifest.json``).

    A failing stage raises :class:`PipelineError` after writing a ``.partial``
    marker describing the failure next to whatever outputs were produced.
    """
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / ".partial"
    if marker.exists():
        marker.unlink()
    manifest: dict = {
        "inputs": {"snapshots": config.snapshots, "stops": config.stops, "depots": config.depots},
        "config": asdict(config),
        "stages": {},
        "timings_s": {},
        "warnings": [],
    }
    state: dict = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                outputs = fn()
            except Exception as exc:
                manifest["warnings"].extend(f"[{name}] {w.message}" for w in caught)
                manifest["failed_stage"] = name
                manifest["error"] = str(exc)
                write_json(marker, {"stage": name, "error": str(exc),
                                    "completed": list(manifest["stages"])})
                raise PipelineError(name, exc) from exc
        manifest["warnings"].extend(f"[{name}] {w.message}" for w in caught)
        manifest["stages"][name] = [p.name for p in outputs]
        manifest["timings_s"][name] = round(time.perf_counter() - t0, 6)

    def do_cleanse():
        raw = read_observations(config.snapshots)
        if not raw:
            raise ValueError("no observations in snapshot store")
        zones = cleanse_mod.load_depots(config.depots) if config.depots else None
        clean, report = cleanse_mod.cleanse(raw, zones)
        if not clean:
            raise ValueError("no observations survive cleansing")
        state["observations"] = clean
        p_obs, p_rep = out / "cleansed.ndjson", out / "cleanse_report.json"
        write_observations(p_obs, clean)
        write_json(p_rep, report.to_dict())
        return [p_obs, p_rep]

    def do_usage():
        stops = read_stops(config.stops)
        state["stops"] = stops
        state["reference"] = stop_reference(stops)
        limit = config.max_assign_distance if config.max_assign_distance is not None \
            else float("inf")
        su = usage.assign_vehicles_to_stops(state["observations"], stops, state["reference"],
                                            limit)
        state["usage"] = su
        p_use, p_svc = out / "usage.csv", out / "services.csv"
        write_usage(p_use, su)
        write_csv(p_svc, ["service_name", "count"],
                  usage.service_frequency_table(state["observations"], config.top_services))
        return [p_use, p_svc]

    def do_nna():
        res = nna.run_nna(state["stops"], config.area_method, config.histogram_bins,
                          config.alpha, state["reference"])
        p = out / "nna.json"
        write_json(p, res.to_dict())
        return [p]

    def do_kde():
        main, entries, _ = run_kde(state["stops"], state["usage"], config.bandwidth,
                                   config.grid, config.sweep, state["reference"])
        paths = write_density(out / "kde.csv", main)
        summaries = []
        for e in entries:
            paths += write_density(out / _sweep_name(e.h), e.density)
            summaries.append({"h": e.h, **{k: (list(v) if isinstance(v, tuple) else v)
                                           for k, v in e.summary.items()}})
        if entries:
            p = out / "kde_sweep.json"
            write_json(p, summaries)
            paths.append(p)
        return paths

    def do_cluster():
        model, feats, table = cluster_mod.cluster_stops(
            state["stops"], state["usage"], config.k, config.seed, config.restarts)
        paths = write_cluster_outputs(out, state["stops"], state["usage"], model, feats, table)
        ks = [k for k in config.k_range if 1 <= k <= len(state["stops"])]
        if ks:
            rows = cluster_mod.k_selection_report(feats, ks, config.seed, config.restarts)
            p = out / "k_selection.json"
            write_json(p, [asdict(r) for r in rows])
            paths.append(p)
        return paths

    for name, fn in zip(STAGES, (do_cleanse, do_usage, do_nna, do_kde, do_cluster)):
        stage(name, fn)
        logger.info("stage %s done", name)

    manifest["outputs"] = sorted([p for files in manifest["stages"].values() for p in files]
                                 + ["manifest.json"])
    write_json(out / "manifest.json", manifest)
    return manifest
