"""Deterministic synthetic city for demos and end-to-end tests.

Three point-symmetric clumps of stops with distinct activity levels, a hub
stop at the centre of the busiest clump, and a set of vehicle observations
that includes rows violating each cleaning rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geo
from .cleanse import DepotZone
from .ingest import Stop, VehicleObservation

REFERENCE = (55.9533, -3.1883)
BASE_TIME = 1_700_000_000


@dataclass
class SyntheticCity:
    stops: list
    observations: list
    labels: dict
    hub_stop_id: str
    depots: list
    reference: tuple
    # Number of injected rows violating each rule, in cleanse order.
    injected: dict = field(default_factory=dict)


def _symmetric_offsets(rng: np.random.Generator, n_pairs: int, spread: float,
                       min_spacing: float) -> np.ndarray:
    pts: list[np.ndarray] = []
    while len(pts) < 2 * n_pairs:
        p = rng.normal(0.0, spread, size=2)
        cand = [p, -p]
        ok = all(np.hypot(*(c - q)) >= min_spacing for c in cand for q in pts)
        ok = ok and np.hypot(*p) >= min_spacing and np.hypot(*(2 * p)) >= min_spacing
        if ok:
            pts.extend(cand)
    return np.array(pts)


def make_city(seed: int = 7, pairs_per_clump: int = 30, spread_m: float = 350.0,
              levels: tuple = (60, 30, 10), hub_count: int = 250) -> SyntheticCity:
    """Build the fixture. Clump 0 is the busiest and holds the hub stop."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [5000.0, 1500.0], [1500.0, 5000.0]])
    stops: list[Stop] = []
    labels: dict[str, int] = {}
    counts: dict[str, int] = {}

    def add_stop(sid: str, xy, clump: int, count: int) -> None:
        lat, lon = geo.unproject(geo.ProjectedPoint(float(xy[0]), float(xy[1])), REFERENCE)
        stops.append(Stop(sid, f"Stop {sid}", lat, lon))
        labels[sid] = clump
        counts[sid] = count

    hub_id = "H000"
    add_stop(hub_id, centers[0], 0, hub_count)
    for c, (center, level) in enumerate(zip(centers, levels)):
        offsets = _symmetric_offsets(rng, pairs_per_clump, spread_m, 40.0)
        noise = rng.integers(-max(1, level // 10), max(1, level // 10) + 1, size=len(offsets))
        for i, (off, dn) in enumerate(zip(offsets, noise)):
            add_stop(f"S{c}{i:03d}", center + off, c, int(level + dn))

    services = ["26", "30", "44", "11", "T50"]
    obs: list[VehicleObservation] = []
    t = BASE_TIME

    def vehicle(lat, lon, **kw) -> VehicleObservation:
        nonlocal t
        t += 1
        fields = dict(vehicle_id=f"v{t % 997}", latitude=lat, longitude=lon, timestamp=t,
                      service_name=services[t % len(services)], heading=float(t % 360),
                      destination="Town Centre", next_stop="S0000")
        fields.update(kw)
        return VehicleObservation(**fields)

    for s in stops:
        for _ in range(counts[s.stop_id]):
            jitter = rng.normal(0.0, 1e-5, size=2)
            obs.append(vehicle(s.latitude + jitter[0], s.longitude + jitter[1]))

    depot_lat, depot_lon = geo.unproject(geo.ProjectedPoint(3000.0, -3000.0), REFERENCE)
    depots = [DepotZone("Synthetic depot", depot_lat, depot_lon, 250.0)]
    hub = stops[0]
    injected = {"null_heading": 7, "depot": 5, "inactive_route": 6, "unserviced": 4}
    for _ in range(injected["null_heading"]):
        obs.append(vehicle(hub.latitude, hub.longitude, heading=None))
    for _ in range(injected["depot"]):
        obs.append(vehicle(depot_lat, depot_lon))
    for i in range(injected["inactive_route"]):
        kw = {"next_stop": None} if i % 2 else {"destination": None}
        obs.append(vehicle(hub.latitude, hub.longitude, **kw))
    for i in range(injected["unserviced"]):
        kw = {"service_name": "N/A"} if i % 2 else {"destination": "Not in Service"}
        obs.append(vehicle(hub.latitude, hub.longitude, **kw))

    order = rng.permutation(len(obs))
    obs = [obs[i] for i in order]
    return SyntheticCity(stops, obs, labels, hub_id, depots, REFERENCE, injected)


def write_city(city: SyntheticCity, directory) -> dict:
    """Materialise the fixture as pipeline inputs; returns the file paths by role."""
    from .cleanse import depots_to_geojson
    from .formats import write_json, write_stops
    from .ingest import write_observations

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"snapshots": directory / "snapshots.ndjson", "stops": directory / "stops.json",
             "depots": directory / "depots.geojson"}
    write_observations(paths["snapshots"], city.observations, batch_id=BASE_TIME,
                       retrieved_at=float(BASE_TIME))
    write_stops(paths["stops"], city.stops)
    write_json(paths["depots"], depots_to_geojson(city.depots))
    return {k: str(v) for k, v in paths.items()}
