"""Cleaning rules that turn raw feed snapshots into the analysis dataset.

Four independent predicates, applied in order:

1. inactive vehicles: heading absent
2. depot zones: within ``radius`` metres (inclusive) of a depot coordinate
3. inactive routes: next stop or destination absent
4. unserviced: service name absent, empty or "N/A", or the destination reads
   "Not in Service"
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .geo import haversine
from .ingest import VehicleObservation

DEFAULT_DEPOT_RADIUS_M = 250.0


@dataclass(frozen=True)
class DepotZone:
    name: str
    center_latitude: float
    center_longitude: float
    radius: float = DEFAULT_DEPOT_RADIUS_M

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"depot {self.name!r}: radius must be positive")

    def contains(self, latitude: float, longitude: float) -> bool:
        d = haversine((self.center_latitude, self.center_longitude), (latitude, longitude))
        return d <= self.radius


@dataclass
class CleanseReport:
    input_count: int = 0
    removed_null_heading: int = 0
    removed_depot: int = 0
    removed_inactive_route: int = 0
    removed_unserviced: int = 0
    output_count: int = 0

    @property
    def removed_total(self) -> int:
        return (self.removed_null_heading + self.removed_depot + self.removed_inactive_route
                + self.removed_unserviced)

    def is_consistent(self) -> bool:
        counts = asdict(self).values()
        return all(c >= 0 for c in counts) and \
            self.output_count == self.input_count - self.removed_total

    def to_dict(self) -> dict:
        return asdict(self)


def _split(observations, keep) -> tuple[list[VehicleObservation], int]:
    kept = [o for o in observations if keep(o)]
    return kept, len(observations) - len(kept)


def is_active(obs: VehicleObservation) -> bool:
    return obs.heading is not None


def is_on_route(obs: VehicleObservation) -> bool:
    return obs.next_stop is not None and obs.destination is not None


def is_in_service(obs: VehicleObservation) -> bool:
    name = obs.service_name
    if name is None or not name.strip() or name.strip().casefold() == "n/a":
        return False
    if obs.destination is not None and obs.destination.strip().casefold() == "not in service":
        return False
    return True


def in_depot(obs: VehicleObservation, zones: Sequence[DepotZone]) -> bool:
    return any(z.contains(obs.latitude, obs.longitude) for z in zones)


def filter_inactive_vehicles(observations):
    return _split(list(observations), is_active)


def filter_depots(observations, zones: Sequence[DepotZone]):
    zones = list(zones)
    return _split(list(observations), lambda o: not in_depot(o, zones))


def filter_inactive_routes(observations):
    return _split(list(observations), is_on_route)


def filter_unserviced(observations):
    return _split(list(observations), is_in_service)


def cleanse(observations, zones: Sequence[DepotZone] | None = None
            ) -> tuple[list[VehicleObservation], CleanseReport]:
    """Apply all four rules and return survivors with per-rule removal counts.

    ``zones=None`` skips depot filtering; an empty list is rejected.
    """
    obs = list(observations)
    report = CleanseReport(input_count=len(obs))
    obs, report.removed_null_heading = filter_inactive_vehicles(obs)
    if zones is not None:
        if not zones:
            raise ValueError("depot filtering enabled with an empty zone list")
        obs, report.removed_depot = filter_depots(obs, zones)
    obs, report.removed_inactive_route = filter_inactive_routes(obs)
    obs, report.removed_unserviced = filter_unserviced(obs)
    report.output_count = len(obs)
    return obs, report


def load_depots(path: str | Path | None = None,
                default_radius: float = DEFAULT_DEPOT_RADIUS_M) -> list[DepotZone]:
    """Read depot zones from a GeoJSON FeatureCollection of Point features.

    Each feature may carry ``name`` and ``radius`` (metres) properties. With no
    path, the bundled Edinburgh depot list is used.
    """
    if path is None:
        text = resources.files("transitpat").joinpath("data/edinburgh_depots.geojson").read_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    doc = json.loads(text)
    zones = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise ValueError(f"depot feature {i} is not a Point")
        lon, lat = geom["coordinates"][:2]
        props = feat.get("properties") or {}
        zones.append(DepotZone(
            name=str(props.get("name", f"depot-{i}")),
            center_latitude=float(lat),
            center_longitude=float(lon),
            radius=float(props.get("radius", default_radius)),
        ))
    if not zones:
        raise ValueError("depot file contains no zones")
    return zones


def depots_to_geojson(zones: Sequence[DepotZone]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point",
                             "coordinates": [z.center_longitude, z.center_latitude]},
                "properties": {"name": z.name, "radius": z.radius},
            }
            for z in zones
        ],
    }
