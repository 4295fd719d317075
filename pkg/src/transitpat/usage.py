"""Per-stop usage intensity and per-service frequency tables."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geo
from .ingest import Stop, VehicleObservation


@dataclass(frozen=True)
class StopUsage:
    stop_id: str
    vehicle_count: int


def build_stop_index(stops: Sequence[Stop], reference: tuple[float, float]) -> geo.StopIndex:
    if not stops:
        raise geo.GeometryError("stop set is empty")
    xy = geo.project_array([(s.latitude, s.longitude) for s in stops], reference)
    return geo.StopIndex([s.stop_id for s in stops], xy)


def assign_vehicles_to_stops(observations: Sequence[VehicleObservation], stops: Sequence[Stop],
                             reference: tuple[float, float] | None = None,
                             max_assign_distance: float = math.inf) -> list[StopUsage]:
    """Count observations at their nearest stop.

    Every stop appears once in the result, in input order, including those
    with zero count. Observations farther than ``max_assign_distance`` metres
    from every stop are dropped (no limit by default).
    """
    if not stops:
        raise geo.GeometryError("stop set is empty")
    if reference is None:
        reference = geo.reference_point((s.latitude, s.longitude) for s in stops)
    index = build_stop_index(stops, reference)
    counts = np.zeros(len(stops), dtype=np.int64)
    if observations:
        q = geo.project_array([(o.latitude, o.longitude) for o in observations], reference)
        nearest = index.query_index(q)
        if math.isfinite(max_assign_distance):
            diff = index.xy[nearest] - q
            dist = np.sqrt(diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1])
            nearest = nearest[dist <= max_assign_distance]
        counts = np.bincount(nearest, minlength=len(stops))
    return [StopUsage(s.stop_id, int(c)) for s, c in zip(stops, counts)]


def service_frequency_table(observations: Sequence[VehicleObservation],
                            top_k: int | None = None) -> list[tuple[str, int]]:
    """Observation count per service name, highest first.

    Ties sort by service name as a string, so "16" precedes "3".
    """
    counts = Counter(o.service_name for o in observations if o.service_name is not None)
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return rows if top_k is None else rows[:top_k]
