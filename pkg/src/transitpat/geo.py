"""Planar geometry on a local projection of WGS84 coordinates.

All analyses work in metres on a local equirectangular projection centred on
a reference coordinate. Over a city-sized extent the distortion relative to
great-circle distance is far below typical stop spacing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS_M = 6_371_000.0

# Projection accuracy degrades with latitude offset from the reference.
MAX_LATITUDE_OFFSET_DEG = 2.0

# Below this many points an exhaustive scan is cheaper than building a tree.
BRUTE_FORCE_THRESHOLD = 256

AREA_METHODS = ("convex_hull", "bounding_box")


class GeometryError(ValueError):
    """Input is outside the domain of a geometric operation."""


class DegenerateGeometryError(GeometryError):
    """Point set spans no area (all identical or collinear)."""


class ProjectionWarning(UserWarning):
    """Point lies outside the validity range of the local projection."""


@dataclass(frozen=True)
class ProjectedPoint:
    x: float
    y: float
    source_id: str | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite projected coordinate ({self.x}, {self.y})")


@dataclass(frozen=True)
class StudyArea:
    method: str
    area: float
    n_points: int
    density: float


def check_coordinate(latitude: float, longitude: float) -> None:
    if not (-90.0 <= latitude <= 90.0) or not (-180.0 <= longitude <= 180.0):
        raise GeometryError(f"coordinate out of WGS84 bounds: ({latitude}, {longitude})")


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in metres between two (lat, lon) pairs."""
    lat1, lon1 = a
    lat2, lon2 = b
    check_coordinate(lat1, lon1)
    check_coordinate(lat2, lon2)
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def project(latitude: float, longitude: float, reference: tuple[float, float],
            source_id: str | None = None) -> ProjectedPoint:
    """Project a WGS84 coordinate onto the local plane around ``reference``.

    Returns metres east (x) and north (y) of the reference. Emits a
    :class:`ProjectionWarning` when the latitude offset exceeds two degrees.
    """
    ref_lat, ref_lon = reference
    check_coordinate(latitude, longitude)
    check_coordinate(ref_lat, ref_lon)
    if abs(latitude - ref_lat) >= MAX_LATITUDE_OFFSET_DEG:
        warnings.warn(
            f"latitude {latitude} is {abs(latitude - ref_lat):.3f} deg from the projection "
            "reference; local projection accuracy is not guaranteed",
            ProjectionWarning,
            stacklevel=2,
        )
    x = EARTH_RADIUS_M * math.radians(longitude - ref_lon) * math.cos(math.radians(ref_lat))
    y = EARTH_RADIUS_M * math.radians(latitude - ref_lat)
    return ProjectedPoint(x, y, source_id)


def unproject(point: ProjectedPoint, reference: tuple[float, float]) -> tuple[float, float]:
    """Inverse of :func:`project`; returns (latitude, longitude)."""
    ref_lat, ref_lon = reference
    lat = ref_lat + math.degrees(point.y / EARTH_RADIUS_M)
    lon = ref_lon + math.degrees(point.x / (EARTH_RADIUS_M * math.cos(math.radians(ref_lat))))
    return lat, lon


def project_array(coords, reference: tuple[float, float]) -> np.ndarray:
    """Vectorised :func:`project` for an (n, 2) array of (lat, lon); returns (n, 2) x/y."""
    ll = np.asarray(coords, dtype=float).reshape(-1, 2)
    ref_lat, ref_lon = reference
    check_coordinate(ref_lat, ref_lon)
    lat, lon = ll[:, 0], ll[:, 1]
    if ((lat < -90) | (lat > 90) | (lon < -180) | (lon > 180)).any():
        raise GeometryError("coordinate out of WGS84 bounds")
    if (np.abs(lat - ref_lat) >= MAX_LATITUDE_OFFSET_DEG).any():
        warnings.warn("points lie outside the local projection validity range",
                      ProjectionWarning, stacklevel=2)
    x = EARTH_RADIUS_M * np.radians(lon - ref_lon) * math.cos(math.radians(ref_lat))
    y = EARTH_RADIUS_M * np.radians(lat - ref_lat)
    return np.column_stack([x, y])


def project_many(coords: Iterable[tuple[float, float]], reference: tuple[float, float],
                 ids: Sequence[str] | None = None) -> list[ProjectedPoint]:
    coords = list(coords)
    if ids is None:
        ids = [None] * len(coords)
    return [project(lat, lon, reference, sid) for (lat, lon), sid in zip(coords, ids)]


def reference_point(coords: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """Mean latitude/longitude, used as the projection origin for a point set."""
    arr = np.asarray(list(coords), dtype=float)
    if arr.size == 0:
        raise GeometryError("cannot choose a projection reference for an empty point set")
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())


def as_xy(points: Sequence[ProjectedPoint] | np.ndarray) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        points = list(points)
        if points and isinstance(points[0], ProjectedPoint):
            arr = np.array([(p.x, p.y) for p in points], dtype=float)
        else:
            arr = np.asarray(points, dtype=float)
        arr = arr.reshape(-1, 2) if arr.size == 0 else arr
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError("points must be an (n, 2) array")
    return arr


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Hull vertices in counter-clockwise order (Andrew's monotone chain).

    Collinear boundary points are dropped.
    """
    xy = as_xy(points)
    pts = sorted(set(map(tuple, xy.tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def shoelace_area(vertices) -> float:
    """Unsigned area of a simple polygon given its vertices in order."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def study_area(points, method: str = "convex_hull") -> StudyArea:
    """Area of interest and point density (points per square metre)."""
    if method not in AREA_METHODS:
        raise ValueError(f"unknown area method {method!r}; expected one of {AREA_METHODS}")
    xy = as_xy(points)
    n = len(xy)
    if method == "convex_hull":
        if n < 3:
            raise DegenerateGeometryError("convex hull area needs at least 3 points")
        area = shoelace_area(convex_hull(xy))
    else:
        if n < 2:
            raise DegenerateGeometryError("bounding box area needs at least 2 points")
        span = xy.max(axis=0) - xy.min(axis=0)
        area = float(span[0] * span[1])
    if not area > 0:
        raise DegenerateGeometryError(f"{method} of {n} points has zero area")
    return StudyArea(method=method, area=area, n_points=n, density=n / area)


def squared_distances(xy: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared distance from each row of ``xy`` to the single point ``q``."""
    diff = xy - q
    return diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]


def _pair_distance(xy: np.ndarray, i, j) -> np.ndarray:
    d = xy[i] - xy[j]
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def nearest_neighbor_distances_brute(points) -> np.ndarray:
    """O(N^2) reference for :func:`nearest_neighbor_distances`."""
    xy = as_xy(points)
    n = len(xy)
    if n < 2:
        raise GeometryError("nearest-neighbour distances need at least 2 points")
    out = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        others = idx[idx != i]
        out[i] = _pair_distance(xy, i, others).min()
    return out


def nearest_neighbor_indices(points) -> np.ndarray:
    """Index of each point's nearest other point."""
    xy = as_xy(points)
    n = len(xy)
    if n < 2:
        raise GeometryError("nearest-neighbour distances need at least 2 points")
    if n < BRUTE_FORCE_THRESHOLD:
        diff = xy[:, None, :] - xy[None, :, :]
        d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
        np.fill_diagonal(d2, np.inf)
        return d2.argmin(axis=1)
    _, nbr = cKDTree(xy).query(xy, k=2)
    own = nbr[:, 0] == np.arange(n)
    # Duplicates may put another point in slot 0; either is at distance 0.
    return np.where(own, nbr[:, 1], nbr[:, 0])


def nearest_neighbor_distances(points) -> np.ndarray:
    """Distance in metres from each point to its nearest other point."""
    xy = as_xy(points)
    nbr = nearest_neighbor_indices(xy)
    return _pair_distance(xy, np.arange(len(xy)), nbr)


class StopIndex:
    """Nearest-stop lookup over projected stop coordinates.

    Ties at equal distance resolve to the lexicographically smallest stop id.
    """

    def __init__(self, stop_ids: Sequence[str], points):
        self.stop_ids = [str(s) for s in stop_ids]
        self.xy = as_xy(points)
        if len(self.stop_ids) == 0:
            raise GeometryError("stop set is empty")
        if len(self.stop_ids) != len(self.xy):
            raise ValueError("stop_ids and points differ in length")
        self._tree = cKDTree(self.xy)

    def __len__(self):
        return len(self.stop_ids)

    def _resolve(self, q: np.ndarray, candidates) -> int:
        cand = np.asarray(candidates, dtype=int)
        d = squared_distances(self.xy[cand], q)
        best = d.min()
        tied = cand[d == best]
        return min(tied, key=lambda i: self.stop_ids[i])

    def query_index(self, xy) -> np.ndarray:
        """Nearest stop row index for each query point."""
        q = as_xy(xy)
        if len(self.stop_ids) == 1:
            return np.zeros(len(q), dtype=int)
        dist, nearest = self._tree.query(q, k=2)
        out = np.asarray(nearest[:, 0], dtype=int).copy()
        slack = dist[:, 0] * (1 + 1e-9) + 1e-9
        # Only near-ties need the exact re-check with the id tie rule.
        for row in np.flatnonzero(dist[:, 1] <= slack):
            cand = self._tree.query_ball_point(q[row], slack[row])
            out[row] = self._resolve(q[row], cand)
        return out

    def query_distance(self, xy) -> np.ndarray:
        q = as_xy(xy)
        idx = self.query_index(q)
        d = self.xy[idx] - q
        return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])

    def nearest(self, point: ProjectedPoint) -> str:
        return self.stop_ids[int(self.query_index([(point.x, point.y)])[0])]


def nearest_stop(point: ProjectedPoint, stops: StopIndex) -> str:
    if len(stops) == 0:
        raise GeometryError("stop set is empty")
    return stops.nearest(point)
