"""Live feed ingestion: vehicle locations and stops from an open-data HTTP API.

The feed exposes two JSON endpoints under a configurable base URL::

    GET /vehicle_locations -> {"vehicles": [{vehicle_id, heading, latitude, longitude,
                                             last_gps_fix, destination, service_name,
                                             next_stop}, ...]}
    GET /stops             -> {"stops": [{stop_id, name, latitude, longitude}, ...]}

Snapshots are persisted as newline-delimited JSON, one observation per line,
each line carrying its poll batch id and retrieval time.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

import requests

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_S = 300
DEFAULT_TIMEOUT_S = 30.0

VEHICLES_PATH = "/vehicle_locations"
STOPS_PATH = "/stops"

SNAPSHOT_FIELDS = (
    "batch_id", "retrieved_at", "vehicle_id", "timestamp", "latitude", "longitude",
    "heading", "service_name", "destination", "next_stop",
)


class IngestError(Exception):
    retryable = False


class FeedUnavailableError(IngestError):
    """Network or HTTP failure; worth retrying on the next slot."""

    retryable = True


class FeedParseError(IngestError):
    """Payload is not valid JSON or does not match the feed schema."""

    def __init__(self, message: str, byte_offset: int = 0):
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


class InvalidRecordWarning(UserWarning):
    pass


class DuplicateStopWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VehicleObservation:
    vehicle_id: str
    latitude: float
    longitude: float
    timestamp: int
    service_name: str | None = None
    heading: float | None = None
    destination: str | None = None
    next_stop: str | None = None

    def __post_init__(self):
        if not self.vehicle_id:
            raise ValueError("vehicle_id must be non-empty")
        if not (-90.0 <= self.latitude <= 90.0 and -180.0 <= self.longitude <= 180.0):
            raise ValueError(f"coordinate out of bounds: ({self.latitude}, {self.longitude})")
        if not self.timestamp > 0:
            raise ValueError(f"timestamp must be positive, got {self.timestamp}")
        if self.heading is not None and not (0.0 <= self.heading < 360.0):
            raise ValueError(f"heading must lie in [0, 360), got {self.heading}")


@dataclass(frozen=True)
class Stop:
    stop_id: str
    name: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0 and -180.0 <= self.longitude <= 180.0):
            raise ValueError(f"coordinate out of bounds: ({self.latitude}, {self.longitude})")


def _opt_str(value) -> str | None:
    if value is None:
        return None
    s = str(value)
    return s if s != "" else None


def _heading(value) -> float | None:
    if value is None or value == "":
        return None
    h = float(value)
    if not math.isfinite(h):
        return None
    return h % 360.0


def _timestamp(value) -> int:
    ts = float(value)
    if not math.isfinite(ts) or ts != int(ts):
        raise ValueError(f"timestamp must be integral epoch seconds, got {value!r}")
    return int(ts)


def observation_from_feed(entry: dict[str, Any]) -> VehicleObservation:
    """Map one ``vehicles`` entry of the feed; null and missing fields are both absent."""
    return VehicleObservation(
        vehicle_id=str(entry["vehicle_id"]) if entry.get("vehicle_id") is not None else "",
        latitude=float(entry["latitude"]),
        longitude=float(entry["longitude"]),
        timestamp=_timestamp(entry["last_gps_fix"]),
        service_name=_opt_str(entry.get("service_name")),
        heading=_heading(entry.get("heading")),
        destination=_opt_str(entry.get("destination")),
        next_stop=_opt_str(entry.get("next_stop")),
    )


def _decode(body: bytes | str) -> Any:
    text = body.decode("utf-8") if isinstance(body, bytes) else body
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeedParseError(exc.msg, len(text[:exc.pos].encode("utf-8"))) from None


def _records(payload: Any, key: str) -> list:
    if not isinstance(payload, dict) or not isinstance(payload.get(key), list):
        raise FeedParseError(f"expected an object with a {key!r} array", 0)
    return payload[key]


def parse_vehicle_payload(body: bytes | str) -> list[VehicleObservation]:
    """Parse a vehicle-locations payload, preserving feed order.

    Entries missing a required field (vehicle_id, coordinates, last_gps_fix)
    are skipped with an :class:`InvalidRecordWarning`.
    """
    out = []
    skipped = 0
    for entry in _records(_decode(body), "vehicles"):
        try:
            out.append(observation_from_feed(entry))
        except (KeyError, TypeError, ValueError):
            skipped += 1
    if skipped:
        warnings.warn(f"skipped {skipped} schema-invalid vehicle entries", InvalidRecordWarning,
                      stacklevel=2)
    return out


def parse_stop_payload(body: bytes | str) -> list[Stop]:
    """Parse a stops payload; repeated stop ids keep their first occurrence."""
    seen: dict[str, Stop] = {}
    for entry in _records(_decode(body), "stops"):
        try:
            stop = Stop(
                stop_id=str(entry["stop_id"]),
                name=str(entry.get("name") or ""),
                latitude=float(entry["latitude"]),
                longitude=float(entry["longitude"]),
            )
        except (KeyError, TypeError, ValueError):
            warnings.warn(f"skipped schema-invalid stop entry {entry!r}", InvalidRecordWarning,
                          stacklevel=2)
            continue
        if stop.stop_id in seen:
            warnings.warn(f"duplicate stop_id {stop.stop_id!r}; keeping first occurrence",
                          DuplicateStopWarning, stacklevel=2)
            continue
        seen[stop.stop_id] = stop
    return list(seen.values())


def _get(url: str, timeout: float, headers: dict[str, str] | None) -> bytes:
    try:
        resp = requests.get(url, timeout=timeout, headers=headers)
        resp.raise_for_status()
    except requests.RequestException as exc:
        raise FeedUnavailableError(f"GET {url} failed: {exc}") from exc
    return resp.content


def fetch_vehicle_snapshot(endpoint: str, timeout: float = DEFAULT_TIMEOUT_S,
                           headers: dict[str, str] | None = None) -> list[VehicleObservation]:
    return parse_vehicle_payload(_get(endpoint, timeout, headers))


def fetch_stops(endpoint: str, timeout: float = DEFAULT_TIMEOUT_S,
                headers: dict[str, str] | None = None) -> list[Stop]:
    return parse_stop_payload(_get(endpoint, timeout, headers))


def feed_urls(base_url: str) -> tuple[str, str]:
    base = base_url.rstrip("/")
    return base + VEHICLES_PATH, base + STOPS_PATH


# -- snapshot persistence ---------------------------------------------------

def observation_to_record(batch_id: int, retrieved_at: float, obs: VehicleObservation) -> dict:
    rec = {"batch_id": batch_id, "retrieved_at": retrieved_at}
    rec.update(asdict(obs))
    return {k: rec[k] for k in SNAPSHOT_FIELDS}


def record_to_observation(rec: dict) -> tuple[int, float, VehicleObservation]:
    obs = VehicleObservation(
        vehicle_id=rec["vehicle_id"],
        latitude=rec["latitude"],
        longitude=rec["longitude"],
        timestamp=rec["timestamp"],
        service_name=rec["service_name"],
        heading=rec["heading"],
        destination=rec["destination"],
        next_stop=rec["next_stop"],
    )
    return rec["batch_id"], rec["retrieved_at"], obs


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False, separators=(",", ":"))


def dedupe_batch(observations: list[VehicleObservation]) -> list[VehicleObservation]:
    """Drop repeated (vehicle_id, timestamp) pairs, keeping the first."""
    seen = set()
    out = []
    for obs in observations:
        key = (obs.vehicle_id, obs.timestamp)
        if key not in seen:
            seen.add(key)
            out.append(obs)
    return out


def write_observations(path: str | Path, observations, batch_id: int = 0,
                       retrieved_at: float = 0.0) -> None:
    """Write observations as a single-batch snapshot file."""
    with open(path, "w", encoding="utf-8") as fh:
        for obs in observations:
            fh.write(dumps_record(observation_to_record(batch_id, retrieved_at, obs)) + "\n")


def read_snapshot_lines(path: str | Path) -> Iterator[tuple[int, float, VehicleObservation]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield record_to_observation(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FeedParseError(f"{path}:{lineno}: bad snapshot record: {exc}") from exc


def read_observations(path: str | Path) -> list[VehicleObservation]:
    return [obs for _, _, obs in read_snapshot_lines(path)]


@dataclass
class SnapshotStore:
    """Append-only newline-delimited snapshot file plus a stop list sidecar."""

    path: Path
    _batches: set = field(default_factory=set, init=False, repr=False)

    def __post_init__(self):
        self.path = Path(self.path)
        if self.path.exists():
            self._batches = {b for b, _, _ in read_snapshot_lines(self.path)}

    @property
    def stops_path(self) -> Path:
        return self.path.with_name(self.path.name + ".stops.json")

    @property
    def batch_ids(self) -> set:
        return set(self._batches)

    def append(self, batch_id: int, retrieved_at: float,
               observations: list[VehicleObservation]) -> int:
        """Append a batch; returns records written (0 if the batch is already stored)."""
        if batch_id in self._batches:
            return 0
        lines = [dumps_record(observation_to_record(batch_id, retrieved_at, o))
                 for o in dedupe_batch(observations)]
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in lines))
            fh.flush()
        self._batches.add(batch_id)
        return len(lines)

    def records(self) -> list[tuple[int, float, VehicleObservation]]:
        if not self.path.exists():
            return []
        return list(read_snapshot_lines(self.path))

    def observations(self) -> list[VehicleObservation]:
        return [obs for _, _, obs in self.records()]

    def save_stops(self, stops: list[Stop], retrieved_at: float) -> None:
        tmp = self.stops_path.with_suffix(".tmp")
        doc = {"retrieved_at": retrieved_at, "stops": [asdict(s) for s in stops]}
        tmp.write_text(json.dumps(doc, ensure_ascii=False, indent=1), encoding="utf-8")
        tmp.replace(self.stops_path)

    def load_stops(self) -> list[Stop]:
        if not self.stops_path.exists():
            return []
        return parse_stop_payload(self.stops_path.read_bytes())


# -- polling ----------------------------------------------------------------

@dataclass
class PollSummary:
    attempts: int = 0
    batches: int = 0
    records: int = 0
    failures: int = 0
    errors: list[str] = field(default_factory=list)


def poll(endpoint: str, interval: float = DEFAULT_INTERVAL_S, duration: float = DEFAULT_INTERVAL_S,
         store: SnapshotStore | None = None, *, timeout: float = DEFAULT_TIMEOUT_S,
         headers: dict[str, str] | None = None, retries: int = 0,
         fetch: Callable[..., list[VehicleObservation]] | None = None,
         fetch_stop_list: Callable[..., list[Stop]] | None = None,
         clock: Callable[[], float] = time.time,
         sleep: Callable[[float], None] = time.sleep) -> PollSummary:
    """Sample the vehicle feed at a fixed rate and append each batch to ``store``.

    Makes ``floor(duration / interval) + 1`` attempts at slot times
    ``t0 + i * interval``. A slow fetch does not shift later slots. Fetch
    failures are logged and counted; store write errors propagate.
    """
    if interval < 1:
        raise ValueError("interval must be at least 1 second")
    if duration < interval:
        raise ValueError("duration must be at least one interval")
    if store is None:
        raise ValueError("a SnapshotStore is required")
    vehicles_url, stops_url = feed_urls(endpoint)
    fetch = fetch or fetch_vehicle_snapshot
    fetch_stop_list = fetch_stop_list or fetch_stops

    summary = PollSummary()
    n_slots = int(duration // interval) + 1
    t0 = clock()

    try:
        stops = fetch_stop_list(stops_url, timeout=timeout, headers=headers)
        store.save_stops(stops, t0)
    except IngestError as exc:
        logger.warning("stop list fetch failed: %s", exc)
        summary.errors.append(f"stops: {exc}")

    for slot in range(n_slots):
        slot_time = t0 + slot * interval
        wait = slot_time - clock()
        if wait > 0:
            sleep(wait)
        summary.attempts += 1
        batch_id = int(round(slot_time))
        for attempt in range(retries + 1):
            try:
                observations = fetch(vehicles_url, timeout=timeout, headers=headers)
                break
            except IngestError as exc:
                err = exc
                if not exc.retryable or attempt == retries:
                    observations = None
                    break
        if observations is None:
            summary.failures += 1
            summary.errors.append(f"batch {batch_id}: {err}")
            logger.warning("batch %s failed: %s", batch_id, err)
            continue
        summary.records += store.append(batch_id, clock(), observations)
        summary.batches += 1
        logger.info("batch %s: %d vehicles", batch_id, len(observations))
    return summary
