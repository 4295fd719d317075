"""Readers and writers for the plain-text exchange formats."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import Stop, parse_stop_payload
from .usage import StopUsage


def read_stops(path: str | Path) -> list[Stop]:
    """Stops from feed-style JSON (``{"stops": [...]}``) or CSV.

    CSV needs a header with ``stop_id,name,latitude,longitude``.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [{"stop_id": r["stop_id"], "name": r.get("name", ""),
                     "latitude": float(r["latitude"]), "longitude": float(r["longitude"])}
                    for r in csv.DictReader(fh)]
        return parse_stop_payload(json.dumps({"stops": rows}))
    return parse_stop_payload(path.read_bytes())


def write_stops(path: str | Path, stops: Sequence[Stop]) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stop_id", "name", "latitude", "longitude"])
            for s in stops:
                w.writerow([s.stop_id, s.name, repr(s.latitude), repr(s.longitude)])
        return
    write_json(path, {"stops": [asdict(s) for s in stops]})


def read_usage(path: str | Path) -> list[StopUsage]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [StopUsage(r["stop_id"], int(r["vehicle_count"])) for r in csv.DictReader(fh)]


def write_usage(path: str | Path, usage: Iterable[StopUsage]) -> None:
    write_csv(path, ["stop_id", "vehicle_count"], ((u.stop_id, u.vehicle_count) for u in usage))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_json(path: str | Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=False) + "\n",
                          encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
