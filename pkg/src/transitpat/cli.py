"""Command-line interface.

Every verb accepts ``--config PATH``, a flat JSON object whose keys are the
verb's option names (dashes or underscores). Options given on the command
line take precedence over the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import cleanse as cleanse_mod
from . import cluster as cluster_mod
from . import ingest, kde, nna, usage
from .formats import read_json, read_stops, read_usage, write_csv, write_json, write_usage
from .report import PipelineConfig, PipelineError, run_kde, run_pipeline, write_cluster_outputs
from .report import write_density, _sweep_name

log = logging.getLogger("transitpat")


class CliError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


# name -> (type, default, help); default REQUIRED means the option must be given somewhere
REQUIRED = object()

VERBS: dict[str, dict] = {
    "poll": {
        "endpoint": (str, REQUIRED, "feed base URL"),
        "interval": (float, ingest.DEFAULT_INTERVAL_S, "seconds between polls"),
        "duration": (float, REQUIRED, "total polling time in seconds"),
        "out": (str, REQUIRED, "snapshot file (newline-delimited JSON)"),
        "timeout": (float, ingest.DEFAULT_TIMEOUT_S, "HTTP timeout in seconds"),
        "api_key": (str, None, "static API key sent in the Authorization header"),
    },
    "clean": {
        "in": (str, REQUIRED, "raw snapshot file"),
        "out": (str, REQUIRED, "cleansed snapshot file"),
        "depots": (str, None, "GeoJSON depot points with a radius property (default: bundled)"),
        "report": (str, None, "JSON cleanse report path"),
        "no_depots": (bool, False, "skip depot filtering"),
    },
    "usage": {
        "observations": (str, REQUIRED, "cleansed snapshot file"),
        "stops": (str, REQUIRED, "stops JSON or CSV"),
        "out": (str, REQUIRED, "CSV stop_id,vehicle_count"),
        "max_assign_distance": (float, float("inf"), "metres; farther observations are dropped"),
    },
    "services": {
        "observations": (str, REQUIRED, "cleansed snapshot file"),
        "top": (int, 10, "rows to keep"),
        "out": (str, REQUIRED, "CSV service_name,count"),
    },
    "nna": {
        "stops": (str, REQUIRED, "stops JSON or CSV"),
        "area_method": (str, "hull", "hull or bbox"),
        "bins": (int, nna.DEFAULT_BINS, "histogram bins"),
        "alpha": (float, nna.DEFAULT_ALPHA, "significance level"),
        "out": (str, REQUIRED, "JSON result"),
    },
    "kde": {
        "stops": (str, REQUIRED, "stops JSON or CSV"),
        "usage": (str, REQUIRED, "usage CSV"),
        "bandwidth": (float, kde.DEFAULT_BANDWIDTH_M, "metres"),
        "sweep": (str, None, "comma-separated bandwidths in metres"),
        "grid": (int, kde.DEFAULT_GRID_SIZE, "cells per axis"),
        "out": (str, REQUIRED, "CSV path; a .json sidecar is written next to it"),
    },
    "cluster": {
        "stops": (str, REQUIRED, "stops JSON or CSV"),
        "usage": (str, REQUIRED, "usage CSV"),
        "k": (int, cluster_mod.DEFAULT_K, "number of clusters"),
        "seed": (int, cluster_mod.DEFAULT_SEED, "random seed"),
        "restarts": (int, cluster_mod.DEFAULT_RESTARTS, "k-means++ restarts"),
        "k_range": (str, None, "comma-separated k values for a selection report"),
        "out": (str, REQUIRED, "output directory"),
    },
    "pipeline": {},
}

AREA_ALIASES = {"hull": "convex_hull", "convex_hull": "convex_hull",
                "bbox": "bounding_box", "bounding_box": "bounding_box"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transitpat", description="Spatial analysis of live public-transport vehicle feeds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, opts in VERBS.items():
        p = sub.add_parser(verb)
        p.add_argument("--config", help="JSON file of option values")
        for name, (typ, _, help_) in opts.items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=name, action="store_const", const=True, default=None,
                               help=help_)
            else:
                p.add_argument(flag, dest=name, type=typ, default=None, help=help_)
    return parser


def resolve(verb: str, args: argparse.Namespace) -> dict:
    """Merge command-line options over config-file values over defaults."""
    conf = {}
    if args.config:
        conf = {k.replace("-", "_"): v for k, v in read_json(args.config).items()}
    out = {}
    for name, (typ, default, _) in VERBS[verb].items():
        value = getattr(args, name)
        if value is None and name in conf:
            value = conf[name]
        if value is None:
            value = default
        if value is REQUIRED:
            raise CliError(f"{verb}: --{name.replace('_', '-')} is required")
        out[name] = value
    return out


def cmd_poll(o: dict) -> None:
    headers = {"Authorization": f"Token {o['api_key']}"} if o["api_key"] else None
    store = ingest.SnapshotStore(Path(o["out"]))
    summary = ingest.poll(o["endpoint"], o["interval"], o["duration"], store,
                          timeout=o["timeout"], headers=headers)
    print(json.dumps(asdict(summary)))


def cmd_clean(o: dict) -> None:
    obs = ingest.read_observations(o["in"])
    zones = None if o["no_depots"] else cleanse_mod.load_depots(o["depots"])
    clean, report = cleanse_mod.cleanse(obs, zones)
    ingest.write_observations(o["out"], clean)
    if o["report"]:
        write_json(o["report"], report.to_dict())
    print(json.dumps(report.to_dict()))


def cmd_usage(o: dict) -> None:
    su = usage.assign_vehicles_to_stops(ingest.read_observations(o["observations"]),
                                        read_stops(o["stops"]),
                                        max_assign_distance=o["max_assign_distance"])
    write_usage(o["out"], su)


def cmd_services(o: dict) -> None:
    rows = usage.service_frequency_table(ingest.read_observations(o["observations"]), o["top"])
    write_csv(o["out"], ["service_name", "count"], rows)


def cmd_nna(o: dict) -> None:
    method = AREA_ALIASES.get(o["area_method"])
    if method is None:
        raise CliError(f"nna: unknown area method {o['area_method']!r}")
    res = nna.run_nna(read_stops(o["stops"]), method, o["bins"], o["alpha"])
    write_json(o["out"], res.to_dict())
    print(f"R={res.R:.4f} z={res.z:.3f} p={res.p_value_str} ({res.pattern})")


def cmd_kde(o: dict) -> None:
    sweep = _floats(o["sweep"]) if isinstance(o["sweep"], str) else list(o["sweep"] or [])
    main, entries, _ = run_kde(read_stops(o["stops"]), read_usage(o["usage"]), o["bandwidth"],
                               o["grid"], sweep)
    out = Path(o["out"])
    write_density(out, main)
    for e in entries:
        write_density(out.with_name(out.stem + "_" + _sweep_name(e.h)), e.density)


def cmd_cluster(o: dict) -> None:
    stops, su = read_stops(o["stops"]), read_usage(o["usage"])
    model, feats, table = cluster_mod.cluster_stops(stops, su, o["k"], o["seed"], o["restarts"])
    out = Path(o["out"])
    write_cluster_outputs(out, stops, su, model, feats, table)
    if o["k_range"]:
        ks = _floats(o["k_range"]) if isinstance(o["k_range"], str) else o["k_range"]
        rows = cluster_mod.k_selection_report(feats, [int(k) for k in ks], o["seed"],
                                              o["restarts"])
        write_json(out / "k_selection.json", [asdict(r) for r in rows])


def cmd_pipeline(args: argparse.Namespace) -> None:
    if not args.config:
        raise CliError("pipeline: --config is required")
    manifest = run_pipeline(PipelineConfig.load(args.config))
    print(json.dumps({"stages": manifest["stages"], "warnings": manifest["warnings"]}))


COMMANDS = {
    "poll": cmd_poll, "clean": cmd_clean, "usage": cmd_usage, "services": cmd_services,
    "nna": cmd_nna, "kde": cmd_kde, "cluster": cmd_cluster,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "pipeline":
            cmd_pipeline(args)
        else:
            COMMANDS[args.verb](resolve(args.verb, args))
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliError, ingest.IngestError, ValueError, OSError) as exc:
        print(f"error: [{args.verb}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
