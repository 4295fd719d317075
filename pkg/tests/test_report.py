import json
import math
from pathlib import Path

import pytest

from transitpat import cli, ingest, report, synthetic
from transitpat.cluster import ClusteredStop
from transitpat.formats import read_json, read_usage, write_usage
from transitpat.ingest import Stop
from transitpat.usage import StopUsage


def check_point_feature_collection(doc):
    """Minimal strict structural check of a GeoJSON FeatureCollection of Points."""
    assert set(doc) == {"type", "features"} and doc["type"] == "FeatureCollection"
    for f in doc["features"]:
        assert set(f) == {"type", "geometry", "properties"} and f["type"] == "Feature"
        g = f["geometry"]
        assert set(g) == {"type", "coordinates"} and g["type"] == "Point"
        lon, lat = g["coordinates"]
        assert -180 <= lon <= 180 and -90 <= lat <= 90
        assert all(isinstance(v, float) and math.isfinite(v) for v in (lon, lat))
        assert isinstance(f["properties"], dict)


def test_emit_geojson_single_stop():
    stop = Stop("A1", "Princes St", 55.9521, -3.1965)
    doc = report.emit_geojson([stop], [StopUsage("A1", 12)], [ClusteredStop("A1", 55.9521,
                                                                             -3.1965, 12, 2)])
    check_point_feature_collection(doc)
    (feature,) = doc["features"]
    assert feature["geometry"]["coordinates"] == [-3.1965, 55.9521]
    assert feature["properties"] == {"stop_id": "A1", "name": "Princes St",
                                     "vehicle_count": 12, "cluster": 2}
    json.dumps(doc, allow_nan=False)


def test_emit_geojson_mismatch():
    stops = [Stop("A", "", 55.9, -3.2), Stop("B", "", 55.91, -3.2)]
    with pytest.raises(report.ConsistencyError):
        report.emit_geojson(stops, [StopUsage("A", 1)], [ClusteredStop("A", 55.9, -3.2, 1, 0),
                                                          ClusteredStop("B", 55.9, -3.2, 1, 0)])


@pytest.fixture(scope="module")
def city_files(tmp_path_factory, city):
    return synthetic.write_city(city, tmp_path_factory.mktemp("city"))


def city_config(files, out_dir, **kw):
    return report.PipelineConfig(out_dir=str(out_dir), k=3, sweep=[100.0, 300.0, 1000.0],
                                 **files, **kw)


def snapshot(out_dir):
    files = {p.name: p.read_bytes() for p in sorted(Path(out_dir).iterdir())}
    manifest = json.loads(files.pop("manifest.json"))
    manifest.pop("timings_s")
    manifest["config"].pop("out_dir")
    return files, manifest


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory, city_files):
    outs = [tmp_path_factory.mktemp(f"run{i}") for i in range(2)]
    manifests = [report.run_pipeline(city_config(city_files, o)) for o in outs]
    return outs, manifests


def test_pipeline_completes(pipeline_runs, city):
    (out, _), (manifest, _) = pipeline_runs
    assert list(manifest["stages"]) == list(report.STAGES)
    assert manifest["warnings"] == []
    assert not (out / ".partial").exists()
    rep = read_json(out / "cleanse_report.json")
    assert rep["removed_null_heading"] == city.injected["null_heading"]
    assert rep["removed_depot"] == city.injected["depot"]
    assert rep["removed_inactive_route"] == city.injected["inactive_route"]
    assert rep["removed_unserviced"] == city.injected["unserviced"]
    check_point_feature_collection(read_json(out / "stops.geojson"))


def test_pipeline_outputs_reproducible(pipeline_runs):
    outs, _ = pipeline_runs
    files_a, man_a = snapshot(outs[0])
    files_b, man_b = snapshot(outs[1])
    assert files_a.keys() == files_b.keys()
    for name in files_a:
        assert files_a[name] == files_b[name], name
    assert man_a == man_b


def test_manifest_lists_every_file(pipeline_runs):
    (out, _), (manifest, _) = pipeline_runs
    assert sorted(p.name for p in out.iterdir()) == manifest["outputs"]
    assert set(manifest["timings_s"]) == set(report.STAGES)


def test_geojson_counts_match_usage(pipeline_runs, city):
    (out, _), _ = pipeline_runs
    doc = read_json(out / "stops.geojson")
    use = {u.stop_id: u.vehicle_count for u in read_usage(out / "usage.csv")}
    assert len(doc["features"]) == len(city.stops)
    assert {f["properties"]["stop_id"]: f["properties"]["vehicle_count"]
            for f in doc["features"]} == use


def test_empty_store_aborts_at_cleanse(tmp_path, city_files):
    empty = tmp_path / "empty.ndjson"
    empty.write_text("")
    files = dict(city_files, snapshots=str(empty))
    out = tmp_path / "out"
    with pytest.raises(report.PipelineError) as info:
        report.run_pipeline(city_config(files, out))
    assert info.value.stage == "cleanse"
    assert "no observations" in str(info.value)
    marker = read_json(out / ".partial")
    assert marker["stage"] == "cleanse" and marker["completed"] == []
    assert not (out / "manifest.json").exists()


def test_stale_partial_marker_is_cleared(tmp_path, city_files):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".partial").write_text("{}")
    report.run_pipeline(city_config(city_files, out, k_range=[]))
    assert not (out / ".partial").exists()


def test_config_validation(tmp_path, city_files):
    with pytest.raises(ValueError):
        report.PipelineConfig.from_dict({**city_files, "out_dir": "x", "colour": "red"})
    with pytest.raises(ValueError):
        city_config(city_files, tmp_path, area_method="circle").validate()
    with pytest.raises(FileNotFoundError):
        city_config(dict(city_files, stops="/nonexistent.json"), tmp_path).validate()


# -- command line ----------------------------------------------------------------------

def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def cli_inputs(tmp_path_factory, city_files):
    d = tmp_path_factory.mktemp("cli")
    assert run_cli("clean", "--in", city_files["snapshots"], "--out", d / "clean.ndjson",
                   "--depots", city_files["depots"], "--report", d / "report.json") == 0
    assert run_cli("usage", "--observations", d / "clean.ndjson", "--stops",
                   city_files["stops"], "--out", d / "usage.csv") == 0
    return d


def test_cli_clean_and_usage(cli_inputs, city):
    rep = read_json(cli_inputs / "report.json")
    assert rep["input_count"] == len(city.observations)
    total = sum(u.vehicle_count for u in read_usage(cli_inputs / "usage.csv"))
    assert total == rep["output_count"]


def test_cli_services(cli_inputs, tmp_path):
    out = tmp_path / "services.csv"
    assert run_cli("services", "--observations", cli_inputs / "clean.ndjson", "--top", 2,
                   "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "service_name,count" and len(lines) == 3


def test_cli_nna(city_files, tmp_path, capsys):
    out = tmp_path / "nna.json"
    assert run_cli("nna", "--stops", city_files["stops"], "--area-method", "bbox",
                   "--out", out) == 0
    doc = read_json(out)
    assert doc["area_method"] == "bounding_box" and doc["R"] < 0.8
    assert "clustered" in capsys.readouterr().out


def test_cli_kde_with_sweep(city_files, cli_inputs, tmp_path):
    out = tmp_path / "density.csv"
    assert run_cli("kde", "--stops", city_files["stops"], "--usage", cli_inputs / "usage.csv",
                   "--bandwidth", 300, "--grid", 32, "--sweep", "100,1000", "--out", out) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "cell_x_center,cell_y_center,density,intensity"
    assert len(rows) == 1 + 32 * 32
    assert read_json(out.with_suffix(".json"))["nx"] == 32
    assert (tmp_path / "density_kde_h100m.csv").exists()
    assert (tmp_path / "density_kde_h1000m.json").exists()


def test_cli_cluster_config_precedence(city_files, cli_inputs, tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"stops": city_files["stops"], "usage": str(cli_inputs /
                                                                           "usage.csv"),
                                "k": 5, "restarts": 4, "out": str(tmp_path / "from_conf")}))
    assert run_cli("cluster", "--config", conf, "--k", 3) == 0
    model = read_json(tmp_path / "from_conf" / "cluster_model.json")
    assert model["k"] == 3 and model["restarts"] == 4


def test_cli_cluster_k_range(city_files, cli_inputs, tmp_path):
    out = tmp_path / "clusters"
    assert run_cli("cluster", "--stops", city_files["stops"], "--usage",
                   cli_inputs / "usage.csv", "--k", 3, "--restarts", 3, "--k-range", "1,2,3",
                   "--out", out) == 0
    rows = read_json(out / "k_selection.json")
    assert [r["k"] for r in rows] == [1, 2, 3]


def test_cli_pipeline(city_files, tmp_path, capsys):
    conf = tmp_path / "pipeline.json"
    conf.write_text(json.dumps({**city_files, "out_dir": str(tmp_path / "out"), "k": 3,
                                "k_range": [2, 3], "grid": 64}))
    assert run_cli("pipeline", "--config", conf) == 0
    assert json.loads(capsys.readouterr().out)["warnings"] == []


def test_cli_pipeline_failure_is_stage_tagged(city_files, tmp_path, capsys):
    empty = tmp_path / "empty.ndjson"
    empty.write_text("")
    conf = tmp_path / "pipeline.json"
    conf.write_text(json.dumps({**city_files, "snapshots": str(empty),
                                "out_dir": str(tmp_path / "out")}))
    assert run_cli("pipeline", "--config", conf) == 2
    assert "[cleanse]" in capsys.readouterr().err


def test_cli_missing_required(capsys):
    assert run_cli("nna", "--out", "x.json") == 1
    assert "--stops is required" in capsys.readouterr().err


def test_cli_bad_input_file(tmp_path, capsys):
    assert run_cli("nna", "--stops", tmp_path / "missing.json", "--out", tmp_path / "o") == 1
    assert capsys.readouterr().err.startswith("error: [nna]")


def test_cli_usage_rejects_unknown_stop_in_usage(city_files, tmp_path):
    use = tmp_path / "usage.csv"
    write_usage(use, [StopUsage("nope", 1)])
    assert run_cli("cluster", "--stops", city_files["stops"], "--usage", use,
                   "--out", tmp_path / "c") == 1


def test_cli_poll(feed_server, tmp_path):
    feed_server.routes["/vehicle_locations"] = (200, {"vehicles": [{
        "vehicle_id": "101", "latitude": 55.95, "longitude": -3.19, "last_gps_fix": 1700000000,
        "heading": 90, "service_name": "26", "destination": "Town", "next_stop": "S1"}]})
    feed_server.routes["/stops"] = (200, {"stops": [
        {"stop_id": "S1", "name": "One", "latitude": 55.95, "longitude": -3.19}]})
    out = tmp_path / "snap.ndjson"
    assert run_cli("poll", "--endpoint", feed_server.base_url, "--interval", 1, "--duration", 1,
                   "--out", out, "--api-key", "k") == 0
    recs = list(ingest.read_snapshot_lines(out))
    assert len(recs) == 2 and len({b for b, _, _ in recs}) == 2
    assert ingest.SnapshotStore(out).load_stops()[0].stop_id == "S1"
    assert all(h[1].get("Authorization") == "Token k" for h in feed_server.hits)
