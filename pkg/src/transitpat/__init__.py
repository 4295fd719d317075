"""Spatial analysis of live public-transport feeds.

Nearest-neighbour analysis of stop networks, usage-weighted kernel density
estimation and k-means clustering of stops on location and activity.
"""

from .cleanse import CleanseReport, DepotZone, load_depots
from .cluster import ClusterModel, StandardizedFeatures, cluster_stops, kmeans, zscore
from .geo import ProjectedPoint, StudyArea, haversine, nearest_neighbor_distances, project
from .ingest import SnapshotStore, Stop, VehicleObservation, poll
from .kde import DensityGrid, GridSpec, bandwidth_sweep, estimate_density
from .nna import NnaResult, run_nna
from .report import PipelineConfig, emit_geojson, run_pipeline
from .usage import StopUsage, assign_vehicles_to_stops, service_frequency_table

__version__ = "0.1.0"
