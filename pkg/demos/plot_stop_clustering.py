"""
Clustering stops by place and activity
======================================

Each stop is described by latitude, longitude and how many vehicles were
seen there. After z-scoring, k-means groups stops that are both close and
similarly busy.
"""

from transitpat import cleanse, cluster, synthetic, usage

city = synthetic.make_city()
clean, _ = cleanse.cleanse(city.observations, city.depots)
stop_usage = usage.assign_vehicles_to_stops(clean, city.stops, city.reference)

# %%
# Choosing k: inertia always falls as k grows, so look at the silhouette
# and the size of the smallest cluster as well.
feats = cluster.zscore(cluster.build_feature_matrix(city.stops, stop_usage),
                       [s.stop_id for s in city.stops])
for row in cluster.k_selection_report(feats, range(1, 7)):
    sil = "   -  " if row.silhouette is None else f"{row.silhouette:6.3f}"
    print(f"k={row.k}  inertia={row.inertia:9.2f}  smallest={row.min_cluster_size:3d}  "
          f"silhouette={sil}")

# %%
# Silhouette alone would pick k=4 here, but that fourth cluster is the hub on
# its own. The smallest-cluster column gives it away, so k=3 it is.
model, feats, table = cluster.cluster_stops(city.stops, stop_usage, k=3)
print("cluster sizes:", model.sizes())
for entry in cluster.cluster_summary(model, table):
    act = entry["activity"]
    print(f"cluster {entry['cluster']}: {entry['count']} stops, median activity "
          f"{act['median']:.0f} (IQR {act['q1']:.0f} to {act['q3']:.0f}), "
          f"{len(entry['outliers'])} outlier(s)")
