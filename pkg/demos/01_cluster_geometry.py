# %% [markdown]
# # How well do embeddings separate the classes?
#
# Before voting with embeddings it helps to look at the geometry: are documents of
# one class close together, and are the class centroids far apart? This script
# builds a few labeled sets by hand and reads off the cluster indices.

# %%
import numpy as np

from docclass import LabeledEmbeddingSet, cluster_report

# %% [markdown]
# Four points on the unit circle, two classes facing each other.  Each class
# centroid sits halfway between its two points, so members are a little spread
# out, but the centroids point in opposite directions.

# %%
square = LabeledEmbeddingSet(["a", "b", "c", "d"], ["A", "A", "B", "B"],
                             [(1, 0), (0, 1), (-1, 0), (0, -1)])
rep = cluster_report(square)
for key, value in rep.to_dict().items():
    print(f"{key:>18}: {value:.6f}")

# %% [markdown]
# Vector length never matters. Every embedding is normalized when it arrives,
# so stretching points leaves the numbers alone.

# %%
stretched = LabeledEmbeddingSet(["a", "b", "c", "d"], ["A", "A", "B", "B"],
                                [(7.3, 0), (0, 0.2), (-40, 0), (0, -1)])
print(cluster_report(stretched).to_dict() == rep.to_dict())

# %% [markdown]
# A noisier case: three classes around random directions in 16 dimensions.
# More noise makes the classes less compact, so intra distance goes up and the
# silhouette goes down.

# %%
rng = np.random.default_rng(7)
directions = rng.standard_normal((3, 16))
for noise in (0.1, 0.5, 1.5):
    labels = [f"class{i}" for i in range(3) for _ in range(10)]
    vectors = np.repeat(directions, 10, axis=0) + noise * rng.standard_normal((30, 16))
    r = cluster_report(LabeledEmbeddingSet([f"d{i}" for i in range(30)], labels, vectors))
    print(f"noise {noise:.1f}: intra {r.intra:.3f} inter {r.inter:.3f} "
          f"silhouette {r.silhouette:.3f} DB {r.davies_bouldin:.3f} CH {r.calinski_harabasz:.1f}")

# %% [markdown]
# Degenerate inputs produce sentinels and flags instead of errors.  When the
# members of every class coincide, there is no within-class spread, so CH is infinite.

# %%
tight = LabeledEmbeddingSet(list("abcd"), list("AABB"), [(1, 0), (1, 0), (0, 1), (0, 1)])
r = cluster_report(tight)
print(r.calinski_harabasz, r.flags)
print(r.to_dict()["calinski_harabasz"])  # how it is written to JSON
