"""The population graph and the two augmented views used for pretraining.

Subjects are nodes.  Edges combine feature similarity with phenotype
agreement, keep the k strongest neighbours and are symmetrically normalized.
Pretraining compares two views of this graph built from different windows.
"""
import numpy as np

from gate import AugmentConfig, GraphConfig, SynthConfig, WindowSpec, build_population_graph, generate_cohort
from gate.augment import next_view_pair
from gate.signal import window_features

cohort = generate_cohort(SynthConfig(n_subjects=40, seed=1))
metas = [r.meta for r in cohort]
labels = np.array([m.label for m in metas])

graph = build_population_graph(window_features(cohort, 0, 30), metas, GraphConfig(k=10))
A = graph.adjacency
print(f"{graph.n_nodes} nodes, sigma {graph.sigma:.3f}, symmetric: {np.allclose(A, A.T)}")
print(f"largest eigenvalue of the normalized adjacency: {np.max(np.linalg.eigvalsh(A)):.6f}")

edges = (graph.raw_adjacency > 0) & ~np.eye(graph.n_nodes, dtype=bool)
same = (labels[:, None] == labels[None, :])[edges].mean()
print(f"fraction of edges joining subjects of the same class: {same:.2f}")

rng = np.random.default_rng(0)
for mode in ("SA", "MA"):
    pair = next_view_pair(cohort, AugmentConfig(mode=mode, window=WindowSpec(30, 15)), rng)
    print(f"{mode}: {pair.provenance}")
    overlap = np.mean((pair.view_a.adjacency > 0) == (pair.view_b.adjacency > 0))
    print(f"    edge pattern agreement between the two views: {overlap:.2f}")
