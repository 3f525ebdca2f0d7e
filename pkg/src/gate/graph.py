"""Population graph: subjects are nodes, edges mix feature and phenotype similarity."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigError, DegenerateKernelError, NormalizationError, SchemaError, ShapeError
from .signal import SubjectMeta


@dataclass(frozen=True)
class GraphConfig:
    """Graph construction settings.

    ``sigma`` is either ``"mean"`` (mean off-diagonal pairwise distance) or
    a positive float used as a fixed kernel width.
    """

    k: int = 10
    sigma: str | float = "mean"
    age_threshold: float = 2.0
    phenotype_names: tuple[str, ...] = ("sex", "age", "site")

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if isinstance(self.sigma, str):
            if self.sigma != "mean":
                raise ConfigError(f"sigma must be 'mean' or a positive number, got {self.sigma!r}")
        elif not self.sigma > 0:
            raise ConfigError(f"fixed sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "phenotype_names", tuple(self.phenotype_names))


@dataclass
class PopulationGraph:
    features: np.ndarray
    adjacency: np.ndarray
    raw_adjacency: np.ndarray
    sigma: float = float("nan")
    k: int = 0
    subject_ids: list[str] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]


def kernel_width(features: np.ndarray, config: GraphConfig) -> float:
    if config.sigma != "mean":
        return float(config.sigma)
    sigma = float(pdist(features).mean())
    if sigma <= 0.0:
        raise DegenerateKernelError("all feature vectors identical; mean-distance sigma is 0")
    return sigma


def feature_similarity(features: np.ndarray, config: GraphConfig,
                       sigma: float | None = None) -> np.ndarray:
    """Gaussian kernel ``exp(-||x_i - x_j||^2 / (2 sigma^2))``."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ShapeError(f"need an N x d feature matrix with N >= 2, got {features.shape}")
    if sigma is None:
        sigma = kernel_width(features, config)
    sq = squareform(pdist(features, "sqeuclidean"))
    sim = np.exp(-sq / (2.0 * sigma * sigma))
    np.fill_diagonal(sim, 1.0)
    return sim


def phenotype_similarity(metas: Sequence[SubjectMeta], config: GraphConfig) -> np.ndarray:
    """Fraction of configured phenotypes on which two subjects agree.

    Categorical phenotypes agree when equal; ``age`` agrees when the gap is at
    most ``config.age_threshold`` years.
    """
    names = config.phenotype_names
    n = len(metas)
    if not names:
        return np.ones((n, n))
    for i, meta in enumerate(metas):
        missing = [p for p in names if p not in meta.phenotypes]
        if missing:
            raise SchemaError(f"subject {i} lacks phenotypes {missing}")
    total = np.zeros((n, n))
    for name in names:
        col = [meta.phenotypes[name] for meta in metas]
        if name == "age":
            ages = np.asarray(col, dtype=np.float64)
            total += np.abs(ages[:, None] - ages[None, :]) <= config.age_threshold
        else:
            codes = np.unique(np.asarray(col, dtype=object).astype(str), return_inverse=True)[1]
            total += codes[:, None] == codes[None, :]
    sim = total / len(names)
    np.fill_diagonal(sim, 1.0)
    return sim


def build_adjacency(sim: np.ndarray, pheno_sim: np.ndarray, config: GraphConfig) -> np.ndarray:
    """Hadamard product, per-row top-k sparsification, max-symmetrization, self-loops."""
    sim = np.asarray(sim, dtype=np.float64)
    pheno_sim = np.asarray(pheno_sim, dtype=np.float64)
    if sim.shape != pheno_sim.shape or sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ShapeError(f"similarity shapes differ or are not square: {sim.shape} vs {pheno_sim.shape}")
    n = sim.shape[0]
    if config.k >= n:
        raise ConfigError(f"k={config.k} must be smaller than the number of subjects {n}")
    weights = sim * pheno_sim
    np.fill_diagonal(weights, 0.0)

    ranking = np.where(np.eye(n, dtype=bool), -np.inf, weights)
    # stable sort on the negated weights: equal weights keep lower column first
    top = np.argsort(-ranking, axis=1, kind="stable")[:, :config.k]
    kept = np.zeros_like(weights)
    rows = np.arange(n)[:, None]
    kept[rows, top] = weights[rows, top]
    adj = np.maximum(kept, kept.T)
    adj += np.eye(n)
    return adj


def normalize_adjacency(raw: np.ndarray) -> np.ndarray:
    """``D^{-1/2} A D^{-1/2}`` with ``D`` the row sums of ``A``."""
    raw = np.asarray(raw, dtype=np.float64)
    deg = raw.sum(axis=1)
    if np.any(deg <= 0.0):
        raise NormalizationError(f"adjacency has {np.sum(deg <= 0)} rows with non-positive degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    out = raw * inv_sqrt[:, None] * inv_sqrt[None, :]
    return 0.5 * (out + out.T)


def build_population_graph(features: np.ndarray, metas: Sequence[SubjectMeta],
                           config: GraphConfig, subject_ids: Sequence[str] = ()) -> PopulationGraph:
    features = np.asarray(features, dtype=np.float64)
    if len(metas) != features.shape[0]:
        raise ShapeError(f"{features.shape[0]} feature rows but {len(metas)} subjects")
    sigma = kernel_width(features, config)
    sim = feature_similarity(features, config, sigma)
    raw = build_adjacency(sim, phenotype_similarity(metas, config), config)
    return PopulationGraph(features, normalize_adjacency(raw), raw, sigma, config.k, list(subject_ids))


def identity_graph(features: np.ndarray) -> PopulationGraph:
    """Graph with ``A = I``: every subject is isolated."""
    n = features.shape[0]
    eye = np.eye(n)
    return PopulationGraph(np.asarray(features, dtype=np.float64), eye, eye.copy())


def spectral_radius(matrix: np.ndarray, iters: int = 500, seed: int = 0) -> float:
    """Largest absolute eigenvalue of a symmetric matrix by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(matrix.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        est = norm
    # Rayleigh quotient of the converged vector is tighter than the norm ratio
    return max(est, abs(float(v @ matrix @ v)))


def write_edge_list(graph: PopulationGraph, path: str | Path) -> tuple[Path, Path]:
    """Dump the raw adjacency as ``i,j,weight`` CSV (i <= j) plus a JSON header."""
    path = Path(path)
    rows, cols = np.nonzero(np.triu(graph.raw_adjacency))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "weight"])
        for i, j in zip(rows, cols):
            writer.writerow([int(i), int(j), repr(float(graph.raw_adjacency[i, j]))])
    header = path.with_suffix(".json")
    header.write_text(json.dumps({"N": graph.n_nodes, "k": graph.k, "sigma": graph.sigma}, indent=2))
    return path, header
