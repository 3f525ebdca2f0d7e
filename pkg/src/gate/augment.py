"""Two-view sampling from the time axis: step-window, multi-scale and random drop."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .errors import AugmentationInfeasibleError, ConfigError
from .graph import GraphConfig, PopulationGraph, build_population_graph, normalize_adjacency
from .signal import BoldRecording, WindowSpec, segment_count, window_features

MODES = ("SA", "MA", "SA+MA")


@dataclass(frozen=True)
class AugmentConfig:
    """How view pairs are drawn.

    ``freeze`` reuses the first window draw for every iteration (random drop,
    when enabled, is still redrawn each time).
    """

    mode: str = "SA+MA"
    drop: bool = False
    window: WindowSpec = field(default_factory=WindowSpec)
    ma_lengths: tuple[int, ...] = (10, 20, 30, 40, 50)
    drop_feature_prob: float = 0.2
    drop_edge_prob: float = 0.2
    freeze: bool = False
    max_retries: int = 1000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"augmentation mode must be one of {MODES}, got {self.mode!r}")
        for name in ("drop_feature_prob", "drop_edge_prob"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {p}")
        object.__setattr__(self, "ma_lengths", tuple(int(x) for x in self.ma_lengths))
        if any(x < 2 for x in self.ma_lengths):
            raise ConfigError(f"ma_lengths must be >= 2 timepoints, got {self.ma_lengths}")


@dataclass(frozen=True)
class WindowDraw:
    """Which windows the two views come from."""

    mode: str
    anchor: int
    start_a: int
    length_a: int
    start_b: int
    length_b: int
    neighbor: int | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class ViewPair:
    view_a: PopulationGraph
    view_b: PopulationGraph
    provenance: WindowDraw
    dropped: bool = False


def _cohort_length(cohort: Sequence[BoldRecording]) -> int:
    return min(rec.n_times for rec in cohort)


def draw_sa(n_times: int, window: WindowSpec, rng: np.random.Generator) -> WindowDraw:
    """Random window ``m`` and one of its neighbors ``m +/- 1`` (clamped at the ends)."""
    count = segment_count(n_times, window)
    if count < 2:
        raise AugmentationInfeasibleError(
            f"step-window views need >= 2 windows, recording of length {n_times} gives {count}")
    m = int(rng.integers(count))
    sign = 1 if rng.random() < 0.5 else -1
    if m == 0:
        other = 1
    elif m == count - 1:
        other = count - 2
    else:
        other = m + sign
    return WindowDraw("SA", m, m * window.step, window.length,
                      other * window.step, window.length, neighbor=other)


def draw_ma(n_times: int, window: WindowSpec, lengths: Sequence[int],
            rng: np.random.Generator, max_retries: int = 1000) -> WindowDraw:
    """Shared anchor ``m * s`` and two distinct lengths; overrunning draws are redrawn."""
    pool = np.array(sorted(set(lengths)))
    if pool.size < 2:
        raise AugmentationInfeasibleError(f"multi-scale views need two distinct lengths, got {tuple(lengths)}")
    count = segment_count(n_times, window)
    feasible = [m for m in range(count) if m * window.step + pool[1] <= n_times]
    if not feasible:
        raise AugmentationInfeasibleError(
            f"no anchor of length-{n_times} recordings fits two lengths from {tuple(pool)}")
    for _ in range(max_retries):
        m = int(rng.integers(count))
        la, lb = (int(x) for x in rng.choice(pool, size=2, replace=False))
        start = m * window.step
        if start + max(la, lb) <= n_times:
            return WindowDraw("MA", m, start, la, start, lb)
    raise AugmentationInfeasibleError(f"no feasible multi-scale draw in {max_retries} attempts")


def draw_windows(n_times: int, config: AugmentConfig, rng: np.random.Generator) -> WindowDraw:
    mode = config.mode
    if mode == "SA+MA":
        mode = "SA" if rng.random() < 0.5 else "MA"
    if mode == "SA":
        return draw_sa(n_times, config.window, rng)
    return draw_ma(n_times, config.window, config.ma_lengths, rng, config.max_retries)


def random_drop(graph: PopulationGraph, p_f: float, p_e: float,
                rng: np.random.Generator) -> PopulationGraph:
    """Zero whole feature columns and symmetric edge pairs; self-loops survive."""
    if not (0.0 <= p_f < 1.0 and 0.0 <= p_e < 1.0):
        raise ConfigError(f"drop probabilities must lie in [0, 1), got {p_f}, {p_e}")
    n, d = graph.features.shape
    keep_cols = rng.random(d) >= p_f
    features = graph.features * keep_cols
    upper = np.triu(rng.random((n, n)) < p_e, k=1)
    drop_edges = upper | upper.T
    raw = np.where(drop_edges, 0.0, graph.raw_adjacency)
    if not drop_edges.any() and keep_cols.all():
        return graph
    return PopulationGraph(features, normalize_adjacency(raw), raw, graph.sigma, graph.k,
                           list(graph.subject_ids))


class ViewSampler:
    """Draws view pairs for one training run; owns its RNG and a feature cache."""

    def __init__(self, cohort: Sequence[BoldRecording], config: AugmentConfig,
                 graph_config: GraphConfig, rng: np.random.Generator | int | None = None,
                 audit: TextIO | None = None):
        self.cohort = list(cohort)
        self.config = config
        self.graph_config = graph_config
        self.rng = np.random.default_rng(rng)
        self.audit = audit
        self.n_times = _cohort_length(self.cohort)
        self.metas = [rec.meta for rec in self.cohort]
        self.ids = [rec.subject_id for rec in self.cohort]
        self._features: dict[tuple[int, int], np.ndarray] = {}
        self._graphs: dict[tuple[int, int], PopulationGraph] = {}
        self._frozen: WindowDraw | None = None

    def features(self, start: int, length: int) -> np.ndarray:
        key = (start, length)
        if key not in self._features:
            self._features[key] = window_features(self.cohort, start, length)
        return self._features[key]

    def graph(self, start: int, length: int) -> PopulationGraph:
        key = (start, length)
        if key not in self._graphs:
            self._graphs[key] = build_population_graph(
                self.features(start, length), self.metas, self.graph_config, self.ids)
        return self._graphs[key]

    def draw(self) -> WindowDraw:
        if self.config.freeze and self._frozen is not None:
            return self._frozen
        drawn = draw_windows(self.n_times, self.config, self.rng)
        if self.config.freeze:
            self._frozen = drawn
        return drawn

    def next_pair(self) -> ViewPair:
        drawn = self.draw()
        view_a = self.graph(drawn.start_a, drawn.length_a)
        view_b = self.graph(drawn.start_b, drawn.length_b)
        cfg = self.config
        if cfg.drop:
            view_a = random_drop(view_a, cfg.drop_feature_prob, cfg.drop_edge_prob, self.rng)
            view_b = random_drop(view_b, cfg.drop_feature_prob, cfg.drop_edge_prob, self.rng)
        if self.audit is not None:
            self.audit.write(json.dumps({**drawn.as_dict(), "drop": cfg.drop}, sort_keys=True) + "\n")
        return ViewPair(view_a, view_b, drawn, cfg.drop)


def sample_sa_pair(cohort: Sequence[BoldRecording], config: AugmentConfig,
                   rng: np.random.Generator, graph_config: GraphConfig = GraphConfig()) -> ViewPair:
    sampler = ViewSampler(cohort, replace(config, mode="SA", drop=False), graph_config, rng)
    return sampler.next_pair()


def sample_ma_pair(cohort: Sequence[BoldRecording], config: AugmentConfig,
                   rng: np.random.Generator, graph_config: GraphConfig = GraphConfig()) -> ViewPair:
    sampler = ViewSampler(cohort, replace(config, mode="MA", drop=False), graph_config, rng)
    return sampler.next_pair()


def next_view_pair(cohort: Sequence[BoldRecording], config: AugmentConfig,
                   rng: np.random.Generator, graph_config: GraphConfig = GraphConfig()) -> ViewPair:
    return ViewSampler(cohort, config, graph_config, rng).next_pair()


def open_audit(path: str | Path) -> TextIO:
    return Path(path).open("w")
