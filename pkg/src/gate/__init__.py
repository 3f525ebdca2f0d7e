"""Two-view self-supervised pretraining of a population-graph GCN on dynamic FC features."""
from .augment import AugmentConfig, ViewPair, ViewSampler, next_view_pair, random_drop
from .graph import GraphConfig, PopulationGraph, build_population_graph, normalize_adjacency
from .model import GateModel, cca_ssl_loss, classify, cross_entropy, encode
from .signal import (BoldRecording, FcMatrix, SubjectMeta, WindowSpec, flatten_upper,
                     pearson_fc, read_manifest, segment_count, window_features, write_manifest)
from .synth import SynthConfig, generate_cohort, planted_fc
from .trainer import TrainConfig, TrainTrace, fine_tune, predict, split_labels, ssl_pretrain

__version__ = "0.1.0"
