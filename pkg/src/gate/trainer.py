"""Self-supervised pretraining, label-efficient fine-tuning and windowed inference."""
from __future__ import annotations

import csv
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from . import autodiff as ad
from .augment import AugmentConfig, ViewSampler
from .errors import ConfigError
from .graph import GraphConfig
from .model import GateModel, cca_ssl_loss, classify, cross_entropy, encode
from .signal import BoldRecording, WindowSpec, all_window_features


@dataclass(frozen=True)
class TrainConfig:
    ssl_epochs: int = 100
    ft_epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 1e-5
    gamma: float = 0.2
    hidden: int = 256
    label_rate: float = 0.2
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)

    def __post_init__(self):
        if not 0.0 < self.label_rate <= 1.0:
            raise ConfigError(f"label_rate must lie in (0, 1], got {self.label_rate}")
        if self.ssl_epochs < 0 or self.ft_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")


@dataclass
class TrainTrace:
    ssl_loss: list[float] = field(default_factory=list)
    ft_loss: list[float] = field(default_factory=list)
    ft_accuracy: list[float] = field(default_factory=list)
    seconds: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[tuple[int, str, float, float | None]]:
        out: list[tuple[int, str, float, float | None]] = [
            (i + 1, "ssl", loss, None) for i, loss in enumerate(self.ssl_loss)]
        out += [(i + 1, "finetune", loss, acc)
                for i, (loss, acc) in enumerate(zip(self.ft_loss, self.ft_accuracy))]
        return out

    def write_csv(self, path: str | Path, stamp: dict | None = None) -> Path:
        """Per-epoch losses; ``stamp`` entries become leading ``# key=value`` lines."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            for k, v in (stamp or {}).items():
                fh.write(f"# {k}={v}\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "phase", "loss", "accuracy"])
            for epoch, phase, loss, acc in self.rows():
                writer.writerow([epoch, phase, repr(loss), "" if acc is None else repr(acc)])
        return path


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named purpose (data, split, augment, init, ...)."""
    return np.random.default_rng([seed, zlib.crc32(name.encode()), *extra])


def ssl_pretrain(cohort: Sequence[BoldRecording], model: GateModel, config: TrainConfig,
                 rng: np.random.Generator | None = None,
                 audit: TextIO | None = None) -> tuple[GateModel, TrainTrace]:
    """Optimize the encoder on the two-view correlation objective; labels are never read."""
    rng = substream(config.seed, "augment") if rng is None else rng
    sampler = ViewSampler(cohort, config.augment, config.graph, rng, audit=audit)
    opt = ad.AdamW(model.encoder_parameters(), lr=config.lr, weight_decay=config.weight_decay)
    trace = TrainTrace()
    tic = time.perf_counter()
    for _ in range(config.ssl_epochs):
        pair = sampler.next_pair()
        z_a = encode(model, pair.view_a.features, pair.view_a.adjacency)
        z_b = encode(model, pair.view_b.features, pair.view_b.adjacency)
        loss = cca_ssl_loss(z_a, z_b, config.gamma)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
        trace.ssl_loss.append(loss.item())
    trace.seconds["ssl"] = time.perf_counter() - tic
    return model, trace


def expand_windows(window_feats: np.ndarray, labels: np.ndarray | None = None):
    """Flatten ``(M, N, d)`` window features to ``(N*M, d)`` rows, subject-major.

    Returns the rows, the owning subject index of each row, and (if given)
    the label repeated per window.
    """
    n_windows, n_subj, d = window_feats.shape
    rows = window_feats.transpose(1, 0, 2).reshape(n_subj * n_windows, d)
    owner = np.repeat(np.arange(n_subj), n_windows)
    if labels is None:
        return rows, owner
    return rows, owner, np.asarray(labels)[owner]


def fine_tune(model: GateModel, features: np.ndarray, labels: np.ndarray, config: TrainConfig,
              train_encoder: bool = True) -> tuple[GateModel, TrainTrace]:
    """Full-batch cross-entropy training with the graph replaced by the identity.

    ``features`` holds one row per (labeled subject, window).  With
    ``train_encoder=False`` only the linear head is updated.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] == 0:
        raise ConfigError("fine-tuning needs at least one labeled example")
    params = model.parameters() if train_encoder else model.head_parameters()
    opt = ad.AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    trace = TrainTrace()
    tic = time.perf_counter()
    for _ in range(config.ft_epochs):
        logits = classify(model, features)
        loss = cross_entropy(logits, labels)
        for p in model.parameters():
            p.zero_grad()
        ad.backward(loss)
        opt.step()
        trace.ft_loss.append(loss.item())
        trace.ft_accuracy.append(float(np.mean(np.argmax(logits.values, axis=1) == labels)))
    trace.seconds["finetune"] = time.perf_counter() - tic
    return model, trace


def average_window_probs(probs: np.ndarray, owner: np.ndarray, n_subjects: int) -> np.ndarray:
    sums = np.zeros((n_subjects, probs.shape[1]))
    np.add.at(sums, owner, probs)
    counts = np.bincount(owner, minlength=n_subjects)[:, None]
    return sums / counts


def decide(probs: np.ndarray) -> np.ndarray:
    """Argmax with ties resolved toward class 0."""
    return np.argmax(probs, axis=1)


def predict_windows(model: GateModel, window_feats: np.ndarray) -> np.ndarray:
    """Per-subject class probabilities averaged over all windows.

    All windows of all subjects form one batch, so the embedding
    standardization statistics come from the whole evaluation batch.
    """
    rows, owner = expand_windows(window_feats)
    probs = ad.softmax(classify(model, rows).values)
    return average_window_probs(probs, owner, window_feats.shape[1])


def predict(model: GateModel, cohort: Sequence[BoldRecording],
            window: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    probs = predict_windows(model, all_window_features(cohort, window))
    return probs, decide(probs)


def stratified_sample(labels: Sequence[int], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of a ``ceil(rate * N)`` stratified draw, >= 1 per present class."""
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"label_rate must lie in (0, 1], got {rate}")
    labels = np.asarray(labels)
    n = labels.size
    classes = np.unique(labels)
    count = max(math.ceil(rate * n - 1e-9), classes.size)
    if count > n:
        raise ConfigError(f"cannot draw {count} labeled subjects from {n}")
    sizes = np.array([np.sum(labels == c) for c in classes])
    quota = count * sizes / n
    alloc = np.maximum(np.floor(quota).astype(int), 1)
    alloc = np.minimum(alloc, sizes)
    # largest remainder, lowest class first on ties
    order = np.argsort(-(quota - np.floor(quota)), kind="stable")
    i = 0
    while alloc.sum() < count:
        c = order[i % classes.size]
        if alloc[c] < sizes[c]:
            alloc[c] += 1
        i += 1
    while alloc.sum() > count:
        c = int(np.argmax(alloc))
        alloc[c] -= 1
    picked = [rng.choice(np.flatnonzero(labels == c), size=a, replace=False)
              for c, a in zip(classes, alloc)]
    return np.sort(np.concatenate(picked))


def split_labels(cohort: Sequence[BoldRecording], label_rate: float,
                 seed: int) -> tuple[list[str], list[str]]:
    """Stratified random choice of which subjects keep their labels."""
    labels = [rec.meta.label for rec in cohort]
    if any(lab is None for lab in labels):
        raise ConfigError("every subject needs a label to be eligible for the labeled split")
    idx = set(stratified_sample(labels, label_rate, substream(seed, "split")).tolist())
    labeled = [rec.subject_id for i, rec in enumerate(cohort) if i in idx]
    unlabeled = [rec.subject_id for i, rec in enumerate(cohort) if i not in idx]
    return labeled, unlabeled
