"""Metrics, cross-validation, label-rate sweeps, the supervised GCN baseline and diagnostics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import autodiff as ad
from .errors import GateError
from .graph import build_population_graph
from .model import GateModel, cross_entropy, embed, encode
from .signal import BoldRecording, all_window_features
from .trainer import (TrainConfig, average_window_probs, decide, expand_windows, fine_tune,
                      predict_windows, ssl_pretrain, stratified_sample, substream)

METRICS = ("accuracy", "auc", "precision", "recall", "f1")
METHODS = ("gate", "vanilla_gcn")


class UndefinedAucError(GateError):
    pass


# -- metrics ------------------------------------------------------------------

def auc_score(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outranks a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedAucError("AUC needs both classes among the labels")
    # Mann-Whitney via sorted negatives: count strictly-below and ties per positive
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    at_or_below = np.searchsorted(neg_sorted, pos, side="right")
    wins = below.sum() + 0.5 * (at_or_below - below).sum()
    return float(wins / (pos.size * neg.size))


def binary_metrics(scores: Sequence[float], predicted: Sequence[int],
                   labels: Sequence[int]) -> dict[str, float]:
    """Accuracy, AUC, precision, recall and F1 with class 1 as positive.

    0/0 precision or recall is reported as 0.  AUC is NaN when only one class
    is present.
    """
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    tp = int(np.sum((predicted == 1) & (labels == 1)))
    fp = int(np.sum((predicted == 1) & (labels == 0)))
    fn = int(np.sum((predicted == 0) & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    try:
        auc = auc_score(scores, labels)
    except UndefinedAucError:
        auc = float("nan")
    return {
        "accuracy": float(np.mean(predicted == labels)),
        "auc": auc,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


@dataclass
class MetricsReport:
    method: str
    rate: float
    folds: list[dict] = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([row[metric] for row in self.folds], dtype=np.float64)

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values(metric)))

    def std(self, metric: str) -> float:
        return float(np.std(self.values(metric)))

    @property
    def avg(self) -> float:
        return float(np.mean([self.mean(m) for m in METRICS]))

    def summary(self) -> dict:
        out = {"method": self.method, "rate": self.rate, "n_folds": len(self.folds)}
        for m in METRICS:
            out[f"{m}_mean"] = self.mean(m)
            out[f"{m}_std"] = self.std(m)
        out["avg"] = self.avg
        return out

    def __str__(self):
        cells = ", ".join(f"{m} {100 * self.mean(m):.1f} ({100 * self.std(m):.1f})" for m in METRICS)
        return f"{self.method} @ {self.rate:g}: {cells}; avg {100 * self.avg:.1f}"


# -- folds --------------------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    repeat: int
    fold: int
    train: np.ndarray
    test: np.ndarray


def fold_plan(labels: Sequence[int], n_folds: int = 5, n_repeats: int = 5, seed: int = 0) -> list[Fold]:
    """Stratified k-fold assignments, reshuffled for every repeat."""
    labels = np.asarray(labels)
    plan = []
    for r in range(n_repeats):
        state = int(substream(seed, "folds", r).integers(2 ** 31 - 1))
        splitter = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=state)
        for f, (train, test) in enumerate(splitter.split(np.zeros(labels.size), labels)):
            plan.append(Fold(r, f, train, test))
    return plan


# -- supervised baseline --------------------------------------------------------

def propagate_windows(cohort: Sequence[BoldRecording], window_feats: np.ndarray,
                      config: TrainConfig) -> np.ndarray:
    """``A_w X_w`` for every window ``w``, each graph built over the whole cohort."""
    metas = [rec.meta for rec in cohort]
    out = np.empty_like(window_feats)
    for w, feats in enumerate(window_feats):
        graph = build_population_graph(feats, metas, config.graph)
        out[w] = graph.adjacency @ feats
    return out


def vanilla_gcn(model: GateModel, propagated: np.ndarray, labels: np.ndarray,
                labeled: np.ndarray, config: TrainConfig) -> np.ndarray:
    """Train the same architecture with cross-entropy only; return per-subject probabilities.

    ``propagated`` is ``(M, N, d)``: graph-smoothed features of every subject
    (labeled, unlabeled and test alike) for each window.  Only rows of the
    ``labeled`` subjects enter the loss.
    """
    rows, owner = expand_windows(propagated)
    train_idx = np.flatnonzero(np.isin(owner, labeled))
    row_labels = np.asarray(labels)[owner[train_idx]]
    opt = ad.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    for _ in range(config.ft_epochs):
        logits = _vanilla_logits(model, rows)
        loss = cross_entropy(ad.take_rows(logits, train_idx), row_labels)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
    probs = ad.softmax(_vanilla_logits(model, rows).values)
    return average_window_probs(probs, owner, propagated.shape[1])


def _vanilla_logits(model: GateModel, propagated_rows: np.ndarray) -> ad.Tensor:
    # the graph product is already folded into the rows
    z = ad.column_standardize(embed(model, propagated_rows, None))
    return ad.add(ad.matmul(z, model.classifier_weight), model.classifier_bias)


# -- experiments ----------------------------------------------------------------

@dataclass
class ExperimentResult:
    reports: dict[tuple[str, float], MetricsReport]
    pretrained: list[GateModel] = field(default_factory=list)

    def report(self, method: str, rate: float) -> MetricsReport:
        return self.reports[(method, rate)]

    def long_rows(self) -> list[tuple]:
        rows = []
        for (method, rate), rep in sorted(self.reports.items()):
            for row in rep.folds:
                for m in METRICS:
                    rows.append((method, rate, row["fold"], row["seed"], m, row[m]))
        return rows


def run_experiment(cohort: Sequence[BoldRecording], config: TrainConfig,
                   rates: Iterable[float] = (0.2,), methods: Iterable[str] = METHODS,
                   n_folds: int = 5, n_repeats: int = 5, ssl_scope: str = "train",
                   keep_models: bool = False) -> ExperimentResult:
    """Cross-validated comparison of GATE and the supervised GCN at several label rates.

    Per fold, GATE pretrains once on the unlabeled training subjects (or on
    every subject with ``ssl_scope="all"``) and is then fine-tuned separately
    for each rate.  The baseline sees the graph over train and test subjects.
    Both methods start from the same initial weights and the same labeled
    subsets.
    """
    rates = [float(r) for r in rates]
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise GateError(f"unknown method {m!r}; expected one of {METHODS}")
    if ssl_scope not in ("train", "all"):
        raise GateError(f"ssl_scope must be 'train' or 'all', got {ssl_scope!r}")
    for r in rates:
        TrainConfig(label_rate=r)  # range check
    labels = np.array([rec.meta.label for rec in cohort])
    window_feats = all_window_features(cohort, config.augment.window)
    propagated = propagate_windows(cohort, window_feats, config) if "vanilla_gcn" in methods else None
    in_dim = window_feats.shape[2]

    reports = {(m, r): MetricsReport(m, r) for m in methods for r in rates}
    kept = []
    for fold in fold_plan(labels, n_folds, n_repeats, config.seed):
        tag = (fold.repeat, fold.fold)
        init = GateModel.init(in_dim, config.hidden, rng=substream(config.seed, "init", *tag))
        pretrained = None
        if "gate" in methods:
            ssl_idx = fold.train if ssl_scope == "train" else np.arange(len(cohort))
            pretrained, _ = ssl_pretrain([cohort[i] for i in ssl_idx], init.copy(), config,
                                         rng=substream(config.seed, "augment", *tag))
            if keep_models:
                kept.append(pretrained)
        for rate in rates:
            pick = stratified_sample(labels[fold.train], rate,
                                     substream(config.seed, "split", *tag, round(rate * 1e6)))
            labeled = fold.train[pick]
            for method in methods:
                if method == "gate":
                    rows, _, row_labels = expand_windows(window_feats[:, labeled], labels[labeled])
                    model, _ = fine_tune(pretrained.copy(), rows, row_labels, config)
                    probs = predict_windows(model, window_feats[:, fold.test])
                else:
                    probs = vanilla_gcn(init.copy(), propagated, labels, labeled, config)[fold.test]
                row = binary_metrics(probs[:, 1], decide(probs), labels[fold.test])
                row.update(fold=fold.fold, seed=fold.repeat)
                reports[(method, rate)].folds.append(row)
    return ExperimentResult(reports, kept)


def cross_validate(cohort: Sequence[BoldRecording], config: TrainConfig, method: str = "gate",
                   n_folds: int = 5, n_repeats: int = 5, ssl_scope: str = "train") -> MetricsReport:
    result = run_experiment(cohort, config, [config.label_rate], [method], n_folds, n_repeats, ssl_scope)
    return result.report(method, config.label_rate)


def label_rate_sweep(cohort: Sequence[BoldRecording], rates: Iterable[float], config: TrainConfig,
                     methods: Iterable[str] = METHODS, n_folds: int = 5,
                     n_repeats: int = 5) -> ExperimentResult:
    return run_experiment(cohort, config, rates, methods, n_folds, n_repeats)


# -- diagnostics ------------------------------------------------------------------

def singular_value_profile(z) -> np.ndarray:
    """Singular values of ``Z`` (descending) from the eigenvalues of ``Z^T Z``."""
    z = np.asarray(z.values if isinstance(z, ad.Tensor) else z, dtype=np.float64)
    eig = np.linalg.eigvalsh(z.T @ z)
    return np.sqrt(np.clip(eig, 0.0, None))[::-1]


def trailing_mass(values: np.ndarray, count: int) -> float:
    return float(np.sum(np.sort(values)[:count]))


def diagnostic_embedding(model: GateModel, cohort: Sequence[BoldRecording],
                         config: TrainConfig, start: int = 0) -> np.ndarray:
    """Embedding of the whole cohort for one window and its population graph."""
    from .signal import window_features

    feats = window_features(cohort, start, config.augment.window.length)
    graph = build_population_graph(feats, [r.meta for r in cohort], config.graph)
    return encode(model, feats, graph.adjacency).values


# -- significance -----------------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    """Continued fraction for the regularized incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return h


def regularized_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` of Student's t."""
    if math.isinf(t):
        return 0.0
    return regularized_beta(0.5 * df, 0.5, df / (df + t * t))


def two_sample_ttest(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch's unequal-variance t-test; returns ``(t, two-sided p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise GateError("each sample needs at least two observations")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(t), student_t_sf2(t, df)


# -- report files -------------------------------------------------------------------

def write_reports(result: ExperimentResult, directory: str | Path, stamp: dict | None = None) -> list[Path]:
    """Summary CSV/JSON plus a tidy long-format CSV; ``stamp`` is embedded in each."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stamp = stamp or {}
    summaries = [rep.summary() for _, rep in sorted(result.reports.items())]

    summary_csv = directory / "metrics.csv"
    keys = list(summaries[0]) if summaries else []
    with summary_csv.open("w", newline="") as fh:
        for k, v in stamp.items():
            fh.write(f"# {k}={v}\n")
        writer = csv.writer(fh)
        writer.writerow(keys)
        for s in summaries:
            writer.writerow([repr(s[k]) if isinstance(s[k], float) else s[k] for k in keys])

    long_csv = directory / "metrics_long.csv"
    with long_csv.open("w", newline="") as fh:
        for k, v in stamp.items():
            fh.write(f"# {k}={v}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "rate", "fold", "seed", "metric", "value"])
        for method, rate, fold, seed, metric, value in result.long_rows():
            writer.writerow([method, repr(rate), fold, seed, metric, repr(float(value))])

    summary_json = directory / "metrics.json"
    summary_json.write_text(json.dumps({**stamp, "reports": summaries}, indent=2, sort_keys=True))
    return [summary_csv, long_csv, summary_json]


def accuracy_gap(result: ExperimentResult, rate: float) -> float:
    return result.report("gate", rate).mean("accuracy") - result.report("vanilla_gcn", rate).mean("accuracy")


def with_gamma(config: TrainConfig, gamma: float) -> TrainConfig:
    return replace(config, gamma=gamma)
