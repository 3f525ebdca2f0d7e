"""The acceptance suite: nine numbered checks, each returning a pass/fail record.

Criteria 5 to 7 train models on the default synthetic cohort and take
minutes; the rest finish in seconds.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from . import gradcheck
from .augment import AugmentConfig, draw_ma, draw_sa, draw_windows, random_drop
from .evaluation import (accuracy_gap, auc_score, diagnostic_embedding, run_experiment,
                         singular_value_profile, trailing_mass, two_sample_ttest, write_reports)
from .graph import GraphConfig, build_population_graph, spectral_radius
from .model import GateModel, cca_ssl_loss
from .signal import BoldRecording, SubjectMeta, WindowSpec, all_window_features, pearson_fc
from .synth import SynthConfig, generate_cohort
from .trainer import TrainConfig, ssl_pretrain, substream


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number} ({self.name}): {self.detail} [{self.seconds:.1f}s]"


def _timed(number: int, name: str, body: Callable[[], tuple[bool, str, dict]]) -> CriterionResult:
    tic = time.perf_counter()
    passed, detail, values = body()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - tic, values)


# -- 1. gradients ------------------------------------------------------------------

def gradient_correctness(n_seeds: int = 20, tol: float = 1e-4, budget: float = 10.0) -> CriterionResult:
    def body():
        tic = time.perf_counter()
        worst: dict[str, float] = {}
        for seed in range(n_seeds):
            for name, err in gradcheck.max_error(seed).items():
                worst[name] = max(worst.get(name, 0.0), err)
        elapsed = time.perf_counter() - tic
        top = max(worst, key=worst.get)
        ok = worst[top] <= tol and elapsed < budget
        return ok, f"max rel err {worst[top]:.2e} ({top}) over {n_seeds} seeds, {elapsed:.1f}s", worst

    return _timed(1, "gradient correctness", body)


# -- 2. loss semantics --------------------------------------------------------------

def loss_semantics(n_random: int = 1000, seed: int = 0) -> CriterionResult:
    def body():
        perfect = cca_ssl_loss(np.eye(4), np.eye(4), 0.2).item()
        collapse = cca_ssl_loss(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([[1.0, 0.0], [1.0, 0.0]]), 0.2).item()
        rng = np.random.default_rng(seed)
        low = math.inf
        for _ in range(n_random):
            n, h = int(rng.integers(2, 9)), int(rng.integers(1, 6))
            scale = 10.0 ** rng.uniform(-3, 2)
            za, zb = rng.standard_normal((n, h)) * scale, rng.standard_normal((n, h)) * scale
            low = min(low, cca_ssl_loss(za, zb, float(rng.uniform(0, 2))).item())
        ok = perfect == -1.0 and abs(collapse + 0.2) <= 1e-12 and low >= -1.0
        detail = f"aligned {perfect!r}, collapse {collapse!r}, min over {n_random} random {low:.4f}"
        return ok, detail, {"perfect": perfect, "collapse": collapse, "min_random": low}

    return _timed(2, "loss semantics", body)


# -- 3. FC and graph invariants -------------------------------------------------------

def _random_cohort(rng: np.random.Generator, n: int, n_rois: int, n_times: int) -> list[BoldRecording]:
    out = []
    for i in range(n):
        meta = SubjectMeta(int(rng.integers(2)), {"sex": "FM"[int(rng.integers(2))],
                                                  "age": float(rng.uniform(18, 80)),
                                                  "site": f"s{int(rng.integers(3))}"})
        out.append(BoldRecording(f"r{i}", rng.standard_normal((n_rois, n_times)), meta))
    return out


def fc_graph_invariants(n_cases: int = 100, seed: int = 0, budget: float = 30.0) -> CriterionResult:
    def body():
        tic = time.perf_counter()
        rng = np.random.default_rng(seed)
        fc_bad = 0
        for _ in range(n_cases):
            seg = rng.standard_normal((int(rng.integers(2, 12)), int(rng.integers(3, 60))))
            seg[rng.random(seg.shape[0]) < 0.1] = 1.0  # some constant rows
            fc = pearson_fc(seg)
            live = [i for i in range(seg.shape[0]) if i not in fc.degenerate_rois]
            values = fc.values
            if not (np.array_equal(values, values.T) and np.all(np.abs(values) <= 1.0)
                    and np.all(np.diag(values)[live] == 1.0)):
                fc_bad += 1
        graph_bad, radius = 0, 0.0
        for _ in range(n_cases):
            n = int(rng.integers(3, 30))
            cohort = _random_cohort(rng, n, int(rng.integers(3, 8)), 40)
            feats = all_window_features(cohort, WindowSpec(40, 40))[0]
            g = build_population_graph(feats, [r.meta for r in cohort], GraphConfig(k=int(rng.integers(1, n))))
            rho = spectral_radius(g.adjacency)
            radius = max(radius, rho)
            if np.max(np.abs(g.adjacency - g.adjacency.T)) > 1e-12 or rho > 1 + 1e-9:
                graph_bad += 1
        elapsed = time.perf_counter() - tic
        ok = fc_bad == 0 and graph_bad == 0 and elapsed < budget
        detail = (f"{fc_bad}/{n_cases} FC violations, {graph_bad}/{n_cases} graph violations, "
                  f"max spectral radius {radius:.12f}, {elapsed:.1f}s")
        return ok, detail, {"max_radius": radius}

    return _timed(3, "FC/graph invariants", body)


# -- 4. augmentation contracts -------------------------------------------------------

def augmentation_contracts(n_draws: int = 10_000, seed: int = 0) -> CriterionResult:
    def body():
        window, lengths, n_times = WindowSpec(30, 15), (10, 20, 30, 40, 50), 240
        rng = np.random.default_rng(seed)
        sa_ok = all(abs(d.start_a - d.start_b) == 15 and d.length_a == d.length_b == 30
                    for d in (draw_sa(n_times, window, rng) for _ in range(n_draws)))
        ma_ok = True
        for _ in range(n_draws):
            d = draw_ma(n_times, window, lengths, rng)
            ma_ok &= d.start_a == d.start_b and d.length_a != d.length_b and {d.length_a, d.length_b} <= set(lengths)
        cfg = AugmentConfig(mode="SA+MA")
        frac = sum(draw_windows(n_times, cfg, rng).mode == "SA" for _ in range(n_draws)) / n_draws
        cohort = _random_cohort(rng, 8, 4, 40)
        g = build_population_graph(all_window_features(cohort, WindowSpec(40, 40))[0],
                                   [r.meta for r in cohort], GraphConfig(k=3))
        same = random_drop(g, 0.0, 0.0, rng)
        identity = np.array_equal(same.features, g.features) and np.array_equal(same.adjacency, g.adjacency)
        ok = sa_ok and ma_ok and 0.47 <= frac <= 0.53 and identity
        detail = f"S-A ok={sa_ok}, M-A ok={ma_ok}, SA fraction {frac:.4f}, p=0 identity={identity}"
        return ok, detail, {"sa_fraction": frac}

    return _timed(4, "augmentation contracts", body)


# -- 5 to 7. training experiments on the default cohort ---------------------------------

def label_efficiency(config: TrainConfig = TrainConfig(), synth: SynthConfig = SynthConfig(),
                     rates=(0.1, 0.2, 0.8), n_folds: int = 5, n_repeats: int = 5,
                     margin: float = 0.05, budget: float = 600.0) -> CriterionResult:
    def body():
        tic = time.perf_counter()
        result = run_experiment(generate_cohort(synth), config, rates, n_folds=n_folds, n_repeats=n_repeats)
        elapsed = time.perf_counter() - tic
        gaps = {r: accuracy_gap(result, r) for r in rates}
        accs = {f"{m}@{r}": result.report(m, r).mean("accuracy") for (m, r) in result.reports}
        lo, mid, hi = min(rates), 0.2, max(rates)
        ok = gaps[mid] >= margin and gaps[lo] >= gaps[hi] and elapsed < budget
        cells = ", ".join(f"{k} {v:.3f}" for k, v in sorted(accs.items()))
        detail = (f"gap@0.2 {100 * gaps[mid]:+.1f}pp (need >= {100 * margin:.0f}), gap@{lo:g} "
                  f"{100 * gaps[lo]:+.1f}pp vs gap@{hi:g} {100 * gaps[hi]:+.1f}pp; {cells}; {elapsed:.0f}s")
        return ok, detail, {"gaps": gaps, "accuracy": accs, "seconds": elapsed}

    return _timed(5, "label efficiency", body)


def low_rank_diagnostic(config: TrainConfig = TrainConfig(), synth: SynthConfig = SynthConfig(),
                        n_seeds: int = 5) -> CriterionResult:
    def body():
        cohort = generate_cohort(synth)
        d = all_window_features(cohort[:1], config.augment.window).shape[2]
        half = config.hidden // 2
        random_mass, trained_mass = [], []
        for seed in range(n_seeds):
            cfg = replace(config, seed=seed)
            init = GateModel.init(d, config.hidden, rng=substream(seed, "init"))
            random_mass.append(trailing_mass(singular_value_profile(diagnostic_embedding(init, cohort, cfg)), half))
            trained, _ = ssl_pretrain(cohort, init.copy(), cfg)
            trained_mass.append(trailing_mass(singular_value_profile(diagnostic_embedding(trained, cohort, cfg)), half))
        a, b = float(np.mean(trained_mass)), float(np.mean(random_mass))
        detail = f"trailing {half} singular-value mass: pretrained {a:.3f} vs random init {b:.3f}"
        return a < b, detail, {"pretrained": trained_mass, "random": random_mass}

    return _timed(6, "low-rank diagnostic", body)


def gamma_ablation(config: TrainConfig = TrainConfig(), synth: SynthConfig = SynthConfig(),
                   gammas=(0.2, 0.001), n_seeds: int = 5, n_folds: int = 5) -> CriterionResult:
    def body():
        cohort = generate_cohort(synth)
        acc = {g: [] for g in gammas}
        for seed in range(n_seeds):
            for g in gammas:
                cfg = replace(config, seed=seed, gamma=g)
                res = run_experiment(cohort, cfg, (cfg.label_rate,), ("gate",), n_folds, 1)
                acc[g].append(res.report("gate", cfg.label_rate).mean("accuracy"))
        hi, lo = (float(np.mean(acc[g])) for g in gammas)
        detail = f"accuracy gamma={gammas[0]:g}: {hi:.4f} vs gamma={gammas[1]:g}: {lo:.4f} over {n_seeds} seeds"
        return hi > lo, detail, {str(g): v for g, v in acc.items()}

    return _timed(7, "gamma ablation", body)


# -- 8. determinism -----------------------------------------------------------------

def determinism(config: TrainConfig = TrainConfig(), synth: SynthConfig = SynthConfig(),
                n_folds: int = 5) -> CriterionResult:
    def body():
        cohort = generate_cohort(synth)
        blobs = []
        with tempfile.TemporaryDirectory() as tmp:
            for run in range(2):
                result = run_experiment(cohort, config, (config.label_rate,), n_folds=n_folds, n_repeats=1)
                files = write_reports(result, Path(tmp) / str(run), {"seed": config.seed})
                blobs.append([p.read_bytes() for p in files])
        same = blobs[0] == blobs[1]
        return same, f"two runs {'byte-identical' if same else 'differ'} across {len(blobs[0])} report files", {}

    return _timed(8, "determinism", body)


# -- 9. oracle equivalences ---------------------------------------------------------

def _pairwise_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def _quadrature_p(a: np.ndarray, b: np.ndarray) -> float:
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    log_c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    tail, _ = integrate.quad(lambda x: math.exp(log_c - (df + 1) / 2 * math.log1p(x * x / df)),
                             abs(t), np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2 * tail


def oracle_equivalences(n_cases: int = 1000, seed: int = 0) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        auc_err = 0.0
        for _ in range(n_cases):
            n = int(rng.integers(2, 40))
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            auc_err = max(auc_err, abs(auc_score(scores, labels) - _pairwise_auc(scores, labels)))
        p_err = 0.0
        for _ in range(50):
            a = rng.normal(0, rng.uniform(0.5, 2), int(rng.integers(3, 20)))
            b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), int(rng.integers(3, 20)))
            p_err = max(p_err, abs(two_sample_ttest(a, b)[1] - _quadrature_p(a, b)))
        sv_err = 0.0
        for _ in range(50):
            z = rng.standard_normal((20, 8))
            sv_err = max(sv_err, float(np.max(np.abs(singular_value_profile(z) - np.linalg.svd(z, compute_uv=False)))))
        ok = auc_err <= 1e-12 and p_err <= 1e-6 and sv_err <= 1e-8
        detail = f"AUC err {auc_err:.1e} ({n_cases} sets), t-test p err {p_err:.1e}, singular value err {sv_err:.1e}"
        return ok, detail, {"auc": auc_err, "p": p_err, "sv": sv_err}

    return _timed(9, "oracle equivalences", body)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: gradient_correctness,
    2: loss_semantics,
    3: fc_graph_invariants,
    4: augmentation_contracts,
    5: label_efficiency,
    6: low_rank_diagnostic,
    7: gamma_ablation,
    8: determinism,
    9: oracle_equivalences,
}
TRAINING = {5, 6, 7, 8}


def run_criteria(numbers=tuple(CRITERIA), config: TrainConfig = TrainConfig(),
                 synth: SynthConfig = SynthConfig(), n_seeds: int = 5,
                 log: Callable[[str], None] | None = None) -> list[CriterionResult]:
    out = []
    for k in numbers:
        if k in (6, 7):
            res = CRITERIA[k](config, synth, n_seeds=n_seeds)
        elif k in TRAINING:
            res = CRITERIA[k](config, synth)
        else:
            res = CRITERIA[k]()
        out.append(res)
        if log is not None:
            log(res.line())
    return out
