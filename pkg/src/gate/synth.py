"""Seedable synthetic BOLD cohorts with planted class-dependent connectivity.

Each subject's signal is

    x(t) = (A_c + E_i) u(t) + s * f_i(t) + noise

``u`` are slow AR(1) latent sources shared in law across subjects, ``A_c`` is
the class mixing matrix (the two classes are pushed apart along a fixed
direction by ``class_gap``), ``E_i`` a subject-level perturbation, and ``f_i``
a fast oscillation that switches on in short bursts, each burst with fresh
ROI loadings.  The fast part has no stable connectivity pattern, but a short
window that catches a burst sees correlations dominated by it, so
short-window FC changes with window position and length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .signal import BoldRecording, FcMatrix, SubjectMeta

SEXES = ("F", "M")


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 200
    n_rois: int = 16
    n_times: int = 240
    class_gap: float = 0.6
    spurious_strength: float = 0.5
    noise_std: float = 0.3
    n_latent: int = 4
    subject_spread: float = 0.5
    ar_coef: float = 0.9
    fast_periods: tuple[float, ...] = (3.1,)
    burst_length: int = 10
    burst_prob: float = 0.25
    n_sites: int = 4
    age_range: tuple[float, float] = (18.0, 80.0)
    max_window: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2 or self.n_subjects % 2:
            raise ConfigError(f"n_subjects must be even and >= 2, got {self.n_subjects}")
        if self.n_rois < 4:
            raise ConfigError(f"n_rois must be >= 4, got {self.n_rois}")
        if self.n_times < 2 * self.max_window:
            raise ConfigError(f"n_times must be >= 2 * max_window = {2 * self.max_window}, got {self.n_times}")
        if not 0.0 <= self.class_gap <= 1.0:
            raise ConfigError(f"class_gap must lie in [0, 1], got {self.class_gap}")
        if self.spurious_strength < 0 or self.noise_std < 0:
            raise ConfigError("spurious_strength and noise_std must be nonnegative")
        if not 0.0 < self.burst_prob <= 1.0:
            raise ConfigError(f"burst_prob must lie in (0, 1], got {self.burst_prob}")
        if not 0.0 <= self.ar_coef < 1.0:
            raise ConfigError(f"ar_coef must lie in [0, 1), got {self.ar_coef}")
        object.__setattr__(self, "fast_periods", tuple(float(p) for p in self.fast_periods))


def _population(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Shared mixing matrix and class-separation direction (seed-determined)."""
    rng = np.random.default_rng([config.seed, 0])
    k = config.n_latent
    base = rng.standard_normal((config.n_rois, k)) / np.sqrt(k)
    direction = rng.standard_normal((config.n_rois, k)) / np.sqrt(k)
    return base, direction


def class_mixing(config: SynthConfig, cls: int) -> np.ndarray:
    if cls not in (0, 1):
        raise ConfigError(f"class must be 0 or 1, got {cls}")
    base, direction = _population(config)
    sign = 1.0 if cls == 1 else -1.0
    return base + sign * 0.5 * config.class_gap * direction


def planted_covariance(config: SynthConfig, cls: int) -> np.ndarray:
    """Population-expected covariance of one class's signals."""
    mix = class_mixing(config, cls)
    iso = config.subject_spread ** 2 + config.spurious_strength ** 2 + config.noise_std ** 2
    return mix @ mix.T + iso * np.eye(config.n_rois)


def planted_fc(config: SynthConfig, cls: int) -> FcMatrix:
    cov = planted_covariance(config, cls)
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return FcMatrix(corr)


def _slow_sources(rng: np.random.Generator, k: int, n_times: int, phi: float) -> np.ndarray:
    innov = rng.standard_normal((k, n_times)) * np.sqrt(1.0 - phi * phi)
    out = np.empty((k, n_times))
    out[:, 0] = rng.standard_normal(k)
    for t in range(1, n_times):
        out[:, t] = phi * out[:, t - 1] + innov[:, t]
    return out


def _fast_component(rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    r, t_len = config.n_rois, config.n_times
    t = np.arange(t_len)
    n_bursts = -(-t_len // config.burst_length)
    q = len(config.fast_periods)
    out = np.zeros((r, t_len))
    # silent between bursts; active bursts are scaled to keep unit average variance
    active = (rng.random(n_bursts) < config.burst_prob) / np.sqrt(config.burst_prob)
    for period in config.fast_periods:
        wave = np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
        loadings = rng.standard_normal((r, n_bursts)) * active
        out += np.repeat(loadings, config.burst_length, axis=1)[:, :t_len] * wave
    return out * np.sqrt(2.0 / q)


def generate_cohort(config: SynthConfig) -> list[BoldRecording]:
    """Balanced, shuffled cohort; byte-identical for equal configs."""
    mixes = [class_mixing(config, 0), class_mixing(config, 1)]
    rng = np.random.default_rng([config.seed, 1])
    n = config.n_subjects
    labels = rng.permutation(np.repeat([0, 1], n // 2))
    k = config.n_latent
    cohort = []
    for i, label in enumerate(labels):
        mix = mixes[label] + rng.standard_normal((config.n_rois, k)) * (config.subject_spread / np.sqrt(k))
        signal = mix @ _slow_sources(rng, k, config.n_times, config.ar_coef)
        if config.spurious_strength > 0:
            signal += config.spurious_strength * _fast_component(rng, config)
        signal += config.noise_std * rng.standard_normal(signal.shape)
        pheno = {
            "sex": SEXES[int(rng.integers(2))],
            "age": round(float(rng.uniform(*config.age_range)), 1),
            "site": f"site{int(rng.integers(config.n_sites))}",
        }
        cohort.append(BoldRecording(f"sub-{i:04d}", signal, SubjectMeta(int(label), pheno)))
    return cohort
