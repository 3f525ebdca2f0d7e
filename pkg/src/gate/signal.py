"""BOLD recordings, sliding windows and dynamic functional connectivity.

A recording is an ``R x T`` matrix (ROIs by timepoints).  Windows are cut
along the time axis, each window yields a Pearson FC matrix, and the upper
triangle (diagonal included) of that matrix is the subject's feature vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidSegmentError, InvalidWindowError, SchemaError, ShapeError

MANIFEST_FORMAT = "gate-bold-v1"
REQUIRED_PHENOTYPES = ("sex", "age", "site")


@dataclass(frozen=True)
class SubjectMeta:
    """Label and phenotypes of one subject.

    ``phenotypes`` maps names to values; ``age`` is numeric (years), the
    others are treated as categorical.
    """

    label: int | None = None
    phenotypes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.label is not None and self.label not in (0, 1):
            raise SchemaError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class BoldRecording:
    subject_id: str
    signal: np.ndarray
    meta: SubjectMeta = field(default_factory=SubjectMeta)

    def __post_init__(self):
        signal = np.asarray(self.signal, dtype=np.float64)
        if signal.ndim != 2:
            raise ShapeError(f"signal must be 2-D (R x T), got ndim={signal.ndim}")
        n_rois, n_times = signal.shape
        if n_rois < 2 or n_times < 2:
            raise ShapeError(f"signal needs R >= 2 and T >= 2, got {signal.shape}")
        if not np.all(np.isfinite(signal)):
            raise ShapeError(f"signal of {self.subject_id!r} has non-finite entries")
        signal.setflags(write=False)
        object.__setattr__(self, "signal", signal)

    @property
    def n_rois(self) -> int:
        return self.signal.shape[0]

    @property
    def n_times(self) -> int:
        return self.signal.shape[1]


@dataclass(frozen=True)
class WindowSpec:
    length: int = 30
    step: int = 15

    def __post_init__(self):
        if self.length < 1 or self.step < 1:
            raise InvalidWindowError(
                f"window length and step must be >= 1, got L={self.length}, s={self.step}"
            )

    def starts(self, n_times: int) -> list[int]:
        return [m * self.step for m in range(segment_count(n_times, self))]


@dataclass(frozen=True)
class FcMatrix:
    values: np.ndarray
    degenerate_rois: frozenset[int] = frozenset()


def segment_count(n_times: int, spec: WindowSpec) -> int:
    """Number of sliding windows, ``floor((T - L) / s) + 1``."""
    if n_times < spec.length:
        raise InvalidWindowError(
            f"window length {spec.length} exceeds recording length {n_times}"
        )
    return (n_times - spec.length) // spec.step + 1


def extract_segment(rec: BoldRecording, start: int, length: int) -> np.ndarray:
    """Copy of columns ``[start, start + length)`` of the recording."""
    if start < 0 or length < 1 or start + length > rec.n_times:
        raise InvalidWindowError(
            f"segment [{start}, {start + length}) outside recording of length {rec.n_times}"
        )
    return rec.signal[:, start:start + length].copy()


def pearson_fc(segment: np.ndarray) -> FcMatrix:
    """Pearson correlation between the rows of ``segment``.

    Rows with zero variance get correlation 0 everywhere (diagonal
    included) and are reported in ``degenerate_rois``.
    """
    segment = np.asarray(segment, dtype=np.float64)
    if segment.ndim != 2:
        raise ShapeError(f"segment must be 2-D, got ndim={segment.ndim}")
    if segment.shape[1] < 2:
        raise InvalidSegmentError(f"need at least 2 timepoints, got {segment.shape[1]}")

    centered = segment - segment.mean(axis=1, keepdims=True)
    ss = np.einsum("ij,ij->i", centered, centered)
    # exact-zero test on the centered data; a tiny relative floor catches
    # constant rows whose mean is not exactly representable
    scale = np.maximum(np.abs(segment).max(axis=1), 1.0)
    degenerate = ss <= (1e-14 * scale) ** 2 * segment.shape[1]
    norms = np.sqrt(np.where(degenerate, 1.0, ss))
    unit = centered / norms[:, None]
    unit[degenerate] = 0.0
    values = unit @ unit.T
    np.clip(values, -1.0, 1.0, out=values)
    values = 0.5 * (values + values.T)
    idx = np.flatnonzero(~degenerate)
    values[idx, idx] = 1.0
    return FcMatrix(values, frozenset(int(i) for i in np.flatnonzero(degenerate)))


def upper_indices(n_rois: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major ``(i, j)`` pairs with ``j >= i``; the flattening order."""
    return np.triu_indices(n_rois)


def flatten_upper(fc: FcMatrix | np.ndarray) -> np.ndarray:
    values = fc.values if isinstance(fc, FcMatrix) else np.asarray(fc)
    return values[upper_indices(values.shape[0])].copy()


def unflatten_upper(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`flatten_upper` (rebuilds the symmetric matrix)."""
    vec = np.asarray(vec, dtype=np.float64)
    n_rois = int(round((np.sqrt(8 * vec.size + 1) - 1) / 2))
    if n_rois * (n_rois + 1) // 2 != vec.size:
        raise ShapeError(f"{vec.size} is not a triangular number")
    out = np.zeros((n_rois, n_rois))
    iu = upper_indices(n_rois)
    out[iu] = vec
    out[(iu[1], iu[0])] = vec
    return out


def feature_dim(n_rois: int) -> int:
    return n_rois * (n_rois + 1) // 2


def _common_rois(cohort: Sequence[BoldRecording]) -> int:
    if not cohort:
        raise ShapeError("empty cohort")
    sizes = {rec.n_rois for rec in cohort}
    if len(sizes) != 1:
        raise ShapeError(f"cohort mixes ROI counts {sorted(sizes)}")
    return sizes.pop()


def window_features(cohort: Sequence[BoldRecording], start: int, length: int) -> np.ndarray:
    """Feature matrix (N x R(R+1)/2) of one window applied to every subject."""
    n_rois = _common_rois(cohort)
    iu = upper_indices(n_rois)
    rows = [pearson_fc(extract_segment(rec, start, length)).values[iu] for rec in cohort]
    return np.vstack(rows)


def all_window_features(cohort: Sequence[BoldRecording], spec: WindowSpec) -> np.ndarray:
    """Stacked features of every sliding window, shape ``(M, N, d)``."""
    n_times = min(rec.n_times for rec in cohort)
    return np.stack([window_features(cohort, s, spec.length) for s in spec.starts(n_times)])


# -- manifest I/O -----------------------------------------------------------

def write_manifest(cohort: Iterable[BoldRecording], directory: str | Path,
                   name: str = "manifest.json") -> Path:
    """Write ``gate-bold-v1`` manifest plus one headerless CSV per subject."""
    directory = Path(directory)
    (directory / "signals").mkdir(parents=True, exist_ok=True)
    subjects = []
    for rec in cohort:
        rel = Path("signals") / f"{rec.subject_id}.csv"
        np.savetxt(directory / rel, rec.signal, delimiter=",", fmt="%.17g")
        subjects.append({
            "id": rec.subject_id,
            "csv": rel.as_posix(),
            "label": rec.meta.label,
            "phenotypes": dict(rec.meta.phenotypes),
        })
    path = directory / name
    path.write_text(json.dumps({"format": MANIFEST_FORMAT, "subjects": subjects}, indent=2))
    return path


def read_manifest(path: str | Path) -> list[BoldRecording]:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("format") != MANIFEST_FORMAT:
        raise SchemaError(f"{path}: expected format {MANIFEST_FORMAT!r}, got {doc.get('format')!r}")
    cohort = []
    for entry in doc.get("subjects", []):
        missing = {"id", "csv"} - entry.keys()
        if missing:
            raise SchemaError(f"{path}: subject entry missing {sorted(missing)}")
        signal = np.loadtxt(path.parent / entry["csv"], delimiter=",", ndmin=2)
        meta = SubjectMeta(entry.get("label"), entry.get("phenotypes", {}))
        cohort.append(BoldRecording(str(entry["id"]), signal, meta))
    return cohort
