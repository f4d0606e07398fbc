"""Core value types shared by every stage: datasets, flip-rate matrices,
class priors/ratios, and orthonormal projections.

Labels are 1-based everywhere in the public API. All types are validated at
construction and frozen afterwards, so instances can be shared read-only
across workers.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

LABEL_KINDS = ("clean", "noisy", "unlabeled")

ROW_SUM_TOL = 1e-9
PRIOR_SUM_TOL = 1e-9
ORTHONORMAL_TOL = 1e-8
DEFAULT_COND_BOUND = 1e6


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional 1-based integer labels.

    Args:
        features: (n, d) real matrix, one row per sample.
        labels: optional (n,) int vector in {1..n_classes}.
        label_kind: "clean", "noisy", or "unlabeled".
        n_classes: number of classes; defaults to max(labels) when labels
            are present.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    label_kind: str = "unlabeled"
    n_classes: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite entries")
        object.__setattr__(self, "features", _freeze(feats))

        if self.label_kind not in LABEL_KINDS:
            raise ValueError(f"label_kind must be one of {LABEL_KINDS}")

        if self.labels is None:
            if self.label_kind != "unlabeled":
                raise ValueError("label_kind %r requires labels" % self.label_kind)
            return
        if self.label_kind == "unlabeled":
            raise ValueError("labels given but label_kind is 'unlabeled'")

        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ValueError("labels must be a vector matching the sample count")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size == 0:
            raise ValueError("labels present but empty")

        c = self.n_classes if self.n_classes is not None else int(labels.max())
        if c < 1:
            raise ValueError("n_classes must be >= 1")
        if labels.min() < 1 or labels.max() > c:
            raise ValueError(f"labels must lie in 1..{c}")
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "n_classes", int(c))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "Dataset":
        """Same labels/kind over a new feature matrix."""
        return Dataset(features, self.labels, self.label_kind, self.n_classes)


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic c x c flip-rate matrix: entry (i, j) is the probability
    that clean class i is observed as class j.

    Rejected at construction if rows do not sum to one, entries leave [0, 1],
    or the condition number exceeds ``cond_bound`` (the pipeline multiplies by
    the inverse, so ill-conditioned matrices would silently amplify noise).
    """

    q: np.ndarray
    cond_bound: float = DEFAULT_COND_BOUND

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"transition matrix must be square, got {q.shape}")
        if np.any(q < -1e-12) or np.any(q > 1 + 1e-12):
            raise ValueError("transition entries must lie in [0, 1]")
        row_sums = q.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1 within {ROW_SUM_TOL}, got {row_sums}")
        cond = np.linalg.cond(q)
        if not np.isfinite(cond) or cond > self.cond_bound:
            raise ValueError(
                f"transition matrix is singular or ill-conditioned (cond={cond:.3g}, "
                f"bound={self.cond_bound:.3g})"
            )
        object.__setattr__(self, "q", _freeze(q))

    @property
    def n_classes(self) -> int:
        return self.q.shape[0]

    @property
    def diagonally_dominant(self) -> bool:
        """True when every diagonal flip-retention rate exceeds 0.5."""
        return bool(np.all(np.diag(self.q) > 0.5))

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.q)

    def to_json(self) -> str:
        return json.dumps({"c": self.n_classes, "rows": self.q.tolist()})

    @staticmethod
    def from_json(text: str) -> "TransitionMatrix":
        obj = json.loads(text)
        rows = np.asarray(obj["rows"], dtype=np.float64)
        if rows.shape != (obj["c"], obj["c"]):
            raise ValueError("rows do not match declared class count")
        return TransitionMatrix(rows)


def symmetric_noise(c: int, rho: float) -> TransitionMatrix:
    """Uniform flip matrix: stay with probability 1 - rho, flip to each other
    class with probability rho / (c - 1)."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if c < 2 and rho > 0:
        raise ValueError("flipping requires at least 2 classes")
    q = np.full((c, c), rho / (c - 1) if c > 1 else 0.0)
    np.fill_diagonal(q, 1.0 - rho)
    return TransitionMatrix(q)


@dataclass(frozen=True)
class ClassPrior:
    """Probability vector over classes: entries >= 0, summing to one."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("prior must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("prior entries must be finite and non-negative")
        if abs(p.sum() - 1.0) > PRIOR_SUM_TOL:
            raise ValueError(f"prior must sum to 1 within {PRIOR_SUM_TOL}, got {p.sum()!r}")
        object.__setattr__(self, "p", _freeze(p))

    @property
    def n_classes(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class ClassRatio:
    """Per-class ratio of target to source prior; non-negative and finite."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        if r.ndim != 1 or r.size < 1:
            raise ValueError("ratio must be a non-empty vector")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("ratio entries must be finite and non-negative")
        object.__setattr__(self, "r", _freeze(r))


@dataclass(frozen=True)
class Projection:
    """Column-orthonormal d x d' matrix realizing the feature map x -> W^T x."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("projection must be a matrix")
        d, d_prime = w.shape
        if d_prime > d:
            raise ValueError(f"projection is {d}x{d_prime}; need d' <= d")
        gram = w.T @ w
        err = np.linalg.norm(gram - np.eye(d_prime))
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"columns not orthonormal: ||W^T W - I||_F = {err:.3g}")
        object.__setattr__(self, "w", _freeze(w))

    @property
    def dim_in(self) -> int:
        return self.w.shape[0]

    @property
    def dim_out(self) -> int:
        return self.w.shape[1]

    def apply(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features) @ self.w


def empirical_prior(labels: np.ndarray, c: int) -> ClassPrior:
    """Relative class frequencies of a 1-based label vector.

    Raises on an empty vector or an out-of-range label.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot estimate a prior from zero labels")
    if labels.min() < 1 or labels.max() > c:
        raise ValueError(f"labels must lie in 1..{c}")
    counts = np.bincount(labels.astype(np.int64) - 1, minlength=c).astype(np.float64)
    return ClassPrior(counts / labels.size)


def validate_transition(q: np.ndarray, cond_bound: float = DEFAULT_COND_BOUND) -> TransitionMatrix:
    """Validate a raw flip-rate matrix.

    Warns (UserWarning) when any diagonal entry is <= 0.5: the downstream
    algebra stays valid but the matrix is no longer diagonally dominant, which
    usually signals an estimation problem.
    """
    tm = TransitionMatrix(np.asarray(q, dtype=np.float64), cond_bound=cond_bound)
    if not tm.diagonally_dominant:
        warnings.warn(
            "transition matrix has a diagonal entry <= 0.5 (not diagonally dominant)",
            UserWarning,
            stacklevel=2,
        )
    return tm


# ---------------------------------------------------------------------------
# Dataset CSV format: header f1,...,fd[,label]; label column present iff the
# dataset is labeled. Floats are written with repr so round-trips are exact.
# ---------------------------------------------------------------------------

def write_dataset_csv(data: Dataset, path: str) -> None:
    header = [f"f{i + 1}" for i in range(data.dim)]
    if data.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_samples):
            row = [repr(float(v)) for v in data.features[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            writer.writerow(row)


def read_dataset_csv(path: str, label_kind: str = "clean",
                     n_classes: int | None = None) -> Dataset:
    """Load a dataset written by ``write_dataset_csv``.

    ``label_kind`` applies only when the file has a label column; files
    without one always load as unlabeled.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        has_label = header[-1] == "label"
        n_feats = len(header) - (1 if has_label else 0)
        if header[:n_feats] != [f"f{i + 1}" for i in range(n_feats)]:
            raise ValueError(f"{path}: malformed header {header}")
        feats, labels = [], []
        for row in reader:
            if not row:
                continue
            feats.append([float(v) for v in row[:n_feats]])
            if has_label:
                labels.append(int(row[n_feats]))
    features = np.asarray(feats, dtype=np.float64).reshape(-1, n_feats)
    if has_label:
        return Dataset(features, np.asarray(labels), label_kind, n_classes)
    return Dataset(features)
