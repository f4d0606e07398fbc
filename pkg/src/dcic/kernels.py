"""Gaussian kernel machinery: the median-distance bandwidth heuristic, Gram
matrix construction, and the weighted squared-MMD quadratic form.

Conventions. k(x, y) = exp(-||x - y||^2 / (2 sigma^2)). The cross matrix
``k_ts`` has one row per target sample and one column per source sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-12
MAX_EXACT_PAIRS = 10 ** 6
_SUBSAMPLE_SEED = 74  # fixed: the heuristic must not depend on caller seeds


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All pairwise ||a_i - b_j||^2 via the inner-product expansion.

    Negative rounding residue is clipped at zero so downstream kernels stay
    in (0, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dim mismatch: {a.shape} vs {b.shape}")
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def median_bandwidth(features: np.ndarray) -> float:
    """Median Euclidean distance over all i < j pairs.

    Exact when the pair count is at most 10^6; beyond that a fixed-seed
    subsample of 10^6 pairs is used (the heuristic is statistical, exactness
    buys nothing at that size). Errors if fewer than 2 rows or the median
    is zero (duplicated point set).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("median_bandwidth needs at least 2 rows")
    n = x.shape[0]
    n_pairs = n * (n - 1) // 2
    if n_pairs <= MAX_EXACT_PAIRS:
        sq = squared_distances(x, x)
        iu = np.triu_indices(n, k=1)
        med = float(np.median(np.sqrt(sq[iu])))
    else:
        rng = np.random.default_rng(_SUBSAMPLE_SEED)
        i = rng.integers(0, n, size=MAX_EXACT_PAIRS)
        j = rng.integers(0, n, size=MAX_EXACT_PAIRS)
        keep = i != j
        diff = x[i[keep]] - x[j[keep]]
        med = float(np.median(np.sqrt((diff * diff).sum(axis=1))))
    if med <= 0.0:
        raise ValueError("median pairwise distance is zero (identical rows)")
    return med


def gaussian_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """k(x, y) = exp(-||x - y||^2 / (2 sigma^2)) for single vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dim mismatch: {x.shape} vs {y.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = float(((x - y) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * sigma * sigma)))


def gaussian_gram(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """Dense kernel matrix k(a_i, b_j); building block for GramSet and for
    the chunked paths that never hold a full Gram."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(squared_distances(a, b) / (-2.0 * sigma * sigma))


@dataclass(frozen=True)
class GramSet:
    """The three Gram blocks of one source/target pair at a fixed bandwidth.

    k_ss is m x m over source rows, k_tt is n x n over target rows, and
    k_ts is n x m (target rows by source columns).
    """

    k_ss: np.ndarray
    k_tt: np.ndarray
    k_ts: np.ndarray
    sigma: float
    check_range: bool = True  # test oracles may substitute non-Gaussian kernels

    def __post_init__(self):
        k_ss = np.asarray(self.k_ss, dtype=np.float64)
        k_tt = np.asarray(self.k_tt, dtype=np.float64)
        k_ts = np.asarray(self.k_ts, dtype=np.float64)
        m, n = k_ss.shape[0], k_tt.shape[0]
        if k_ss.shape != (m, m) or k_tt.shape != (n, n) or k_ts.shape != (n, m):
            raise ValueError("inconsistent Gram shapes")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        for name, k in (("k_ss", k_ss), ("k_tt", k_tt)):
            if np.abs(k - k.T).max() > SYMMETRY_TOL:
                raise ValueError(f"{name} not symmetric within {SYMMETRY_TOL}")
        if self.check_range:
            for name, k in (("k_ss", k_ss), ("k_tt", k_tt), ("k_ts", k_ts)):
                if k.min() <= 0.0 or k.max() > 1.0 + 1e-12:
                    raise ValueError(f"{name} entries must lie in (0, 1]")
        for k in (k_ss, k_tt, k_ts):
            k.setflags(write=False)
        object.__setattr__(self, "k_ss", k_ss)
        object.__setattr__(self, "k_tt", k_tt)
        object.__setattr__(self, "k_ts", k_ts)

    @property
    def m(self) -> int:
        return self.k_ss.shape[0]

    @property
    def n(self) -> int:
        return self.k_tt.shape[0]


def build_gram(source_feats: np.ndarray, target_feats: np.ndarray,
               sigma: float) -> GramSet:
    """GramSet of two feature matrices under the Gaussian kernel.

    Self-blocks get an exact unit diagonal and are symmetrized, so the
    GramSet invariants hold to machine precision.
    """
    s = np.asarray(source_feats, dtype=np.float64)
    t = np.asarray(target_feats, dtype=np.float64)
    k_ss = gaussian_gram(s, s, sigma)
    k_tt = gaussian_gram(t, t, sigma)
    k_ts = gaussian_gram(t, s, sigma)
    k_ss = 0.5 * (k_ss + k_ss.T)
    k_tt = 0.5 * (k_tt + k_tt.T)
    np.fill_diagonal(k_ss, 1.0)
    np.fill_diagonal(k_tt, 1.0)
    return GramSet(k_ss, k_tt, k_ts, float(sigma))


def weighted_mmd_sq(g: GramSet, weights: np.ndarray) -> float:
    """Squared MMD between the w-weighted source embedding mean and the
    plain target embedding mean:

        w^T K_ss w / m^2  -  2 * 1^T K_ts w / (m n)  +  1^T K_tt 1 / n^2
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != g.m:
        raise ValueError(f"weights length {w.shape[0]} != source size {g.m}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    m, n = g.m, g.n
    ss = float(w @ (g.k_ss @ w)) / (m * m)
    ts = float((g.k_ts @ w).sum()) / (m * n)
    tt = float(g.k_tt.sum()) / (n * n)
    return ss - 2.0 * ts + tt


# ---------------------------------------------------------------------------
# Test oracle only: degree-2 polynomial kernel with its explicit feature map,
# so MMD values can be cross-checked against literal mean-embedding vectors.
# Not part of the user-facing API.
# ---------------------------------------------------------------------------

def _poly2_kernel_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (a @ b.T + 1.0) ** 2


def _poly2_features(x: np.ndarray) -> np.ndarray:
    """Explicit map phi with phi(x) . phi(y) = (x.y + 1)^2."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    cols = [np.ones((n, 1)), np.sqrt(2.0) * x, x ** 2]
    for i in range(d):
        for j in range(i + 1, d):
            cols.append(np.sqrt(2.0) * (x[:, i] * x[:, j])[:, None])
    return np.hstack(cols)
