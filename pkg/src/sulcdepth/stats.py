"""Distribution statistics: Wasserstein-1, two-sample KS, Welch t, OLS.

Everything here works on plain 1-D samples; ``scipy.special`` is used only
for the incomplete beta function behind the t distribution.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .errors import DegenerateError, DomainError, EmptyInputError

__all__ = [
    "DistanceMatrix",
    "RegressionResult",
    "distance_matrix",
    "ks_two_sample",
    "linear_regression",
    "subgroup_ks_profile",
    "wasserstein1d",
    "welch_ttest",
]

MAX_SAMPLES = 200_000
SUBSAMPLE_TARGET = 100_000


def _sample(x, name):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInputError(f"sample {name} is empty")
    return x


def _sorted_with_cdf(x, w):
    order = np.argsort(x, kind="stable")
    x = x[order]
    if w is None:
        cdf = np.arange(1, x.size + 1) / x.size
    else:
        w = np.asarray(w, dtype=np.float64).ravel()[order]
        if w.shape != x.shape or np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be non-negative, match the sample and not sum to 0")
        cdf = np.cumsum(w) / w.sum()
        cdf[-1] = 1.0
    return x, cdf


def wasserstein1d(a, b, a_weights=None, b_weights=None) -> float:
    """1-Wasserstein distance between two empirical distributions.

    Computed as ``∫₀¹ |F_a⁻¹(q) - F_b⁻¹(q)| dq``; both quantile functions are
    step functions, so the integral is exact over the merged breakpoints.
    Optional weights (e.g. vertex areas) give weighted distributions.
    """
    a = _sample(a, "a")
    b = _sample(b, "b")
    if a_weights is None and b_weights is None and a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    xa, ca = _sorted_with_cdf(a, a_weights)
    xb, cb = _sorted_with_cdf(b, b_weights)
    q = np.union1d(ca, cb)
    dq = np.diff(np.concatenate([[0.0], q]))
    # on (q_{k-1}, q_k] the quantile is the first sample whose cdf reaches q_k
    ia = np.minimum(np.searchsorted(ca, q, side="left"), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, q, side="left"), xb.size - 1)
    return float(np.sum(dq * np.abs(xa[ia] - xb[ib])))


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |ECDF_a - ECDF_b|``."""
    a = np.sort(_sample(a, "a"))
    b = np.sort(_sample(b, "b"))
    x = np.concatenate([a, b])
    fa = np.searchsorted(a, x, side="right") / a.size
    fb = np.searchsorted(b, x, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _t_sf2(t, df):
    """Two-sided tail probability of Student's t."""
    return float(betainc(0.5 * df, 0.5, df / (df + t * t)))


def welch_ttest(a, b):
    """Welch's unequal-variance t-test.

    Returns
    -------
    (t, p) : tuple of float
        Statistic and two-sided p-value with Welch-Satterthwaite degrees of
        freedom.
    """
    a = _sample(a, "a")
    b = _sample(b, "b")
    if a.size < 2 or b.size < 2:
        raise DegenerateError("each sample needs at least 2 values")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0:
        raise DegenerateError("both samples have zero variance")
    t = (a.mean() - b.mean()) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(t), _t_sf2(t, df)


@dataclass
class RegressionResult:
    slope: float
    intercept: float
    r: float
    residuals: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r": self.r,
                "max_abs_residual": float(np.max(np.abs(self.residuals)))}


def linear_regression(x, y) -> RegressionResult:
    """Ordinary least squares ``y ≈ slope·x + intercept`` with Pearson r.

    ``r`` is defined as 0 when ``y`` is constant.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if x.size < 2:
        raise DegenerateError("regression needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    if sxx == 0:
        raise DegenerateError("x has zero variance")
    syy = np.dot(dy, dy)
    sxy = np.dot(dx, dy)
    slope = sxy / sxx
    intercept = y.mean() - slope * x.mean()
    r = 0.0 if syy == 0 else float(np.clip(sxy / np.sqrt(sxx * syy), -1.0, 1.0))
    return RegressionResult(float(slope), float(intercept), r, y - (slope * x + intercept))


@dataclass
class DistanceMatrix:
    """Pairwise Wasserstein distances between subjects ordered by size."""

    values: np.ndarray
    ids: list
    lengths: np.ndarray
    method: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject"] + list(self.ids))
            for sid, row in zip(self.ids, self.values):
                w.writerow([sid] + [repr(float(v)) for v in row])


def _subsample(values):
    n = values.size
    if n <= MAX_SAMPLES:
        return values, 1
    stride = int(np.ceil(n / SUBSAMPLE_TARGET))
    return values[::stride], stride


def distance_matrix(depth_maps, ids=None, lengths=None, weights=None, method="") -> DistanceMatrix:
    """Wasserstein distance between every pair of depth maps.

    Parameters
    ----------
    depth_maps : sequence of DepthMap or array_like
    ids : sequence of str, optional
        Subject identifiers (default ``s000``, ``s001``...).
    lengths : sequence of float, optional
        Characteristic lengths used to order the subjects; taken from the
        depth maps when they record one.
    weights : sequence of array_like, optional
        Per-vertex weights (e.g. vertex areas) for area-weighted distances.
    """
    n = len(depth_maps)
    if n < 2:
        raise DomainError("a distance matrix needs at least 2 depth maps")
    ids = [f"s{k:03d}" for k in range(n)] if ids is None else [str(i) for i in ids]
    if lengths is None:
        lengths = [getattr(d, "characteristic_length", None) for d in depth_maps]
        if any(v is None for v in lengths):
            lengths = [0.0] * n
    lengths = np.asarray(lengths, dtype=np.float64)
    order = np.argsort(lengths, kind="stable")
    samples, strides = [], []
    for k in order:
        vals = np.asarray(getattr(depth_maps[k], "values", depth_maps[k]), dtype=np.float64)
        if weights is None:
            vals, stride = _subsample(vals)
        else:
            stride = 1
        samples.append(vals)
        strides.append(stride)
    w = None if weights is None else [weights[k] for k in order]
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = wasserstein1d(
                samples[i], samples[j],
                None if w is None else w[i], None if w is None else w[j])
    if not method and depth_maps and hasattr(depth_maps[0], "method"):
        method = depth_maps[0].method
    return DistanceMatrix(mat, [ids[k] for k in order], lengths[order], method,
                          {"strides": strides, "weighted": weights is not None})


def _upper(block):
    return block[np.triu_indices(block.shape[0], k=1)]


def window_starts(n, window, n_windows):
    """Evenly spaced window starts; the last window ends at subject ``n``."""
    if window < 2 or window > n:
        raise DomainError(f"window must be in [2, {n}], got {window}")
    if n_windows < 1:
        raise DomainError("n_windows must be >= 1")
    return np.unique(np.round(np.linspace(0, n - window, n_windows)).astype(int))


def subgroup_ks_profile(matrix, window: int, n_windows: int, mode="within"):
    """KS statistics between sliding size windows and the largest window.

    Parameters
    ----------
    matrix : DistanceMatrix or ndarray
        Distances between subjects sorted by increasing size.
    window : int
        Subjects per window.
    n_windows : int
        Number of evenly spaced windows; the reference is the last one.
    mode : {"within", "cross"}
        ``within`` compares the distances inside each window with those
        inside the reference window. ``cross`` uses the distances between
        each window and the reference instead.

    Returns
    -------
    list of float
    """
    mat = np.asarray(getattr(matrix, "values", matrix), dtype=np.float64)
    n = mat.shape[0]
    starts = window_starts(n, window, n_windows)
    ref = slice(starts[-1], starts[-1] + window)
    ref_vals = _upper(mat[ref, ref])
    out = []
    for s in starts:
        cur = slice(s, s + window)
        if mode == "within" or s == starts[-1]:
            vals = _upper(mat[cur, cur])
        elif mode == "cross":
            vals = mat[cur, ref].ravel()
        else:
            raise DomainError(f"unknown mode {mode!r}")
        out.append(ks_two_sample(vals, ref_vals))
    return out


def profile_json(profile) -> str:
    return json.dumps([float(v) for v in profile])
