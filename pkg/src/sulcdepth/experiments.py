"""Experiment harnesses: parameter sweep, scaling study, population study.

Each harness returns a plain dict that serializes to JSON; the command-line
layer only handles files.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .depth import DEFAULT_ALPHA, SolverConfig, compute_depth, dpf_star
from .errors import DegenerateError, DomainError
from .landmarks import directional_lines
from .mesh import characteristic_length, scale_mesh
from .metrics import evaluate
from .stats import distance_matrix, linear_regression, subgroup_ks_profile, welch_ttest

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_ALPHAS",
    "equivalence_range",
    "run_expe1",
    "run_expe2",
    "run_expe3",
    "worker_count",
]

DEFAULT_ALPHAS = (0.0, 10.0, 50.0, 150.0, 400.0, 500.0, 1000.0, 2000.0)
METRIC_GOALS = {"std_crest": "min", "sep": "max", "dev": "min"}
CENTILES = (5, 25, 50, 75, 95)


def worker_count(default=None) -> int:
    """Size of the worker pool, bounded by ``SULCDEPTH_THREADS`` when set."""
    env = os.environ.get("SULCDEPTH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"SULCDEPTH_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return default or min(4, os.cpu_count() or 1)


def _map(fn, items, workers):
    # results come back in input order whatever the scheduling
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------ experiment 1
def equivalence_range(samples: dict, best, p_threshold=0.05):
    """Parameter values whose distribution is not distinguishable from ``best``.

    A Welch t-test is run between each value's samples and the best one's;
    values with ``p > p_threshold`` are kept (``best`` always is).
    """
    out = []
    ref = np.asarray(samples[best])
    for key, vals in samples.items():
        if key == best:
            out.append(key)
            continue
        vals = np.asarray(vals)
        try:
            _, p = welch_ttest(vals, ref)
        except DegenerateError:
            # too few samples or two constant samples: equivalent only if equal
            p = 1.0 if vals.size == ref.size and np.allclose(vals, ref) else 0.0
        if p > p_threshold:
            out.append(key)
    return sorted(out)


def run_expe1(subjects, alphas=DEFAULT_ALPHAS, config: SolverConfig | None = None,
              curvature_method="tensor", per_line=True, workers=1):
    """Sweep DPF* over ``alphas`` and score each map against landmarks.

    Parameters
    ----------
    subjects : list of (id, TriangleMesh, LandmarkSet)
    alphas : sequence of float

    Returns
    -------
    dict
        ``rows`` (one per subject and alpha), per-alpha ``medians``, the best
        alpha per metric, Welch equivalence ranges and their intersection.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("at least one alpha is required")

    def one(subject):
        sid, mesh, landmarks = subject
        if not landmarks.paths:
            landmarks = directional_lines(mesh, landmarks, per_line=per_line)
        rows = []
        for a in alphas:
            rep = evaluate(mesh, dpf_star(mesh, a, config, curvature_method), landmarks)
            rows.append({"subject": sid, **rep.to_dict()})
        return rows

    rows = [r for block in _map(one, list(subjects), workers) for r in block]
    samples = {m: {a: [r[m] for r in rows if r["alpha"] == a] for a in alphas} for m in METRIC_GOALS}
    medians = {m: {a: float(np.median(v)) for a, v in samples[m].items()} for m in METRIC_GOALS}
    best, ranges = {}, {}
    for m, goal in METRIC_GOALS.items():
        med = medians[m]
        pick = min if goal == "min" else max
        # ties resolve to the first alpha of the grid
        best[m] = pick(alphas, key=lambda a: med[a])
        ranges[m] = equivalence_range(samples[m], best[m])
    common = sorted(set.intersection(*(set(r) for r in ranges.values())))
    return {
        "experiment": "expe1",
        "alphas": alphas,
        "rows": rows,
        "medians": {m: [medians[m][a] for a in alphas] for m in METRIC_GOALS},
        "best_alpha": best,
        "equivalence_range": ranges,
        "intersection": common,
    }


# ------------------------------------------------------------ experiment 2
def run_expe2(mesh, scales, methods, alpha=DEFAULT_ALPHA, config: SolverConfig | None = None,
              curvature_method="tensor", sulc_options=None, workers=1):
    """Regress each method's depth on scaled copies against the original.

    Returns
    -------
    dict
        ``results``: one entry per (method, scale) with slope, intercept,
        r and residual summary; ``residuals``: the per-vertex residual
        arrays keyed by ``(method, scale)`` (not JSON serializable, for
        writing fields).
    """
    scales = [float(s) for s in scales]
    for s in scales:
        if not s > 0:
            raise DomainError(f"scale factors must be positive, got {s}")

    def depth(m, method):
        return compute_depth(m, method, alpha, config, curvature_method, sulc_options).values

    results, residuals = [], {}
    for method in methods:
        base = depth(mesh, method)
        scaled = _map(lambda s: depth(scale_mesh(mesh, s), method), scales, workers)
        for s, values in zip(scales, scaled):
            reg = linear_regression(base, values)
            entry = {"method": method, "scale": s, **reg.to_dict()}
            if method == "dpf_star":
                denom = np.max(np.abs(base))
                entry["max_rel_deviation"] = float(np.max(np.abs(values - base)) / denom) if denom > 0 else 0.0
            results.append(entry)
            residuals[(method, s)] = reg.residuals
    return {"experiment": "expe2", "alpha": alpha, "scales": scales, "methods": list(methods),
            "results": results, "residuals": residuals}


# ------------------------------------------------------------ experiment 3
def run_expe3(subjects, methods, alpha=DEFAULT_ALPHA, window=10, n_windows=8, mode="within",
              config: SolverConfig | None = None, curvature_method="tensor", sulc_options=None,
              workers=1):
    """Depth distributions across a population ordered by size.

    Parameters
    ----------
    subjects : list of (id, TriangleMesh)
    methods : sequence of str
    window, n_windows : int
        Sliding-window size and count for the subgroup KS profile.

    Returns
    -------
    dict
        Subjects sorted by characteristic length, centile tables, distance
        matrices (as ``DistanceMatrix`` objects under ``matrices``) and KS
        profiles.
    """
    subjects = list(subjects)
    if len(subjects) < 2 * window:
        raise DomainError(f"need at least {2 * window} surfaces for window {window}, got {len(subjects)}")
    lengths = _map(lambda s: characteristic_length(s[1]), subjects, workers)
    order = sorted(range(len(subjects)), key=lambda k: (lengths[k], subjects[k][0]))
    ids = [subjects[k][0] for k in order]
    lengths = [lengths[k] for k in order]
    meshes = [subjects[k][1] for k in order]

    centiles, matrices, profiles = {}, {}, {}
    for method in methods:
        maps = _map(lambda m: compute_depth(m, method, alpha, config, curvature_method, sulc_options),
                    meshes, workers)
        centiles[method] = [
            {"subject": sid, "L_mm": L, "mean": float(np.mean(d.values)),
             **{f"p{c}": float(v) for c, v in zip(CENTILES, np.percentile(d.values, CENTILES))}}
            for sid, L, d in zip(ids, lengths, maps)
        ]
        dm = distance_matrix(maps, ids=ids, lengths=lengths, method=method)
        matrices[method] = dm
        profiles[method] = subgroup_ks_profile(dm, window, n_windows, mode)
    return {"experiment": "expe3", "alpha": alpha, "window": window, "n_windows": n_windows,
            "mode": mode, "subjects": ids, "L_mm": lengths, "centiles": centiles,
            "ks_profiles": profiles, "matrices": matrices}
