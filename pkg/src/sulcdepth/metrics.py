"""Landmark-based quality metrics of a depth map.

All three metrics are normalized so they compare across surfaces and
methods: StdCrest and Sep divide by the 5-95 inter-percentile range of the
depth, Dev is an angle.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateError
from .landmarks import LandmarkSet
from .mesh import TriangleMesh
from .operators import field_gradient

__all__ = ["MetricReport", "dev", "dev_angles", "evaluate", "ipr", "sep", "std_crest"]


def _values(depth):
    return np.asarray(getattr(depth, "values", depth), dtype=np.float64)


def ipr(depth) -> float:
    """95th minus 5th percentile (linear interpolation) over all vertices."""
    d = _values(depth)
    if d.size < 2:
        raise DegenerateError("IPR needs at least 2 values")
    lo, hi = np.percentile(d, [5.0, 95.0])
    return float(hi - lo)


def _checked_ipr(d):
    r = ipr(d)
    if not r > 0:
        raise DegenerateError("inter-percentile range is zero (constant depth)")
    return r


def std_crest(depth, landmarks: LandmarkSet) -> float:
    """Population standard deviation of depth on crests, divided by the IPR."""
    d = _values(depth)
    if landmarks.crests.size < 2:
        raise DegenerateError("StdCrest needs at least 2 crest vertices")
    return float(np.std(d[landmarks.crests]) / _checked_ipr(d))


def sep(depth, landmarks: LandmarkSet) -> float:
    """Median crest depth minus median fundus depth, divided by the IPR."""
    d = _values(depth)
    fv = landmarks.fundus_vertices
    if landmarks.crests.size == 0 or fv.size == 0:
        raise DegenerateError("Sep needs crest and fundus vertices")
    return float((np.median(d[landmarks.crests]) - np.median(d[fv])) / _checked_ipr(d))


def dev_angles(mesh: TriangleMesh, depth, landmarks: LandmarkSet):
    """Per-path lists of angles (degrees) between depth gradient and path.

    At every interior vertex of a path, the central difference of its
    neighbours along the path (fundus towards crest) is projected on the
    vertex tangent plane and compared with the depth gradient. Vertices with
    a vanishing gradient or direction are skipped, as are paths with fewer
    than three vertices.
    """
    d = _values(depth)
    grad = field_gradient(mesh, d)
    normals = mesh.vertex_normals
    gnorm = np.linalg.norm(grad, axis=1)
    tol = 1e-12 * max(float(gnorm.max(initial=0.0)), np.finfo(float).tiny)
    v = mesh.vertices
    out = []
    for p in landmarks.paths:
        chain = np.asarray(p.vertices if hasattr(p, "vertices") else p, dtype=np.int64)
        if chain.size < 3:
            out.append(np.zeros(0))
            continue
        mid = chain[1:-1]
        t = v[chain[2:]] - v[chain[:-2]]
        n = normals[mid]
        t = t - np.einsum("ij,ij->i", t, n)[:, None] * n
        tn = np.linalg.norm(t, axis=1)
        g = grad[mid]
        ok = (gnorm[mid] > tol) & (tn > 0)
        cosang = np.einsum("ij,ij->i", t[ok], g[ok]) / (tn[ok] * gnorm[mid][ok])
        out.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return out


def dev(mesh: TriangleMesh, depth, landmarks: LandmarkSet) -> float:
    """Mean over directional lines of the mean gradient-to-path angle."""
    if not landmarks.paths:
        raise DegenerateError("Dev needs directional lines")
    per_path = [a.mean() for a in dev_angles(mesh, depth, landmarks) if a.size]
    if not per_path:
        raise DegenerateError("no path vertex with a usable gradient")
    return float(np.mean(per_path))


@dataclass
class MetricReport:
    method: str
    alpha: float | None
    std_crest: float
    sep: float
    dev: float
    n_paths: int
    n_crest_vertices: int
    angles: list = field(default_factory=list, repr=False)

    def to_dict(self, angles=False) -> dict:
        out = asdict(self)
        if not angles:
            out.pop("angles")
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def evaluate(mesh: TriangleMesh, depth, landmarks: LandmarkSet, method=None, alpha=None) -> MetricReport:
    """All three metrics for one depth map."""
    method = method or getattr(depth, "method", "unknown")
    alpha = alpha if alpha is not None else getattr(depth, "alpha", None)
    per_path = dev_angles(mesh, depth, landmarks)
    return MetricReport(
        method=method,
        alpha=alpha,
        std_crest=std_crest(depth, landmarks),
        sep=sep(depth, landmarks),
        dev=dev(mesh, depth, landmarks),
        n_paths=len(landmarks.paths),
        n_crest_vertices=int(landmarks.crests.size),
        angles=[float(x) for a in per_path for x in a],
    )
