"""Crest/fundus landmarks and the directional lines joining them.

Geodesics are approximated by Dijkstra paths on the edge graph with
Euclidean edge weights. Ties are broken towards the smallest vertex index so
every result is reproducible.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyResultError, ParseError, UnreachableError, ValidationError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

__all__ = [
    "GeodesicPath",
    "LandmarkSet",
    "directional_lines",
    "load_landmarks",
    "multi_source_dijkstra",
    "save_landmarks",
    "save_paths",
    "shortest_path",
    "validate_landmarks",
    "verify_directional_lines",
]


@dataclass(frozen=True)
class GeodesicPath:
    """Vertex chain along mesh edges and its length in mm."""

    vertices: tuple
    length: float

    def __len__(self):
        return len(self.vertices)

    @property
    def source(self) -> int:
        return self.vertices[0]

    @property
    def target(self) -> int:
        return self.vertices[-1]


@dataclass
class LandmarkSet:
    """Crest vertices, fundus chains and (optionally) directional lines.

    Attributes
    ----------
    crests : ndarray of int
        Sorted unique crest vertex indices.
    fundi : list of ndarray
        Ordered fundus chains; consecutive vertices share an edge.
    paths : list of GeodesicPath
        Directional lines oriented from fundus to crest.
    """

    crests: np.ndarray
    fundi: list
    paths: list = field(default_factory=list)

    def __post_init__(self):
        self.crests = np.unique(np.asarray(self.crests, dtype=np.int64))
        self.fundi = [np.asarray(c, dtype=np.int64) for c in self.fundi]

    @property
    def fundus_vertices(self) -> np.ndarray:
        if not self.fundi:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.fundi))


# ------------------------------------------------------------------ geodesics
def _graph(mesh):
    a = mesh.adjacency
    return a.indptr, a.indices, a.data


def multi_source_dijkstra(mesh: TriangleMesh, sources):
    """Graph distances to the nearest of several sources.

    Labels are compared lexicographically as ``(distance, source index)`` so a
    vertex equidistant to several sources is assigned the smallest one.

    Returns
    -------
    dist : ndarray
        Distance to the nearest source (``inf`` if unreachable).
    nearest : ndarray of int
        Index of that source (-1 if unreachable).
    pred : ndarray of int
        Predecessor towards the nearest source (-1 at sources).
    """
    indptr, indices, data = _graph(mesh)
    n = mesh.n_vertices
    dist = np.full(n, np.inf)
    nearest = np.full(n, -1, dtype=np.int64)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    heap = []
    for s in sorted({int(s) for s in sources}):
        dist[s] = 0.0
        nearest[s] = s
        heap.append((0.0, s, s))
    heapq.heapify(heap)
    while heap:
        d, src, u = heapq.heappop(heap)
        if done[u] or (d, src) != (dist[u], nearest[u]):
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if done[v]:
                continue
            nd = d + data[k]
            if nd < dist[v] or (nd == dist[v] and src < nearest[v]):
                dist[v] = nd
                nearest[v] = src
                pred[v] = u
                heapq.heappush(heap, (nd, src, v))
    return dist, nearest, pred


def _walk(pred, start):
    chain = [int(start)]
    while pred[chain[-1]] >= 0:
        chain.append(int(pred[chain[-1]]))
    return chain


def _chain_length(mesh, chain):
    if len(chain) < 2:
        return 0.0
    v = mesh.vertices[np.asarray(chain)]
    return float(np.linalg.norm(np.diff(v, axis=0), axis=1).sum())


def shortest_path(mesh: TriangleMesh, source: int, targets) -> GeodesicPath:
    """Shortest edge path from ``source`` to the nearest vertex of ``targets``.

    Among equidistant targets the smallest vertex index wins.

    Raises
    ------
    ValueError
        Empty target set.
    UnreachableError
        No target lies in the connected component of ``source``.
    """
    targets = {int(t) for t in targets}
    if not targets:
        raise ValueError("target set is empty")
    source = int(source)
    if source in targets:
        return GeodesicPath((source,), 0.0)
    indptr, indices, data = _graph(mesh)
    n = mesh.n_vertices
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u] or d != dist[u]:
            continue
        done[u] = True
        if u in targets:
            chain = _walk(pred, u)[::-1]
            return GeodesicPath(tuple(chain), _chain_length(mesh, chain))
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            nd = d + data[k]
            if not done[v] and nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    raise UnreachableError(f"no target reachable from vertex {source}")


# ---------------------------------------------------------------- validation
def validate_landmarks(mesh: TriangleMesh, landmarks: LandmarkSet):
    """Raise :class:`ValidationError` if the landmarks break an invariant."""
    n = mesh.n_vertices
    bad = landmarks.crests[(landmarks.crests < 0) | (landmarks.crests >= n)]
    if bad.size:
        raise ValidationError(f"crest vertex {bad[0]} out of range (n_vertices={n})", int(bad[0]))
    adj = mesh.adjacency
    for line_id, chain in enumerate(landmarks.fundi):
        out = chain[(chain < 0) | (chain >= n)]
        if out.size:
            raise ValidationError(
                f"fundus line {line_id}: vertex {out[0]} out of range (n_vertices={n})", int(out[0])
            )
        for a, b in zip(chain[:-1], chain[1:]):
            if adj[a, b] == 0:
                raise ValidationError(
                    f"fundus line {line_id}: consecutive vertices {a} and {b} are not adjacent",
                    (int(a), int(b)),
                )
    overlap = np.intersect1d(landmarks.crests, landmarks.fundus_vertices)
    if overlap.size:
        raise ValidationError(f"vertex {overlap[0]} labeled both crest and fundus", int(overlap[0]))


# ------------------------------------------------------------------------ I/O
def _read_int_csv(path, ncols, header):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            tok = line.split(",")
            if lineno == 1 and not tok[0].lstrip("-").isdigit():
                if [t.strip() for t in tok] != header:
                    raise ParseError(f"{path}: unexpected header {line!r}")
                continue
            try:
                if len(tok) != ncols:
                    raise ValueError
                rows.append([int(t) for t in tok])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: expected {ncols} integer column(s)") from exc
    return rows


def load_landmarks(mesh: TriangleMesh, crest_path, fundi_path) -> LandmarkSet:
    """Read crest (``vertex_index``) and fundus (``vertex_index,line_id``) CSV files.

    Fundus rows keep their file order within each line; lines are ordered by
    ``line_id``. A header row is optional.
    """
    crests = [r[0] for r in _read_int_csv(crest_path, 1, ["vertex_index"])]
    lines = {}
    for vid, lid in _read_int_csv(fundi_path, 2, ["vertex_index", "line_id"]):
        lines.setdefault(lid, []).append(vid)
    ls = LandmarkSet(np.array(crests, dtype=np.int64), [lines[k] for k in sorted(lines)])
    validate_landmarks(mesh, ls)
    return ls


def save_landmarks(landmarks: LandmarkSet, crest_path, fundi_path):
    with open(crest_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("vertex_index\n")
        for c in landmarks.crests:
            fh.write(f"{c}\n")
    with open(fundi_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("vertex_index,line_id\n")
        for lid, chain in enumerate(landmarks.fundi):
            for v in chain:
                fh.write(f"{v},{lid}\n")


def save_paths(paths, path):
    """Write directional lines as ``path_id,sequence_index,vertex_index``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path_id,sequence_index,vertex_index\n")
        for pid, p in enumerate(paths):
            for k, v in enumerate(p.vertices):
                fh.write(f"{pid},{k},{v}\n")


def load_paths(mesh: TriangleMesh, path) -> list:
    chains = {}
    for pid, k, v in _read_int_csv(path, 3, ["path_id", "sequence_index", "vertex_index"]):
        chains.setdefault(pid, []).append((k, v))
    out = []
    for pid in sorted(chains):
        chain = [v for _, v in sorted(chains[pid])]
        out.append(GeodesicPath(tuple(chain), _chain_length(mesh, chain)))
    return out


# ----------------------------------------------------------- directional lines
def directional_lines(mesh: TriangleMesh, landmarks: LandmarkSet, per_line=True) -> LandmarkSet:
    """Mutual-nearest shortest paths between fundus and crest vertices.

    Every fundus vertex is paired with its nearest crest; every crest vertex
    with its nearest fundus vertex; pairs found both ways are kept and joined
    by their shortest path, oriented fundus to crest.

    Parameters
    ----------
    per_line : bool, default=True
        Search the crest-to-fundus direction within each fundus line
        separately (a crest vertex may then anchor one line per fundus). With
        ``False`` all fundus vertices are pooled.

    Raises
    ------
    EmptyResultError
        When no pair is mutually nearest.
    """
    if landmarks.crests.size == 0 or not any(len(c) for c in landmarks.fundi):
        raise ValueError("directional lines need non-empty crest and fundus sets")
    crest_dist, nearest_crest, crest_pred = multi_source_dijkstra(mesh, landmarks.crests)

    groups = landmarks.fundi if per_line else [landmarks.fundus_vertices]
    pairs = set()
    for group in groups:
        group = np.unique(group)
        if group.size == 0:
            continue
        _, nearest_fundus, _ = multi_source_dijkstra(mesh, group)
        from_fundi = {(int(f), int(nearest_crest[f])) for f in group if nearest_crest[f] >= 0}
        from_crests = {(int(nearest_fundus[c]), int(c)) for c in landmarks.crests
                       if nearest_fundus[c] >= 0}
        pairs |= from_fundi & from_crests
    if not pairs:
        raise EmptyResultError("no mutually nearest fundus/crest pair")
    paths = []
    for f, c in sorted(pairs):
        chain = _walk(crest_pred, f)
        paths.append(GeodesicPath(tuple(chain), _chain_length(mesh, chain)))
    logger.debug("%d directional lines from %d candidate pairs", len(paths), len(pairs))
    return LandmarkSet(landmarks.crests, landmarks.fundi, paths)


def verify_directional_lines(mesh: TriangleMesh, landmarks: LandmarkSet, per_line=True,
                             rtol=1e-9) -> np.ndarray:
    """Recompute both nearest-neighbor searches for every directional line.

    Returns a boolean array, True where the fundus end's nearest crest is the
    crest end and the crest end's nearest fundus vertex is the fundus end
    (up to ``rtol`` on path length), and the path is a shortest one.
    """
    ok = np.zeros(len(landmarks.paths), dtype=bool)
    for k, p in enumerate(landmarks.paths):
        f, c = p.source, p.target
        if c not in set(landmarks.crests.tolist()):
            continue
        if per_line:
            pool = [ch for ch in landmarks.fundi if f in set(ch.tolist())]
        else:
            pool = [landmarks.fundus_vertices]
        to_crest = shortest_path(mesh, f, landmarks.crests)
        same_crest = to_crest.target == c or abs(to_crest.length - p.length) <= rtol * max(p.length, 1.0)
        same_fundus = False
        for ch in pool:
            to_fundus = shortest_path(mesh, c, ch)
            if to_fundus.target == f or abs(to_fundus.length - p.length) <= rtol * max(p.length, 1.0):
                same_fundus = True
        shortest = abs(to_crest.length - p.length) <= rtol * max(p.length, 1.0)
        ok[k] = same_crest and same_fundus and shortest
    return ok
