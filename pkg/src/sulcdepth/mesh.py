"""Triangle meshes: representation, validation, file I/O and global geometry.

All lengths are millimeters. A :class:`TriangleMesh` is immutable once built;
derived quantities (normals, areas, adjacency) are computed lazily and cached.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, NotClosedError, ParseError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "GlobalGeometry",
    "TriangleMesh",
    "characteristic_length",
    "enclosed_volume",
    "global_geometry",
    "icosphere",
    "load_field",
    "load_mesh",
    "save_field",
    "save_mesh",
    "scale_mesh",
    "vertex_areas",
]


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class TriangleMesh:
    """Immutable triangle surface mesh.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex coordinates in millimeters.
    faces : array_like, shape (m, 3)
        Vertex indices of each triangle, counter-clockwise seen from outside.
    validate : bool, default=True
        Check the structural invariants (index range, degenerate faces,
        finite coordinates, edge-manifoldness, consistent orientation).

    Raises
    ------
    ValidationError
        If an invariant is violated; ``err.index`` names the offending element.
    """

    def __init__(self, vertices, faces, validate=True):
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValidationError(f"faces must have shape (m, 3), got {f.shape}")
        if f.size and not np.issubdtype(f.dtype, np.integer):
            if not np.all(np.equal(np.mod(f, 1), 0)):
                raise ValidationError("face indices must be integers")
        self._v = _readonly(v)
        self._f = _readonly(f.astype(np.int64))
        if validate:
            self._validate()

    # ------------------------------------------------------------------ basics
    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def faces(self) -> np.ndarray:
        return self._f

    @property
    def n_vertices(self) -> int:
        return self._v.shape[0]

    @property
    def n_faces(self) -> int:
        return self._f.shape[0]

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    def _validate(self):
        v, f = self._v, self._f
        bad = np.flatnonzero(~np.all(np.isfinite(v), axis=1))
        if bad.size:
            raise ValidationError(f"non-finite coordinate at vertex {bad[0]}", int(bad[0]))
        if f.size == 0:
            return
        out = np.flatnonzero(np.any((f < 0) | (f >= self.n_vertices), axis=1))
        if out.size:
            raise ValidationError(
                f"face {out[0]} has vertex index out of range "
                f"(n_vertices={self.n_vertices}): {f[out[0]].tolist()}",
                int(out[0]),
            )
        degenerate = np.flatnonzero(
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if degenerate.size:
            raise ValidationError(
                f"degenerate face {degenerate[0]}: {f[degenerate[0]].tolist()}",
                int(degenerate[0]),
            )
        counts = self._edge_face_counts
        over = np.flatnonzero(counts > 2)
        if over.size:
            e = self.edges[over[0]]
            raise ValidationError(
                f"non-manifold edge ({e[0]}, {e[1]}) shared by {counts[over[0]]} faces",
                (int(e[0]), int(e[1])),
            )
        # an interior edge must appear once in each direction
        directed = self._directed_edges
        key = directed[:, 0] * self.n_vertices + directed[:, 1]
        uniq, idx, cnt = np.unique(key, return_index=True, return_counts=True)
        dup = np.flatnonzero(cnt > 1)
        if dup.size:
            e = directed[idx[dup[0]]]
            raise ValidationError(
                f"inconsistent face orientation at edge ({e[0]}, {e[1]})",
                (int(e[0]), int(e[1])),
            )

    # -------------------------------------------------------------- topology
    @cached_property
    def _directed_edges(self):
        f = self._f
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)

    @cached_property
    def _edge_data(self):
        d = np.sort(self._directed_edges, axis=1)
        uniq, inverse, counts = np.unique(d, axis=0, return_inverse=True, return_counts=True)
        return uniq.reshape(-1, 2), inverse.ravel(), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(i, j)`` with ``i < j``."""
        return self._edge_data[0]

    @property
    def _edge_face_counts(self):
        return self._edge_data[2]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self._edge_face_counts == 1]

    @cached_property
    def is_closed(self) -> bool:
        return self.n_faces > 0 and bool(np.all(self._edge_face_counts == 2))

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency weighted by Euclidean edge length."""
        e = self.edges
        w = self.edge_lengths
        n = self.n_vertices
        a = sparse.coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                      np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(n, n),
        )
        return a.tocsr()

    @cached_property
    def neighbors(self) -> list:
        """Sorted neighbor indices of every vertex."""
        a = self.adjacency
        return [a.indices[a.indptr[i]:a.indptr[i + 1]] for i in range(self.n_vertices)]

    @cached_property
    def n_components(self) -> int:
        n, _ = connected_components(self.adjacency, directed=False)
        return int(n)

    @cached_property
    def vertex_degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    # -------------------------------------------------------------- geometry
    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self._v[e[:, 1]] - self._v[e[:, 0]], axis=1)

    @cached_property
    def mean_edge_length(self) -> float:
        return float(self.edge_lengths.mean())

    @cached_property
    def _face_cross(self):
        v0, v1, v2 = (self._v[self._f[:, k]] for k in range(3))
        return np.cross(v1 - v0, v2 - v0)

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _readonly(0.5 * np.linalg.norm(self._face_cross, axis=1))

    @cached_property
    def face_normals(self) -> np.ndarray:
        c = self._face_cross
        norm = np.linalg.norm(c, axis=1, keepdims=True)
        return _readonly(c / np.where(norm > 0, norm, 1.0))

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (unit length; zero for isolated vertices)."""
        acc = np.zeros_like(self._v)
        for k in range(3):
            np.add.at(acc, self._f[:, k], self._face_cross)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return _readonly(acc / np.where(norm > 0, norm, 1.0))

    @cached_property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    def copy_with_vertices(self, vertices) -> "TriangleMesh":
        """New mesh sharing this connectivity, without re-validating topology."""
        m = TriangleMesh(vertices, self._f, validate=False)
        bad = np.flatnonzero(~np.all(np.isfinite(m.vertices), axis=1))
        if bad.size:
            raise ValidationError(f"non-finite coordinate at vertex {bad[0]}", int(bad[0]))
        # topology caches are position independent
        for name in ("_directed_edges", "_edge_data", "is_closed", "n_components"):
            if name in self.__dict__:
                m.__dict__[name] = self.__dict__[name]
        return m


@dataclass(frozen=True)
class GlobalGeometry:
    """Size descriptors of a closed surface (mm², mm³, mm)."""

    total_area: float
    volume: float
    characteristic_length: float


# ---------------------------------------------------------------- generators
def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Geodesic sphere obtained by midpoint subdivision of an icosahedron.

    Faces are oriented outward. ``subdivisions=k`` yields ``10 * 4**k + 2``
    vertices.
    """
    if radius <= 0:
        raise DomainError("radius must be positive")
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = np.array(verts, dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(faces, dtype=np.int64)
    for _ in range(int(subdivisions)):
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(f)
        a = inv[:m] + len(v)
        b = inv[m:2 * m] + len(v)
        c = inv[2 * m:] + len(v)
        v = np.vstack([v, mid])
        f = np.concatenate([
            np.column_stack([f[:, 0], a, c]),
            np.column_stack([f[:, 1], b, a]),
            np.column_stack([f[:, 2], c, b]),
            np.column_stack([a, b, c]),
        ])
    return TriangleMesh(v * radius + np.asarray(center, dtype=np.float64), f)


# ------------------------------------------------------------------- measures
def vertex_areas(mesh: TriangleMesh) -> np.ndarray:
    """Barycentric vertex areas: a third of the incident face areas (mm²)."""
    a = np.zeros(mesh.n_vertices)
    third = mesh.face_areas / 3.0
    for k in range(3):
        np.add.at(a, mesh.faces[:, k], third)
    return a


def enclosed_volume(mesh: TriangleMesh) -> float:
    """Volume enclosed by a closed mesh via the divergence theorem (mm³).

    The absolute value is returned, so inward oriented meshes are fine.
    """
    if not mesh.is_closed:
        n_open = len(mesh.boundary_edges)
        raise NotClosedError(f"mesh has {n_open} boundary edges; volume undefined")
    v = mesh.vertices
    f = mesh.faces
    signed = np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0
    return float(abs(signed))


def characteristic_length(mesh: TriangleMesh) -> float:
    """Cube root of the enclosed volume (mm)."""
    return float(np.cbrt(enclosed_volume(mesh)))


def global_geometry(mesh: TriangleMesh) -> GlobalGeometry:
    vol = enclosed_volume(mesh)
    return GlobalGeometry(mesh.total_area, vol, float(np.cbrt(vol)))


def scale_mesh(mesh: TriangleMesh, s: float) -> TriangleMesh:
    """Multiply every coordinate by ``s > 0``; connectivity is shared."""
    if not s > 0 or not np.isfinite(s):
        raise DomainError(f"scale factor must be positive and finite, got {s}")
    return mesh.copy_with_vertices(mesh.vertices * float(s))


# ------------------------------------------------------------------------ I/O
_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _fan(poly):
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def _parse_ply_header(fh, path):
    magic = fh.readline().strip()
    if magic != b"ply":
        raise ParseError(f"{path}: not a PLY file")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise ParseError(f"{path}: unexpected end of file in PLY header")
        tok = line.decode("ascii", errors="replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            try:
                if tok[1] == "list":
                    prop = (tok[4], "list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])
                else:
                    prop = (tok[2], "scalar", _PLY_TYPES[tok[1]], None)
            except (KeyError, IndexError) as exc:
                raise ParseError(f"{path}: bad property line {line!r}") from exc
            elements[-1]["props"].append(prop)
        else:
            raise ParseError(f"{path}: unknown header keyword {tok[0]!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_ply_ascii(fh, elements, path):
    data = {}
    for el in elements:
        rows = []
        for r in range(el["count"]):
            line = fh.readline()
            if not line:
                raise ParseError(f"{path}: truncated {el['name']} element at row {r}")
            tok = line.split()
            vals = {}
            pos = 0
            try:
                for name, kind, t, it in el["props"]:
                    if kind == "scalar":
                        vals[name] = float(tok[pos])
                        pos += 1
                    else:
                        cnt = int(tok[pos])
                        vals[name] = [int(x) for x in tok[pos + 1:pos + 1 + cnt]]
                        if len(vals[name]) != cnt:
                            raise IndexError
                        pos += 1 + cnt
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}: malformed {el['name']} row {r}") from exc
            rows.append(vals)
        data[el["name"]] = rows
    return data


def _read_ply_binary(fh, elements, path):
    buf = fh.read()
    off = 0
    data = {}
    for el in elements:
        props = el["props"]
        if all(kind == "scalar" for _, kind, _, _ in props):
            dt = np.dtype([(name, "<" + t) for name, _, t, _ in props])
            need = dt.itemsize * el["count"]
            if off + need > len(buf):
                raise ParseError(f"{path}: truncated binary {el['name']} block")
            arr = np.frombuffer(buf, dtype=dt, count=el["count"], offset=off)
            off += need
            data[el["name"]] = arr
            continue
        # fast path: a single list property holding triangles only
        if len(props) == 1 and props[0][1] == "list":
            name, _, ct, it = props[0]
            dt = np.dtype([("n", "<" + ct), ("idx", "<" + it, (3,))])
            need = dt.itemsize * el["count"]
            if off + need <= len(buf):
                arr = np.frombuffer(buf, dtype=dt, count=el["count"], offset=off)
                if np.all(arr["n"] == 3):
                    data[el["name"]] = [{name: row} for row in arr["idx"].tolist()]
                    off += need
                    continue
        rows = []
        for r in range(el["count"]):
            vals = {}
            for name, kind, t, it in props:
                if kind == "scalar":
                    size = np.dtype(t).itemsize
                    if off + size > len(buf):
                        raise ParseError(f"{path}: truncated binary {el['name']} row {r}")
                    vals[name] = np.frombuffer(buf, "<" + t, 1, off)[0]
                    off += size
                else:
                    csize = np.dtype(t).itemsize
                    if off + csize > len(buf):
                        raise ParseError(f"{path}: truncated binary {el['name']} row {r}")
                    cnt = int(np.frombuffer(buf, "<" + t, 1, off)[0])
                    off += csize
                    isize = np.dtype(it).itemsize
                    if off + cnt * isize > len(buf):
                        raise ParseError(f"{path}: truncated binary {el['name']} row {r}")
                    vals[name] = np.frombuffer(buf, "<" + it, cnt, off).tolist()
                    off += cnt * isize
            rows.append(vals)
        data[el["name"]] = rows
    return data


def _read_ply(path):
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        if fmt == "ascii":
            data = _read_ply_ascii(fh, elements, path)
        else:
            data = _read_ply_binary(fh, elements, path)
    return elements, data


def _ply_vertices(data, path):
    if "vertex" not in data:
        raise ParseError(f"{path}: no vertex element")
    rows = data["vertex"]
    if isinstance(rows, np.ndarray):
        try:
            return np.column_stack([rows[c].astype(np.float64) for c in "xyz"]), rows
        except (ValueError, KeyError) as exc:
            raise ParseError(f"{path}: vertex element lacks x/y/z") from exc
    try:
        return np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64).reshape(-1, 3), rows
    except KeyError as exc:
        raise ParseError(f"{path}: vertex element lacks x/y/z") from exc


def _read_ply_mesh(path):
    _, data = _read_ply(path)
    v, _ = _ply_vertices(data, path)
    tris = []
    for r in data.get("face", []):
        idx = r.get("vertex_indices", r.get("vertex_index"))
        if idx is None:
            raise ParseError(f"{path}: face element lacks vertex_indices")
        if len(idx) < 3:
            raise ParseError(f"{path}: face with fewer than 3 vertices")
        tris.extend(_fan(list(idx)))
    return v, np.array(tris, dtype=np.int64).reshape(-1, 3)


def _read_obj_mesh(path):
    verts, tris = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(x) for x in tok[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError
                elif tok[0] == "f":
                    poly = []
                    for t in tok[1:]:
                        k = int(t.split("/")[0])
                        poly.append(k - 1 if k > 0 else len(verts) + k)
                    if len(poly) < 3:
                        raise ValueError
                    tris.extend(_fan(poly))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: malformed {tok[0]!r} record") from exc
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3)


def load_mesh(path, format="auto") -> TriangleMesh:
    """Read a PLY (ASCII or binary little-endian) or OBJ triangle mesh.

    Polygons with more than three vertices are fan-triangulated.

    Raises
    ------
    ParseError
        Malformed file.
    ValidationError
        Structural problem in the parsed mesh.
    """
    path = Path(path)
    if format == "auto":
        format = path.suffix.lower().lstrip(".")
    if format == "ply":
        v, f = _read_ply_mesh(path)
    elif format == "obj":
        v, f = _read_obj_mesh(path)
    else:
        raise ParseError(f"{path}: unsupported mesh format {format!r}")
    return TriangleMesh(v, f)


def save_mesh(mesh: TriangleMesh, path, binary=True, quality=None):
    """Write a PLY mesh, optionally with a per-vertex ``quality`` scalar."""
    n = mesh.n_vertices
    props = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if quality is not None:
        quality = np.asarray(quality, dtype=np.float64)
        if quality.shape != (n,):
            raise ValueError(f"quality has {quality.size} values for {n} vertices")
        props.append(("quality", "<f8"))
    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if quality is not None:
        header.append("property double quality")
    header += [
        f"element face {mesh.n_faces}",
        "property list uchar uint vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            vrec = np.empty(n, dtype=props)
            vrec["x"], vrec["y"], vrec["z"] = mesh.vertices.T
            if quality is not None:
                vrec["quality"] = quality
            fh.write(vrec.tobytes())
            frec = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<u4", (3,))])
            frec["n"] = 3
            frec["idx"] = mesh.faces
            fh.write(frec.tobytes())
        else:
            cols = [mesh.vertices] if quality is None else [mesh.vertices, quality[:, None]]
            for row in np.hstack(cols):
                fh.write((" ".join(repr(float(x)) for x in row) + "\n").encode("ascii"))
            for tri in mesh.faces:
                fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n".encode("ascii"))


def _write_field_csv(values, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("vertex_index,value\n")
        for i, x in enumerate(values):
            fh.write(f"{i},{float(x)!r}\n")


def save_field(mesh: TriangleMesh, field, path):
    """Write a per-vertex scalar field.

    A CSV ``vertex_index,value`` file is always written. When ``path`` ends in
    ``.ply`` the mesh is written there with the field as the ``quality``
    vertex property, and the CSV goes next to it with a ``.csv`` suffix.
    """
    values = np.asarray(getattr(field, "values", field), dtype=np.float64)
    if values.shape != (mesh.n_vertices,):
        raise ValueError(
            f"field has {values.size} values but the mesh has {mesh.n_vertices} vertices"
        )
    path = Path(path)
    if path.suffix.lower() == ".ply":
        save_mesh(mesh, path, binary=True, quality=values)
        _write_field_csv(values, path.with_suffix(".csv"))
    else:
        _write_field_csv(values, path)


def load_field(path) -> np.ndarray:
    """Read a field written by :func:`save_field` (CSV or PLY ``quality``)."""
    path = Path(path)
    if path.suffix.lower() == ".ply":
        _, data = _read_ply(path)
        rows = data.get("vertex")
        if isinstance(rows, np.ndarray):
            if "quality" not in rows.dtype.names:
                raise ParseError(f"{path}: no quality vertex property")
            return rows["quality"].astype(np.float64)
        try:
            return np.array([r["quality"] for r in rows], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: no quality vertex property") from exc
    idx, vals = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "vertex_index,value":
            raise ParseError(f"{path}: expected header 'vertex_index,value', got {header!r}")
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            try:
                a, b = line.split(",")
                idx.append(int(a))
                vals.append(float(b))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: malformed row") from exc
    idx = np.asarray(idx)
    if not np.array_equal(idx, np.arange(len(idx))):
        raise ParseError(f"{path}: vertex indices must be 0..n-1 in order")
    return np.asarray(vals, dtype=np.float64)


def mesh_id(path) -> str:
    """Subject identifier derived from a mesh file name."""
    return os.path.splitext(os.path.basename(str(path)))[0]
