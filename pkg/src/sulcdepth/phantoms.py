"""Synthetic folded surfaces with analytically known crests and fundi.

The wrinkled sphere displaces an icosphere radially by
``A cos(f θ)`` (θ the polar angle), which produces ring-shaped ridges at
``θ = 2πj/f`` and valleys at ``θ = (2j+1)π/f``. Two optional terms make the
surface less ideal: a smooth low-frequency lobe that bends the global shape,
and smoothed random bumps that roughen the local curvature.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, EmptyResultError
from .landmarks import LandmarkSet, shortest_path
from .mesh import TriangleMesh, icosphere

__all__ = [
    "PhantomSpec",
    "expe1_suite",
    "expe3_family",
    "generate_phantom",
    "irregular_phantom",
    "phantom_mesh",
    "two_ridge_phantom",
]


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of a wrinkled sphere.

    ``noise`` and ``lobe`` are expressed as fractions of ``amplitude`` and
    ``radius`` respectively.
    """

    radius: float = 30.0
    amplitude: float = 3.0
    frequency: int = 6
    subdiv: int = 4
    seed: int = 0
    noise: float = 0.0
    lobe: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        if not 0 <= self.amplitude < self.radius / 2:
            raise DomainError("amplitude must lie in [0, radius/2)")
        if int(self.frequency) != self.frequency or self.frequency < 1:
            raise DomainError("frequency must be an integer >= 1")
        if self.subdiv < 0:
            raise DomainError("subdiv must be >= 0")
        if self.noise < 0 or not 0 <= self.lobe < 0.5:
            raise DomainError("noise must be >= 0 and lobe in [0, 0.5)")

    def to_dict(self) -> dict:
        return asdict(self)


def _smooth_noise(base: TriangleMesh, rng, passes=3):
    """Unit-variance random field smoothed by neighbour averaging."""
    x = rng.standard_normal(base.n_vertices)
    adj = base.adjacency.copy()
    adj.data[:] = 1.0
    deg = np.asarray(adj.sum(axis=1)).ravel()
    for _ in range(passes):
        x = 0.5 * x + 0.5 * (adj @ x) / deg
    x -= x.mean()
    sd = x.std()
    return x / sd if sd > 0 else x


def _radial_profile(spec: PhantomSpec, base: TriangleMesh):
    u = base.vertices
    theta = np.arccos(np.clip(u[:, 2], -1.0, 1.0))
    phi = np.arctan2(u[:, 1], u[:, 0])
    r = spec.radius + spec.amplitude * np.cos(spec.frequency * theta)
    if spec.lobe > 0:
        # a two-lobed bulge in longitude: the ridges no longer sit at a
        # constant height, which a large-scale depth picks up
        r = r + spec.lobe * spec.radius * np.cos(2 * phi) * np.sin(theta) ** 2
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        r = r + spec.noise * spec.amplitude * _smooth_noise(base, rng)
    return r, theta


def phantom_mesh(spec: PhantomSpec) -> TriangleMesh:
    """Mesh of the wrinkled sphere described by ``spec``."""
    base = icosphere(spec.subdiv)
    r, _ = _radial_profile(spec, base)
    return TriangleMesh(base.vertices * r[:, None], base.faces)


def _chain_gaps(mesh, chain):
    """Join consecutive vertices that do not share an edge by shortest paths."""
    out = [int(chain[0])]
    neigh = mesh.neighbors
    for v in chain[1:]:
        v = int(v)
        if v == out[-1]:
            continue
        if v in neigh[out[-1]]:
            out.append(v)
        else:
            out.extend(shortest_path(mesh, out[-1], [v]).vertices[1:])
    # a closed ring may revisit its start; keep the open chain
    seen, uniq = set(), []
    for v in out:
        if v in seen:
            break
        seen.add(v)
        uniq.append(v)
    return np.asarray(uniq, dtype=np.int64)


def _ring_chain(mesh, unit, theta0, n_samples):
    """Vertices nearest to dense samples of the circle of polar angle theta0."""
    t = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    pts = np.stack([np.sin(theta0) * np.cos(t), np.sin(theta0) * np.sin(t),
                    np.full_like(t, np.cos(theta0))], axis=1)
    # angular nearest neighbour on the base sphere
    nearest = np.argmax(pts @ unit.T, axis=1)
    keep = np.concatenate([[True], nearest[1:] != nearest[:-1]])
    return _chain_gaps(mesh, nearest[keep])


def generate_phantom(spec: PhantomSpec):
    """Wrinkled-sphere mesh with its crest and fundus annotations.

    Crest vertices lie within half a mean edge length (measured along the
    base sphere) of a ridge circle strictly between the poles. Fundus chains
    follow each valley circle through the nearest vertices, with gaps closed
    by shortest paths.

    Returns
    -------
    (TriangleMesh, LandmarkSet)

    Raises
    ------
    EmptyResultError
        When the surface has no wrinkles (``amplitude = 0``); the mesh is
        attached to the exception as ``.mesh``.
    """
    base = icosphere(spec.subdiv)
    mesh = phantom_mesh(spec)
    if spec.amplitude == 0:
        err = EmptyResultError("a phantom without wrinkles has no landmarks")
        err.mesh = mesh
        raise err
    _, theta = _radial_profile(spec, base)
    f = spec.frequency
    h = base.mean_edge_length
    ridges = [2 * np.pi * j / f for j in range(1, f) if 0 < 2 * np.pi * j / f < np.pi]
    valleys = [(2 * j + 1) * np.pi / f for j in range(f) if (2 * j + 1) * np.pi / f < np.pi]
    crest_mask = np.zeros(mesh.n_vertices, dtype=bool)
    for tr in ridges:
        crest_mask |= np.abs(theta - tr) < 0.5 * h
    n_samples = int(np.ceil(8 * 2 * np.pi / h))
    fundi = []
    for tv in valleys:
        if np.sin(tv) * 2 * np.pi < 3 * h:
            continue
        chain = _ring_chain(mesh, base.vertices, tv, n_samples)
        chain = chain[~crest_mask[chain]]
        if chain.size:
            fundi.append(chain)
    crests = np.flatnonzero(crest_mask)
    if crests.size == 0 or not fundi:
        err = EmptyResultError("phantom resolution too coarse for its wrinkles")
        err.mesh = mesh
        raise err
    return mesh, LandmarkSet(crests, fundi)


def irregular_phantom(subdiv=4, seed=1, axes=(40.0, 30.0, 25.0), n_bumps=12, bump_height=0.12):
    """Ellipsoid roughened by random Gaussian bumps (no symmetry)."""
    rng = np.random.default_rng(seed)
    base = icosphere(subdiv)
    u = base.vertices
    centers = rng.standard_normal((n_bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    heights = bump_height * rng.uniform(-1.0, 1.0, n_bumps)
    widths = rng.uniform(0.25, 0.6, n_bumps)
    cosd = u @ centers.T
    r = 1.0 + np.sum(heights * np.exp(-(1.0 - cosd) / widths**2), axis=1)
    return TriangleMesh(u * r[:, None] * np.asarray(axes), base.faces)


def two_ridge_phantom(nx=21, ny=15, wavelength=20.0, height=4.0, width=None):
    """Planar height field ``z = H cos(2πx/λ)`` over ``x ∈ [0, λ]``.

    The two ridges are the grid columns at ``x = 0`` and ``x = λ``; the single
    fundus is the column at ``x = λ/2`` ordered by increasing ``y``.
    ``nx`` must be odd.
    """
    if nx < 3 or nx % 2 == 0:
        raise DomainError("nx must be odd and >= 3")
    width = wavelength * (ny - 1) / (nx - 1) if width is None else width
    x = np.linspace(0.0, wavelength, nx)
    y = np.linspace(0.0, width, ny)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    zz = height * np.cos(2 * np.pi * xx / wavelength)
    verts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    idx = np.arange(nx * ny).reshape(nx, ny)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            faces += [(a, b, c), (a, c, d)]
    mesh = TriangleMesh(verts, np.asarray(faces))
    crests = np.concatenate([idx[0], idx[-1]])
    fundus = idx[nx // 2]
    return mesh, LandmarkSet(crests, [fundus])


def expe1_suite(n=6, subdiv=4, seed=0, noise=0.05, lobe=0.15, rel_amplitude=0.1):
    """Specs of the phantom suite used to sweep the depth parameter.

    Sizes and wrinkle counts vary across the suite; every member carries the
    same relative amplitude, a global lobe and mild surface roughness.
    """
    rng = np.random.default_rng(seed)
    specs = []
    for k in range(n):
        radius = float(rng.uniform(25.0, 40.0))
        specs.append(PhantomSpec(
            radius=radius,
            amplitude=rel_amplitude * radius,
            frequency=int(rng.choice([6, 7, 8])),
            subdiv=subdiv,
            seed=int(seed * 1000 + k),
            noise=noise,
            lobe=lobe,
        ))
    return specs


def expe3_family(n=40, subdiv=3, l_span=4.0, seed=0):
    """Population of phantoms with graded sizes and coupled folding.

    Radii grow geometrically over a factor ``l_span``; the relative wrinkle
    amplitude grows with size, mimicking the coupling between brain size and
    folding.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n)
    radii = 20.0 * l_span**t
    rel_amp = 0.05 + 0.05 * t
    specs = []
    for k in range(n):
        specs.append(PhantomSpec(
            radius=float(radii[k]),
            amplitude=float(rel_amp[k] * radii[k]),
            frequency=6,
            subdiv=subdiv,
            seed=int(seed * 1000 + k),
            noise=float(rng.uniform(0.1, 0.3)),
            lobe=0.0,
        ))
    return specs
