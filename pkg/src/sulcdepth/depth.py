"""Sulcal depth estimators.

``dpf`` solves the screened Poisson problem ``(-Δ + α) D = 2K`` in weak form
``(S + α M) D = 2 M K``. Because the cotangent stiffness ``S`` is invariant
under a global scaling by ``s`` while ``M`` scales by ``s²`` and ``K`` by
``1/s``, the solution on ``sM`` with parameter ``α/s²`` equals ``s`` times
the solution on ``M``. ``dpf_star`` exploits this with ``s`` the
characteristic length (cube root of the enclosed volume, reference 1 mm),
which yields a dimensionless, scale-invariant depth.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import DivergenceError, DomainError, EigensolverError, SolverError
from .mesh import TriangleMesh, characteristic_length, vertex_areas
from .operators import cotan_stiffness, mass_matrix, mean_curvature

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_ALPHA",
    "DepthMap",
    "SolverConfig",
    "SulcResult",
    "adapt_alpha",
    "compute_depth",
    "dpf",
    "dpf_star",
    "dpf_star_abs",
    "green_impulse",
    "half_peak_radius",
    "laplace_spectrum",
    "solve_spd",
    "spectral_check",
    "sulc",
]

DEFAULT_ALPHA = 500.0
METHODS = ("dpf", "dpf_star", "dpf_star_abs", "sulc", "curv")
_UNITS = {"dpf": "mm", "dpf_star": "1", "dpf_star_abs": "mm", "sulc": "mm", "curv": "1/mm"}


@dataclass(frozen=True)
class SolverConfig:
    """Linear solver settings.

    ``backend`` is ``"direct_cholesky"`` (sparse LDLᵀ without pivoting, which
    fails on a non positive pivot) or ``"conjugate_gradient"`` (Jacobi
    preconditioned). ``cg_maxiter=None`` means ``10 * n``.
    """

    backend: str = "direct_cholesky"
    cg_tol: float = 1e-10
    cg_maxiter: int | None = None

    def __post_init__(self):
        if self.backend not in ("direct_cholesky", "conjugate_gradient"):
            raise DomainError(f"unknown solver backend {self.backend!r}")
        if not self.cg_tol > 0:
            raise DomainError("cg_tol must be positive")


@dataclass
class DepthMap:
    """Per-vertex depth values with the metadata needed to interpret them."""

    values: np.ndarray
    method: str
    alpha: float | None = None
    characteristic_length: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def units(self) -> str:
        return _UNITS[self.method]

    def __len__(self):
        return len(self.values)


# ---------------------------------------------------------------- linear algebra
def _cholesky_solve(a, b):
    # SymmetricMode with a zero pivot threshold keeps the diagonal pivots, so
    # the factorization is an LDLᵀ whose pivots are all positive iff A is SPD
    try:
        lu = splinalg.splu(
            a.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    pivots = lu.U.diagonal()
    if not np.all(pivots > 0) or not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("matrix is not positive definite (non-positive pivot)")
    return lu.solve(b)


def _cg_solve(a, b, config):
    n = a.shape[0]
    maxiter = config.cg_maxiter or 10 * n
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    precond = sparse.diags(1.0 / diag)
    x, info = splinalg.cg(a, b, rtol=config.cg_tol, atol=0.0, maxiter=maxiter, M=precond)
    if info != 0:
        raise SolverError(f"conjugate gradient did not converge in {maxiter} iterations")
    return x


def solve_spd(a, b, config: SolverConfig | None = None) -> np.ndarray:
    """Solve ``a x = b`` for a sparse symmetric positive definite ``a``."""
    config = config or SolverConfig()
    if config.backend == "direct_cholesky":
        x = _cholesky_solve(a, b)
    else:
        x = _cg_solve(a, b, config)
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    return x


def _solve_pinned(stiff, areas, rhs, config):
    """Solve the singular system ``S x = rhs`` with ``Σ areas·x = 0``.

    ``rhs`` must already be orthogonal to constants.
    """
    n = stiff.shape[0]
    if config.backend == "direct_cholesky":
        col = sparse.csr_matrix(areas.reshape(-1, 1))
        aug = sparse.bmat([[stiff, col], [col.T, None]], format="csc")
        try:
            x = splinalg.splu(aug).solve(np.append(rhs, 0.0))[:n]
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
    else:
        # CG converges on consistent semidefinite systems
        x = _cg_solve(stiff, rhs, config)
        x = x - np.dot(areas, x) / areas.sum()
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    return x


# ---------------------------------------------------------------------- DPF
def _curvature(mesh, curvature, curvature_method):
    if curvature is None:
        return mean_curvature(mesh, curvature_method)
    k = np.asarray(curvature, dtype=np.float64)
    if k.ndim == 0:
        k = np.full(mesh.n_vertices, float(k))
    if k.shape != (mesh.n_vertices,):
        raise ValueError(f"curvature has {k.size} values for {mesh.n_vertices} vertices")
    return k


def dpf(mesh: TriangleMesh, alpha: float, curvature=None, config: SolverConfig | None = None,
        curvature_method="tensor") -> DepthMap:
    """Depth potential function: solution of ``(S + αM) D = 2 M K``.

    Parameters
    ----------
    mesh : TriangleMesh
    alpha : float
        Screening parameter in mm⁻². ``alpha = 0`` is allowed on closed
        connected meshes: the right-hand side is projected onto mean-zero
        functions and the area-weighted mean of ``D`` is pinned to 0.
    curvature : array_like or float, optional
        Mean curvature ``K`` (mm⁻¹); computed with ``curvature_method`` when
        omitted.
    config : SolverConfig, optional

    Returns
    -------
    DepthMap
        Values in mm, positive on convex regions.
    """
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    config = config or SolverConfig()
    k = _curvature(mesh, curvature, curvature_method)
    stiff = cotan_stiffness(mesh)
    areas = vertex_areas(mesh)
    rhs = 2.0 * areas * k
    if alpha == 0.0:
        if not mesh.is_closed or mesh.n_components != 1:
            raise DomainError("alpha = 0 requires a closed connected mesh")
        rhs = rhs - areas * (rhs.sum() / areas.sum())
        values = _solve_pinned(stiff, areas, rhs, config)
    else:
        values = solve_spd((stiff + alpha * sparse.diags(areas)).tocsr(), rhs, config)
    return DepthMap(values, "dpf", alpha, meta={"solver": config.backend})


def adapt_alpha(s: float, alpha: float) -> float:
    """Parameter adaptation for a surface scaled by ``s``: ``alpha / s²``."""
    if not s > 0:
        raise DomainError(f"scale factor must be positive, got {s}")
    return alpha / (s * s)


def dpf_star(mesh: TriangleMesh, alpha: float = DEFAULT_ALPHA, config: SolverConfig | None = None,
             curvature_method="tensor", curvature=None) -> DepthMap:
    """Scale-invariant DPF: ``D* = dpf(M, alpha / L²) / L`` with ``L = V^(1/3)``.

    ``alpha`` is dimensionless (reference length 1 mm). Requires a closed mesh.
    """
    if not np.isfinite(alpha) or alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    length = characteristic_length(mesh)
    raw = dpf(mesh, adapt_alpha(length, alpha), curvature, config, curvature_method)
    return DepthMap(raw.values / length, "dpf_star", float(alpha), length,
                    meta={**raw.meta, "alpha_mm2": raw.alpha})


def dpf_star_abs(mesh: TriangleMesh, alpha: float = DEFAULT_ALPHA, config: SolverConfig | None = None,
                 curvature_method="tensor", curvature=None) -> DepthMap:
    """``L × dpf_star``: scale-controlled depth expressed in mm."""
    star = dpf_star(mesh, alpha, config, curvature_method, curvature)
    length = star.characteristic_length
    return DepthMap(length * star.values, "dpf_star_abs", star.alpha, length, dict(star.meta))


# --------------------------------------------------------- impulse response
def green_impulse(mesh: TriangleMesh, alpha: float, p: int, config: SolverConfig | None = None) -> np.ndarray:
    """Discrete Green's function: solve ``(S + αM) G = e_p``."""
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    if not 0 <= p < mesh.n_vertices:
        raise DomainError(f"vertex {p} out of range")
    a = (cotan_stiffness(mesh) + alpha * mass_matrix(mesh)).tocsr()
    e = np.zeros(mesh.n_vertices)
    e[p] = 1.0
    return solve_spd(a, e, config)


def _superlevel_area(mesh, values, level):
    """Area of ``{x : u(x) >= level}`` for the piecewise linear interpolant ``u``."""
    f = values[mesh.faces]
    area = mesh.face_areas
    above = f >= level
    n_above = above.sum(axis=1)
    total = area[n_above == 3].sum()
    for n_in, inside in ((1, True), (2, False)):
        rows = np.flatnonzero(n_above == n_in)
        if rows.size == 0:
            continue
        sub = f[rows]
        # the odd vertex out is the one above (n_in == 1) or below (n_in == 2)
        odd = np.argmax(above[rows] == inside, axis=1)
        fo = sub[np.arange(len(rows)), odd]
        others = np.stack([sub[np.arange(len(rows)), (odd + 1) % 3],
                           sub[np.arange(len(rows)), (odd + 2) % 3]], axis=1)
        t = (fo[:, None] - level) / (fo[:, None] - others)
        frac = t[:, 0] * t[:, 1]
        total += np.sum(area[rows] * (frac if inside else 1.0 - frac))
    return float(total)


def half_peak_radius(mesh: TriangleMesh, g, p: int) -> float:
    """Radius of the disc whose area equals ``{G >= G(p)/2}`` (mm).

    The region is measured on the linear interpolant, so the radius varies
    continuously even when it is smaller than one edge.
    """
    g = np.asarray(g, dtype=np.float64)
    return float(np.sqrt(_superlevel_area(mesh, g, 0.5 * g[p]) / np.pi))


# ----------------------------------------------------------------- spectrum
def laplace_spectrum(mesh: TriangleMesh, k: int):
    """First ``k`` generalized eigenpairs of ``S φ = λ M φ`` (M-orthonormal)."""
    n = mesh.n_vertices
    if not 0 < k < n - 1:
        raise DomainError(f"k must be in [1, {n - 2}], got {k}")
    stiff = cotan_stiffness(mesh).tocsc()
    mass = mass_matrix(mesh).tocsc()
    # a small negative shift keeps S - σM definite; scaled to the mesh so the
    # shift transforms with the spectrum
    sigma = -1e-6 * stiff.diagonal().sum() / mass.diagonal().sum()
    try:
        lam, phi = splinalg.eigsh(stiff, k=k, M=mass, sigma=sigma, which="LM")
    except (splinalg.ArpackNoConvergence, splinalg.ArpackError, RuntimeError) as exc:
        raise EigensolverError(str(exc)) from exc
    order = np.argsort(lam)
    return lam[order], phi[:, order]


def spectral_check(mesh: TriangleMesh, alpha: float, k: int = 10, curvature=None,
                   config: SolverConfig | None = None, curvature_method="tensor",
                   return_details=False):
    """Compare the DPF solution with its spectral transfer function.

    Projects ``K`` and ``D = dpf(mesh, alpha)`` on the first ``k``
    eigenfunctions and returns
    ``max_i |D_i - 2 K_i / (alpha + λ_i)| / max_i |D_i|``.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    kk = _curvature(mesh, curvature, curvature_method)
    d = dpf(mesh, alpha, kk, config).values
    lam, phi = laplace_spectrum(mesh, k)
    areas = vertex_areas(mesh)
    k_coef = phi.T @ (areas * kk)
    d_coef = phi.T @ (areas * d)
    predicted = 2.0 * k_coef / (alpha + lam)
    scale = np.max(np.abs(d_coef))
    disc = float(np.max(np.abs(d_coef - predicted)) / scale) if scale > 0 else 0.0
    if return_details:
        return disc, {"eigenvalues": lam, "depth_coef": d_coef, "curvature_coef": k_coef}
    return disc


# --------------------------------------------------------------------- SULC
@dataclass
class SulcResult:
    values: np.ndarray
    iterations: int
    converged: bool
    final_vertices: np.ndarray


def _umbrella_flow(vertices, edges, d0, lam, degree):
    """Neighbour-average displacement with a metric-preservation factor."""
    e = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    d = np.linalg.norm(e, axis=1)
    factor = 1.0 + lam * (d - d0) / np.where(d > 0, d, 1.0)
    contrib = e * factor[:, None]
    acc = np.zeros_like(vertices)
    np.add.at(acc, edges[:, 0], contrib)
    np.add.at(acc, edges[:, 1], -contrib)
    return acc / np.maximum(degree, 1)[:, None]


def sulc(mesh: TriangleMesh, iterations: int = 1000, step: float = 0.5, lam: float = 0.5,
         tol: float = 1e-3, return_details=False):
    """Inflation-based depth (SULC-like).

    A copy of the mesh is inflated by explicit steps of a neighbour-average
    flow with a metric-preservation term weighted by ``lam``. The signed
    displacement along the current vertex normal is accumulated at every
    step, after removing its area-weighted mean (a uniform shrinkage is not
    depth); the inflated surface is rescaled to its initial area about its
    centroid after every step. The sign is flipped so crests are positive.

    Parameters
    ----------
    iterations : int
        Maximum number of steps.
    step : float
        Dimensionless relaxation factor applied to the flow.
    lam : float
        Weight of the metric-preservation term.
    tol : float
        Absolute stopping threshold (mm) on the mean normal displacement of
        a step. Being absolute, it makes the result depend on the mesh size.

    Raises
    ------
    DivergenceError
        When a vertex moves by more than ten mean edge lengths in one step.
    """
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    if not step > 0:
        raise DomainError("step must be > 0")
    if tol < 0:
        raise DomainError("tol must be >= 0")
    edges = mesh.edges
    d0 = mesh.edge_lengths
    degree = mesh.vertex_degrees
    limit = 10.0 * mesh.mean_edge_length
    area0 = mesh.total_area
    x = mesh.vertices.copy()
    acc = np.zeros(mesh.n_vertices)
    current = mesh
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        normals = current.vertex_normals
        areas = vertex_areas(current)
        move = step * _umbrella_flow(x, edges, d0, lam, degree)
        if np.max(np.linalg.norm(move, axis=1)) > limit:
            raise DivergenceError(f"vertex displacement exceeded {limit:.4g} mm at step {it}")
        normal_move = np.einsum("ij,ij->i", move, normals)
        normal_move -= np.dot(areas, normal_move) / areas.sum()
        acc += normal_move
        x = x + move
        current = mesh.copy_with_vertices(x)
        centroid = np.dot(vertex_areas(current), x) / current.total_area
        x = centroid + (x - centroid) * np.sqrt(area0 / current.total_area)
        current = mesh.copy_with_vertices(x)
        if np.dot(areas, np.abs(normal_move)) / areas.sum() < tol:
            converged = True
            break
    values = -acc
    if return_details:
        return SulcResult(values, it, converged, x)
    return values


# --------------------------------------------------------------- dispatcher
def compute_depth(mesh: TriangleMesh, method: str, alpha: float = DEFAULT_ALPHA,
                  config: SolverConfig | None = None, curvature_method="tensor",
                  sulc_options: dict | None = None) -> DepthMap:
    """Run one of ``dpf``, ``dpf_star``, ``dpf_star_abs``, ``sulc``, ``curv``."""
    t0 = time.perf_counter()
    if method == "dpf":
        out = dpf(mesh, alpha, None, config, curvature_method)
    elif method == "dpf_star":
        out = dpf_star(mesh, alpha, config, curvature_method)
    elif method == "dpf_star_abs":
        out = dpf_star_abs(mesh, alpha, config, curvature_method)
    elif method == "sulc":
        res = sulc(mesh, **(sulc_options or {}), return_details=True)
        out = DepthMap(res.values, "sulc", None,
                       meta={"iterations": res.iterations, "converged": res.converged})
    elif method == "curv":
        out = DepthMap(mean_curvature(mesh, curvature_method), "curv", None,
                       meta={"curvature": curvature_method})
    else:
        raise DomainError(f"unknown depth method {method!r}; expected one of {METHODS}")
    out.meta["runtime_ms"] = 1e3 * (time.perf_counter() - t0)
    return out
