import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from sulcdepth.depth import (SolverConfig, adapt_alpha, compute_depth, dpf, dpf_star, dpf_star_abs,
                             green_impulse, half_peak_radius, laplace_spectrum, solve_spd,
                             spectral_check, sulc)
from sulcdepth.errors import DivergenceError, DomainError, NotClosedError, SolverError
from sulcdepth.mesh import characteristic_length, icosphere, scale_mesh, vertex_areas
from sulcdepth.operators import cotan_stiffness, mass_matrix, mean_curvature
from sulcdepth.stats import linear_regression

from conftest import grid_mesh


def rel_close(a, b, tol):
    """max |a - b| <= tol * max |b|"""
    return np.max(np.abs(a - b)) <= tol * np.max(np.abs(b))


# ---------------------------------------------------------------- dpf
def test_constant_curvature_gives_constant_depth(sphere3):
    d = dpf(sphere3, 500.0, curvature=1.0).values
    assert np.max(np.abs(d - 0.004)) < 1e-6


def test_zero_curvature_gives_zero(sphere3):
    assert np.array_equal(dpf(sphere3, 50.0, np.zeros(sphere3.n_vertices)).values,
                          np.zeros(sphere3.n_vertices))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.1, 1000.0))
def test_dpf_linear_in_curvature(seed, alpha):
    m = icosphere(2)
    k1, k2 = np.random.default_rng(seed).normal(size=(2, m.n_vertices))
    d = dpf(m, alpha, k1 + k2).values
    assert rel_close(d, dpf(m, alpha, k1).values + dpf(m, alpha, k2).values, 1e-10)


def test_dpf_solves_weak_form(wrinkled):
    m, _ = wrinkled
    k = mean_curvature(m)
    d = dpf(m, 0.3, k).values
    a = vertex_areas(m)
    residual = cotan_stiffness(m) @ d + 0.3 * a * d - 2 * a * k
    assert np.max(np.abs(residual)) < 1e-10 * np.max(np.abs(2 * a * k))


def test_negative_alpha_rejected(sphere3):
    with pytest.raises(DomainError):
        dpf(sphere3, -1.0)
    with pytest.raises(DomainError):
        dpf_star(sphere3, -1.0)


def test_alpha_zero_pins_mean(wrinkled):
    m, _ = wrinkled
    k = mean_curvature(m)
    a = vertex_areas(m)
    d = dpf(m, 0.0, k).values
    assert abs(np.dot(a, d)) < 1e-10 * np.dot(a, np.abs(d))
    rhs = 2 * a * (k - np.dot(a, k) / a.sum())
    assert np.max(np.abs(cotan_stiffness(m) @ d - rhs)) < 1e-9 * np.max(np.abs(rhs))
    d_cg = dpf(m, 0.0, k, SolverConfig("conjugate_gradient", cg_tol=1e-12)).values
    assert rel_close(d_cg, d, 1e-8)


def test_alpha_zero_needs_closed_mesh():
    with pytest.raises(DomainError):
        dpf(grid_mesh(5, 5), 0.0, 1.0)


def test_curvature_length_checked(sphere3):
    with pytest.raises(ValueError):
        dpf(sphere3, 1.0, np.ones(3))


def test_solver_backends_agree(wrinkled):
    m, _ = wrinkled
    for alpha in (0.05, 5.0):
        d1 = dpf(m, alpha).values
        d2 = dpf(m, alpha, config=SolverConfig("conjugate_gradient")).values
        assert rel_close(d2, d1, 1e-8)


def test_solver_detects_indefinite_matrix():
    a = sparse.csr_matrix(np.array([[2.0, 0, 0], [0, -1.0, 0.5], [0, 0.5, 3.0]]))
    with pytest.raises(SolverError):
        solve_spd(a, np.ones(3))
    with pytest.raises(SolverError):
        solve_spd(a, np.ones(3), SolverConfig("conjugate_gradient"))


def test_cg_non_convergence(wrinkled):
    m, _ = wrinkled
    with pytest.raises(SolverError):
        dpf(m, 0.01, config=SolverConfig("conjugate_gradient", cg_maxiter=2))


def test_solver_config_validation():
    with pytest.raises(DomainError):
        SolverConfig("lu")
    with pytest.raises(DomainError):
        SolverConfig(cg_tol=0.0)


def test_monotone_filtering(wrinkled, irregular):
    for m in (wrinkled[0], irregular):
        k = mean_curvature(m)
        norms = [np.max(np.abs(dpf(m, a, k).values)) for a in (0.01, 0.1, 1.0, 10.0)]
        assert all(x >= y for x, y in zip(norms, norms[1:]))


# -------------------------------------------------------- scale control
@pytest.mark.parametrize("s", [0.5, 2.0, 5.0])
@pytest.mark.parametrize("alpha", [50.0, 500.0])
def test_scale_control_identity(wrinkled, irregular, s, alpha):
    for m in (wrinkled[0], irregular):
        ref = dpf(m, alpha).values
        scaled = dpf(scale_mesh(m, s), adapt_alpha(s, alpha)).values / s
        assert rel_close(scaled, ref, 1e-8)


def test_adapt_alpha():
    assert adapt_alpha(2.0, 500.0) == 125.0
    assert adapt_alpha(1.0, 37.5) == 37.5
    assert adapt_alpha(5.0, 2000.0) == 80.0
    for s in (0.0, -2.0):
        with pytest.raises(DomainError):
            adapt_alpha(s, 1.0)


@pytest.mark.parametrize("s", [2.0, 3.0, 4.0, 5.0])
def test_dpf_star_invariant(wrinkled, irregular, s):
    for m in (wrinkled[0], irregular):
        ref = dpf_star(m, 500.0)
        out = dpf_star(scale_mesh(m, s), 500.0)
        assert rel_close(out.values, ref.values, 1e-8)
        # the symmetric phantom has tied extrema: compare the near-extremal sets
        tol = 1e-9 * np.max(np.abs(ref.values))
        for v in (ref.values, -ref.values):
            w = out.values if v is ref.values else -out.values
            assert set(np.flatnonzero(v >= v.max() - tol)) == set(np.flatnonzero(w >= w.max() - tol))
        assert out.characteristic_length == pytest.approx(s * ref.characteristic_length, rel=1e-12)
    assert np.argmax(dpf_star(scale_mesh(irregular, s)).values) == np.argmax(dpf_star(irregular).values)


def test_dpf_star_sphere_constant():
    values = []
    for radius in (1.0, 10.0):
        m = icosphere(3, radius=radius)
        d = dpf_star(m, 500.0).values
        # constant solution 2 K / alpha' with K = 1/R and alpha' = 500 / L^2
        L = characteristic_length(m)
        np.testing.assert_allclose(d, 2 * L / (500.0 * radius), rtol=1e-4)
        values.append(d)
    assert rel_close(values[1], values[0], 1e-8)
    assert values[0].mean() == pytest.approx(2 * (4 * np.pi / 3) ** (1 / 3) / 500.0, rel=0.01)
    assert values[0].mean() == pytest.approx(0.006444, rel=0.01)


def test_dpf_star_default_alpha(sphere3):
    assert dpf_star(sphere3).alpha == 500.0
    assert dpf_star(sphere3).units == "1"


def test_dpf_star_needs_closed_mesh():
    with pytest.raises(NotClosedError):
        dpf_star(grid_mesh(4, 4))


def test_dpf_star_abs(wrinkled, sphere3):
    m, _ = wrinkled
    star = dpf_star(m, 500.0)
    ab = dpf_star_abs(m, 500.0)
    assert np.array_equal(ab.values, star.characteristic_length * star.values)
    assert ab.units == "mm"
    for s in (2.0, 5.0):
        assert rel_close(dpf_star_abs(scale_mesh(m, s), 500.0).values, s * ab.values, 1e-8)
    assert dpf_star_abs(sphere3, 500.0).values.mean() == pytest.approx(0.01039, rel=0.01)


def test_dpf_star_abs_vanishes_for_large_alpha(wrinkled):
    m, _ = wrinkled
    norms = [np.linalg.norm(dpf_star_abs(m, a).values) for a in (500.0, 5000.0, 50000.0)]
    assert norms[0] > norms[1] > norms[2]


# ------------------------------------------------------------- Green
def test_green_against_dense_solve():
    m = icosphere(2)
    a = (cotan_stiffness(m) + 500.0 * mass_matrix(m)).toarray()
    e = np.zeros(m.n_vertices)
    e[7] = 1.0
    ref = np.linalg.solve(a, e)
    g = green_impulse(m, 500.0, 7)
    assert rel_close(g, ref, 1e-10)
    assert np.argmax(g) == 7
    assert np.all(g > 0)


def test_green_integral(wrinkled):
    m, _ = wrinkled
    for alpha in (0.01, 1.0):
        g = green_impulse(m, alpha, 11)
        assert alpha * np.dot(vertex_areas(m), g) == pytest.approx(1.0, abs=1e-8)


def test_green_domain(sphere3):
    with pytest.raises(DomainError):
        green_impulse(sphere3, 0.0, 0)
    with pytest.raises(DomainError):
        green_impulse(sphere3, 1.0, sphere3.n_vertices)


def test_half_peak_radius_of_hat():
    # a single hat function on a flat grid: the half level set is the
    # rescaled star of the vertex, a quarter of its area
    m = grid_mesh(5, 5)
    g = np.zeros(m.n_vertices)
    g[12] = 1.0
    star = sum(m.face_areas[np.any(m.faces == 12, axis=1)])
    assert half_peak_radius(m, g, 12) == pytest.approx(np.sqrt(star / 4 / np.pi), rel=1e-12)


# ---------------------------------------------------------- spectral
def test_spectral_check(sphere3):
    assert spectral_check(sphere3, 500.0, k=10) < 1e-6


def test_spectral_constant_mode(sphere3):
    _, info = spectral_check(sphere3, 500.0, k=6, curvature=1.0, return_details=True)
    dc, kc, lam = info["depth_coef"], info["curvature_coef"], info["eigenvalues"]
    assert np.max(np.abs(dc[1:])) < 1e-10 * abs(dc[0])
    assert dc[0] == pytest.approx(2 * kc[0] / (500.0 + lam[0]), rel=1e-10)


def test_spectral_check_scale_independent(irregular):
    d1 = spectral_check(irregular, 0.5, k=10)
    d2 = spectral_check(scale_mesh(irregular, 3.0), 0.5 / 9.0, k=10)
    assert abs(d1 - d2) < 1e-8


def test_laplace_spectrum_m_orthonormal(sphere3):
    _, phi = laplace_spectrum(sphere3, 8)
    gram = phi.T @ (vertex_areas(sphere3)[:, None] * phi)
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-8)
    with pytest.raises(DomainError):
        laplace_spectrum(sphere3, 0)


# --------------------------------------------------------------- sulc
def test_sulc_on_smooth_sphere(sphere3):
    v = sulc(sphere3)
    assert np.max(np.abs(v)) < 0.01 * sphere3.mean_edge_length


def test_sulc_sign_on_landmarks(wrinkled):
    m, lm = wrinkled
    v = sulc(m)
    assert np.mean(v[lm.crests] > 0) >= 0.95
    assert np.mean(v[lm.fundus_vertices] < 0) >= 0.95


def test_sulc_scale_dependence(wrinkled):
    m, _ = wrinkled
    base = sulc(m)
    reg = linear_regression(base, sulc(scale_mesh(m, 2.0)))
    assert 1.7 <= reg.slope <= 2.3
    assert reg.r < 1.0


def test_sulc_divergence(wrinkled):
    with pytest.raises(DivergenceError):
        sulc(wrinkled[0], step=1000.0)


def test_sulc_arguments(sphere3):
    for kw in ({"iterations": 0}, {"step": 0.0}, {"tol": -1.0}):
        with pytest.raises(DomainError):
            sulc(sphere3, **kw)


def test_compute_depth_dispatch(sphere3):
    assert compute_depth(sphere3, "curv").units == "1/mm"
    assert compute_depth(sphere3, "dpf", alpha=2.0).units == "mm"
    assert "runtime_ms" in compute_depth(sphere3, "sulc").meta
    with pytest.raises(DomainError):
        compute_depth(sphere3, "convex_hull")
