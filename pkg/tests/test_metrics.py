import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sulcdepth.depth import DepthMap, dpf_star
from sulcdepth.errors import DegenerateError
from sulcdepth.landmarks import GeodesicPath, LandmarkSet, directional_lines
from sulcdepth.mesh import TriangleMesh
from sulcdepth.metrics import dev, dev_angles, evaluate, ipr, sep, std_crest
from sulcdepth.phantoms import expe1_suite, generate_phantom

from conftest import grid_mesh

NX, NY = 11, 5


@pytest.fixture(scope="module")
def strip_setup():
    m = grid_mesh(NX, NY)
    row = [i * NY + 2 for i in range(NX)]  # the middle row, increasing x
    lm = LandmarkSet([row[-1], row[-1] - 1], [[row[0]]], [GeodesicPath(tuple(row), float(NX - 1))])
    return m, lm


@pytest.fixture(scope="module")
def phantom_lines(wrinkled):
    m, lm = wrinkled
    return m, directional_lines(m, lm)


def test_ipr_uniform():
    assert ipr(np.arange(101.0)) == pytest.approx(90.0, abs=1e-12)


def test_ipr_needs_two_values():
    with pytest.raises(DegenerateError):
        ipr(np.array([1.0]))


def test_constant_field_is_degenerate():
    lm = LandmarkSet([0, 1], [[2]])
    d = np.full(10, 3.0)
    assert ipr(d) == 0.0
    for fn in (std_crest, sep):
        with pytest.raises(DegenerateError):
            fn(d, lm)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 100.0), b=st.floats(-100.0, 100.0), seed=st.integers(0, 10_000))
def test_affine_invariance(a, b, seed):
    d = np.random.default_rng(seed).normal(size=60)
    lm = LandmarkSet(np.arange(0, 20), [np.arange(30, 40)])
    assert ipr(a * d + b) == pytest.approx(a * ipr(d), rel=1e-9)
    assert std_crest(a * d + b, lm) == pytest.approx(std_crest(d, lm), rel=1e-9)
    assert sep(a * d + b, lm) == pytest.approx(sep(d, lm), rel=1e-9, abs=1e-12)


def test_std_crest_zero_when_constant_on_crests():
    d = np.linspace(0.0, 1.0, 50)
    d[[3, 7, 11]] = 0.4
    assert std_crest(d, LandmarkSet([3, 7, 11], [])) == pytest.approx(0.0, abs=1e-15)


def test_std_crest_hand_instance():
    # 21 sorted values: the 5th and 95th percentiles sit exactly on the
    # second and the twentieth value, 0 and 4
    d = np.array([-10.0, 0.0, 1.0, 3.0] + [2.0] * 15 + [4.0, 10.0])
    lm = LandmarkSet([2, 3], [])
    assert ipr(d) == pytest.approx(4.0, abs=1e-12)
    assert std_crest(d, lm) == pytest.approx(0.25, abs=1e-12)


def test_std_crest_needs_two_crests():
    with pytest.raises(DegenerateError):
        std_crest(np.arange(10.0), LandmarkSet([1], []))


def test_sep_ideal_step():
    d = np.array([0.0] * 50 + [1.0] * 50)
    lm = LandmarkSet(np.arange(50, 100), [np.arange(0, 50)])
    assert sep(d, lm) == pytest.approx(1.0, abs=1e-12)


def test_sep_equal_and_inverted():
    rng = np.random.default_rng(1)
    d = rng.normal(size=80)
    lm = LandmarkSet(np.arange(10), [np.arange(10, 25)])
    assert sep(-d, lm) == pytest.approx(-sep(d, lm), abs=1e-12)
    d2 = d.copy()
    d2[10:20] = d2[:10]
    assert sep(d2, LandmarkSet(np.arange(10), [np.arange(10, 20)])) == pytest.approx(0.0, abs=1e-12)


def test_dev_aligned(strip_setup):
    m, lm = strip_setup
    assert dev(m, m.vertices[:, 0].copy(), lm) < 2.0


def test_dev_orthogonal(strip_setup):
    m, lm = strip_setup
    assert abs(dev(m, m.vertices[:, 1].copy(), lm) - 90.0) <= 3.0


def test_dev_of_negated_field(phantom_lines):
    m, lm = phantom_lines
    d = dpf_star(m, 150.0).values
    a = np.concatenate(dev_angles(m, d, lm))
    b = np.concatenate(dev_angles(m, -d, lm))
    np.testing.assert_allclose(b, 180.0 - a, atol=1e-6)


def test_dev_degenerate_cases(strip_setup):
    m, lm = strip_setup
    with pytest.raises(DegenerateError):
        dev(m, m.vertices[:, 0].copy(), LandmarkSet(lm.crests, lm.fundi, []))
    with pytest.raises(DegenerateError):
        dev(m, np.zeros(m.n_vertices), lm)
    short = LandmarkSet(lm.crests, lm.fundi, [GeodesicPath((0, 1), 1.0)] + lm.paths)
    assert dev(m, m.vertices[:, 0].copy(), short) == pytest.approx(dev(m, m.vertices[:, 0].copy(), lm))


def test_metrics_on_phantom(phantom_lines):
    m, lm = phantom_lines
    rep = evaluate(m, dpf_star(m, 500.0), lm)
    assert rep.sep > 0
    assert 0 <= rep.std_crest
    assert rep.n_paths == len(lm.paths)
    data = json.loads(rep.to_json())
    assert set(data) == {"method", "alpha", "std_crest", "sep", "dev", "n_paths", "n_crest_vertices"}
    assert data["method"] == "dpf_star" and data["alpha"] == 500.0


def test_metrics_permutation_invariant(phantom_lines):
    m, lm = phantom_lines
    perm = np.random.default_rng(5).permutation(m.n_vertices)
    inv = np.argsort(perm)  # new index of old vertex i is inv[i]
    m2 = TriangleMesh(m.vertices[perm], inv[m.faces])
    lm2 = LandmarkSet(inv[lm.crests], [inv[c] for c in lm.fundi],
                      [GeodesicPath(tuple(int(inv[v]) for v in p.vertices), p.length) for p in lm.paths])
    d = dpf_star(m, 500.0).values
    d2 = d[perm]
    assert std_crest(d2, lm2) == pytest.approx(std_crest(d, lm), rel=1e-12)
    assert sep(d2, lm2) == pytest.approx(sep(d, lm), rel=1e-12)
    assert dev(m2, d2, lm2) == pytest.approx(dev(m, d, lm), rel=1e-9)


def test_dev_scale_invariant(phantom_lines):
    m, lm = phantom_lines
    d = DepthMap(dpf_star(m, 50.0).values, "dpf_star", 50.0)
    assert dev(m, 7.5 * d.values + 3.0, lm) == pytest.approx(dev(m, d, lm), rel=1e-9)


def test_dev_median_on_rough_phantom_suite():
    devs = []
    for spec in expe1_suite():
        m, lm = generate_phantom(spec)
        devs.append(dev(m, dpf_star(m, 500.0), directional_lines(m, lm)))
    assert 10.0 <= np.median(devs) <= 35.0
