import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypbbm.errors import OverflowNearBoundary
from hypbbm.geometry import (
    ORIGIN_D,
    ORIGIN_H,
    BoundaryPoint,
    DiskPoint,
    HalfPlanePoint,
    MoebiusMap,
    affine_of,
    apply,
    compose,
    dist_disk,
    dist_disk_formula,
    dist_halfplane,
    dist_halfplane_formula,
    disk_to_halfplane,
    distance,
    gamma,
    gamma_from_halfplane,
    halfplane_angle,
    halfplane_boundary_gap,
    halfplane_to_disk,
    hdist,
    hdist_origin,
    heat_tail_bound,
    inverse,
    max_excursion_bound,
    normalize_angle,
    poisson_arc_masses,
    poisson_kernel,
    psi,
    radial_projection,
    rho_minus_log_im,
)


def disk_points(rmax=0.95):
    return st.builds(
        lambda r, th: DiskPoint(r * math.cos(th), r * math.sin(th)),
        st.floats(0.0, rmax), st.floats(-math.pi, math.pi),
    )


def moebius_maps():
    return st.builds(lambda z, th: compose(gamma(z), MoebiusMap.rotation(th)),
                     disk_points(0.9), st.floats(-math.pi, math.pi))


def random_disk(rng, n, rmax=0.99):
    r = rmax * np.sqrt(rng.uniform(size=n))
    th = rng.uniform(-math.pi, math.pi, n)
    return [DiskPoint(float(a), float(b)) for a, b in zip(r * np.cos(th), r * np.sin(th))]


def random_map(rng):
    z = random_disk(rng, 1, 0.9)[0]
    return compose(gamma(z), MoebiusMap.rotation(float(rng.uniform(-math.pi, math.pi))))


def close(p, q, tol):
    return abs(p.z - q.z) <= tol


# charts

def test_origin_maps_to_i():
    assert disk_to_halfplane(ORIGIN_D) == HalfPlanePoint(0.0, 0.0)
    assert halfplane_to_disk(ORIGIN_H) == ORIGIN_D


def test_minus_one_goes_to_zero():
    for eps in (1e-3, 1e-6, 1e-9):
        p = disk_to_halfplane(DiskPoint(-1.0 + eps, 0.0))
        assert abs(p.u) < 1e-12
        assert p.w < math.log(eps)


def test_round_trip_example():
    z = DiskPoint(0.3, 0.4)
    assert close(halfplane_to_disk(disk_to_halfplane(z)), z, 1e-12)


def test_high_point_approaches_plus_one():
    z = halfplane_to_disk(HalfPlanePoint(0.0, 20.0))
    assert z.im == 0.0 and z.re > 0
    # (e^20 - 1)/(e^20 + 1), so 1 - |z| = 2/(e^20 + 1)
    assert (1.0 - z.re) == pytest.approx(2.0 / (math.exp(20.0) + 1.0), rel=1e-7)
    gap = float(halfplane_boundary_gap(0.0, 20.0))
    assert gap == pytest.approx(2.0 / (math.exp(20.0) + 1.0), rel=1e-12)


def test_deep_point_overflows():
    with pytest.raises(OverflowNearBoundary):
        halfplane_to_disk(HalfPlanePoint(0.0, -745.0))
    # the gap itself stays representable
    assert 0.0 < float(halfplane_boundary_gap(0.0, -700.0)) < 1e-300


@given(disk_points(0.999))
def test_round_trip_property(z):
    assert close(halfplane_to_disk(disk_to_halfplane(z)), z, 1e-12)


def test_disk_point_validation():
    with pytest.raises(ValueError):
        DiskPoint(1.0, 0.0)
    with pytest.raises(ValueError):
        HalfPlanePoint(float("nan"), 0.0)


# distances

def test_disk_distance_examples():
    assert dist_disk(ORIGIN_D, ORIGIN_D) == 0.0
    assert dist_disk(ORIGIN_D, DiskPoint(0.5, 0.0)) == pytest.approx(math.log(3.0), abs=1e-15)


def test_halfplane_distance_examples():
    assert dist_halfplane(ORIGIN_H, HalfPlanePoint(0.0, -3.0)) == pytest.approx(3.0, abs=1e-14)
    p = HalfPlanePoint(0.7, -0.2)
    assert dist_halfplane(p, p) == 0.0
    q = HalfPlanePoint(1.0, -1.0)
    assert dist_halfplane(ORIGIN_H, q) == pytest.approx(
        dist_disk(halfplane_to_disk(ORIGIN_H), halfplane_to_disk(q)), abs=1e-9)


def test_stable_far_distance():
    assert dist_halfplane(ORIGIN_H, HalfPlanePoint(0.0, -700.0)) == pytest.approx(700.0, abs=1e-9)
    assert float(hdist_origin(np.array([1e80]), np.array([-500.0]))[0]) == pytest.approx(
        2 * math.log(1e80) + 500.0, abs=1e-9)


def test_isometry_invariance_random():
    rng = np.random.default_rng(1)
    pts = random_disk(rng, 2000)
    for i in range(0, 2000, 2):
        g = random_map(rng)
        a, b = pts[i], pts[i + 1]
        assert abs(dist_disk(apply(g, a), apply(g, b)) - dist_disk(a, b)) < 1e-9


def test_chart_consistency():
    rng = np.random.default_rng(2)
    pts = random_disk(rng, 400, 1 - 1e-6)
    for a, b in zip(pts[::2], pts[1::2]):
        d = dist_disk(a, b)
        assert dist_halfplane(disk_to_halfplane(a), disk_to_halfplane(b)) == pytest.approx(d, rel=1e-9, abs=1e-9)


@given(disk_points(0.9), disk_points(0.9))
def test_distance_matches_textbook_formula(a, b):
    assert dist_disk(a, b) == pytest.approx(dist_disk_formula(a, b), abs=1e-9)
    p, q = disk_to_halfplane(a), disk_to_halfplane(b)
    if dist_disk(a, b) > 1e-6:
        assert dist_halfplane(p, q) == pytest.approx(dist_halfplane_formula(p, q), rel=1e-8, abs=1e-9)
    assert distance(a, q) == pytest.approx(dist_disk(a, b), abs=1e-9)


def test_hdist_origin_fast_path_agrees():
    rng = np.random.default_rng(3)
    u = rng.normal(scale=5, size=1000)
    w = rng.normal(scale=10, size=1000)
    assert np.allclose(hdist_origin(u, w), hdist(u, w, 0.0, 0.0), rtol=1e-13, atol=1e-14)


def test_rho_minus_log_im():
    assert rho_minus_log_im(ORIGIN_H) == pytest.approx(0.0, abs=1e-15)
    assert rho_minus_log_im(HalfPlanePoint(3.0, -30.0)) == pytest.approx(math.log(10.0), abs=1e-6)
    rng = np.random.default_rng(4)
    for u, w in zip(rng.normal(size=100) * 3, rng.normal(size=100) * 3):
        p = HalfPlanePoint(float(u), float(w))
        assert dist_halfplane(p, ORIGIN_H) >= -w - 1e-12
        assert rho_minus_log_im(p) == pytest.approx(dist_halfplane(p, ORIGIN_H) + w, abs=1e-9)


# isometries

def test_gamma_examples():
    g = gamma(ORIGIN_D)
    assert g.a == 1 and g.c == 0
    z0 = DiskPoint(0.2, -0.7)
    assert close(apply(gamma(z0), ORIGIN_D), z0, 1e-12)
    assert apply(gamma(z0), BoundaryPoint(0.0)) == BoundaryPoint(0.0)


def test_apply_identity_and_inverse():
    rng = np.random.default_rng(5)
    for z in random_disk(rng, 50):
        assert apply(MoebiusMap.identity(), z) == z
        g = random_map(rng)
        assert close(apply(compose(g, inverse(g)), z), z, 1e-12)


def test_images_stay_in_disk():
    rng = np.random.default_rng(6)
    for z in random_disk(rng, 1000, 0.999):
        assert abs(apply(random_map(rng), z)) < 1.0


def test_group_laws():
    rng = np.random.default_rng(7)
    for _ in range(100):
        f, g, h = random_map(rng), random_map(rng), random_map(rng)
        z = random_disk(rng, 1)[0]
        assert close(apply(compose(compose(f, g), h), z), apply(compose(f, compose(g, h)), z), 1e-10)
        lhs, rhs = inverse(compose(g, h)), compose(inverse(h), inverse(g))
        assert close(apply(lhs, z), apply(rhs, z), 1e-10)
        assert close(apply(compose(g, MoebiusMap.identity()), z), apply(g, z), 1e-12)
        assert close(apply(g @ h, z), apply(g, apply(h, z)), 1e-10)


@settings(max_examples=200)
@given(disk_points(0.9), disk_points(0.9))
def test_aff_closure(z1, z2):
    g = compose(gamma(z1), gamma(z2))
    assert g.aff and abs((g.a + g.c).imag) < 1e-10
    gi = inverse(g)
    assert gi.aff and abs((gi.a + gi.c).imag) < 1e-10


def test_two_letter_product_matches_sequential_application():
    g1 = gamma(DiskPoint(0.3, 0.1))
    g2 = gamma(DiskPoint(-0.2, 0.5))
    z = DiskPoint(0.1, -0.4)
    assert close(apply(compose(g1, g2), z), apply(g1, apply(g2, z)), 1e-12)


def test_gamma_from_halfplane_matches_gamma():
    rng = np.random.default_rng(8)
    for u, w in zip(rng.normal(size=50), rng.normal(size=50)):
        p = HalfPlanePoint(float(u), float(w))
        g1, g2 = gamma_from_halfplane(p), gamma(halfplane_to_disk(p))
        assert abs(g1.a - g2.a) < 1e-12 and abs(g1.c - g2.c) < 1e-12
        bu, bw = affine_of(g1)
        assert bu == pytest.approx(u, abs=1e-12) and bw == pytest.approx(w, abs=1e-12)


def test_renormalization():
    g = MoebiusMap(2.0 + 0j, 1.0 + 0j)
    assert abs(g.a) ** 2 - abs(g.c) ** 2 == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        MoebiusMap(1.0 + 0j, 1.0 + 0j)
    with pytest.raises(ValueError):
        affine_of(MoebiusMap.rotation(1.0))


# boundary

def test_poisson_kernel_examples():
    for ang in np.linspace(-3, 3, 7):
        assert poisson_kernel(ORIGIN_D, BoundaryPoint(float(ang))) == pytest.approx(1.0, abs=1e-15)
    z0 = DiskPoint(0.5, 0.0)
    assert poisson_kernel(z0, BoundaryPoint(0.0)) == pytest.approx(3.0, abs=1e-12)
    phi = np.linspace(-math.pi, math.pi, 4096, endpoint=False)
    vals = [poisson_kernel(z0, BoundaryPoint(float(p))) for p in phi]
    assert np.mean(vals) == pytest.approx(1.0, abs=1e-8)


def test_poisson_normalization_random():
    rng = np.random.default_rng(9)
    phi = np.linspace(-math.pi, math.pi, 4096, endpoint=False)
    for z0 in random_disk(rng, 10, 0.9):
        vals = [poisson_kernel(z0, BoundaryPoint(float(p))) for p in phi]
        assert np.mean(vals) == pytest.approx(1.0, abs=1e-8)
        masses = poisson_arc_masses(z0, np.linspace(-math.pi, math.pi, 33))
        assert math.fsum(masses) == pytest.approx(1.0, abs=1e-12)
        assert np.all(masses > 0)


def test_arc_masses_match_quadrature():
    z0 = DiskPoint(-0.4, 0.5)
    edges = np.linspace(-math.pi, math.pi, 9)
    masses = poisson_arc_masses(z0, edges)
    for a, b, m in zip(edges[:-1], edges[1:], masses):
        x = np.linspace(a, b, 20001)
        y = np.array([poisson_kernel(z0, BoundaryPoint(float(t))) for t in x])
        assert m == pytest.approx(np.trapezoid(y, x) / (2 * math.pi), abs=1e-7)


def test_radial_projection():
    assert radial_projection(ORIGIN_D).angle == 0.0
    z = DiskPoint.from_complex(0.3 * cmath.exp(2j))
    assert radial_projection(z) == BoundaryPoint(2.0)
    for theta in (0.5, -2.0, 3.0):
        assert radial_projection(apply(MoebiusMap.rotation(theta), z)) == BoundaryPoint(2.0 + theta)
    p = disk_to_halfplane(z)
    assert radial_projection(p) == BoundaryPoint(2.0)
    assert float(halfplane_angle(0.0, 0.0)) == 0.0


def test_boundary_point_equality():
    assert BoundaryPoint(math.pi) == BoundaryPoint(-math.pi)
    assert BoundaryPoint(0.1) != BoundaryPoint(0.1 + 1e-9)
    assert normalize_angle(-math.pi) == math.pi


def test_bounds():
    assert psi(1.0) == 1.0
    assert psi(0.25) == pytest.approx(0.125) and psi(4.0) == pytest.approx(2.0)
    vals = [heat_tail_bound(float(r), 1.0) for r in range(21)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert max_excursion_bound(0.5) == pytest.approx(10.0)
    assert max_excursion_bound(0.5, K=3.0) == pytest.approx(3.0)
