import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import iv

from calderonlab.fields import FunctionField
from calderonlab.geometry import (BoundaryPartition, Domain2D, interior_quadrature, kelvin_transfer,
                                  make_domain, normalize_at, supporting_function)

from conftest import disc_points


def test_tangent_circle_passes_through_origin():
    d = make_domain("circle", 128, radius=1.0, center=(-1.0, 0.0))
    j = int(np.argmin(np.hypot(*d.points.T)))
    assert np.hypot(*d.points[j]) < 1e-15
    np.testing.assert_allclose(d.normal[j], [1.0, 0.0], atol=1e-14)


def test_degenerate_ellipse_equals_circle():
    c = make_domain("circle", 128)
    e = make_domain("ellipse", 128, a=1.0, b=1.0)
    np.testing.assert_allclose(e.points, c.points, atol=1e-15)
    np.testing.assert_allclose(e.normal, c.normal, atol=1e-14)


def test_fourier_curve_length_matches_adaptive_quadrature():
    d = make_domain("fourier", 256, amplitude=0.1, mode=3)

    def speed(th):
        r = 1 + 0.1 * math.cos(3 * th)
        dr = -0.3 * math.sin(3 * th)
        return math.hypot(r, dr)

    ref, _ = quad(speed, 0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert abs(d.length - ref) < 1e-10


def test_closed_curve_and_orthogonal_normals():
    d = make_domain("stadium", 256)
    assert np.max(np.abs(np.einsum("ij,ij->i", d.normal, d.tangent))) < 1e-12
    # trig interpolant closes: the derivative integrates to zero
    assert np.max(np.abs(d.d1.sum(axis=0))) / d.M < 1e-12


def test_non_star_shaped_rejected_with_diagnostic():
    with pytest.raises(ValueError, match="star-shaped"):
        make_domain("fourier", 256, amplitude=1.2, mode=3)
    pts = make_domain("circle", 128).points
    with pytest.raises(ValueError, match="not star-shaped"):
        Domain2D.from_samples(pts, center=(2.0, 0.0))


def test_bad_node_count_and_unknown_shape():
    with pytest.raises(ValueError):
        make_domain("circle", 63)
    with pytest.raises(ValueError, match="unknown shape"):
        make_domain("triangle", 128)


def test_contains(unit_disc):
    inside = unit_disc.contains(np.array([[0.0, 0.0], [0.99, 0.0], [1.01, 0.0], [0.0, -2.0]]))
    assert inside.tolist() == [True, True, False, False]


def test_interior_quadrature_oracles(unit_disc):
    x, w = interior_quadrature(unit_disc, 32)
    assert abs(w.sum() - np.pi) < 1e-10
    assert abs(np.sum(w * x[:, 0])) < 1e-12
    assert abs(np.sum(w * np.exp(x[:, 0])) - 2 * np.pi * iv(1, 1.0)) < 1e-12


def test_quadrature_converges_on_ellipse_area():
    e = make_domain("ellipse", 256, a=1.5, b=0.7, angle=0.4)
    # the radial integrand is rho^2 dependent; check a non-polynomial moment
    f = lambda p: np.exp(p[:, 0] * p[:, 1])  # noqa: E731
    vals = []
    for n in (2, 4, 8, 32):
        x, w = interior_quadrature(e, n)
        vals.append(np.sum(w * f(x)))
    errs = [abs(v - vals[-1]) for v in vals[:-1]]
    assert errs[1] <= errs[0] / 16 and errs[2] <= errs[1] / 16
    assert abs(interior_quadrature(e, 8)[1].sum() - np.pi * 1.5 * 0.7) < 1e-12


def test_supporting_function_examples():
    assert supporting_function([[0.3, -0.2]], [2.0, 5.0]) == pytest.approx(0.6 - 1.0)
    c = make_domain("circle", 512)
    assert supporting_function(c.points, [0.0, 3.0]) == pytest.approx(3.0, abs=1e-12)
    t = make_domain("circle", 512, center=(-1.0, 0.0))
    arc = t.points[t.points[:, 0] <= -0.4]
    assert supporting_function(arc, [-1.0, 0.0]) == pytest.approx(np.max(-arc[:, 0]))
    with pytest.raises(ValueError):
        supporting_function(np.zeros((0, 2)), [1.0, 0.0])


@given(st.floats(0.01, 100.0), st.floats(-3, 3), st.floats(-3, 3))
def test_supporting_function_homogeneous(lam, x1, x2):
    K = np.array([[0.1, 0.4], [-0.7, 0.2], [0.3, -0.9]])
    xi = np.array([x1, x2])
    assert supporting_function(K, lam * xi) == pytest.approx(lam * supporting_function(K, xi), rel=1e-12, abs=1e-12)


def test_boundary_partition():
    d = make_domain("circle", 128, center=(-1.0, 0.0))
    p = BoundaryPartition.halfplane(d, -0.4)
    assert np.array_equal(p.gamma_mask(d), d.points[:, 0] <= -0.4)
    assert np.array_equal(p.sigma_mask(d), ~p.gamma_mask(d))
    with pytest.raises(ValueError):
        BoundaryPartition(((0.0, 0.999999),))
    wrap = BoundaryPartition(((0.9, 0.1),))
    assert wrap.gamma_mask_t([0.95, 0.05, 0.5]).tolist() == [True, True, False]


@pytest.fixture(scope="module")
def ellipse_normalized():
    e = make_domain("ellipse", 256, a=1.3, b=0.8, angle=0.3)
    return e, normalize_at(e, 17)


def test_normalization_places_image_in_tangent_ball(ellipse_normalized):
    _, (img, norm) = ellipse_normalized
    j = int(np.argmin(np.hypot(*img.points.T)))
    assert np.hypot(*img.points[j]) < 1e-12
    assert np.max(img.points[:, 0]) <= 1e-12
    assert np.all(np.hypot(img.points[:, 0] + 1, img.points[:, 1]) <= 1 + 1e-12)


def test_disc_tangent_at_origin_maps_to_disc():
    d = make_domain("circle", 256, center=(-1.0, 0.0))
    img, norm = normalize_at(d, 0)
    # algebraic circle fit x^2 + y^2 + D x + E y + F = 0
    p = img.points
    A = np.column_stack([p[:, 0], p[:, 1], np.ones(len(p))])
    coef, *_ = np.linalg.lstsq(A, -np.sum(p * p, axis=1), rcond=None)
    assert np.max(np.abs(A @ coef + np.sum(p * p, axis=1))) < 1e-10
    assert np.max(img.points[:, 0]) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_inversion_is_involution(seed):
    e = make_domain("ellipse", 128, a=1.3, b=0.8)
    _, norm = normalize_at(e, 5)
    x = disc_points(np.random.default_rng(seed), 100, 0.7)
    assert np.max(np.abs(norm.psi(norm.psi(x)) - x)) < 1e-12
    assert np.max(np.abs(norm.inverse(norm.forward(x)) - x)) < 1e-12


def test_inversion_area_change_of_variables(ellipse_normalized):
    e, (img, norm) = ellipse_normalized
    x, w = interior_quadrature(e, 64)
    # image of the domain under psi is the normalized image scaled by r
    assert np.sum(w * norm.weight(x)) / norm.r**2 == pytest.approx(img.area, rel=1e-9)


def test_inversion_center_rejected(ellipse_normalized):
    _, (_, norm) = ellipse_normalized
    with pytest.raises(ValueError, match="inversion center"):
        norm.forward(norm.a)


def test_kelvin_transfer_examples(ellipse_normalized, rng):
    e, (img, norm) = ellipse_normalized
    x = disc_points(rng, 50, 0.5)
    one = kelvin_transfer(FunctionField(img, lambda p: np.ones(len(p))), norm, e)
    assert np.all(one(x) == 1)
    lin = kelvin_transfer(FunctionField(img, lambda p: p[:, 0]), norm, e)
    np.testing.assert_allclose(lin(x).real, norm.forward(x)[:, 0], rtol=0, atol=1e-15)


def test_kelvin_transfer_preserves_harmonicity(ellipse_normalized, rng):
    e, (img, norm) = ellipse_normalized
    c = rng.normal(size=4) + 1j * rng.normal(size=4)
    u = FunctionField(img, lambda p: np.polyval(c, p[:, 0] + 1j * p[:, 1]).real)
    v = kelvin_transfer(u, norm, e)
    g = np.linspace(-0.5, 0.5, 50)
    X, Y = np.meshgrid(g, g)
    P = np.column_stack([X.ravel(), Y.ravel()])
    h = 1e-3
    lap = sum(v(P + s) for s in ([h, 0], [-h, 0], [0, h], [0, -h])) - 4 * v(P)
    assert np.max(np.abs(lap / h**2)) < 1e-4 * max(1.0, np.max(np.abs(v(P))))
